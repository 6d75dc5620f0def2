import math

import numpy as np
import pytest
import torch

from wce.chaos import ChaosScalar, TimeChaosVector
from wce.errors import DomainError, EmptyInput
from wce.metrics import within_band
from wce.multiindex import ZERO, MultiIndex, TruncationSpec
from wce.propagator import ChaosField, PropagatorRun, level_energies, sweep
from wce.spectral import GridField, PDECoefficients, sample_points
from wce.stats import (MCSampler, chaos_moments, chaos_variance, duhamel_coefficients, duhamel_variance,
                       estimate_csv, euler_maruyama_oracle, ito_projection_oracle, ito_skorokhod_check,
                       moments_csv, rescaling_convergence_study, sample_probes, sample_realization)
from wce.utils import Mode

N = 16
e1, e2 = MultiIndex.unit(1), MultiIndex.unit(2)
PROBES = [(4,), (2,), (11,)]


def wave(scale=1.0, k=1, shift=0.0):
    return GridField.from_function(1, N, lambda x: [scale * torch.sin(k * x + shift)])


def two_mode_field():
    return ChaosField({ZERO: wave(), e1: wave(0.5, 2), e2: wave(0.3, 1, 1.0)}, TruncationSpec(1, 2))


def linear_run(basis, g=0.5, dt=0.01, K=4):
    truncation = TruncationSpec(1, K)
    coeffs = PDECoefficients(nu=0.1, g=[wave(g)], convection=False)
    return PropagatorRun(Mode.UNBIASED_WICK, coeffs, basis, truncation, dt, basis.horizon,
                         ChaosField.deterministic(GridField.zeros(1, 1, N), truncation))


def test_sampler_batches_and_reproducibility():
    sampler = MCSampler(7, 25, batch_size=10)
    assert list(sampler.batches()) == [(0, 10), (1, 10), (2, 5)]
    assert torch.equal(sampler.normals(1, (4, 3)), MCSampler(7, 25, 10).normals(1, (4, 3)))
    assert not torch.equal(sampler.normals(0, (4, 3)), sampler.normals(1, (4, 3)))
    assert not torch.equal(sampler.normals(0, (4, 3)), MCSampler(8, 25, 10).normals(0, (4, 3)))
    with pytest.raises(DomainError):
        MCSampler(0, 0)


def test_sampler_draws_standard_normals():
    sampler = MCSampler(11, 50000, batch_size=50000)
    draws = sampler.gaussians([3, 1], 0, 50000)
    for values in draws.values():
        assert abs(values.mean()) <= 4.0 / math.sqrt(len(values))
        assert abs(values.var() - 1.0) <= 4.0 * math.sqrt(2.0 / len(values))
    increments = sampler.brownian_increments(0, 1000, 8, 2, 2.0)
    assert tuple(increments.shape) == (1000, 8, 2)


def test_chaos_moments():
    u = two_mode_field()
    report = chaos_moments(u, [((4,), (4,)), ((2,), (11,))])
    assert report.mean is u.mean
    for sample in report.covariance:
        x, y = [sample.x], [sample.y]
        expected = sum(sample_points(u.get(a), x)[0, 0] * sample_points(u.get(a), y)[0, 0] for a in (e1, e2))
        assert sample.centered[0, 0] == pytest.approx(expected)
        mean_product = sample_points(u.mean, x)[0, 0] * sample_points(u.mean, y)[0, 0]
        assert sample.raw[0, 0] == pytest.approx(expected + mean_product)
    assert len(report.level_energy) == 2

    only_mean = ChaosField.deterministic(wave(), TruncationSpec(1, 2))
    assert chaos_moments(only_mean, [((3,), (5,))]).covariance[0].centered[0, 0] == 0.0


def test_variance_matches_coefficient_energy():
    u = two_mode_field()
    variance = chaos_variance(u)
    integrated = float(variance.values.sum()) * (2.0 * math.pi / N)
    assert integrated == pytest.approx(sum(level_energies(u)[1:]), rel=1e-10)


def test_sample_realization():
    u = two_mode_field()
    sampler = MCSampler(3, 5, batch_size=2)
    first = sample_realization(u, sampler)
    second = sample_realization(u, MCSampler(3, 5, batch_size=2))
    assert len(first) == 5
    for a, b in zip(first, second):
        assert torch.equal(a.values, b.values)
    g = sampler.gaussians([1, 2], 0, 2)
    expected = u.mean.values + g[1][1] * u.get(e1).values + g[2][1] * u.get(e2).values
    assert torch.allclose(first[1].values, expected, atol=1e-14)

    only_mean = ChaosField.deterministic(wave(), TruncationSpec(1, 2))
    for field in sample_realization(only_mean, sampler):
        assert torch.equal(field.values, only_mean.mean.values)


def test_point_statistics_match_chaos_moments():
    u = two_mode_field()
    estimate = sample_probes(u, MCSampler(5, 40000, batch_size=10000), PROBES)
    assert estimate.samples == 40000
    mean = sample_points(u.mean, PROBES)
    variance = sample_points(chaos_variance(u), PROBES)
    assert within_band(estimate.mean, mean, estimate.mean_se, 4.0)
    assert within_band(estimate.second, variance + mean ** 2, estimate.second_se, 4.0)


def test_degree_one_coefficients_are_duhamel_integrals(haar_basis):
    run = linear_run(haar_basis)
    final = sweep(run).final
    for k in range(1, 5):
        reference = duhamel_coefficients(run.coeffs, haar_basis, k, 1.0, 1, N)
        assert (final.get(MultiIndex.unit(k)) - reference).sup_norm() <= 1e-6
    assert duhamel_coefficients(PDECoefficients(nu=0.1, g=[None, wave()]), haar_basis, 1, 1.0, 1, N).sup_norm() == 0.0


def test_duhamel_variance_of_one_mode():
    nu, t = 0.1, 1.0
    coeffs = PDECoefficients(nu=nu, g=[wave(0.5)], convection=False)
    variance = duhamel_variance(coeffs, t, 1, N)
    expected = sample_points(wave(0.5), PROBES) ** 2 * (1.0 - math.exp(-2.0 * nu * t)) / (2.0 * nu)
    np.testing.assert_allclose(sample_points(variance, PROBES), expected, rtol=1e-10)
    with pytest.raises(DomainError):
        duhamel_variance(PDECoefficients(nu=nu), t, 1, N)


def test_euler_maruyama_matches_chaos_in_linear_case(haar_basis):
    run = linear_run(haar_basis)
    final = sweep(run).final
    sampler = MCSampler(1, 4000, batch_size=2000)
    estimate = euler_maruyama_oracle(run.coeffs, haar_basis, sampler, run.dt, run.initial.mean, 1.0, PROBES)
    variance = sample_points(chaos_variance(final), PROBES)
    assert within_band(estimate.mean, np.zeros_like(variance), estimate.mean_se, 4.0)
    assert within_band(estimate.second, variance, estimate.second_se, 4.0)


def test_euler_maruyama_without_noise_is_deterministic(haar_basis):
    coeffs = PDECoefficients(nu=0.1, convection=False)
    estimate = euler_maruyama_oracle(coeffs, haar_basis, MCSampler(0, 10), 0.01, wave(), 0.5, PROBES)
    expected = sample_points(wave(math.exp(-0.05)), PROBES)
    np.testing.assert_allclose(estimate.mean, expected, atol=1e-12)
    np.testing.assert_allclose(estimate.mean_se, 0.0, atol=1e-7)


def test_ito_and_skorokhod_agree_for_adapted_integrands(haar_basis):
    v = TimeChaosVector(1, {e1: lambda s: haar_basis.e_values(2, s)})
    alphas = [e1 + e2, MultiIndex.unit(1, 2), e2]
    check = ito_skorokhod_check(v, alphas, haar_basis, MCSampler(2, 20000, batch_size=10000), n_sigma=4.0)
    assert check.chaos[e1 + e2] == pytest.approx(1.0)
    assert check.estimates[e1 + e2].estimate == pytest.approx(1.0, abs=0.1)
    assert check.passed
    with pytest.raises(EmptyInput):
        ito_projection_oracle(v, [], haar_basis, MCSampler(2, 10))


def test_rescaling_study_examples():
    assert rescaling_convergence_study(ChaosScalar({ZERO: 2.0}), [0.0], 1.5).distance == [0.0]
    u = ChaosScalar({ZERO: 2.0})
    study = rescaling_convergence_study(u, [0.5, 0.2, 0.1, 0.05], 1.5)
    for eps, distance in zip(study.eps, study.distance):
        assert distance == pytest.approx(2.0 * (1.0 - math.exp(-eps)))
    assert study.monotone
    assert study.passed
    with pytest.raises(DomainError):
        rescaling_convergence_study(u, [0.1, 0.2], 1.5)


def test_rescaling_study_over_snapshots():
    u = ChaosScalar({ZERO: 1.0, e1: 0.5, MultiIndex.unit(1, 2): 0.25, e1 + e2: 0.1})
    study = rescaling_convergence_study([u, u * 2.0], [0.5, 0.2, 0.1, 0.05], 1.1)
    assert study.monotone
    assert study.passed
    assert study.ratio < 1.0
    assert study.distance[0] == pytest.approx(2.0 * rescaling_convergence_study(u, [0.5], 1.1).distance[0])


def test_csv_outputs(tmp_path):
    u = two_mode_field()
    report = chaos_moments(u, [((4,), (2,))])
    path = tmp_path / 'moments.csv'
    moments_csv(str(path), report)
    lines = path.read_text().splitlines()
    assert lines[0] == 'x,y,row,col,centered,raw'
    assert lines[1].startswith('4,2,0,0,')
    estimate = sample_probes(u, MCSampler(0, 100), PROBES)
    path = tmp_path / 'estimates.csv'
    estimate_csv(str(path), PROBES, {'chaos': estimate})
    assert len(path.read_text().splitlines()) == 1 + len(PROBES)
