import logging
import math

import pytest
import torch
from scipy.special import comb

from wce.chaos import ChaosScalar
from wce.errors import DomainError, EmptyInput, OverflowGuard
from wce.multiindex import ZERO, MultiIndex, TruncationSpec, enumerate_multiindices
from wce.scaling import (ScalingSpec, catalan, catalan_bound_check, gamma_rescale, gamma_rescale_wick_identity_check,
                         inverse_second_quantize, kondratiev_log_weight, kondratiev_norm, kondratiev_table,
                         level_sums, rescale_multiplicativity_ratio, second_quantize, select_q,
                         square_integrability_check, write_table_csv)
from wce.propagator import ChaosField
from wce.spectral import GridField

e1, e2 = MultiIndex.unit(1), MultiIndex.unit(2)


def test_catalan_values():
    assert catalan(0) == pytest.approx(1.0)
    assert catalan(3) == pytest.approx(5.0)
    assert catalan(5) == pytest.approx(42.0)
    for n in range(31):
        closed = comb(2 * n, n, exact=True) // (n + 1)
        assert catalan(n) == pytest.approx(closed, rel=1e-9)
    with pytest.raises(DomainError):
        catalan(-1)


def test_catalan_asymptotic():
    for n in (20, 30, 60):
        asymptotic = 4.0 ** (n - 1) / (math.sqrt(math.pi) * (n - 1) ** 1.5)
        assert catalan(n - 1) == pytest.approx(asymptotic, rel=0.05)


def test_kondratiev_norm_examples():
    assert kondratiev_norm(ChaosScalar({ZERO: -3.0}), -1.0, 1.0) == pytest.approx(3.0)
    assert kondratiev_norm(ChaosScalar({e2: 2.0}), -1.0, 1.0) == pytest.approx(0.5)
    u = ChaosScalar({ZERO: 1.0, e1: -2.0, e1 + e2: 0.5})
    assert kondratiev_norm(u * 2.0, -1.0, 1.5) == pytest.approx(2.0 * kondratiev_norm(u, -1.0, 1.5))
    assert kondratiev_norm(u, 0.0, 0.0) == pytest.approx(math.sqrt(1.0 + 4.0 + 0.25))


def test_kondratiev_weight_sign_and_clamp():
    assert kondratiev_log_weight(e1, 1.0, 1.0) == pytest.approx(2.0 * math.log(2.0))
    assert kondratiev_log_weight(e1, -1.0, 1.0) == pytest.approx(-2.0 * math.log(2.0))
    assert kondratiev_log_weight(MultiIndex.unit(500, 200), -1.0, 3.0) == -600.0


def test_kondratiev_clamping_warns_once_per_table(caplog):
    u = ChaosScalar({ZERO: 1.0, e1: 1.0, e2: 1.0, MultiIndex.unit(3): 1.0})
    with caplog.at_level(logging.WARNING, logger='wce.scaling'):
        rows = kondratiev_table(u, -1.0, 500.0)
    warnings = [r for r in caplog.records if r.levelno == logging.WARNING]
    assert len(warnings) == 1
    assert '3 Kondratiev weights clamped' in warnings[0].getMessage()
    assert rows[0]['weight'] == pytest.approx(1.0)
    assert all(row['weight'] == pytest.approx(math.exp(-600.0)) for row in rows[1:])


def test_kondratiev_norm_of_fields():
    n = 8
    one = GridField(torch.ones(1, n))
    u = ChaosField({ZERO: one, e2: one * 2.0}, TruncationSpec(1, 2))
    expected = math.sqrt(2.0 * math.pi * (1.0 + 4.0 / 16.0))
    assert kondratiev_norm(u, -1.0, 1.0) == pytest.approx(expected)


def test_kondratiev_table(tmp_path):
    rows = kondratiev_table(ChaosScalar({ZERO: 1.0, e2: 2.0}), -1.0, 1.0, slack={e2: 0.5})
    assert [row['alpha'] for row in rows] == ['a()', 'a(2:1)']
    assert rows[1]['contribution'] == pytest.approx(0.25)
    assert rows[0]['catalan_slack'] == ''
    path = str(tmp_path / 'table.csv')
    write_table_csv(path, rows)
    assert open(path).readline().strip() == 'alpha,degree,weight,field_norm,contribution,catalan_slack'
    with pytest.raises(EmptyInput):
        write_table_csv(path, [])


def test_catalan_bound_equality_case():
    K = 1.5
    fit = catalan_bound_check({MultiIndex.unit(1, 2): math.sqrt(2.0) * K ** 2}, K=K)
    assert fit.b0 == pytest.approx(1.0)
    assert fit.slack[MultiIndex.unit(1, 2)] == 0.0
    assert fit.all_passed


def test_catalan_bound_fit():
    assert catalan_bound_check({e1: 0.5, e1 + e2: 0.0}).b0 == 0.0
    norms = {e1: 0.5, e2: 0.25, e1 + e2: 0.3, MultiIndex.unit(1, 2): 0.2, MultiIndex.from_indices([1, 1, 2]): 0.1}
    fit = catalan_bound_check(norms)
    assert fit.K == pytest.approx(1.5)
    assert fit.all_passed
    assert min(fit.slack.values()) == 0.0
    binding = min(fit.slack, key=lambda a: fit.slack[a])
    louder = dict(norms)
    louder[binding] *= 1.1
    assert catalan_bound_check(louder).b0 > fit.b0
    assert len(fit.rows()) == 3
    with pytest.raises(EmptyInput):
        catalan_bound_check({})


def test_second_quantize_examples():
    eps = 0.1
    u = ChaosScalar({ZERO: 1.0, e2: 1.0})
    rescaled = second_quantize(u, eps)
    assert rescaled.get(ZERO) == pytest.approx(math.exp(-eps))
    assert rescaled.get(e2) == pytest.approx(math.exp(-eps * math.e) * 2.0 ** (-0.2))
    assert second_quantize(u, 0.0).max_abs_diff(u) == 0.0
    with pytest.raises(DomainError):
        second_quantize(u, -0.1)


def test_second_quantize_contracts_and_inverts(rng):
    alphas = enumerate_multiindices(4, 3)
    u = ChaosScalar({alpha: rng.randn() for alpha in alphas})
    rescaled = second_quantize(u, 0.05)
    for alpha, value in u.coeffs.items():
        assert abs(rescaled.get(alpha)) < abs(value)
    back = inverse_second_quantize(rescaled, 0.05)
    for alpha, value in u.coeffs.items():
        assert back.get(alpha) == pytest.approx(value, rel=1e-12)


def test_second_quantize_overflow_and_underflow():
    deep = ChaosScalar({MultiIndex.unit(1, 8): 1.0})
    assert len(second_quantize(deep, 1.0)) == 0
    with pytest.raises(OverflowGuard):
        inverse_second_quantize(deep, 1.0)


def test_rescale_multiplicativity():
    eps = 0.2
    for alpha in enumerate_multiindices(4, 2):
        for beta in enumerate_multiindices(alpha.degree, 2):
            if beta.leq(alpha):
                n, m = alpha.degree, beta.degree
                expected = math.exp(-eps * (math.exp(n) - math.exp(m) - math.exp(n - m)))
                assert rescale_multiplicativity_ratio(alpha, beta, eps) == pytest.approx(expected, rel=1e-12)


def test_gamma_rescale():
    assert gamma_rescale(ChaosScalar({e1 + e2: 1.0}), {1: 2.0, 2: 3.0}).get(e1 + e2) == pytest.approx(6.0)
    assert gamma_rescale_wick_identity_check(ChaosScalar({e1: 1.0}), ChaosScalar({e2: 1.0}), {1: 2.0, 2: 3.0}) == 0.0
    u = ChaosScalar({ZERO: 1.0, e1: 2.0})
    assert gamma_rescale_wick_identity_check(u, u, {}) == 0.0
    with pytest.raises(DomainError):
        gamma_rescale(u, {1: 0.0})


def test_gamma_wick_identity_random(rng):
    alphas = enumerate_multiindices(2, 3)
    for _ in range(5):
        u = ChaosScalar({alpha: rng.randn() for alpha in alphas if rng.rand() < 0.5})
        v = ChaosScalar({alpha: rng.randn() for alpha in alphas if rng.rand() < 0.5})
        lam = {k: rng.uniform(0.2, 2.0) for k in range(1, 4)}
        assert gamma_rescale_wick_identity_check(u, v, lam) <= 1e-12


def test_level_sums_and_q_selection():
    u = ChaosScalar({ZERO: 1.0, e1: 0.5, MultiIndex.unit(1, 2): 0.25, MultiIndex.unit(1, 3): 0.125})
    assert level_sums(u) == pytest.approx([1.0, 0.25, 0.0625, 0.015625])
    report = square_integrability_check(u)
    assert report.passed
    assert report.rate == pytest.approx(0.25)
    selection = select_q(u, (1.1, 2.0), rho=-1.0)
    assert selection.decaying
    assert selection.q == 1.1

    growing = ChaosScalar({e1: 1.0, MultiIndex.unit(1, 2): 10.0, MultiIndex.unit(1, 3): 100.0})
    assert not square_integrability_check(growing).passed


def test_scaling_spec_validation():
    spec = ScalingSpec(q=1.0, rho=-1.0, epsilon=0.1)
    assert spec.log_weight(e2) == pytest.approx(-2.0 * math.log(4.0))
    assert spec.log_factor(ZERO) == pytest.approx(-0.1)
    with pytest.raises(DomainError):
        ScalingSpec(rho=2.0)
    with pytest.raises(DomainError):
        ScalingSpec(q=-1.0)
