import math

import numpy as np
import pytest
from numpy.polynomial import hermite_e

from wce import chaos
from wce.chaos import (ChaosScalar, ChaosVector, TimeChaosVector, expectation, gauss_hermite_moment,
                       hermite_eval, hermite_expansion, malliavin, malliavin_component, ordinary_product,
                       product_via_wick_malliavin, skorokhod_coeffs, wick_product_paired, wick_product_scalar,
                       xi_eval)
from wce.errors import DimensionMismatch, MissingSampleError, RangeError
from wce.multiindex import ZERO, MultiIndex, enumerate_multiindices

e1, e2, e3 = (MultiIndex.unit(k) for k in (1, 2, 3))
two_e1 = MultiIndex.unit(1, 2)


def xi(alpha, value=1.0):
    return ChaosScalar.basis_element(alpha, value)


def random_scalar(rng, max_degree, basis_size, density=0.6):
    return ChaosScalar({alpha: rng.randn() for alpha in enumerate_multiindices(max_degree, basis_size)
                        if rng.rand() < density})


def test_hermite_eval():
    assert hermite_eval(0, 3.7) == 1.0
    assert hermite_eval(2, 2.0) == pytest.approx(3.0)
    assert hermite_eval(3, 1.0) == pytest.approx(-2.0)
    x = np.linspace(-3, 3, 7)
    for n in range(12):
        np.testing.assert_allclose(hermite_eval(n, x), hermite_e.hermeval(x, [0] * n + [1]), rtol=1e-10, atol=1e-9)
    with pytest.raises(RangeError):
        hermite_eval(chaos.HERMITE_MAX_ORDER + 1, 0.0)


def test_hermite_table_coefficients():
    table = chaos.HermiteTable()
    np.testing.assert_array_equal(table.coefficients(3), [0.0, -3.0, 0.0, 1.0])
    for n in range(chaos.MONOMIAL_MAX_ORDER + 1):
        np.testing.assert_allclose(table.coefficients(n), hermite_e.herme2poly([0] * n + [1]), rtol=1e-12)
    with pytest.raises(RangeError):
        table.coefficients(-1)


def test_hermite_table_high_orders_by_recurrence():
    table = chaos.HermiteTable()
    x = np.linspace(-2.0, 2.0, 17)
    for n in (chaos.MONOMIAL_MAX_ORDER + 1, 30, 40):
        expected = hermite_e.hermeval(x, [0] * n + [1])
        scale = np.abs(expected).max()
        np.testing.assert_allclose(table.evaluate(n, x), expected, rtol=1e-8, atol=1e-10 * scale)


def test_xi_eval():
    assert xi_eval(ZERO, {}) == 1.0
    assert xi_eval(e3, {3: 1.5}) == pytest.approx(1.5)
    assert xi_eval(two_e1, {1: 2.0}) == pytest.approx(3.0 / math.sqrt(2.0))
    samples = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(xi_eval(e1 + e2, {1: samples, 2: 2.0}), 2.0 * samples)
    with pytest.raises(MissingSampleError):
        xi_eval(e2, {1: 0.3})


def test_wick_product_examples():
    assert wick_product_scalar(xi(e1), xi(e1)).coeffs == pytest.approx({two_e1: math.sqrt(2.0)})
    u = ChaosScalar({ZERO: 0.5, e1: -1.0, e1 + e2: 2.0})
    assert wick_product_scalar(u, xi(ZERO)).max_abs_diff(u) == 0.0
    assert wick_product_scalar(hermite_expansion(1), hermite_expansion(1)).max_abs_diff(hermite_expansion(2)) < 1e-14


def test_wick_hermite_identity():
    for k in range(9):
        for n in range(9):
            product = wick_product_scalar(hermite_expansion(k), hermite_expansion(n))
            assert product.max_abs_diff(hermite_expansion(k + n)) <= 1e-12 * math.sqrt(math.factorial(k + n))


def test_wick_commutative_and_associative(rng):
    for _ in range(5):
        u, v, w = (random_scalar(rng, 2, 3) for _ in range(3))
        assert wick_product_scalar(u, v).max_abs_diff(wick_product_scalar(v, u)) <= 1e-12
        left = wick_product_scalar(wick_product_scalar(u, v), w)
        right = wick_product_scalar(u, wick_product_scalar(v, w))
        assert left.max_abs_diff(right) <= 1e-12


def test_wick_truncation_reports_lost_mass():
    product = wick_product_scalar(xi(e1), xi(e2), max_degree=1)
    assert len(product) == 0
    assert product.truncated_mass == pytest.approx(1.0)


def test_wick_product_paired():
    a, b = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    only_mean = wick_product_paired(ChaosVector(2, {ZERO: a}), ChaosVector(2, {ZERO: b}))
    assert only_mean.coeffs == pytest.approx({ZERO: 1.0})
    assert wick_product_paired(ChaosVector(2, {ZERO: a}), ChaosVector(2, {e1: b})).coeffs == pytest.approx({e1: 1.0})
    paired = wick_product_paired(ChaosVector(2, {e1: a}), ChaosVector(2, {e1: b}))
    assert paired.coeffs == pytest.approx({two_e1: math.sqrt(2.0)})
    with pytest.raises(DimensionMismatch):
        wick_product_paired(ChaosVector(2, {ZERO: a}), ChaosVector(3, {ZERO: [1.0, 0.0, 0.0]}))


def test_ordinary_product():
    product = ordinary_product(xi(e1), xi(e1))
    assert product.coeffs == pytest.approx({two_e1: math.sqrt(2.0), ZERO: 1.0})
    u = ChaosScalar({e1: 2.0, e2 + e3: -1.0})
    assert ordinary_product(u, xi(ZERO)).max_abs_diff(u) == 0.0
    assert ordinary_product(xi(e1), xi(e2)).coeffs == pytest.approx({e1 + e2: 1.0})
    assert gauss_hermite_moment([e1, e2, e1 + e2]) == pytest.approx(1.0)


def test_triple_moments_against_quadrature():
    alphas = enumerate_multiindices(3, 2)
    for a in alphas:
        for b in alphas:
            for c in alphas[::3]:
                moment = expectation(ordinary_product(ordinary_product(xi(a), xi(b)), xi(c)))
                assert moment == pytest.approx(gauss_hermite_moment([a, b, c]), abs=1e-9)


def test_malliavin():
    d = malliavin(xi(e2), 3)
    np.testing.assert_allclose(d.get(ZERO), [0.0, 1.0, 0.0])
    assert len(malliavin(xi(ZERO), 3)) == 0
    d = malliavin(xi(two_e1), 2)
    np.testing.assert_allclose(d.get(e1), [math.sqrt(2.0), 0.0])
    assert malliavin_component(xi(two_e1), 1).coeffs == pytest.approx({e1: math.sqrt(2.0)})
    with pytest.raises(RangeError):
        malliavin(xi(e3), 2)


def test_malliavin_components_match_vector(rng):
    u = random_scalar(rng, 3, 3)
    vector = malliavin(u, 3)
    for k in range(1, 4):
        assert vector.component(k).max_abs_diff(malliavin_component(u, k)) <= 1e-15


def test_product_via_wick_malliavin_examples():
    product = product_via_wick_malliavin(xi(e1), xi(e1), 2)
    assert product.coeffs == pytest.approx({two_e1: math.sqrt(2.0), ZERO: 1.0})
    u = ChaosScalar({e1: 1.0, e1 + e2: 0.5})
    v = ChaosScalar({e2: -2.0, two_e1: 1.0})
    assert product_via_wick_malliavin(u, v, 0).max_abs_diff(wick_product_scalar(u, v)) == 0.0
    left = product_via_wick_malliavin(xi(two_e1), xi(two_e1), 3)
    assert left.max_abs_diff(ordinary_product(xi(two_e1), xi(two_e1))) <= 1e-10


def test_product_formula_on_all_pairs():
    alphas = enumerate_multiindices(4, 3)
    for theta in alphas[::4]:
        for kappa in alphas[::3]:
            via = product_via_wick_malliavin(xi(theta), xi(kappa), 4)
            assert via.max_abs_diff(ordinary_product(xi(theta), xi(kappa))) <= 1e-10


def test_skorokhod_of_deterministic_integrand(trig_basis):
    h = lambda s: np.stack([np.cos(s), s], axis=1)
    delta = skorokhod_coeffs(TimeChaosVector.deterministic(2, h), 1.0, trig_basis)
    nodes, weights = trig_basis.quadrature()
    assert all(alpha.degree == 1 for alpha in delta.coeffs)
    for k in range(1, trig_basis.size + 1):
        expected = float(np.einsum('q,qj,qj->', weights, h(nodes), trig_basis.e_values(k, nodes)))
        assert delta.get(MultiIndex.unit(k)) == pytest.approx(expected, abs=1e-12)


def test_skorokhod_examples(trig_basis):
    assert len(skorokhod_coeffs(TimeChaosVector(2), 1.0, trig_basis)) == 0
    v = TimeChaosVector(2, {e1: lambda s: trig_basis.e_values(1, s)})
    delta = skorokhod_coeffs(v, 1.0, trig_basis)
    assert delta.get(two_e1) == pytest.approx(math.sqrt(2.0), abs=1e-12)
    with pytest.raises(DimensionMismatch):
        skorokhod_coeffs(TimeChaosVector(1), 1.0, trig_basis)


def test_expectation_rule(rng):
    assert expectation(xi(ZERO)) == 1.0
    assert expectation(xi(e1)) == 0.0
    for _ in range(5):
        u, v = random_scalar(rng, 3, 3), random_scalar(rng, 3, 3)
        assert expectation(wick_product_scalar(u, v)) == pytest.approx(expectation(u) * expectation(v), abs=1e-12)


def test_write_csv(tmp_path):
    path = tmp_path / 'chaos.csv'
    chaos.write_csv(str(path), {'u': ChaosScalar({ZERO: 1.0, e1: 0.25}), 'v': xi(e2)})
    lines = path.read_text().splitlines()
    assert lines[0] == 'alpha,degree,u,v'
    assert lines[1].startswith('a(),0,1,0')
    assert len(lines) == 4
