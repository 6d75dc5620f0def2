"""
Wiener chaos algebra over a finite truncation.

A random variable v = sum_alpha v_alpha xi_alpha is held through its coefficients,
where xi_alpha = prod_k H_{alpha_k}(W(e_k)) / sqrt(alpha!) and H_n are the
probabilists' Hermite polynomials. Products, Wick products, Malliavin
derivatives and Skorokhod integrals act on the coefficients only.
"""
import csv
import itertools
import logging
import math
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import hermite_e, polynomial

from wce.errors import DimensionMismatch, MissingSampleError, QuadratureError, RangeError
from wce.multiindex import (ZERO, MultiIndex, add, chaos_binomial_sqrt, factorial_log, minimum,
                            ordered, sub_checked, sub_indices)

logger = logging.getLogger(__name__)

DROP_TOL = 1e-14
HERMITE_MAX_ORDER = 64
MONOMIAL_MAX_ORDER = 20


class ChaosScalar(object):
    """Coefficients of a real generalized random variable."""

    def __init__(self, coeffs: Optional[Mapping[MultiIndex, float]] = None,
                 drop_tol: float = DROP_TOL, truncated_mass: float = 0.0):
        self.drop_tol = drop_tol
        self.truncated_mass = truncated_mass
        self.coeffs: Dict[MultiIndex, float] = {}
        for alpha, value in (coeffs or {}).items():
            if abs(value) >= drop_tol:
                self.coeffs[alpha] = float(value)

    @classmethod
    def basis_element(cls, alpha: MultiIndex, value: float = 1.0) -> 'ChaosScalar':
        return cls({alpha: value})

    @classmethod
    def constant(cls, value: float) -> 'ChaosScalar':
        return cls({ZERO: value})

    def get(self, alpha: MultiIndex) -> float:
        return self.coeffs.get(alpha, 0.0)

    def degree(self) -> int:
        return max((alpha.degree for alpha in self.coeffs), default=0)

    def support(self) -> set:
        out = set()
        for alpha in self.coeffs:
            out.update(alpha.support)
        return out

    def items(self):
        return [(alpha, self.coeffs[alpha]) for alpha in ordered(self.coeffs)]

    def map_coeffs(self, fn: Callable[[MultiIndex, float], float]) -> 'ChaosScalar':
        return ChaosScalar({alpha: fn(alpha, value) for alpha, value in self.coeffs.items()},
                           drop_tol=self.drop_tol)

    def max_abs_diff(self, other: 'ChaosScalar') -> float:
        keys = set(self.coeffs) | set(other.coeffs)
        return max((abs(self.get(a) - other.get(a)) for a in keys), default=0.0)

    def __add__(self, other: 'ChaosScalar') -> 'ChaosScalar':
        out = dict(self.coeffs)
        for alpha, value in other.coeffs.items():
            out[alpha] = out.get(alpha, 0.0) + value
        return ChaosScalar(out, drop_tol=self.drop_tol,
                           truncated_mass=math.hypot(self.truncated_mass, other.truncated_mass))

    def __sub__(self, other: 'ChaosScalar') -> 'ChaosScalar':
        return self + other * -1.0

    def __mul__(self, scalar: float) -> 'ChaosScalar':
        return ChaosScalar({a: v * scalar for a, v in self.coeffs.items()}, drop_tol=self.drop_tol,
                           truncated_mass=abs(scalar) * self.truncated_mass)

    __rmul__ = __mul__

    def __len__(self):
        return len(self.coeffs)

    def __repr__(self):
        body = ', '.join('{}: {:.6g}'.format(a, v) for a, v in self.items())
        return 'ChaosScalar({' + body + '})'


class ChaosVector(object):
    """Coefficients valued in R^m (a finite truncation of a Hilbert space E)."""

    def __init__(self, m: int, coeffs: Optional[Mapping[MultiIndex, Sequence[float]]] = None,
                 drop_tol: float = DROP_TOL):
        self.m = m
        self.drop_tol = drop_tol
        self.coeffs: Dict[MultiIndex, np.ndarray] = {}
        for alpha, value in (coeffs or {}).items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != (m,):
                raise DimensionMismatch("expected vectors of length {}, got shape {}".format(m, value.shape))
            if np.linalg.norm(value) >= drop_tol:
                self.coeffs[alpha] = value

    def get(self, alpha: MultiIndex) -> np.ndarray:
        return self.coeffs.get(alpha, np.zeros(self.m))

    def degree(self) -> int:
        return max((alpha.degree for alpha in self.coeffs), default=0)

    def component(self, k: int) -> ChaosScalar:
        """The scalar expansion of the k-th coordinate (1-based)."""
        return ChaosScalar({alpha: value[k - 1] for alpha, value in self.coeffs.items()},
                           drop_tol=self.drop_tol)

    def items(self):
        return [(alpha, self.coeffs[alpha]) for alpha in ordered(self.coeffs)]

    def __len__(self):
        return len(self.coeffs)


class TimeChaosVector(object):
    """Time dependent R^m-valued coefficients s -> v_alpha(s), evaluated on node arrays."""

    def __init__(self, m: int, coeffs: Optional[Mapping[MultiIndex, Callable[[np.ndarray], np.ndarray]]] = None):
        self.m = m
        self.coeffs = dict(coeffs or {})

    @classmethod
    def deterministic(cls, m: int, h: Callable[[np.ndarray], np.ndarray]) -> 'TimeChaosVector':
        return cls(m, {ZERO: h})

    def evaluate(self, alpha: MultiIndex, times: np.ndarray) -> np.ndarray:
        values = np.asarray(self.coeffs[alpha](times), dtype=np.float64)
        if values.shape != (len(times), self.m):
            raise DimensionMismatch("integrand for {} returned shape {}, expected {}".format(
                alpha, values.shape, (len(times), self.m)))
        return values


class HermiteTable(object):
    """
    Probabilists' Hermite polynomials He_0..He_max_order. The monomial
    coefficient triangle is built once from He_{n+1} = x He_n - n He_{n-1};
    orders above MONOMIAL_MAX_ORDER are evaluated by the recurrence itself.
    """

    def __init__(self, max_order: int = HERMITE_MAX_ORDER):
        self.max_order = max_order
        triangle = np.zeros((max_order + 1, max_order + 1))
        triangle[0, 0] = 1.0
        if max_order >= 1:
            triangle[1, 1] = 1.0
        for n in range(1, max_order):
            triangle[n + 1, 1:] = triangle[n, :-1]
            triangle[n + 1] -= n * triangle[n - 1]
        self.triangle = triangle

    def _check(self, n: int):
        if n < 0 or n > self.max_order:
            raise RangeError("Hermite order {} outside [0, {}]".format(n, self.max_order))

    def coefficients(self, n: int) -> np.ndarray:
        """Monomial coefficients of He_n, lowest power first."""
        self._check(n)
        return self.triangle[n, :n + 1].copy()

    def evaluate(self, n: int, x):
        self._check(n)
        x = np.asarray(x, dtype=np.float64)
        if n <= MONOMIAL_MAX_ORDER:
            return polynomial.polyval(x, self.triangle[n, :n + 1])
        h_prev, h = np.ones_like(x), x
        for j in range(1, n):
            h_prev, h = h, x * h - j * h_prev
        return h


_TABLE = HermiteTable()


def hermite_eval(n: int, x, table: HermiteTable = _TABLE):
    values = table.evaluate(n, x)
    return float(values) if np.ndim(values) == 0 else values


def xi_eval(a: MultiIndex, gaussians: Mapping[int, Union[float, np.ndarray]]):
    """xi_alpha at the sampled W(e_k); arrays of samples broadcast."""
    value = 1.0
    for k, v in a.entries:
        if k not in gaussians:
            raise MissingSampleError("no Gaussian sample for basis index {}".format(k))
        value = value * _TABLE.evaluate(v, gaussians[k])
    value = value / math.exp(0.5 * factorial_log(a))
    return float(value) if np.ndim(value) == 0 else value


def hermite_expansion(k: int, index: int = 1) -> ChaosScalar:
    """H_k(xi) for xi = W(e_index): H_k = sqrt(k!) xi_{k e_index}."""
    return ChaosScalar({MultiIndex.unit(index, k) if k else ZERO: math.exp(0.5 * math.lgamma(k + 1))})


def _collect(terms: Dict[MultiIndex, float], max_degree: Optional[int], drop_tol: float) -> ChaosScalar:
    lost = 0.0
    kept = {}
    for alpha, value in terms.items():
        if max_degree is not None and alpha.degree > max_degree:
            lost += value * value
        else:
            kept[alpha] = value
    if lost > 0.0:
        logger.info("truncation above degree %s dropped coefficient mass %.3e", max_degree, math.sqrt(lost))
    return ChaosScalar(kept, drop_tol=drop_tol, truncated_mass=math.sqrt(lost))


def wick_product_scalar(u: ChaosScalar, v: ChaosScalar, max_degree: Optional[int] = None) -> ChaosScalar:
    terms: Dict[MultiIndex, float] = {}
    for alpha, ua in u.items():
        for beta, vb in v.items():
            gamma = add(alpha, beta)
            terms[gamma] = terms.get(gamma, 0.0) + ua * vb * chaos_binomial_sqrt(gamma, alpha)
    return _collect(terms, max_degree, u.drop_tol)


def wick_product_paired(u: ChaosVector, v: ChaosVector, max_degree: Optional[int] = None) -> ChaosScalar:
    if u.m != v.m:
        raise DimensionMismatch("cannot pair vectors of length {} and {}".format(u.m, v.m))
    terms: Dict[MultiIndex, float] = {}
    for beta, ub in u.items():
        for gamma, vg in v.items():
            alpha = add(beta, gamma)
            terms[alpha] = terms.get(alpha, 0.0) + float(np.dot(ub, vg)) * chaos_binomial_sqrt(alpha, beta)
    return _collect(terms, max_degree, u.drop_tol)


def _hermite_product_coeff(theta: MultiIndex, kappa: MultiIndex, p: MultiIndex) -> float:
    rest = sub_checked(add(theta, kappa), add(p, p))
    return (chaos_binomial_sqrt(theta, p) * chaos_binomial_sqrt(kappa, p)
            * chaos_binomial_sqrt(rest, sub_checked(kappa, p)) * math.exp(factorial_log(p)))


def ordinary_product(u: ChaosScalar, v: ChaosScalar, max_degree: Optional[int] = None) -> ChaosScalar:
    """Pointwise product through xi_theta xi_kappa = sum_{p <= theta ^ kappa} c xi_{theta+kappa-2p}."""
    terms: Dict[MultiIndex, float] = {}
    for theta, ut in u.items():
        for kappa, vk in v.items():
            for p in sub_indices(minimum(theta, kappa)):
                gamma = sub_checked(add(theta, kappa), add(p, p))
                terms[gamma] = terms.get(gamma, 0.0) + ut * vk * _hermite_product_coeff(theta, kappa, p)
    return _collect(terms, max_degree, u.drop_tol)


def malliavin_component(u: ChaosScalar, k: int) -> ChaosScalar:
    """k-th coordinate of Du: coefficient sqrt(alpha_k + 1) u_{alpha + e_k} at alpha."""
    out = {}
    unit = MultiIndex.unit(k)
    for mu, value in u.coeffs.items():
        mk = mu[k]
        if mk:
            out[sub_checked(mu, unit)] = math.sqrt(mk) * value
    return ChaosScalar(out, drop_tol=u.drop_tol)


def malliavin(u: ChaosScalar, basis_dim: int) -> ChaosVector:
    out: Dict[MultiIndex, np.ndarray] = {}
    for mu, value in u.coeffs.items():
        for k, mk in mu.entries:
            if k > basis_dim:
                raise RangeError("basis index {} exceeds basis dimension {}".format(k, basis_dim))
            alpha = sub_checked(mu, MultiIndex.unit(k))
            vec = out.setdefault(alpha, np.zeros(basis_dim))
            vec[k - 1] += math.sqrt(mk) * value
    return ChaosVector(basis_dim, out, drop_tol=u.drop_tol)


def _extend_derivatives(cache: Dict[tuple, ChaosScalar], multisets: Iterable[tuple]):
    """D_{k_1..k_n} u from the cached D_{k_1..k_{n-1}} u; multisets are sorted tuples."""
    for ks in multisets:
        if ks not in cache:
            cache[ks] = malliavin_component(cache[ks[:-1]], ks[-1])


def product_via_wick_malliavin(u: ChaosScalar, v: ChaosScalar, n_terms: int,
                               max_degree: Optional[int] = None) -> ChaosScalar:
    """
    sum_{n=0}^{n_terms} (D^n u <> D^n v) / n!, the contraction over H^{(x)n} taken
    on sorted index tuples with multiplicity n! / prod m_j!.
    """
    indices = sorted(u.support() & v.support())
    total = wick_product_scalar(u, v, max_degree)
    du: Dict[tuple, ChaosScalar] = {(): u}
    dv: Dict[tuple, ChaosScalar] = {(): v}
    for n in range(1, n_terms + 1):
        multisets = list(itertools.combinations_with_replacement(indices, n))
        _extend_derivatives(du, multisets)
        _extend_derivatives(dv, multisets)
        for ks in multisets:
            if not du[ks].coeffs or not dv[ks].coeffs:
                continue
            weight = 1.0
            for _, group in itertools.groupby(ks):
                weight /= math.factorial(len(list(group)))
            total = total + wick_product_scalar(du[ks], dv[ks], max_degree) * weight
    return total


def skorokhod_coeffs(v: TimeChaosVector, t: float, basis) -> ChaosScalar:
    """
    delta_t(v)_alpha = sum_k sqrt(alpha_k) int_0^t (v_{alpha - e_k}(s), e_k(s))_Y ds,
    with the basis' composite Gauss-Legendre rule on [0, t].
    """
    if v.m != basis.m_noise:
        raise DimensionMismatch("integrand has {} noise components, basis has {}".format(v.m, basis.m_noise))
    nodes, weights = basis.quadrature(t)
    out: Dict[MultiIndex, float] = {}
    for beta in ordered(v.coeffs):
        values = v.evaluate(beta, nodes)
        if not np.all(np.isfinite(values)):
            raise QuadratureError("non-finite integrand samples for coefficient {}".format(beta))
        for k in range(1, basis.size + 1):
            i, j = basis.pair(k)
            integral = float(np.dot(weights, basis.time_mode(i, nodes) * values[:, j - 1]))
            if integral == 0.0:
                continue
            alpha = add(beta, MultiIndex.unit(k))
            out[alpha] = out.get(alpha, 0.0) + math.sqrt(alpha[k]) * integral
    return ChaosScalar(out)


def expectation(u: ChaosScalar) -> float:
    return u.get(ZERO)


def gauss_hermite_moment(alphas: Sequence[MultiIndex], n_nodes: Optional[int] = None) -> float:
    """E[prod_i xi_{alpha_i}] by tensor Gauss-Hermite quadrature over the active Gaussians."""
    support = sorted(set(k for alpha in alphas for k in alpha.support))
    if not support:
        return 1.0
    if n_nodes is None:
        top = max(sum(alpha[k] for alpha in alphas) for k in support)
        n_nodes = top // 2 + 1
    nodes, weights = hermite_e.hermegauss(n_nodes)
    weights = weights / math.sqrt(2.0 * math.pi)
    grids = np.meshgrid(*([nodes] * len(support)), indexing='ij')
    w = np.ones_like(grids[0])
    for axis in range(len(support)):
        w = w * np.meshgrid(*([weights] * len(support)), indexing='ij')[axis]
    gaussians = {k: grids[axis] for axis, k in enumerate(support)}
    integrand = np.ones_like(w)
    for alpha in alphas:
        integrand = integrand * xi_eval(alpha, gaussians)
    return float(np.sum(w * integrand))


def write_csv(path: str, columns: Mapping[str, ChaosScalar]):
    """One row per multiindex (rendered form), one column per expansion."""
    names = list(columns)
    alphas = ordered(set(a for u in columns.values() for a in u.coeffs))
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['alpha', 'degree'] + names)
        for alpha in alphas:
            writer.writerow([str(alpha), alpha.degree] + ['{:.17g}'.format(columns[n].get(alpha)) for n in names])
