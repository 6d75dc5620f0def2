"""
Catalan numbers, Kondratiev weighted norms and second quantization.

All weights are handled in log space; the Kondratiev weight of alpha is
(|alpha|!)^rho (2N)^{2 s q alpha} with (2N)^alpha = prod_k (2k)^{alpha_k} and
s = -1 for rho < 0, +1 otherwise. Second quantization multiplies u_alpha by
kappa_{eps,|alpha|} (2^{-eps N})^alpha = exp(-eps e^{|alpha|}) prod_k 2^{-eps k alpha_k}.
"""
import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from wce.chaos import ChaosScalar, wick_product_scalar
from wce.errors import DomainError, EmptyInput, OverflowGuard
from wce.metrics import geometric_decay_rate
from wce.multiindex import MultiIndex, factorial_log, multinomial_log, ordered, sub_checked
from wce.spectral import SobolevNormSpec, sobolev_norm

logger = logging.getLogger(__name__)

LOG_WEIGHT_CLAMP = 600.0
_LOG_UNDERFLOW = -745.0
_LOG_OVERFLOW = 709.0
Q_SCAN = (1.1, 1.5, 2.0, 3.0)


class CatalanCache(object):
    """log c_0, log c_1, ... from c_n = sum_{k<n} c_k c_{n-1-k}."""

    def __init__(self):
        self.log_values: List[float] = [0.0]

    def extend(self, n: int):
        while len(self.log_values) <= n:
            m = len(self.log_values)
            logs = np.asarray(self.log_values)
            self.log_values.append(float(logsumexp(logs[:m] + logs[:m][::-1])))

    def log(self, n: int) -> float:
        if n < 0:
            raise DomainError("Catalan index must be nonnegative, got {}".format(n))
        self.extend(n)
        return self.log_values[n]


_CATALAN = CatalanCache()


def catalan(n: int) -> float:
    return math.exp(_CATALAN.log(n))


def catalan_log(n: int) -> float:
    return _CATALAN.log(n)


@dataclass(frozen=True)
class ScalingSpec:
    q: float = 1.5
    rho: float = -1.0
    epsilon: float = 0.1

    def __post_init__(self):
        if self.q < 0:
            raise DomainError("Kondratiev exponent q must be nonnegative, got {}".format(self.q))
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError("rho must lie in [-1, 1], got {}".format(self.rho))
        if self.epsilon < 0:
            raise DomainError("second quantization strength must be nonnegative, got {}".format(self.epsilon))

    def log_weight(self, alpha: MultiIndex) -> float:
        return kondratiev_log_weight(alpha, self.rho, self.q)

    def log_factor(self, alpha: MultiIndex) -> float:
        return second_quantization_log_factor(alpha, self.epsilon)


def _log_weight(alpha: MultiIndex, rho: float, q: float) -> Tuple[float, bool]:
    sign = -1.0 if rho < 0 else 1.0
    log_w = rho * float(gammaln(alpha.degree + 1.0))
    log_w += sign * 2.0 * q * sum(v * math.log(2.0 * k) for k, v in alpha.entries)
    if abs(log_w) > LOG_WEIGHT_CLAMP:
        return math.copysign(LOG_WEIGHT_CLAMP, log_w), True
    return log_w, False


def kondratiev_log_weight(alpha: MultiIndex, rho: float, q: float) -> float:
    log_w, clamped = _log_weight(alpha, rho, q)
    if clamped:
        logger.warning("Kondratiev weight of %s clamped at log weight %.1f", alpha, log_w)
    return log_w


def _log_weights(alphas: Sequence[MultiIndex], rho: float, q: float) -> Dict[MultiIndex, float]:
    """Log weights of a whole expansion; clamping is reported once."""
    out, clamped = {}, []
    for alpha in alphas:
        out[alpha], hit = _log_weight(alpha, rho, q)
        if hit:
            clamped.append(str(alpha))
    if clamped:
        logger.warning("%d Kondratiev weights clamped at |log weight| = %.0f (rho=%g, q=%g), first %s",
                       len(clamped), LOG_WEIGHT_CLAMP, rho, q, clamped[0])
    return out


def _as_norm(value, field_norm: Optional[Callable]) -> float:
    if isinstance(value, (int, float, np.floating)):
        return abs(float(value))
    if field_norm is None:
        return sobolev_norm(value, SobolevNormSpec(0.0, 2.0))
    return float(field_norm(value))


def coefficient_norm_map(u, field_norm: Optional[Callable] = None) -> Dict[MultiIndex, float]:
    """|u_alpha| for every stored coefficient of a ChaosScalar or a ChaosField."""
    return {alpha: _as_norm(value, field_norm) for alpha, value in u.coeffs.items()}


def kondratiev_norm(u, rho: float, q: float, field_norm: Optional[Callable] = None) -> float:
    """(sum_alpha weight(alpha) |u_alpha|^2)^{1/2}, summed in enumeration order."""
    norms = coefficient_norm_map(u, field_norm)
    weights = _log_weights(ordered(norms), rho, q)
    total = 0.0
    for alpha in ordered(norms):
        if norms[alpha] > 0.0:
            total += math.exp(weights[alpha] + 2.0 * math.log(norms[alpha]))
    return math.sqrt(total)


def kondratiev_table(u, rho: float, q: float, field_norm: Optional[Callable] = None,
                     slack: Optional[Mapping[MultiIndex, float]] = None) -> List[Dict]:
    norms = coefficient_norm_map(u, field_norm)
    weights = _log_weights(ordered(norms), rho, q)
    rows = []
    for alpha in ordered(norms):
        weight = math.exp(weights[alpha])
        rows.append({'alpha': str(alpha), 'degree': alpha.degree, 'weight': weight,
                     'field_norm': norms[alpha], 'contribution': weight * norms[alpha] ** 2,
                     'catalan_slack': '' if slack is None or alpha not in slack else slack[alpha]})
    return rows


def write_table_csv(path: str, rows: Sequence[Dict]):
    if not rows:
        raise EmptyInput("no rows to write to {}".format(path))
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


class CatalanFit(NamedTuple):
    b0: float
    K: float
    slack: Dict[MultiIndex, float]
    passed: Dict[MultiIndex, bool]

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def rows(self) -> List[Dict]:
        return [{'alpha': str(a), 'degree': a.degree, 'slack': self.slack[a], 'passed': self.passed[a]}
                for a in ordered(self.slack)]


def _bound_base_log(alpha: MultiIndex, K: float) -> float:
    """log of sqrt(alpha!) C_{n-1} (n choose alpha) K^n."""
    n = alpha.degree
    return 0.5 * factorial_log(alpha) + catalan_log(n - 1) + multinomial_log(alpha) + n * math.log(K)


def catalan_bound_check(norms: Mapping[MultiIndex, float], K: Optional[float] = None) -> CatalanFit:
    """
    Smallest B0 with L_alpha <= sqrt(alpha!) C_{|alpha|-1} (|alpha| choose alpha) B0^{|alpha|-1} K^{|alpha|}
    for every |alpha| >= 2. K defaults to 1 + max_i L_{e_i}.
    """
    if not norms:
        raise EmptyInput("no coefficient norms to fit")
    if K is None:
        K = 1.0 + max([value for alpha, value in norms.items() if alpha.degree == 1], default=0.0)
    if K <= 0:
        raise DomainError("K must be positive, got {}".format(K))

    upper = [alpha for alpha in ordered(norms) if alpha.degree >= 2]
    b0 = 0.0
    for alpha in upper:
        value = norms[alpha]
        if value > 0.0:
            ratio = math.exp((math.log(value) - _bound_base_log(alpha, K)) / (alpha.degree - 1))
            b0 = max(b0, ratio)

    slack, passed = {}, {}
    for alpha in upper:
        if b0 > 0.0:
            bound = math.exp(_bound_base_log(alpha, K) + (alpha.degree - 1) * math.log(b0))
        else:
            bound = 0.0
        gap = bound - norms[alpha]
        if abs(gap) <= 1e-12 * max(bound, norms[alpha]):
            gap = 0.0
        slack[alpha] = gap
        passed[alpha] = gap >= 0.0
    logger.info("Catalan fit: B0=%.6g with K=%.6g over %d coefficients", b0, K, len(upper))
    return CatalanFit(b0, K, slack, passed)


def second_quantization_log_factor(alpha: MultiIndex, eps: float) -> float:
    return -eps * math.exp(alpha.degree) - eps * math.log(2.0) * sum(k * v for k, v in alpha.entries)


def _rescale(u, eps: float, sign: float):
    if eps < 0:
        raise DomainError("second quantization strength must be nonnegative, got {}".format(eps))
    if eps == 0.0:
        return u.map_coeffs(lambda alpha, value: value)
    underflow = []

    def scale(alpha, value):
        log_factor = sign * second_quantization_log_factor(alpha, eps)
        if log_factor > _LOG_OVERFLOW:
            raise OverflowGuard("inverse rescaling of {} overflows (log factor {:.1f})".format(alpha, log_factor))
        if log_factor < _LOG_UNDERFLOW:
            underflow.append(alpha)
            return value * 0.0
        return value * math.exp(log_factor)

    out = u.map_coeffs(scale)
    if underflow:
        logger.warning("second quantization underflowed %d coefficients (first %s), set to zero",
                       len(underflow), underflow[0])
    return out


def second_quantize(u, eps: float):
    """C_eps u, for a ChaosScalar or a ChaosField."""
    return _rescale(u, eps, 1.0)


def inverse_second_quantize(u, eps: float):
    return _rescale(u, eps, -1.0)


def gamma_rescale(u: ChaosScalar, lam: Mapping[int, float]) -> ChaosScalar:
    """Gamma(B) u = sum_alpha u_alpha lambda^alpha xi_alpha; unlisted lambda_k are 1."""
    for k, value in lam.items():
        if value <= 0:
            raise DomainError("lambda_{} must be positive, got {}".format(k, value))

    def scale(alpha, value):
        return value * math.prod(lam.get(k, 1.0) ** v for k, v in alpha.entries)

    return u.map_coeffs(scale)


def gamma_rescale_wick_identity_check(u: ChaosScalar, v: ChaosScalar, lam: Mapping[int, float]) -> float:
    """max |Gamma(B)(u <> v) - Gamma(B)u <> Gamma(B)v| over the coefficients."""
    left = gamma_rescale(wick_product_scalar(u, v), lam)
    right = wick_product_scalar(gamma_rescale(u, lam), gamma_rescale(v, lam))
    return left.max_abs_diff(right)


def rescale_multiplicativity_ratio(alpha: MultiIndex, beta: MultiIndex, eps: float) -> float:
    """lambda(alpha) / (lambda(beta) lambda(alpha - beta)) for the second quantization factor lambda."""
    rest = sub_checked(alpha, beta)
    log_ratio = (second_quantization_log_factor(alpha, eps) - second_quantization_log_factor(beta, eps)
                 - second_quantization_log_factor(rest, eps))
    return math.exp(log_ratio)


def level_sums(u, rho: float = 0.0, q: float = 0.0, field_norm: Optional[Callable] = None) -> List[float]:
    """S_n = sum_{|alpha|=n} weight(alpha) |u_alpha|^2 for n = 0..max degree."""
    norms = coefficient_norm_map(u, field_norm)
    top = max((alpha.degree for alpha in norms), default=0)
    sums = [0.0] * (top + 1)
    weights = _log_weights(ordered(norms), rho, q)
    for alpha in ordered(norms):
        if norms[alpha] > 0.0:
            sums[alpha.degree] += math.exp(weights[alpha] + 2.0 * math.log(norms[alpha]))
    return sums


class QSelection(NamedTuple):
    q: float
    rates: Dict[float, float]
    decaying: bool


def select_q(u, q_scan: Sequence[float] = Q_SCAN, rho: float = -1.0,
             field_norm: Optional[Callable] = None) -> QSelection:
    """Smallest q of the scan whose weighted level sums decay geometrically."""
    rates = {}
    for q in sorted(q_scan):
        rates[q] = geometric_decay_rate(level_sums(u, rho, q, field_norm))
    for q in sorted(q_scan):
        if rates[q] < 1.0:
            return QSelection(q, rates, True)
    logger.warning("no q in %s gives geometrically decaying level sums (rates %s)", list(q_scan), rates)
    return QSelection(max(q_scan), rates, False)


class IntegrabilityReport(NamedTuple):
    level_sums: List[float]
    rate: float
    total: float
    passed: bool


def square_integrability_check(u, field_norm: Optional[Callable] = None) -> IntegrabilityReport:
    """Finite sum_alpha |u_alpha|^2 with geometrically decaying level sums."""
    sums = level_sums(u, 0.0, 0.0, field_norm)
    total = float(sum(sums))
    rate = geometric_decay_rate(sums)
    return IntegrabilityReport(sums, rate, total, math.isfinite(total) and rate < 1.0)
