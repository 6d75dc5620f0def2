"""
Propagator systems for the chaos coefficients u_alpha of the stochastic
Navier-Stokes (or Burgers) equation.

unbiased_wick: u_0 solves the deterministic equation and every u_alpha with
|alpha| >= 1 a Stokes system linearized at u_0, driven by coefficients of
strictly lower degree (lower-triangular cascade).
standard_snse: the convective term couples every coefficient with the ones
above it through c(alpha, beta, p); the truncated system is advanced as a whole.

Both modes advance all coefficients with one integrating-factor Heun step per
dt: stage one for every level in degree order, then stage two from the
predictors. The zero mode of the unbiased cascade runs exactly the arithmetic
of spectral.ns_step.
"""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import torch
from tqdm import tqdm

from wce.basis import BasisSpec
from wce.errors import DependencyViolation, DimensionMismatch, DomainError, SolverError, WCEError
from wce.multiindex import (ZERO, MultiIndex, TruncationSpec, add, chaos_binomial_sqrt, ordered,
                            propagator_coeff, sub_checked, sub_indices)
from wce.scaling import second_quantize
from wce.spectral import (GridField, PDECoefficients, SobolevNormSpec, _hat, _phys, _project_hat,
                          blowup_guard, check_blowup, check_cfl, fft, h2_norms, ifft, imex_correct,
                          imex_factor, imex_predict, ns_rhs, ns_step, snapshot_steps, sobolev_norm,
                          step_count, stokes_rhs, uses_projection)
from wce.utils import Mode, TimeBasis

logger = logging.getLogger(__name__)

UNBIASED_TOLERANCE = 1e-12


class ChaosField(object):
    """Truncated expansion u = sum_alpha u_alpha xi_alpha with GridField coefficients."""

    def __init__(self, coeffs: Dict[MultiIndex, GridField], truncation: TruncationSpec,
                 time: float = 0.0, step: int = 0):
        if ZERO not in coeffs:
            raise DomainError("a chaos field needs its zero mode")
        outside = [alpha for alpha in coeffs if alpha not in truncation]
        if outside:
            raise DomainError("coefficients {} lie outside {}".format([str(a) for a in outside], truncation))
        self.coeffs = dict(coeffs)
        self.truncation = truncation
        self.time = time
        self.step = step

    @classmethod
    def deterministic(cls, u0: GridField, truncation: TruncationSpec) -> 'ChaosField':
        return cls({ZERO: u0}, truncation)

    @property
    def mean(self) -> GridField:
        return self.coeffs[ZERO]

    def get(self, alpha: MultiIndex) -> GridField:
        if alpha in self.coeffs:
            return self.coeffs[alpha]
        return self.mean.zeros_like()

    def items(self) -> List[Tuple[MultiIndex, GridField]]:
        return [(alpha, self.coeffs[alpha]) for alpha in ordered(self.coeffs)]

    def map_coeffs(self, fn: Callable[[MultiIndex, GridField], GridField]) -> 'ChaosField':
        return ChaosField({alpha: fn(alpha, value) for alpha, value in self.coeffs.items()},
                          self.truncation, self.time, self.step)

    def discrepancy(self, other: 'ChaosField') -> Dict[MultiIndex, float]:
        """Per-coefficient sup-norm of the difference."""
        keys = ordered(set(self.coeffs) | set(other.coeffs))
        return {alpha: (self.get(alpha) - other.get(alpha)).sup_norm() for alpha in keys}

    def __repr__(self):
        return 'ChaosField(t={:.6g}, {} coefficients, {})'.format(self.time, len(self.coeffs), self.truncation)


@dataclass
class PropagatorRun:
    mode: Mode
    coeffs: PDECoefficients
    basis: BasisSpec
    truncation: TruncationSpec
    dt: float
    T_end: float
    initial: ChaosField
    snapshots: int = 10
    p: float = 4.0
    p_max_degree: Optional[int] = None
    serial: bool = True
    workers: Optional[int] = None
    check_unbiased: bool = True
    verbose: bool = False

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.dt <= 0:
            raise DomainError("dt must be positive, got {}".format(self.dt))
        self.n_steps = step_count(self.T_end, self.dt)
        self.output_steps = snapshot_steps(self.n_steps, self.snapshots)
        if self.T_end > self.basis.horizon * (1 + 1e-12):
            raise DomainError("T_end={} exceeds the basis horizon {}".format(self.T_end, self.basis.horizon))
        if self.truncation.max_basis_index > self.basis.size:
            raise DomainError("truncation uses {} basis elements, the basis has {}".format(
                self.truncation.max_basis_index, self.basis.size))
        if self.coeffs.m_noise > self.basis.m_noise:
            raise DimensionMismatch("{} noise fields for {} noise directions".format(
                self.coeffs.m_noise, self.basis.m_noise))
        if self.initial.truncation != self.truncation:
            raise DomainError("initial data truncation {} differs from {}".format(
                self.initial.truncation, self.truncation))
        if any(alpha.degree > 0 for alpha in self.initial.coeffs):
            logger.warning("chaos initial data with random modes is experimental")

    @property
    def p_degree(self) -> int:
        return self.truncation.max_degree if self.p_max_degree is None else self.p_max_degree


class NormRow(NamedTuple):
    step: int
    time: float
    alpha: MultiIndex
    h22: float
    h2p: float
    sup: float


@dataclass
class PropagatorResult:
    run: PropagatorRun
    snapshots: List[ChaosField] = field(default_factory=list)
    captured: Dict[int, ChaosField] = field(default_factory=dict)
    norms: List[NormRow] = field(default_factory=list)
    dropped_terms: int = 0
    unbiased_deviation: float = 0.0

    @property
    def final(self) -> ChaosField:
        return self.snapshots[-1]

    def leakage(self) -> float:
        """Share of the top degree in the random energy of the final state."""
        energies = level_energies(self.final)
        random = sum(energies[1:])
        return energies[-1] / random if random > 0.0 and len(energies) > 1 else 0.0

    def write_norms_csv(self, path: str):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['step', 'time', 'alpha', 'degree', 'h22', 'h2p', 'sup'])
            for row in self.norms:
                writer.writerow([row.step, '{:.12g}'.format(row.time), str(row.alpha), row.alpha.degree,
                                 '{:.17g}'.format(row.h22), '{:.17g}'.format(row.h2p), '{:.17g}'.format(row.sup)])


def level_energies(u: ChaosField) -> List[float]:
    top = max(alpha.degree for alpha in u.coeffs)
    energies = [0.0] * (top + 1)
    for alpha, value in u.items():
        energies[alpha.degree] += sobolev_norm(value, SobolevNormSpec(0.0, 2.0)) ** 2
    return energies


class _StageFields(object):
    """Dealiased physical values and gradients of every coefficient at one stage."""

    def __init__(self, hats: Dict[MultiIndex, torch.Tensor], plan):
        self.plan = plan
        self.hats = hats
        self.values: Dict[MultiIndex, torch.Tensor] = {}
        self.grads: Dict[MultiIndex, List[torch.Tensor]] = {}
        for alpha, hat in hats.items():
            cut = hat * plan.dealias
            self.values[alpha] = _phys(cut, plan)
            self.grads[alpha] = [_phys(1j * plan.derivative[i] * cut, plan) for i in range(plan.d)]


class _LowerReader(object):
    """Access to the coefficients a source for `alpha` may depend on: degree below |alpha|."""

    def __init__(self, fields: _StageFields, alpha: MultiIndex):
        self.fields = fields
        self.alpha = alpha

    def _check(self, gamma: MultiIndex):
        if gamma.degree >= self.alpha.degree:
            raise DependencyViolation("source of {} read {} of degree {}".format(self.alpha, gamma, gamma.degree))
        if gamma not in self.fields.values:
            raise DependencyViolation("source of {} needs the missing coefficient {}".format(self.alpha, gamma))

    def value(self, gamma: MultiIndex) -> torch.Tensor:
        self._check(gamma)
        return self.fields.values[gamma]

    def grads(self, gamma: MultiIndex) -> List[torch.Tensor]:
        self._check(gamma)
        return self.fields.grads[gamma]


class _FullReader(object):
    def __init__(self, fields: _StageFields):
        self.fields = fields

    def value(self, gamma: MultiIndex) -> torch.Tensor:
        return self.fields.values[gamma]

    def grads(self, gamma: MultiIndex) -> List[torch.Tensor]:
        return self.fields.grads[gamma]


class _NoiseData(object):
    def __init__(self, coeffs: PDECoefficients, basis: BasisSpec, plan):
        self.basis = basis
        self.sigma = [None if s is None else _phys(fft(s) * plan.dealias, plan) for s in coeffs.sigma]
        self.g = [None if g is None else fft(g) for g in coeffs.g]

    def sigma_at(self, j: int) -> Optional[torch.Tensor]:
        return self.sigma[j - 1] if j <= len(self.sigma) else None

    def g_at(self, j: int) -> Optional[torch.Tensor]:
        return self.g[j - 1] if j <= len(self.g) else None


Term = Tuple[float, MultiIndex, MultiIndex]


def _accumulate(terms: Iterable[Term], reader, shape) -> torch.Tensor:
    """sum of weight * (u_a . grad) u_b in physical space."""
    total = torch.zeros(shape, dtype=torch.float64)
    for weight, a, b in terms:
        a_values, b_grads = reader.value(a), reader.grads(b)
        product = torch.zeros(shape, dtype=torch.float64)
        for i in range(len(b_grads)):
            product = product + a_values[i] * b_grads[i]
        total = total + weight * product
    return total


def _noise_terms(alpha: MultiIndex, reader, noise: _NoiseData, t: float, shape,
                 right: bool = False) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
    """
    sum_k sqrt(alpha_k) m_{i_k}(t) [(sigma_{j_k} . grad) u_{alpha - e_k} + g_{j_k} 1_{|alpha|=1}]
    as (physical multiplicative part, additive part in Fourier space). Steps read
    the time modes from inside: right-continuous at their start, left-continuous
    at their end.
    """
    physical = torch.zeros(shape, dtype=torch.float64)
    additive = None
    for k, v in alpha.entries:
        i, j = noise.basis.pair(k)
        amplitude = math.sqrt(v) * float(noise.basis.time_mode(i, t, right))
        if amplitude == 0.0:
            continue
        sigma = noise.sigma_at(j)
        if sigma is not None:
            grads = reader.grads(sub_checked(alpha, MultiIndex.unit(k)))
            for d in range(len(grads)):
                physical = physical + amplitude * (sigma[d] * grads[d])
        g = noise.g_at(j)
        if g is not None and alpha.degree == 1:
            additive = amplitude * g if additive is None else additive + amplitude * g
    return physical, additive


def unbiased_F_terms(alpha: MultiIndex) -> List[Term]:
    """-sqrt(C(alpha, gamma)) (u_{alpha-gamma} . grad) u_gamma for 1 <= |gamma| <= |alpha| - 1."""
    terms = []
    for gamma in ordered(sub_indices(alpha)):
        if 1 <= gamma.degree <= alpha.degree - 1:
            terms.append((-chaos_binomial_sqrt(alpha, gamma), sub_checked(alpha, gamma), gamma))
    return terms


def standard_terms(alpha: MultiIndex, truncation: TruncationSpec, p_max_degree: int) -> Tuple[List[Term], int]:
    """
    -c(alpha, beta, p) (u_{beta+p} . grad) u_{alpha+p-beta} over p with |p| <= p_max_degree;
    terms whose indices leave the truncation are dropped and counted.
    """
    terms, dropped = [], 0
    for p in truncation.enumerate():
        if p.degree > p_max_degree:
            break
        for beta in ordered(sub_indices(alpha)):
            a = add(beta, p)
            b = sub_checked(add(alpha, p), beta)
            if a in truncation and b in truncation:
                terms.append((-propagator_coeff(alpha, beta, p), a, b))
            else:
                dropped += 1
    return terms, dropped


def _source_hat(physical: torch.Tensor, additive: Optional[torch.Tensor], plan) -> torch.Tensor:
    hat = _hat(physical, plan) * plan.dealias
    return hat if additive is None else hat + additive


def _F_alpha_hat(alpha: MultiIndex, reader: _LowerReader, terms: List[Term], noise: _NoiseData, t: float,
                 shape, convection: bool, plan, right: bool = False) -> torch.Tensor:
    physical = _accumulate(terms, reader, shape) if convection else torch.zeros(shape, dtype=torch.float64)
    noise_physical, additive = _noise_terms(alpha, reader, noise, t, shape, right)
    return _source_hat(physical + noise_physical, additive, plan)


def assemble_F_alpha(state: ChaosField, alpha: MultiIndex, basis: BasisSpec, coeffs: PDECoefficients,
                     t: float, right: bool = False) -> GridField:
    """
    F_alpha = -sum_{1<=|gamma|<=|alpha|-1} sqrt(C(alpha, gamma)) (u_{alpha-gamma} . grad) u_gamma
              + sum_k sqrt(alpha_k) m_{i_k}(t) [(sigma_{j_k} . grad) u_{alpha(k)} + g_{j_k} 1_{|alpha|=1}],
    dealiased; reads only coefficients of degree below |alpha|.
    """
    if alpha.degree == 0:
        raise DomainError("the zero mode has no Stokes source")
    u0 = state.mean
    plan = u0.plan
    lower = {gamma: fft(value) for gamma, value in state.coeffs.items() if gamma.degree < alpha.degree}
    reader = _LowerReader(_StageFields(lower, plan), alpha)
    F_hat = _F_alpha_hat(alpha, reader, unbiased_F_terms(alpha), _NoiseData(coeffs, basis, plan), t,
                         tuple(u0.values.shape), coeffs.convection, plan, right)
    return ifft(F_hat, u0.d, u0.n)


def convective_source(state: ChaosField, alpha: MultiIndex, mode: Mode = Mode.STANDARD_SNSE,
                      p_max_degree: Optional[int] = None) -> GridField:
    """The full dealiased convective term of the alpha-equation (before projection)."""
    u0 = state.mean
    plan = u0.plan
    fields = _StageFields({gamma: fft(value) for gamma, value in state.coeffs.items()}, plan)
    if Mode(mode) == Mode.UNBIASED_WICK:
        terms = [(-chaos_binomial_sqrt(alpha, gamma), sub_checked(alpha, gamma), gamma)
                 for gamma in ordered(sub_indices(alpha))]
    else:
        degree = state.truncation.max_degree if p_max_degree is None else p_max_degree
        terms, _ = standard_terms(alpha, state.truncation, degree)
    terms = [term for term in terms if term[1] in state.coeffs and term[2] in state.coeffs]
    physical = _accumulate(terms, _FullReader(fields), tuple(u0.values.shape))
    return ifft(_source_hat(physical, None, plan), u0.d, u0.n)


class _System(object):
    """Right-hand sides of the truncated propagator system."""

    def __init__(self, run: PropagatorRun, plan):
        self.run = run
        self.plan = plan
        self.members = run.truncation.enumerate()
        self.noise = _NoiseData(run.coeffs, run.basis, plan)
        self.standard = run.mode == Mode.STANDARD_SNSE
        self.terms: Dict[MultiIndex, List[Term]] = {}
        self.dropped = 0
        for alpha in self.members:
            if self.standard:
                self.terms[alpha], dropped = standard_terms(alpha, run.truncation, run.p_degree)
                self.dropped += dropped
            elif alpha.degree:
                self.terms[alpha] = unbiased_F_terms(alpha)
        if self.dropped:
            logger.info("standard propagator drops %d terms leaving the truncation", self.dropped)

    def rhs(self, alpha: MultiIndex, fields: _StageFields, t: float, right: bool = False) -> torch.Tensor:
        run, plan = self.run, self.plan
        if alpha.degree == 0 and not self.standard:
            return ns_rhs(fields.hats[ZERO], run.coeffs, t, plan)
        shape = tuple(fields.hats[ZERO].shape[:1]) + (plan.n,) * plan.d
        if not self.standard:
            F_hat = _F_alpha_hat(alpha, _LowerReader(fields, alpha), self.terms[alpha], self.noise, t, shape,
                                 run.coeffs.convection, plan, right)
            return stokes_rhs(fields.hats[alpha], fields.hats[ZERO], F_hat, run.coeffs, plan)
        physical = torch.zeros(shape, dtype=torch.float64)
        if run.coeffs.convection:
            physical = _accumulate(self.terms[alpha], _FullReader(fields), shape)
        additive = None
        if alpha.degree:
            noise_physical, additive = _noise_terms(alpha, _LowerReader(fields, alpha), self.noise, t, shape, right)
            physical = physical + noise_physical
        hat = _source_hat(physical, additive, plan)
        if alpha.degree == 0:
            forcing = run.coeffs.forcing(t)
            if forcing is not None:
                hat = hat + fft(forcing)
        return _project_hat(hat, plan) if uses_projection(plan, hat) else hat


def _levels(members: Sequence[MultiIndex]) -> List[List[MultiIndex]]:
    levels: Dict[int, List[MultiIndex]] = {}
    for alpha in members:
        levels.setdefault(alpha.degree, []).append(alpha)
    return [levels[n] for n in sorted(levels)]


def _record(result: PropagatorResult, state: ChaosField):
    result.snapshots.append(state)
    for alpha, value in state.items():
        h22, h2p = h2_norms(value, result.run.p)
        result.norms.append(NormRow(state.step, state.time, alpha, h22, h2p, value.sup_norm()))


def _sweep(run: PropagatorRun, start: Optional[ChaosField] = None,
           capture_steps: Sequence[int] = ()) -> PropagatorResult:
    state0 = run.initial if start is None else start
    u0 = state0.mean
    plan = u0.plan
    system = _System(run, plan)
    result = PropagatorResult(run, dropped_terms=system.dropped)
    levels = _levels(system.members)
    factor = imex_factor(plan, run.coeffs, run.dt)
    guard = blowup_guard(u0)
    outputs = set(run.output_steps)
    captures = set(capture_steps)

    fields = {alpha: state0.get(alpha) for alpha in system.members}
    first = state0.step
    deterministic = u0 if run.check_unbiased and run.mode == Mode.UNBIASED_WICK else None

    def snapshot(step: int) -> ChaosField:
        return ChaosField(dict(fields), run.truncation, step * run.dt, step)

    if first in outputs:
        _record(result, snapshot(first))
    if first in captures:
        result.captured[first] = snapshot(first)

    executor = None if run.serial else ThreadPoolExecutor(max_workers=run.workers)

    def stage_rhs(stage: _StageFields, time: float, right: bool) -> Callable[[MultiIndex], torch.Tensor]:
        def fn(a: MultiIndex) -> torch.Tensor:
            try:
                return system.rhs(a, stage, time, right)
            except SolverError:
                raise
            except WCEError as e:
                raise SolverError(a, time, e) from e
        return fn

    def over_levels(fn: Callable[[MultiIndex], torch.Tensor]) -> Dict[MultiIndex, torch.Tensor]:
        out = {}
        for level in levels:
            if executor is None or len(level) == 1:
                values = [fn(alpha) for alpha in level]
            else:
                values = list(executor.map(fn, level))
            out.update(zip(level, values))
        return out

    progress = tqdm(range(first, run.n_steps), disable=not run.verbose, desc=run.mode.value)
    try:
        for step in progress:
            t = step * run.dt
            if run.coeffs.convection:
                try:
                    check_cfl(fields[ZERO].sup_norm() + _drift(run.coeffs), run.dt, plan.n)
                except WCEError as e:
                    raise SolverError(ZERO, t, e) from e
            hats = {a: fft(value) for a, value in fields.items()}
            stage0 = _StageFields(hats, plan)
            n0 = over_levels(stage_rhs(stage0, t, True))
            predicted = {a: imex_predict(hats[a], n0[a], factor) for a in system.members}
            stage1 = _StageFields(predicted, plan)
            n1 = over_levels(stage_rhs(stage1, t + run.dt, False))
            for alpha in system.members:
                fields[alpha] = ifft(imex_correct(hats[alpha], n0[alpha], n1[alpha], factor),
                                     plan.d, plan.n, solenoidal=u0.solenoidal)
                try:
                    check_blowup(fields[alpha], t + run.dt, guard)
                except WCEError as e:
                    raise SolverError(alpha, t, e) from e

            if deterministic is not None:
                deterministic = ns_step(deterministic, run.coeffs.without_noise(), t, run.dt)
            if step + 1 in outputs:
                state = snapshot(step + 1)
                _record(result, state)
                if deterministic is not None:
                    deviation = (state.mean - deterministic).sup_norm()
                    result.unbiased_deviation = max(result.unbiased_deviation, deviation)
                    if deviation > UNBIASED_TOLERANCE:
                        logger.error("zero mode deviates from the deterministic solve by %.3e at t=%.6f",
                                     deviation, state.time)
                progress.set_postfix(t='{:.4f}'.format(state.time), sup='{:.3e}'.format(state.mean.sup_norm()))
            if step + 1 in captures:
                result.captured[step + 1] = snapshot(step + 1)
    finally:
        if executor is not None:
            executor.shutdown()
    return result


def _drift(coeffs: PDECoefficients) -> float:
    return math.sqrt(sum(float(b) ** 2 for b in coeffs.b)) if coeffs.b is not None else 0.0


def sweep_unbiased(run: PropagatorRun, start: Optional[ChaosField] = None,
                   capture_steps: Sequence[int] = ()) -> PropagatorResult:
    if run.mode != Mode.UNBIASED_WICK:
        raise DomainError("sweep_unbiased needs mode unbiased_wick, got {}".format(run.mode.value))
    return _sweep(run, start, capture_steps)


def sweep_standard(run: PropagatorRun, start: Optional[ChaosField] = None,
                   capture_steps: Sequence[int] = ()) -> PropagatorResult:
    if run.mode != Mode.STANDARD_SNSE:
        raise DomainError("sweep_standard needs mode standard_snse, got {}".format(run.mode.value))
    return _sweep(run, start, capture_steps)


def sweep(run: PropagatorRun, start: Optional[ChaosField] = None,
          capture_steps: Sequence[int] = ()) -> PropagatorResult:
    if run.mode == Mode.UNBIASED_WICK:
        return sweep_unbiased(run, start, capture_steps)
    return sweep_standard(run, start, capture_steps)


class RestartReport(NamedTuple):
    r_prime: float
    discrepancy: Dict[MultiIndex, float]
    rescaled_discrepancy: Dict[float, float]

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancy.values(), default=0.0)


def restart(run: PropagatorRun, r_prime: float, eps_list: Sequence[float] = ()) -> RestartReport:
    """
    Compare the solution at T_end with the one restarted at r_prime from the
    recorded state; the optional eps_list repeats the comparison after second
    quantization (a diagonal operator, so restarting commutes with it).
    """
    restart_step = step_count(r_prime, run.dt)
    if restart_step > run.n_steps:
        raise DomainError("restart time {} lies after T_end={}".format(r_prime, run.T_end))
    full = sweep(run, capture_steps=[restart_step, run.n_steps])
    restarted = sweep(run, start=full.captured[restart_step], capture_steps=[run.n_steps])
    a, b = full.captured[run.n_steps], restarted.captured[run.n_steps]
    discrepancy = a.discrepancy(b)
    rescaled = {}
    for eps in eps_list:
        diffs = second_quantize(a, eps).discrepancy(second_quantize(b, eps))
        rescaled[eps] = max(diffs.values(), default=0.0)
    logger.info("restart at r'=%.6g: max discrepancy %.3e", r_prime, max(discrepancy.values(), default=0.0))
    return RestartReport(r_prime, discrepancy, rescaled)


class CausalityReport(NamedTuple):
    t_star: float
    forbidden: List[MultiIndex]
    before: float
    after: float

    @property
    def passed(self) -> bool:
        return self.before <= 1e-12

    @property
    def nondegenerate(self) -> bool:
        return self.after > 1e-6


def causality_check(run: PropagatorRun, t_star: float, result: Optional[PropagatorResult] = None) -> CausalityReport:
    """Coefficients on Haar modes living after t_star must vanish up to t_star."""
    if run.basis.time_basis != TimeBasis.HAAR:
        raise DomainError("causality check needs the Haar time basis")
    if not run.basis.is_split_point(t_star):
        raise DomainError("t*={} splits a Haar mode; choose a multiple of T/2^s".format(t_star))
    late = set(run.basis.post_modes(t_star))
    forbidden = [alpha for alpha in run.truncation.enumerate() if late.intersection(alpha.support)]
    result = sweep(run) if result is None else result
    before, after = 0.0, 0.0
    for state in result.snapshots:
        worst = max((state.get(alpha).sup_norm() for alpha in forbidden), default=0.0)
        if state.time <= t_star + 1e-12 * run.T_end:
            before = max(before, worst)
        else:
            after = max(after, worst)
    return CausalityReport(t_star, forbidden, before, after)


def coefficient_norms(snapshots: Sequence[ChaosField], p: float = 4.0) -> Dict[MultiIndex, float]:
    """L_alpha = sup_t (|u_alpha|_{2,p} + |u_alpha|_{2,2})."""
    norms: Dict[MultiIndex, float] = {}
    for state in snapshots:
        for alpha, value in state.items():
            h22, h2p = h2_norms(value, p)
            norms[alpha] = max(norms.get(alpha, 0.0), h22 + h2p)
    return norms
