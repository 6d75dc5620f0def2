"""
Periodic pseudo-spectral discretization on [0, 2 pi)^d, d in {1, 2}.

Fields are torch float64 tensors of shape (c, N) or (c, N, N). Quadratic terms
are dealiased by the two-thirds rule, the diffusion (and a constant drift) is
integrated exactly by an integrating factor and the remaining terms by a Heun
predictor/corrector. The stages are exposed so that coupled systems of fields
advance with the same arithmetic as a single Navier-Stokes step.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from scipy.integrate import trapezoid
from tqdm import tqdm

from wce.errors import BlowupDetected, CFLViolation, DimensionMismatch, DomainError
from wce.utils import SpectralPlan, SpectralPlans

logger = logging.getLogger(__name__)

CFL_NUMBER = 0.5
BLOWUP_FACTOR = 1e3


class GridField(object):
    __slots__ = ('values', 'solenoidal')

    def __init__(self, values: torch.Tensor, solenoidal: bool = False):
        values = torch.as_tensor(values, dtype=torch.float64)
        if values.dim() not in (2, 3):
            raise DimensionMismatch("field values must have shape (c, N) or (c, N, N), got {}".format(
                tuple(values.shape)))
        if values.dim() == 3 and values.shape[1] != values.shape[2]:
            raise DimensionMismatch("2D fields must be square, got {}".format(tuple(values.shape)))
        self.values = values
        self.solenoidal = solenoidal

    @classmethod
    def zeros(cls, d: int, c: int, n: int) -> 'GridField':
        return cls(torch.zeros((c,) + (n,) * d, dtype=torch.float64))

    @classmethod
    def from_function(cls, d: int, n: int, fn: Callable, solenoidal: bool = False) -> 'GridField':
        """fn receives the coordinate tensors and returns a list of components."""
        components = fn(*grid(d, n))
        shape = (n,) * d
        return cls(torch.stack([torch.as_tensor(c, dtype=torch.float64).expand(shape) for c in components]),
                   solenoidal=solenoidal)

    @property
    def d(self) -> int:
        return self.values.dim() - 1

    @property
    def c(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def plan(self) -> SpectralPlan:
        return SpectralPlans.getInstance().get(self.d, self.n)

    def zeros_like(self) -> 'GridField':
        return GridField(torch.zeros_like(self.values), solenoidal=self.solenoidal)

    def sup_norm(self) -> float:
        if self.values.numel() == 0:
            return 0.0
        return float(torch.sqrt(torch.sum(self.values ** 2, dim=0)).max())

    def is_finite(self) -> bool:
        return bool(torch.isfinite(self.values).all())

    def numpy(self) -> np.ndarray:
        return self.values.numpy()

    def _check_shape(self, other: 'GridField'):
        if self.values.shape != other.values.shape:
            raise DimensionMismatch("field shapes differ: {} vs {}".format(
                tuple(self.values.shape), tuple(other.values.shape)))

    def __add__(self, other: 'GridField') -> 'GridField':
        self._check_shape(other)
        return GridField(self.values + other.values, solenoidal=self.solenoidal and other.solenoidal)

    def __sub__(self, other: 'GridField') -> 'GridField':
        self._check_shape(other)
        return GridField(self.values - other.values, solenoidal=self.solenoidal and other.solenoidal)

    def __mul__(self, scalar: float) -> 'GridField':
        return GridField(self.values * float(scalar), solenoidal=self.solenoidal)

    __rmul__ = __mul__

    def __neg__(self) -> 'GridField':
        return self * -1.0

    def __repr__(self):
        return 'GridField(d={}, c={}, N={}, sup={:.3e})'.format(self.d, self.c, self.n, self.sup_norm())


@dataclass(frozen=True)
class SobolevNormSpec:
    s: float = 0.0
    p: float = 2.0


@dataclass
class PDECoefficients:
    """
    nu: viscosity (a^{ij} = nu delta^{ij}); b: constant drift; sigma[j]: the
    d-component field (sigma^i, l_j)_Y; g[j]: the field (g, l_j)_Y; f: forcing,
    a GridField or a callable t -> GridField.
    """
    nu: float
    b: Optional[Tuple[float, ...]] = None
    sigma: List[GridField] = field(default_factory=list)
    g: List[GridField] = field(default_factory=list)
    f: Optional[Union[GridField, Callable[[float], GridField]]] = None
    convection: bool = True

    def __post_init__(self):
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise DomainError("viscosity must be positive and finite, got {}".format(self.nu))
        for name, fields in (('sigma', self.sigma), ('g', self.g)):
            for j, fld in enumerate(fields):
                if fld is None:
                    continue
                if not fld.is_finite():
                    raise DomainError("{}[{}] has non-finite values".format(name, j))
                for part in gradient(fld):
                    if not part.is_finite():
                        raise DomainError("{}[{}] has non-finite derivatives".format(name, j))

    @property
    def m_noise(self) -> int:
        return max(len(self.sigma), len(self.g))

    def forcing(self, t: float) -> Optional[GridField]:
        if self.f is None or isinstance(self.f, GridField):
            return self.f
        return self.f(t)

    def without_noise(self) -> 'PDECoefficients':
        return PDECoefficients(self.nu, self.b, [], [], self.f, self.convection)


def grid(d: int, n: int) -> Tuple[torch.Tensor, ...]:
    x = torch.arange(n, dtype=torch.float64) * (2.0 * math.pi / n)
    if d == 1:
        return (x,)
    return tuple(torch.meshgrid(x, x, indexing='ij'))


def _dims(d: int) -> Tuple[int, ...]:
    return tuple(range(-d, 0))


def fft(u: GridField) -> torch.Tensor:
    return torch.fft.rfftn(u.values, dim=_dims(u.d))


def ifft(hat: torch.Tensor, d: int, n: int, solenoidal: bool = False) -> GridField:
    return GridField(torch.fft.irfftn(hat, s=(n,) * d, dim=_dims(d)), solenoidal=solenoidal)


def _phys(hat: torch.Tensor, plan: SpectralPlan) -> torch.Tensor:
    return torch.fft.irfftn(hat, s=(plan.n,) * plan.d, dim=_dims(plan.d))


def _hat(values: torch.Tensor, plan: SpectralPlan) -> torch.Tensor:
    return torch.fft.rfftn(values, dim=_dims(plan.d))


def _advect_hat(a_hat: torch.Tensor, b_hat: torch.Tensor, plan: SpectralPlan) -> torch.Tensor:
    """
    (a . grad) b in Fourier space, inputs and product cut by the two-thirds rule.
    Leading batch dimensions are allowed in front of the component axis.
    """
    comp = -(plan.d + 1)
    if a_hat.shape[comp] != plan.d:
        raise DimensionMismatch("advecting field needs {} components, got {}".format(plan.d, a_hat.shape[comp]))
    a = _phys(a_hat * plan.dealias, plan)
    b_cut = b_hat * plan.dealias
    product = None
    for i in range(plan.d):
        term = a.narrow(comp, i, 1) * _phys(1j * plan.derivative[i] * b_cut, plan)
        product = term if product is None else product + term
    return _hat(product, plan) * plan.dealias


def _project_hat(hat: torch.Tensor, plan: SpectralPlan) -> torch.Tensor:
    comp = -(plan.d + 1)
    if hat.shape[comp] != plan.d:
        raise DimensionMismatch("Leray projection needs {} components, got {}".format(plan.d, hat.shape[comp]))
    k_dot = sum(plan.derivative[i] * hat.narrow(comp, i, 1) for i in range(plan.d))
    return hat - torch.cat([plan.derivative[i] * k_dot for i in range(plan.d)], dim=comp) / plan.projection_ksq


def gradient(u: GridField) -> List[GridField]:
    """[d_1 u, ..., d_d u], each with the components of u."""
    plan, hat = u.plan, fft(u)
    return [ifft(1j * plan.derivative[i] * hat, u.d, u.n) for i in range(u.d)]


def divergence(v: GridField) -> GridField:
    if v.c != v.d:
        raise DimensionMismatch("divergence needs {} components, got {}".format(v.d, v.c))
    plan, hat = v.plan, fft(v)
    div = sum(1j * plan.derivative[i] * hat[i] for i in range(v.d))
    return ifft(div.unsqueeze(0), v.d, v.n)


def divergence_max(v: GridField) -> float:
    """Max modulus of the spectral divergence."""
    plan, hat = v.plan, fft(v)
    div = sum(1j * plan.derivative[i] * hat[i] for i in range(v.d)) / (plan.n ** plan.d)
    return float(div.abs().max())


def laplacian(u: GridField) -> GridField:
    plan = u.plan
    return ifft(-plan.ksq * fft(u), u.d, u.n)


def advect(a: GridField, b: GridField) -> GridField:
    """Dealiased (a . grad) b."""
    plan = b.plan
    return ifft(_advect_hat(fft(a), fft(b), plan), b.d, b.n)


def leray_project(v: GridField) -> GridField:
    if v.c != v.d:
        raise DimensionMismatch("Leray projection needs {} components, got {}".format(v.d, v.c))
    return ifft(_project_hat(fft(v), v.plan), v.d, v.n, solenoidal=True)


def sobolev_norm(u: GridField, spec: SobolevNormSpec = SobolevNormSpec()) -> float:
    """|Lambda^s u|_p with Lambda^s = (1 - Laplacian)^{s/2}, discrete L_p with cell volume weighting."""
    if spec.s != 0.0:
        plan = u.plan
        values = _phys(fft(u) * (1.0 + plan.ksq) ** (spec.s / 2.0), plan)
    else:
        values = u.values
    cell = (2.0 * math.pi / u.n) ** u.d
    modulus = torch.sqrt(torch.sum(values ** 2, dim=0))
    if math.isinf(spec.p):
        return float(modulus.max())
    return float((torch.sum(modulus ** spec.p) * cell) ** (1.0 / spec.p))


def h2_norms(u: GridField, p: float) -> Tuple[float, float]:
    """(|u|_{2,2}, |u|_{2,p})."""
    return sobolev_norm(u, SobolevNormSpec(2.0, 2.0)), sobolev_norm(u, SobolevNormSpec(2.0, p))


class IMEXFactor(NamedTuple):
    factor: torch.Tensor
    dt: float


def imex_symbol(plan: SpectralPlan, coeffs: PDECoefficients) -> torch.Tensor:
    """-nu |k|^2 + i b.k, the Fourier symbol of the exactly integrated operator."""
    symbol = -coeffs.nu * plan.ksq + 0j
    if coeffs.b is not None:
        if len(coeffs.b) != plan.d:
            raise DimensionMismatch("drift has {} components, domain has {}".format(len(coeffs.b), plan.d))
        symbol = symbol + 1j * sum(float(coeffs.b[i]) * plan.derivative[i] for i in range(plan.d))
    return symbol


def imex_factor(plan: SpectralPlan, coeffs: PDECoefficients, dt: float) -> IMEXFactor:
    """exp((-nu |k|^2 + i b.k) dt)."""
    return IMEXFactor(torch.exp(imex_symbol(plan, coeffs) * dt), dt)


def imex_predict(hat: torch.Tensor, n0: torch.Tensor, factor: IMEXFactor) -> torch.Tensor:
    return factor.factor * (hat + factor.dt * n0)


def imex_correct(hat: torch.Tensor, n0: torch.Tensor, n1: torch.Tensor, factor: IMEXFactor) -> torch.Tensor:
    return factor.factor * hat + 0.5 * factor.dt * (factor.factor * n0 + n1)


def finish(hat: torch.Tensor, plan: SpectralPlan, project: bool) -> torch.Tensor:
    """Projection of an explicit right-hand side (velocity fields only)."""
    return _project_hat(hat, plan) if project else hat


def uses_projection(plan: SpectralPlan, hat: torch.Tensor) -> bool:
    return plan.d > 1 and hat.shape[-(plan.d + 1)] == plan.d


def ns_rhs(hat: torch.Tensor, coeffs: PDECoefficients, t: float, plan: SpectralPlan) -> torch.Tensor:
    """Explicit part P[-(u . grad) u + f(t)] of the Navier-Stokes (or Burgers) equation."""
    rhs = torch.zeros_like(hat)
    if coeffs.convection:
        rhs = rhs - _advect_hat(hat, hat, plan)
    forcing = coeffs.forcing(t)
    if forcing is not None:
        rhs = rhs + fft(forcing)
    return finish(rhs, plan, uses_projection(plan, hat))


def check_cfl(speed: float, dt: float, n: int, cfl: float = CFL_NUMBER):
    if speed <= 0.0:
        return
    limit = cfl * (2.0 * math.pi / n) / speed
    if dt > limit:
        raise CFLViolation(dt, limit)


def _drift_speed(coeffs: PDECoefficients) -> float:
    return math.sqrt(sum(float(b) ** 2 for b in coeffs.b)) if coeffs.b is not None else 0.0


def check_blowup(u: GridField, t: float, guard: Optional[float]):
    sup = u.sup_norm() if u.is_finite() else float('inf')
    if guard is not None and not sup <= guard:
        raise BlowupDetected(t, sup, guard)


def blowup_guard(u0: GridField) -> float:
    return BLOWUP_FACTOR * max(u0.sup_norm(), 1.0)


class NSStage(NamedTuple):
    hat: torch.Tensor
    n0: torch.Tensor
    predicted: torch.Tensor


def ns_predict(u: GridField, coeffs: PDECoefficients, t: float, factor: IMEXFactor) -> NSStage:
    plan = u.plan
    hat = fft(u)
    n0 = ns_rhs(hat, coeffs, t, plan)
    return NSStage(hat, n0, imex_predict(hat, n0, factor))


def ns_correct(stage: NSStage, coeffs: PDECoefficients, t: float, factor: IMEXFactor,
               plan: SpectralPlan) -> torch.Tensor:
    n1 = ns_rhs(stage.predicted, coeffs, t + factor.dt, plan)
    return imex_correct(stage.hat, stage.n0, n1, factor)


def ns_step(u: GridField, coeffs: PDECoefficients, t: float, dt: float,
            guard: Optional[float] = None, cfl: float = CFL_NUMBER) -> GridField:
    """One integrating-factor Heun step of u_t = P[nu Lap u + b.grad u - (u.grad) u + f]."""
    if coeffs.convection:
        check_cfl(u.sup_norm() + _drift_speed(coeffs), dt, u.n, cfl)
    plan = u.plan
    factor = imex_factor(plan, coeffs, dt)
    stage = ns_predict(u, coeffs, t, factor)
    out = ifft(ns_correct(stage, coeffs, t, factor, plan), u.d, u.n, solenoidal=u.solenoidal)
    check_blowup(out, t + dt, guard)
    return out


def _at(value, which: int):
    if isinstance(value, (tuple, list)):
        return value[which]
    return value


def _maybe_fft(u: Optional[GridField]) -> Optional[torch.Tensor]:
    return None if u is None else fft(u)


def stokes_rhs(hat: torch.Tensor, background_hat: Optional[torch.Tensor], source_hat: Optional[torch.Tensor],
               coeffs: PDECoefficients, plan: SpectralPlan) -> torch.Tensor:
    """P[-(u0 . grad) u - (u . grad) u0 + F]."""
    rhs = torch.zeros_like(hat)
    if coeffs.convection and background_hat is not None:
        rhs = rhs - _advect_hat(background_hat, hat, plan) - _advect_hat(hat, background_hat, plan)
    if source_hat is not None:
        rhs = rhs + source_hat
    return finish(rhs, plan, uses_projection(plan, hat))


def stokes_step(u: GridField, coeffs: PDECoefficients, background, F, t: float, dt: float,
                guard: Optional[float] = None, cfl: float = CFL_NUMBER) -> GridField:
    """
    One step of u_t = P[nu Lap u + (b - u0).grad u - u.grad u0 + F].

    `background` and `F` are GridFields (frozen over the step) or pairs of the
    values at t and t + dt.
    """
    plan = u.plan
    bg0, bg1 = _at(background, 0), _at(background, 1)
    if coeffs.convection and bg0 is not None:
        check_cfl(max(bg0.sup_norm(), bg1.sup_norm()) + _drift_speed(coeffs), dt, u.n, cfl)
    factor = imex_factor(plan, coeffs, dt)
    hat = fft(u)
    n0 = stokes_rhs(hat, _maybe_fft(bg0), _maybe_fft(_at(F, 0)), coeffs, plan)
    predicted = imex_predict(hat, n0, factor)
    n1 = stokes_rhs(predicted, _maybe_fft(bg1), _maybe_fft(_at(F, 1)), coeffs, plan)
    out = ifft(imex_correct(hat, n0, n1, factor), u.d, u.n, solenoidal=u.solenoidal)
    check_blowup(out, t + dt, guard)
    return out


def step_count(T_end: float, dt: float) -> int:
    """Number of steps of size dt covering T_end; T_end must be a multiple of dt."""
    steps = int(round(T_end / dt))
    if steps < 0 or abs(steps * dt - T_end) > 1e-9 * max(1.0, abs(T_end)):
        raise DomainError("T_end={} is not a multiple of dt={}".format(T_end, dt))
    return steps


def snapshot_steps(n_steps: int, count: int) -> List[int]:
    """Evenly spaced output steps, the initial and the final one included."""
    if count <= 0 or n_steps == 0:
        return [0, n_steps] if n_steps else [0]
    if n_steps % count:
        raise DomainError("{} steps cannot be split into {} snapshot intervals".format(n_steps, count))
    every = n_steps // count
    return list(range(0, n_steps + 1, every))


class Snapshot(NamedTuple):
    step: int
    time: float
    field: GridField


def deterministic_solve(u0: GridField, coeffs: PDECoefficients, dt: float, T_end: float,
                        snapshots: int = 10, start_step: int = 0, verbose: bool = False,
                        history: Optional['NormHistory'] = None) -> List[Snapshot]:
    """
    Repeated ns_step from t = start_step * dt to T_end; time is always step * dt.
    `history` records the norms of every step for apriori_diagnostic.
    """
    n_steps = step_count(T_end, dt)
    outputs = set(snapshot_steps(n_steps, snapshots))
    guard = blowup_guard(u0)
    u = u0
    out = [Snapshot(start_step, start_step * dt, u)] if start_step in outputs else []
    if history is not None:
        history.record(start_step * dt, u, coeffs.forcing(start_step * dt))
    progress = tqdm(range(start_step, n_steps), disable=not verbose, desc='deterministic')
    for step in progress:
        u = ns_step(u, coeffs, step * dt, dt, guard=guard)
        if history is not None:
            history.record((step + 1) * dt, u, coeffs.forcing((step + 1) * dt))
        if step + 1 in outputs:
            out.append(Snapshot(step + 1, (step + 1) * dt, u))
            progress.set_postfix(t='{:.4f}'.format((step + 1) * dt), sup='{:.3e}'.format(u.sup_norm()))
    return out


def taylor_green(n: int, t: float = 0.0, nu: float = 0.0) -> GridField:
    decay = math.exp(-2.0 * nu * t)
    return GridField.from_function(
        2, n, lambda x, y: [torch.sin(x) * torch.cos(y) * decay, -torch.cos(x) * torch.sin(y) * decay],
        solenoidal=True)


def l2_error(u: GridField, reference: GridField) -> float:
    return sobolev_norm(u - reference, SobolevNormSpec(0.0, 2.0))


@dataclass
class NormHistory:
    """Per-time |u|_{2,2}, |u|_{2,p}, sup-norm and forcing norms |f|_{1,2}, |f|_{1,p}."""
    p: float = 4.0
    times: List[float] = field(default_factory=list)
    h22: List[float] = field(default_factory=list)
    h2p: List[float] = field(default_factory=list)
    sup: List[float] = field(default_factory=list)
    f12: List[float] = field(default_factory=list)
    f1p: List[float] = field(default_factory=list)

    def record(self, t: float, u: GridField, forcing: Optional[GridField] = None):
        a, b = h2_norms(u, self.p)
        self.times.append(t)
        self.h22.append(a)
        self.h2p.append(b)
        self.sup.append(u.sup_norm())
        if forcing is None:
            self.f12.append(0.0)
            self.f1p.append(0.0)
        else:
            self.f12.append(sobolev_norm(forcing, SobolevNormSpec(1.0, 2.0)))
            self.f1p.append(sobolev_norm(forcing, SobolevNormSpec(1.0, self.p)))


class AprioriReport(NamedTuple):
    lhs: float
    rhs: float
    ratio: Optional[float]

    @property
    def applicable(self) -> bool:
        return self.ratio is not None


def apriori_diagnostic(history: NormHistory) -> AprioriReport:
    """
    sup_t(|u|_{2,2} + |u|_{2,p}) against |w|_{2,2} + |w|_{2,p} + (int |f|_{1,p}^p)^{1/p}
    + (int |f|_{1,2}^2)^{1/2}, w the initial value; 0/0 is not applicable.
    """
    if not history.times:
        return AprioriReport(0.0, 0.0, None)
    lhs = max(a + b for a, b in zip(history.h22, history.h2p))
    rhs = history.h22[0] + history.h2p[0]
    if len(history.times) > 1:
        times = np.asarray(history.times)
        rhs += trapezoid(np.asarray(history.f1p) ** history.p, times) ** (1.0 / history.p)
        rhs += math.sqrt(trapezoid(np.asarray(history.f12) ** 2, times))
    if rhs == 0.0:
        return AprioriReport(lhs, rhs, None if lhs == 0.0 else float('inf'))
    return AprioriReport(lhs, rhs, lhs / rhs)


def dump_field(path: str, u: GridField, time: float):
    """JSON header line, then little-endian float64 values, component-major and row-major."""
    header = {'dim': u.d, 'components': u.c, 'N': u.n, 'time': time, 'byte_order': 'little'}
    with open(path, 'wb') as f:
        f.write((json.dumps(header, sort_keys=True) + '\n').encode('ascii'))
        f.write(np.ascontiguousarray(u.numpy(), dtype='<f8').tobytes())


def load_field(path: str) -> Tuple[GridField, float]:
    with open(path, 'rb') as f:
        header = json.loads(f.readline().decode('ascii'))
        data = np.frombuffer(f.read(), dtype='<f8')
    shape = (header['components'],) + (header['N'],) * header['dim']
    return GridField(torch.from_numpy(data.reshape(shape).copy())), header['time']


def sample_points(u: GridField, points: Sequence[Sequence[int]]) -> np.ndarray:
    """Values at grid index points, shape (len(points), c)."""
    values = u.numpy()
    return np.stack([values[(slice(None),) + tuple(p)] for p in points])
