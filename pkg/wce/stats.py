"""
Moments of chaos solutions and the Monte-Carlo oracles they are checked against.
"""
import csv
import logging
import math
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from wce.basis import BasisSpec, BrownianPath
from wce.chaos import TimeChaosVector, skorokhod_coeffs, xi_eval
from wce.errors import DomainError, EmptyInput
from wce.metrics import geometric_decay_rate
from wce.multiindex import MultiIndex, ordered
from wce.propagator import ChaosField, level_energies
from wce.scaling import kondratiev_norm, second_quantization_log_factor, second_quantize
from wce.spectral import (GridField, PDECoefficients, _advect_hat, _phys, _project_hat, check_cfl, fft, ifft,
                          imex_factor, imex_symbol, sample_points, step_count, uses_projection)
from wce.utils import TimeBasis

logger = logging.getLogger(__name__)

Point = Tuple[int, ...]


class MCSampler(object):
    """
    Independent standard normals in reproducible batches; batch b draws from a
    torch generator seeded by SeedSequence([seed, b]).
    """

    def __init__(self, seed: int, samples: int, batch_size: int = 10000):
        if samples < 1 or batch_size < 1:
            raise DomainError("sample and batch counts must be positive")
        self.seed = int(seed)
        self.samples = int(samples)
        self.batch_size = int(batch_size)

    def batches(self) -> Iterator[Tuple[int, int]]:
        done, batch = 0, 0
        while done < self.samples:
            size = min(self.batch_size, self.samples - done)
            yield batch, size
            done += size
            batch += 1

    def generator(self, batch: int) -> torch.Generator:
        state = np.random.SeedSequence([self.seed, batch]).generate_state(1, dtype=np.uint64)[0]
        return torch.Generator().manual_seed(int(state))

    def normals(self, batch: int, shape: Tuple[int, ...]) -> torch.Tensor:
        return torch.randn(shape, generator=self.generator(batch), dtype=torch.float64)

    def gaussians(self, indices: Sequence[int], batch: int, size: int) -> Dict[int, np.ndarray]:
        """W(e_k) for the requested basis indices, one draw per sample."""
        indices = sorted(indices)
        draws = self.normals(batch, (size, len(indices))).numpy()
        return {k: draws[:, n] for n, k in enumerate(indices)}

    def brownian_increments(self, batch: int, size: int, n_steps: int, m: int, horizon: float) -> torch.Tensor:
        return self.normals(batch, (size, n_steps, m)) * math.sqrt(horizon / n_steps)


class _Moments(object):
    """Running sums in a fixed batch order."""

    def __init__(self):
        self.count = 0
        self.s1 = None
        self.s2 = None

    def add(self, values: np.ndarray):
        s1, s2 = values.sum(axis=0), (values ** 2).sum(axis=0)
        self.s1 = s1 if self.s1 is None else self.s1 + s1
        self.s2 = s2 if self.s2 is None else self.s2 + s2
        self.count += values.shape[0]

    def mean(self) -> np.ndarray:
        return self.s1 / self.count

    def standard_error(self) -> np.ndarray:
        mean = self.mean()
        var = np.maximum(self.s2 / self.count - mean ** 2, 0.0) * self.count / max(self.count - 1, 1)
        return np.sqrt(var / self.count)


class MCEstimate(NamedTuple):
    """Probe-point statistics of shape (points, components)."""
    mean: np.ndarray
    mean_se: np.ndarray
    second: np.ndarray
    second_se: np.ndarray
    samples: int

    @property
    def variance(self) -> np.ndarray:
        return self.second - self.mean ** 2


class CovarianceSample(NamedTuple):
    x: Point
    y: Point
    centered: np.ndarray
    raw: np.ndarray


class MomentReport(NamedTuple):
    mean: GridField
    covariance: List[CovarianceSample]
    level_energy: List[float]


def chaos_moments(u: ChaosField, points: Sequence[Tuple[Point, Point]]) -> MomentReport:
    """
    mean = u_0; centered covariance sum_{|alpha|>=1} u_alpha(x) u_alpha(y)^T,
    raw second moment = centered + u_0(x) u_0(y)^T.
    """
    covariance = []
    for x, y in points:
        mx, my = sample_points(u.mean, [x])[0], sample_points(u.mean, [y])[0]
        centered = np.zeros((len(mx), len(my)))
        for alpha, value in u.items():
            if alpha.degree:
                vx, vy = sample_points(value, [x])[0], sample_points(value, [y])[0]
                centered += np.outer(vx, vy)
        covariance.append(CovarianceSample(tuple(x), tuple(y), centered, centered + np.outer(mx, my)))
    return MomentReport(u.mean, covariance, level_energies(u))


def chaos_variance(u: ChaosField) -> GridField:
    """Pointwise variance per component, sum_{|alpha|>=1} u_alpha^2."""
    total = torch.zeros_like(u.mean.values)
    for alpha, value in u.items():
        if alpha.degree:
            total = total + value.values ** 2
    return GridField(total)


def _realizations(u: ChaosField, sampler: MCSampler, batch: int, size: int) -> torch.Tensor:
    support = sorted(set(k for alpha in u.coeffs for k in alpha.support))
    gaussians = sampler.gaussians(support, batch, size)
    total = torch.zeros((size,) + tuple(u.mean.values.shape), dtype=torch.float64)
    for alpha, value in u.items():
        xi = torch.as_tensor(np.broadcast_to(xi_eval(alpha, gaussians), (size,)), dtype=torch.float64)
        total = total + xi.reshape((size,) + (1,) * value.values.dim()) * value.values
    return total


def _warn_if_not_decaying(u: ChaosField):
    energies = level_energies(u)
    if len(energies) > 2 and geometric_decay_rate(energies[1:]) >= 1.0:
        logger.warning("level energies %s do not decay; sample a rescaled expansion", energies)


def sample_realization(u: ChaosField, sampler: MCSampler) -> List[GridField]:
    """sum_alpha u_alpha xi_alpha(g) for every sample of the sampler."""
    _warn_if_not_decaying(u)
    out = []
    for batch, size in sampler.batches():
        values = _realizations(u, sampler, batch, size)
        out.extend(GridField(values[n]) for n in range(size))
    return out


def sample_probes(u: ChaosField, sampler: MCSampler, points: Sequence[Point]) -> MCEstimate:
    """Empirical moments of the realizations at probe points, without keeping the fields."""
    _warn_if_not_decaying(u)
    first, second = _Moments(), _Moments()
    for batch, size in sampler.batches():
        values = _realizations(u, sampler, batch, size).numpy()
        probes = np.stack([values[(slice(None), slice(None)) + tuple(p)] for p in points], axis=1)
        first.add(probes)
        second.add(probes ** 2)
    return MCEstimate(first.mean(), first.standard_error(), second.mean(), second.standard_error(), first.count)


def _noise_schedule(basis: BasisSpec, dt: float, n_steps: int, interpolate: Optional[bool]) -> Tuple[int, int]:
    """(number of sampled increments, EM steps per increment)."""
    if interpolate is None:
        interpolate = basis.time_basis == TimeBasis.HAAR
    if not interpolate:
        return n_steps, 1
    cells = basis.interpolation_cells()
    per_cell = step_count(basis.horizon / cells, dt)
    if per_cell == 0:
        raise DomainError("dt={} is coarser than the noise cells of length {}".format(dt, basis.horizon / cells))
    return -(-n_steps // per_cell), per_cell


def euler_maruyama_oracle(coeffs: PDECoefficients, basis: BasisSpec, sampler: MCSampler, dt: float,
                          initial: GridField, T_end: float, points: Sequence[Point],
                          linear_only: bool = True, interpolate: Optional[bool] = None,
                          verbose: bool = False) -> MCEstimate:
    """
    Pathwise du = P[nu Lap u + b.grad u - (u.grad) u + f] dt + P[(sigma_j . grad) u + g_j] dW^j
    with the exact semigroup over each step, u_{n+1} = E (u_n + drift dt + noise dW).
    The convective term is dropped when linear_only.

    With `interpolate` (the default for a Haar basis) W is sampled on the Haar
    cells and spread linearly over the steps inside each cell, which is the noise
    seen by a chaos solution keeping every basis element.
    """
    plan = initial.plan
    n_steps = step_count(T_end, dt)
    n_draws, per_draw = _noise_schedule(basis, dt, n_steps, interpolate)
    factor = imex_factor(plan, coeffs, dt).factor
    m = basis.m_noise
    sigma = [None if s is None else fft(s) for s in coeffs.sigma] + [None] * (m - len(coeffs.sigma))
    g = [None if v is None else fft(v) for v in coeffs.g] + [None] * (m - len(coeffs.g))
    start = fft(initial)
    project = uses_projection(plan, start)

    first, second = _Moments(), _Moments()
    for batch, size in sampler.batches():
        draws = sampler.brownian_increments(batch, size, n_draws, m, n_draws * per_draw * dt) / per_draw
        hat = start.expand((size,) + tuple(start.shape)).clone()
        for step in tqdm(range(n_steps), disable=not verbose, desc='euler-maruyama'):
            t = step * dt
            rhs = torch.zeros_like(hat)
            if not linear_only and coeffs.convection:
                check_cfl(float(_phys(hat, plan).abs().max()), dt, plan.n)
                rhs = rhs - _advect_hat(hat, hat, plan)
            forcing = coeffs.forcing(t)
            if forcing is not None:
                rhs = rhs + fft(forcing)
            noise = torch.zeros_like(hat)
            for j in range(m):
                dW = draws[:, step // per_draw, j].reshape((size,) + (1,) * (hat.dim() - 1))
                if sigma[j] is not None:
                    noise = noise + _advect_hat(sigma[j], hat, plan) * dW
                if g[j] is not None:
                    noise = noise + g[j] * dW
            update = rhs * dt + noise
            if project:
                update = _project_hat(update, plan)
            hat = factor * (hat + update)
        values = _phys(hat, plan).numpy()
        probes = np.stack([values[(slice(None), slice(None)) + tuple(p)] for p in points], axis=1)
        first.add(probes)
        second.add(probes ** 2)
    return MCEstimate(first.mean(), first.standard_error(), second.mean(), second.standard_error(), first.count)


def _first_source(coeffs: PDECoefficients) -> GridField:
    for g in coeffs.g:
        if g is not None:
            return g
    raise DomainError("the linear additive solution needs at least one additive noise field")


def duhamel_coefficients(coeffs: PDECoefficients, basis: BasisSpec, k: int, t: float, d: int, n: int) -> GridField:
    """
    u_{e_k}(t) = int_0^t E(t - s) m_{i_k}(s) P g_{j_k} ds for the linear additive case,
    by the basis quadrature applied mode by mode in Fourier space.
    """
    i, j = basis.pair(k)
    if j > len(coeffs.g) or coeffs.g[j - 1] is None:
        return GridField.zeros(d, _first_source(coeffs).c, n)
    g = coeffs.g[j - 1]
    plan = g.plan
    nodes, weights = basis.quadrature(t)
    symbol = imex_symbol(plan, coeffs)
    modes = basis.time_mode(i, nodes)
    kernel = torch.zeros_like(symbol)
    for s, w, m_s in zip(nodes, weights, modes):
        kernel = kernel + float(w * m_s) * torch.exp(symbol * (t - float(s)))
    hat = fft(g)
    if uses_projection(plan, hat):
        hat = _project_hat(hat, plan)
    return ifft(kernel * hat, plan.d, plan.n)


def duhamel_variance(coeffs: PDECoefficients, t: float, d: int, n: int, nodes: int = 64) -> GridField:
    """
    Pointwise variance sum_j int_0^t (E(t - s) P g_j)^2 ds of the linear additive
    solution driven by the full Brownian motion, composite Gauss-Legendre in s.
    """
    source = _first_source(coeffs)
    plan = source.plan
    symbol = imex_symbol(plan, coeffs)
    x, w = np.polynomial.legendre.leggauss(8)
    edges = np.linspace(0.0, t, nodes // 8 + 1)
    total = torch.zeros_like(source.values)
    for g in coeffs.g:
        if g is None:
            continue
        hat = fft(g)
        if uses_projection(plan, hat):
            hat = _project_hat(hat, plan)
        for a, b in zip(edges[:-1], edges[1:]):
            for xq, wq in zip(x, w):
                s = 0.5 * (b - a) * xq + 0.5 * (a + b)
                field = _phys(torch.exp(symbol * (t - s)) * hat, plan)
                total = total + 0.5 * (b - a) * wq * field ** 2
    return GridField(total)


class ProjectionEstimate(NamedTuple):
    estimate: float
    standard_error: float


def ito_projection_oracle(v: TimeChaosVector, alphas: Sequence[MultiIndex], basis: BasisSpec,
                          sampler: MCSampler, t: Optional[float] = None,
                          n_steps: int = 256) -> Dict[MultiIndex, ProjectionEstimate]:
    """
    E[I xi_alpha] for the Ito integral I = int_0^t (v(s), dW_s) of an adapted
    integrand v = sum_beta v_beta(s) xi_beta that is constant on the grid steps
    (evaluated at step midpoints).
    """
    t = basis.horizon if t is None else t
    if not alphas:
        raise EmptyInput("no multiindices to project on")
    indices = sorted(set(k for a in list(alphas) + list(v.coeffs) for k in a.support))
    moments = {alpha: _Moments() for alpha in alphas}
    mids = (np.arange(n_steps) + 0.5) * (t / n_steps)
    coefficient_values = {beta: v.evaluate(beta, mids) for beta in ordered(v.coeffs)}
    for batch, size in sampler.batches():
        increments = sampler.brownian_increments(batch, size, n_steps, basis.m_noise, t).numpy()
        path = BrownianPath(increments, t)
        gaussians = path.gaussians(basis, indices)
        integral = np.zeros(size)
        for beta, values in coefficient_values.items():
            integral = integral + xi_eval(beta, gaussians) * np.einsum('sj,nsj->n', values, increments)
        for alpha in alphas:
            moments[alpha].add((integral * xi_eval(alpha, gaussians))[:, None])
    return {alpha: ProjectionEstimate(float(m.mean()[0]), float(m.standard_error()[0]))
            for alpha, m in moments.items()}


class SkorokhodCheck(NamedTuple):
    chaos: Dict[MultiIndex, float]
    estimates: Dict[MultiIndex, ProjectionEstimate]
    max_sigma: float
    n_sigma: float

    @property
    def passed(self) -> bool:
        return self.max_sigma <= self.n_sigma


def ito_skorokhod_check(v: TimeChaosVector, alphas: Sequence[MultiIndex], basis: BasisSpec,
                        sampler: MCSampler, n_sigma: float = 3.0, n_steps: int = 256) -> SkorokhodCheck:
    """
    For adapted v the Skorokhod integral is the Ito integral: the chaos coefficients
    from skorokhod_coeffs must sit within n_sigma standard errors of the Monte-Carlo
    projections E[I xi_alpha].
    """
    chaos = skorokhod_coeffs(v, basis.horizon, basis)
    estimates = ito_projection_oracle(v, alphas, basis, sampler, n_steps=n_steps)
    worst = 0.0
    for alpha, est in estimates.items():
        deviation = abs(chaos.get(alpha) - est.estimate)
        if deviation > 1e-12:
            worst = max(worst, deviation / est.standard_error if est.standard_error > 0 else float('inf'))
    logger.info("Skorokhod/Ito projections agree within %.2f standard errors", worst)
    return SkorokhodCheck({alpha: chaos.get(alpha) for alpha in estimates}, estimates, worst, n_sigma)


class RescalingStudy(NamedTuple):
    q: float
    eps: List[float]
    distance: List[float]
    ratio: float
    bound_ratio: float

    @property
    def monotone(self) -> bool:
        return all(b <= a * (1 + 1e-12) for a, b in zip(self.distance[:-1], self.distance[1:]))

    @property
    def tenfold(self) -> bool:
        return self.ratio < 0.1

    @property
    def passed(self) -> bool:
        return self.monotone and self.ratio <= self.bound_ratio * (1 + 1e-9)


def _distance(u, eps: float, q: float) -> float:
    rescaled = second_quantize(u, eps)
    return kondratiev_norm(u.map_coeffs(lambda alpha, value: rescaled.get(alpha) - value), -1.0, q)


def rescaling_convergence_study(u, eps_list: Sequence[float], q: float) -> RescalingStudy:
    """
    sup over snapshots of |C_eps u - u| in S_{-1,-q} for each eps. `u` is one
    expansion or a list of snapshots. The first/last ratio is compared with the
    worst per-mode ratio (1 - lambda_alpha(eps_last)) / (1 - lambda_alpha(eps_first)).
    """
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list[:-1], eps_list[1:])):
        raise DomainError("eps_list must be strictly decreasing, got {}".format(eps_list))
    snapshots = u if isinstance(u, (list, tuple)) else [u]
    distance = [max(_distance(s, eps, q) for s in snapshots) for eps in eps_list]
    ratio, bound = 0.0, 0.0
    if len(eps_list) > 1 and distance[0] > 0.0:
        ratio = distance[-1] / distance[0]
        alphas = set(a for s in snapshots for a in s.coeffs)
        for alpha in alphas:
            lo = -math.expm1(second_quantization_log_factor(alpha, eps_list[-1]))
            hi = -math.expm1(second_quantization_log_factor(alpha, eps_list[0]))
            if hi > 0.0:
                bound = max(bound, lo / hi)
    study = RescalingStudy(q, eps_list, distance, ratio, bound)
    logger.info("rescaling distances %s, ratio %.4f (mode bound %.4f)", distance, ratio, bound)
    return study


def moments_csv(path: str, report: MomentReport):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['x', 'y', 'row', 'col', 'centered', 'raw'])
        for sample in report.covariance:
            for r in range(sample.centered.shape[0]):
                for c in range(sample.centered.shape[1]):
                    writer.writerow([' '.join(map(str, sample.x)), ' '.join(map(str, sample.y)), r, c,
                                     '{:.17g}'.format(sample.centered[r, c]), '{:.17g}'.format(sample.raw[r, c])])


def estimate_csv(path: str, points: Sequence[Point], estimates: Dict[str, MCEstimate]):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['source', 'point', 'component', 'mean', 'mean_se', 'second', 'second_se'])
        for name, est in estimates.items():
            for n, p in enumerate(points):
                for c in range(est.mean.shape[1]):
                    writer.writerow([name, ' '.join(map(str, p)), c, '{:.17g}'.format(est.mean[n, c]),
                                     '{:.17g}'.format(est.mean_se[n, c]), '{:.17g}'.format(est.second[n, c]),
                                     '{:.17g}'.format(est.second_se[n, c])])
