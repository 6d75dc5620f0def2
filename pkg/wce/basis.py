"""
Complete orthonormal systems e_k = m_i(s) l_j of H = L2([0, T], Y) with Y cut
to m_noise directions, the stochastic exponents built on them and the action
of the polynomial test functions p_M(z) on chaos expansions.
"""
import logging
import math
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import legendre

from wce.errors import DomainError, MissingSampleError, QuadratureError, RangeError
from wce.multiindex import factorial_log
from wce.utils import TimeBasis

logger = logging.getLogger(__name__)

_EDGE = 1e-12


class BasisSpec(object):
    """
    Time basis x noise directions with the pairing k -> (i_k, j_k), ordered by
    (i + j, j) so that a truncation to the first K elements keeps the smoothest
    time modes of every direction.

    Trigonometric modes: m_1 = 1/sqrt(T), m_{2j} = sqrt(2/T) cos(2 pi j t/T),
    m_{2j+1} = sqrt(2/T) sin(2 pi j t/T).
    Haar modes: 2^s indicators of the root cells, then wavelets level by level,
    positive on the left half. Cells are left-open, t = 0 belongs to the first.
    """

    def __init__(self, horizon: float, time_basis: Union[TimeBasis, str], n_time: int, m_noise: int,
                 quadrature: int = 8, haar_root_level: int = 0):
        self.horizon = float(horizon)
        self.time_basis = TimeBasis(time_basis)
        self.n_time = int(n_time)
        self.m_noise = int(m_noise)
        self.n_quad = int(quadrature)
        self.haar_root_level = int(haar_root_level)

        if self.horizon <= 0:
            raise DomainError("horizon must be positive, got {}".format(horizon))
        if self.n_time < 1 or self.m_noise < 1 or self.n_quad < 1:
            raise DomainError("n_time, m_noise and quadrature must be positive")
        if self.time_basis == TimeBasis.HAAR and self.n_time < 2 ** self.haar_root_level:
            raise DomainError("Haar basis with root level {} needs at least {} time modes".format(
                self.haar_root_level, 2 ** self.haar_root_level))

        pairs = [(i, j) for i in range(1, self.n_time + 1) for j in range(1, self.m_noise + 1)]
        self.pairs: List[Tuple[int, int]] = sorted(pairs, key=lambda ij: (ij[0] + ij[1], ij[1]))
        self.size = len(self.pairs)
        self._index = {ij: k + 1 for k, ij in enumerate(self.pairs)}

        self._supports = [self._support(i) for i in range(1, self.n_time + 1)]
        self._cells = self._quadrature_cells()

    def pair(self, k: int) -> Tuple[int, int]:
        if k < 1 or k > self.size:
            raise RangeError("basis index {} outside 1..{}".format(k, self.size))
        return self.pairs[k - 1]

    def index_of(self, i: int, j: int) -> int:
        return self._index[(i, j)]

    def _haar_layout(self, i: int) -> Tuple[float, float, bool]:
        """(start, length, is_wavelet) of Haar mode i."""
        roots = 2 ** self.haar_root_level
        if i <= roots:
            length = self.horizon / roots
            return (i - 1) * length, length, False
        r = i - roots - 1
        level = 0
        while r >= roots * 2 ** level:
            r -= roots * 2 ** level
            level += 1
        length = self.horizon / (roots * 2 ** level)
        return r * length, length, True

    def _support(self, i: int) -> Tuple[float, float]:
        if self.time_basis == TimeBasis.TRIG:
            return 0.0, self.horizon
        start, length, _ = self._haar_layout(i)
        return start, start + length

    def time_support(self, i: int) -> Tuple[float, float]:
        if i < 1 or i > self.n_time:
            raise RangeError("time mode {} outside 1..{}".format(i, self.n_time))
        return self._supports[i - 1]

    def _check_times(self, t: np.ndarray):
        if np.any(t < -_EDGE * self.horizon) or np.any(t > self.horizon * (1 + _EDGE)):
            raise RangeError("time outside [0, {}]".format(self.horizon))

    def time_mode(self, i: int, t, right: bool = False) -> np.ndarray:
        """m_i(t); `right` takes the right-continuous version of the Haar modes."""
        if i < 1 or i > self.n_time:
            raise RangeError("time mode {} outside 1..{}".format(i, self.n_time))
        t = np.asarray(t, dtype=np.float64)
        self._check_times(t)
        T = self.horizon
        if self.time_basis == TimeBasis.TRIG:
            if i == 1:
                return np.full_like(t, 1.0 / math.sqrt(T))
            j = i // 2
            wave = np.cos if i % 2 == 0 else np.sin
            return math.sqrt(2.0 / T) * wave(2.0 * math.pi * j * t / T)

        start, length, wavelet = self._haar_layout(i)
        height = 1.0 / math.sqrt(length)
        tol = _EDGE * T
        end, mid = start + length, start + 0.5 * length
        if right:
            # cells closed on the left, t = T joins the last one
            inside = (t >= start - tol) & ((t < end - tol) | ((end >= T - tol) & (t <= end + tol)))
            left = t < mid - tol
        else:
            # left-open cells, t = 0 joins the first one
            inside = ((t > start + tol) | ((start == 0.0) & (t <= tol))) & (t <= end + tol)
            left = t <= mid + tol
        if not wavelet:
            return np.where(inside, height, 0.0)
        return np.where(inside, np.where(left, height, -height), 0.0)

    def e_values(self, k: int, t) -> np.ndarray:
        """e_k at the times t as an array of shape (len(t), m_noise)."""
        i, j = self.pair(k)
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.zeros((len(t), self.m_noise))
        out[:, j - 1] = self.time_mode(i, t)
        return out

    def _quadrature_cells(self) -> np.ndarray:
        if self.time_basis == TimeBasis.TRIG:
            n_cells = 2 * self.n_time
        else:
            finest = min(self._haar_layout(i)[1] * (0.5 if self._haar_layout(i)[2] else 1.0)
                         for i in range(1, self.n_time + 1))
            n_cells = int(round(self.horizon / finest))
        return np.linspace(0.0, self.horizon, n_cells + 1)

    def quadrature(self, t: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre nodes and weights on [0, t] (default [0, T])."""
        t = self.horizon if t is None else float(t)
        self._check_times(np.asarray(t))
        x, w = legendre.leggauss(self.n_quad)
        nodes, weights = [], []
        for a, b in zip(self._cells[:-1], self._cells[1:]):
            if a >= t:
                break
            b = min(b, t)
            nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
            weights.append(0.5 * (b - a) * w)
        if not nodes:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(nodes), np.concatenate(weights)

    def gram_matrix(self, n: Optional[int] = None) -> np.ndarray:
        """int_0^T (e_k, e_l)_Y dt for k, l <= n at the configured quadrature."""
        n = self.size if n is None else min(n, self.size)
        nodes, weights = self.quadrature()
        values = np.stack([self.e_values(k, nodes) for k in range(1, n + 1)])
        return np.einsum('q,kqj,lqj->kl', weights, values, values)

    def post_modes(self, t_star: float) -> List[int]:
        """Basis indices k whose time mode lives in [t_star, T]."""
        return [k for k, (i, _) in enumerate(self.pairs, start=1)
                if self._supports[i - 1][0] >= t_star - _EDGE * self.horizon]

    def is_split_point(self, t_star: float) -> bool:
        """Every time mode lives on one side of t_star."""
        return all(b <= t_star + _EDGE * self.horizon or a >= t_star - _EDGE * self.horizon
                   for a, b in self._supports)

    def interpolation_cells(self) -> int:
        """
        Number of equal cells whose indicators span the Haar time modes; the
        truncated noise is then the piecewise-linear interpolation of W on them.
        """
        if self.time_basis != TimeBasis.HAAR:
            raise DomainError("only a Haar basis spans cell indicators")
        roots = 2 ** self.haar_root_level
        cells = roots
        while cells < self.n_time:
            cells *= 2
        if cells != self.n_time:
            raise DomainError("{} Haar modes do not fill complete levels above {} roots".format(self.n_time, roots))
        return cells

    def describe(self) -> Dict:
        return {'horizon': self.horizon, 'time_basis': self.time_basis.value, 'n_time': self.n_time,
                'm_noise': self.m_noise, 'quadrature': self.n_quad, 'haar_root_level': self.haar_root_level,
                'size': self.size}


def eval_e(k: int, t: float, spec: BasisSpec) -> np.ndarray:
    return spec.e_values(k, [t])[0]


class ZPoint(object):
    """Finitely supported real sequence z, with e_z(t) = sum_k z_k e_k(t)."""

    def __init__(self, z: Optional[Mapping[int, float]] = None):
        self.z: Dict[int, float] = {int(k): float(v) for k, v in (z or {}).items() if v != 0.0}

    @classmethod
    def delta(cls, k: int, value: float = 1.0) -> 'ZPoint':
        return cls({k: value})

    def __getitem__(self, k: int) -> float:
        return self.z.get(k, 0.0)

    @property
    def support(self) -> List[int]:
        return sorted(self.z)

    def norm_sq(self) -> float:
        return sum(v * v for v in self.z.values())

    def e_z(self, spec: BasisSpec, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.zeros((len(t), spec.m_noise))
        for k, v in self.z.items():
            out += v * spec.e_values(k, t)
        return out

    def __repr__(self):
        return 'ZPoint({})'.format(self.z)


def restrict_z(z: ZPoint, spec: BasisSpec, t_star: float) -> ZPoint:
    """Drop the coordinates whose time mode lives after t_star."""
    late = set(spec.post_modes(t_star))
    return ZPoint({k: v for k, v in z.z.items() if k not in late})


def test_action(u, M: int, z: ZPoint):
    """<p_M(z), u> = sum_{|alpha|=M} u_alpha z^alpha / sqrt(alpha!); u is a ChaosScalar or a ChaosField."""
    total = None
    for alpha, value in u.coeffs.items():
        if alpha.degree != M:
            continue
        weight = 1.0
        for k, v in alpha.entries:
            weight *= z[k] ** v
        if weight == 0.0:
            continue
        term = value * (weight / math.exp(0.5 * factorial_log(alpha)))
        total = term if total is None else total + term
    if total is None:
        first = next(iter(u.coeffs.values()), 0.0)
        return first * 0.0
    return total


class BrownianPath(object):
    """
    Samples of an m-dimensional Brownian motion through its increments on a
    uniform grid of [0, T]; increments have shape (n_samples, n_steps, m).
    """

    def __init__(self, increments, horizon: float):
        increments = np.asarray(increments, dtype=np.float64)
        if increments.ndim == 2:
            increments = increments[None]
        if increments.ndim != 3:
            raise DomainError("increments must have shape (n_samples, n_steps, m)")
        self.increments = increments
        self.horizon = float(horizon)
        self.n_samples, self.n_steps, self.m = increments.shape
        self.times = np.linspace(0.0, self.horizon, self.n_steps + 1)

    def step_averages(self, fn: Callable[[np.ndarray], np.ndarray], n_nodes: int = 4) -> np.ndarray:
        """Average of fn over each step, shape (n_steps, m)."""
        x, w = legendre.leggauss(n_nodes)
        a, b = self.times[:-1], self.times[1:]
        nodes = (0.5 * (b - a))[:, None] * x[None, :] + (0.5 * (a + b))[:, None]
        values = np.asarray(fn(nodes.ravel()), dtype=np.float64).reshape(self.n_steps, n_nodes, -1)
        return 0.5 * np.einsum('q,sqj->sj', w, values)

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray], t: Optional[float] = None) -> np.ndarray:
        """int_0^t (fn(s), dW_s) per sample, fn piecewise averaged over the grid steps."""
        t = self.horizon if t is None else t
        last = int(round(t / self.horizon * self.n_steps))
        averages = self.step_averages(fn)[:last]
        return np.einsum('sj,nsj->n', averages, self.increments[:, :last])

    def gaussians(self, spec: BasisSpec, indices) -> Dict[int, np.ndarray]:
        """W(e_k) for the requested basis indices."""
        return {k: self.integrate(lambda s, k=k: spec.e_values(k, s)) for k in indices}


def stochastic_exponent(z: ZPoint, t: float, gaussian_path_samples, spec: BasisSpec = None):
    """
    p_t(z) = exp(int_0^t e_z dW - 1/2 int_0^t |e_z|^2 ds).

    With a mapping k -> W(e_k) only t = T is available, where the exponent
    reduces to exp(sum z_k W(e_k) - 1/2 sum z_k^2); a BrownianPath serves any t.
    """
    if not z.z:
        return 1.0
    if isinstance(gaussian_path_samples, BrownianPath):
        if spec is None:
            raise DomainError("a basis is needed to integrate along a Brownian path")
        nodes, weights = spec.quadrature(t)
        energy = float(np.dot(weights, np.sum(z.e_z(spec, nodes) ** 2, axis=1))) if len(nodes) else 0.0
        drive = gaussian_path_samples.integrate(lambda s: z.e_z(spec, s), t)
        return np.exp(drive - 0.5 * energy)

    if spec is not None and abs(t - spec.horizon) > _EDGE * spec.horizon:
        raise RangeError("Gaussian coordinates determine the exponent only at the horizon")
    drive = 0.0
    for k, v in z.z.items():
        if k not in gaussian_path_samples:
            raise MissingSampleError("no sample of W(e_{}) for the stochastic exponent".format(k))
        drive = drive + v * np.asarray(gaussian_path_samples[k], dtype=np.float64)
    value = np.exp(drive - 0.5 * z.norm_sq())
    return float(value) if np.ndim(value) == 0 else value


class Approximation(NamedTuple):
    z: ZPoint
    residual: float


def approximate_h(h: Callable[[np.ndarray], np.ndarray], spec: BasisSpec, n: int) -> Approximation:
    """Projection of h onto e_1..e_n, with the L2([0,T], Y) residual."""
    nodes, weights = spec.quadrature()
    values = np.asarray(h(nodes), dtype=np.float64).reshape(len(nodes), spec.m_noise)
    if not np.all(np.isfinite(values)):
        raise QuadratureError("non-finite samples of h at the quadrature nodes")
    z = {}
    approx = np.zeros_like(values)
    for k in range(1, min(n, spec.size) + 1):
        e = spec.e_values(k, nodes)
        zk = float(np.einsum('q,qj,qj->', weights, values, e))
        if zk != 0.0:
            z[k] = zk
            approx += zk * e
    residual = math.sqrt(max(float(np.dot(weights, np.sum((values - approx) ** 2, axis=1))), 0.0))
    logger.debug("projected h on %d basis elements, residual %.3e", n, residual)
    return Approximation(ZPoint(z), residual)
