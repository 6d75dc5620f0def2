"""
Run configuration: nested JSON blocks loaded into frozen dataclasses, validated
on load, plus the builders that turn a configuration into solver inputs.
"""
import dataclasses
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Tuple

import torch

from wce.basis import BasisSpec
from wce.errors import ConfigError, WCEError
from wce.multiindex import TruncationSpec
from wce.propagator import ChaosField, PropagatorRun
from wce.spectral import GridField, PDECoefficients, leray_project, taylor_green
from wce.utils import Mode, Model, TimeBasis

logger = logging.getLogger(__name__)

CONFIG_PACKAGE = 'wce'
CONFIG_DIR = ('data', 'configs')


@dataclass(frozen=True)
class FourierTerm:
    """amplitude * cos(k . x + phase) on one component."""
    component: int = 0
    wavenumber: Tuple[int, ...] = (1,)
    amplitude: float = 1.0
    phase: float = 0.0


@dataclass(frozen=True)
class BasisConfig:
    time_basis: str = 'trig'
    n_time: int = 4
    m_noise: int = 1
    quadrature: int = 8
    haar_root_level: int = 0


@dataclass(frozen=True)
class TruncationConfig:
    M: int = 2
    K: int = 4
    p_max_degree: Optional[int] = None


@dataclass(frozen=True)
class ScalingConfig:
    q_scan: Tuple[float, ...] = (1.1, 1.5, 2.0, 3.0)
    eps_list: Tuple[float, ...] = (0.5, 0.2, 0.1, 0.05)
    rho: float = -1.0


@dataclass(frozen=True)
class NoiseConfig:
    """
    g[j] and sigma[j] are the fields of noise direction j as sums of Fourier
    terms; sigma fields have one component per space dimension.
    """
    g: Tuple[Tuple[FourierTerm, ...], ...] = ()
    sigma: Tuple[Tuple[FourierTerm, ...], ...] = ()
    forcing: Tuple[FourierTerm, ...] = ()
    drift: Optional[Tuple[float, ...]] = None
    convection: bool = True


@dataclass(frozen=True)
class InitialConfig:
    kind: str = 'taylor_green'
    terms: Tuple[FourierTerm, ...] = ()


@dataclass(frozen=True)
class OutputsConfig:
    directory: str = 'runs'
    snapshots: int = 10
    probes: Tuple[Tuple[int, ...], ...] = ()
    p: float = 4.0


@dataclass(frozen=True)
class MCConfig:
    samples: int = 100000
    batch_size: int = 10000
    dt: Optional[float] = None


@dataclass(frozen=True)
class StudyConfig:
    t_star: Optional[float] = None
    r_prime: Optional[float] = None
    n_sigma: float = 3.0


@dataclass(frozen=True)
class RunConfig:
    model: str = 'ns2d'
    N: int = 32
    nu: float = 0.1
    dt: float = 1e-2
    T_end: float = 1.0
    mode: str = 'unbiased_wick'
    seed: int = 0
    basis: BasisConfig = field(default_factory=BasisConfig)
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)
    mc: MCConfig = field(default_factory=MCConfig)
    study: StudyConfig = field(default_factory=StudyConfig)

    @property
    def d(self) -> int:
        return 1 if Model(self.model) == Model.BURGERS1D else 2

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(text.encode('utf-8')).hexdigest()

    def replace(self, **changes) -> 'RunConfig':
        updated = dataclasses.replace(self, **changes)
        validate(updated)
        return updated


_NESTED = {
    'basis': BasisConfig, 'truncation': TruncationConfig, 'scaling': ScalingConfig, 'noise': NoiseConfig,
    'initial': InitialConfig, 'outputs': OutputsConfig, 'mc': MCConfig, 'study': StudyConfig,
}


def _tuple(value):
    if isinstance(value, list):
        return tuple(_tuple(v) for v in value)
    return value


def _terms(values, where: str) -> Tuple[FourierTerm, ...]:
    if not isinstance(values, list):
        raise ConfigError("{} must be a list of Fourier terms".format(where))
    return tuple(_build(FourierTerm, v, where) for v in values)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError("{} must be a block of key: value pairs".format(where))
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError("unknown keys in {}: {}".format(where, ', '.join(unknown)))
    kwargs = {}
    for key, value in data.items():
        path = '{}.{}'.format(where, key)
        if cls is RunConfig and key in _NESTED:
            kwargs[key] = _build(_NESTED[key], value, path)
        elif cls is NoiseConfig and key in ('g', 'sigma'):
            if not isinstance(value, list):
                raise ConfigError("{} must list one block of terms per noise direction".format(path))
            kwargs[key] = tuple(_terms(v, '{}[{}]'.format(path, j)) for j, v in enumerate(value))
        elif key in ('forcing', 'terms'):
            kwargs[key] = _terms(value, path)
        else:
            kwargs[key] = _tuple(value)
    return cls(**kwargs)


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and n & (n - 1) == 0


def validate(cfg: RunConfig):
    """Raise ConfigError on the first inconsistent value."""
    try:
        Model(cfg.model)
        Mode(cfg.mode)
        TimeBasis(cfg.basis.time_basis)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    checks = [
        (cfg.nu > 0 and math.isfinite(cfg.nu), "nu must be positive, got {}".format(cfg.nu)),
        (cfg.dt > 0, "dt must be positive, got {}".format(cfg.dt)),
        (cfg.T_end > 0, "T_end must be positive, got {}".format(cfg.T_end)),
        (_is_power_of_two(cfg.N), "N must be a power of two, got {}".format(cfg.N)),
        (cfg.truncation.M >= 0, "truncation.M must be nonnegative, got {}".format(cfg.truncation.M)),
        (cfg.truncation.K >= 1, "truncation.K must be at least 1, got {}".format(cfg.truncation.K)),
        (cfg.truncation.K <= cfg.basis.n_time * cfg.basis.m_noise,
         "truncation.K={} exceeds the {} basis elements".format(cfg.truncation.K,
                                                                 cfg.basis.n_time * cfg.basis.m_noise)),
        (cfg.outputs.p > cfg.d, "outputs.p must exceed the dimension {}, got {}".format(cfg.d, cfg.outputs.p)),
        (cfg.outputs.snapshots >= 1, "outputs.snapshots must be positive"),
        (cfg.mc.samples >= 1 and cfg.mc.batch_size >= 1, "mc.samples and mc.batch_size must be positive"),
        (len(cfg.noise.g) <= cfg.basis.m_noise and len(cfg.noise.sigma) <= cfg.basis.m_noise,
         "more noise fields than basis.m_noise={}".format(cfg.basis.m_noise)),
        (cfg.initial.kind in ('taylor_green', 'modes', 'zero'),
         "initial.kind must be taylor_green, modes or zero, got {}".format(cfg.initial.kind)),
        (cfg.initial.kind != 'taylor_green' or cfg.d == 2, "the Taylor-Green vortex needs model ns2d"),
        (cfg.noise.drift is None or len(cfg.noise.drift) == cfg.d,
         "noise.drift needs {} components".format(cfg.d)),
        (all(e > 0 for e in cfg.scaling.eps_list), "scaling.eps_list must be positive"),
        (all(q > 0 for q in cfg.scaling.q_scan), "scaling.q_scan must be positive"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    for where, terms, components in _all_terms(cfg):
        for term in terms:
            if len(term.wavenumber) != cfg.d:
                raise ConfigError("{}: wavenumber {} needs {} entries".format(where, term.wavenumber, cfg.d))
            if not 0 <= term.component < components:
                raise ConfigError("{}: component {} outside 0..{}".format(where, term.component, components - 1))
    for probe in cfg.outputs.probes:
        if len(probe) != cfg.d or not all(0 <= p < cfg.N for p in probe):
            raise ConfigError("probe {} is not a grid index of the {}-dimensional N={} grid".format(
                probe, cfg.d, cfg.N))


def _all_terms(cfg: RunConfig):
    d = cfg.d
    for j, terms in enumerate(cfg.noise.g):
        yield 'noise.g[{}]'.format(j), terms, d
    for j, terms in enumerate(cfg.noise.sigma):
        yield 'noise.sigma[{}]'.format(j), terms, d
    yield 'noise.forcing', cfg.noise.forcing, d
    yield 'initial.terms', cfg.initial.terms, d


def from_dict(data: Dict[str, Any]) -> RunConfig:
    try:
        cfg = _build(RunConfig, data, 'config')
        validate(cfg)
    except TypeError as e:
        raise ConfigError("malformed config: {}".format(e)) from e
    return cfg


def _config_folder():
    folder = resources.files(CONFIG_PACKAGE)
    for part in CONFIG_DIR:
        folder = folder.joinpath(part)
    return folder


def packaged_configs() -> List[str]:
    folder = _config_folder()
    return sorted(entry.name for entry in folder.iterdir() if entry.name.endswith('.json'))


def load_config(path: str) -> RunConfig:
    """
    Load a JSON config from a file, or by name (with or without '.json') from
    the configs shipped with the package.
    """
    try:
        if os.path.isfile(path):
            with open(path, 'r') as f:
                data = json.load(f)
        else:
            name = path if path.endswith('.json') else path + '.json'
            entry = _config_folder().joinpath(name)
            if os.sep in path or not entry.is_file():
                raise ConfigError("no config file {} (packaged: {})".format(path, ', '.join(packaged_configs())))
            data = json.loads(entry.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("config {} is not valid JSON: {}".format(path, e)) from e
    cfg = from_dict(data)
    logger.info("loaded config %s (digest %s)", path, cfg.digest()[:12])
    return cfg


def fourier_field(d: int, n: int, terms: Tuple[FourierTerm, ...], components: int) -> GridField:
    def build(*xs):
        out = [torch.zeros((n,) * d, dtype=torch.float64) for _ in range(components)]
        for term in terms:
            phase = sum(float(k) * x for k, x in zip(term.wavenumber, xs)) + term.phase
            out[term.component] = out[term.component] + term.amplitude * torch.cos(phase)
        return out

    return GridField.from_function(d, n, build)


def build_coefficients(cfg: RunConfig) -> PDECoefficients:
    d, n = cfg.d, cfg.N
    forcing = fourier_field(d, n, cfg.noise.forcing, d) if cfg.noise.forcing else None
    return PDECoefficients(
        nu=cfg.nu,
        b=cfg.noise.drift,
        sigma=[fourier_field(d, n, terms, d) if terms else None for terms in cfg.noise.sigma],
        g=[fourier_field(d, n, terms, d) if terms else None for terms in cfg.noise.g],
        f=forcing,
        convection=cfg.noise.convection,
    )


def build_basis(cfg: RunConfig) -> BasisSpec:
    b = cfg.basis
    return BasisSpec(cfg.T_end, b.time_basis, b.n_time, b.m_noise, b.quadrature, b.haar_root_level)


def build_truncation(cfg: RunConfig) -> TruncationSpec:
    return TruncationSpec(cfg.truncation.M, cfg.truncation.K)


def build_initial(cfg: RunConfig) -> GridField:
    if cfg.initial.kind == 'taylor_green':
        return taylor_green(cfg.N)
    if cfg.initial.kind == 'zero':
        return GridField.zeros(cfg.d, cfg.d, cfg.N)
    u0 = fourier_field(cfg.d, cfg.N, cfg.initial.terms, cfg.d)
    return leray_project(u0) if cfg.d > 1 else u0


def build_run(cfg: RunConfig, serial: bool = True, verbose: bool = False, **overrides) -> PropagatorRun:
    """PropagatorRun of a validated config; keyword overrides replace run fields."""
    truncation = build_truncation(cfg)
    kwargs = dict(
        mode=Mode(cfg.mode),
        coeffs=build_coefficients(cfg),
        basis=build_basis(cfg),
        truncation=truncation,
        dt=cfg.dt,
        T_end=cfg.T_end,
        initial=ChaosField.deterministic(build_initial(cfg), truncation),
        snapshots=cfg.outputs.snapshots,
        p=cfg.outputs.p,
        p_max_degree=cfg.truncation.p_max_degree,
        serial=serial,
        verbose=verbose,
    )
    kwargs.update(overrides)
    try:
        return PropagatorRun(**kwargs)
    except WCEError as e:
        raise ConfigError("config does not define a valid run: {}".format(e)) from e
