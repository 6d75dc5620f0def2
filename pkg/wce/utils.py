import enum
import platform
from collections import OrderedDict
from typing import Dict, NamedTuple, Tuple

import numpy as np
import torch


class TimeBasis(enum.Enum):
    TRIG = "trig"
    HAAR = "haar"


class Mode(enum.Enum):
    UNBIASED_WICK = "unbiased_wick"
    STANDARD_SNSE = "standard_snse"


class Model(enum.Enum):
    BURGERS1D = "burgers1d"
    NS2D = "ns2d"


class StudyKind(enum.Enum):
    CATALAN = "catalan"
    RESCALING = "rescaling"
    MC_COMPARE = "mc-compare"
    RESTART = "restart"
    CAUSALITY = "causality"


class SpectralPlan(NamedTuple):
    d: int
    n: int
    wavenumbers: Tuple[torch.Tensor, ...]   # integer wavenumbers, rfft layout
    derivative: Tuple[torch.Tensor, ...]    # same with the Nyquist mode zeroed
    ksq: torch.Tensor
    projection_ksq: torch.Tensor            # |derivative|^2, zeros replaced by one
    dealias: torch.Tensor


def _build_plan(d: int, n: int) -> SpectralPlan:
    full = torch.fft.fftfreq(n, d=1.0 / n, dtype=torch.float64)
    half = torch.fft.rfftfreq(n, d=1.0 / n, dtype=torch.float64)
    if d == 1:
        wavenumbers = (half,)
    elif d == 2:
        kx, ky = torch.meshgrid(full, half, indexing='ij')
        wavenumbers = (kx, ky)
    else:
        raise ValueError("only d in {1, 2} is supported, got {}".format(d))

    nyquist = n / 2.0
    derivative = tuple(torch.where(k.abs() == nyquist, torch.zeros_like(k), k) for k in wavenumbers)

    ksq = sum(k ** 2 for k in wavenumbers)
    projection_ksq = sum(k ** 2 for k in derivative)
    projection_ksq = torch.where(projection_ksq == 0, torch.ones_like(projection_ksq), projection_ksq)

    dealias = torch.ones_like(ksq, dtype=torch.bool)
    for k in wavenumbers:
        dealias &= k.abs() < n / 3.0

    return SpectralPlan(d, n, wavenumbers, derivative, ksq, projection_ksq, dealias)


class SpectralPlans:
    """Read-only wavenumber grids shared by every stepper, keyed by (d, N)."""
    __instance = None

    @staticmethod
    def getInstance():
        """ Static access method. """
        if SpectralPlans.__instance is None:
            SpectralPlans()
        return SpectralPlans.__instance

    def __init__(self):
        if SpectralPlans.__instance is not None:
            raise Exception("This class is a singleton!")
        self.plans: Dict[Tuple[int, int], SpectralPlan] = {}
        SpectralPlans.__instance = self

    def get(self, d: int, n: int) -> SpectralPlan:
        key = (d, n)
        if key not in self.plans:
            self.plans[key] = _build_plan(d, n)
        return self.plans[key]


def describe_runtime():
    d = OrderedDict()
    d["python"] = platform.python_version()
    d["torch"] = torch.__version__
    d["numpy"] = np.__version__
    d["torch_threads"] = torch.get_num_threads()
    return d
