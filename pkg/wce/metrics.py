import logging
import math
from typing import Sequence

import numpy as np
from sklearn.linear_model import LinearRegression

logger = logging.getLogger(__name__)


def _fit_slope(x, y):
    model = LinearRegression()
    model.fit(np.asarray(x, dtype=np.float64).reshape(-1, 1), np.asarray(y, dtype=np.float64))
    return float(model.coef_[0]), float(model.intercept_)


def observed_order(steps: Sequence[float], errors: Sequence[float]) -> float:
    """Slope of log(error) against log(step)."""
    order = float('nan')
    try:
        steps = np.asarray(steps, dtype=np.float64)
        errors = np.asarray(errors, dtype=np.float64)
        keep = errors > 0
        if keep.sum() < 2:
            raise RuntimeError("need two positive errors, got {}".format(errors.tolist()))
        order, _ = _fit_slope(np.log(steps[keep]), np.log(errors[keep]))
    except RuntimeError as e:
        logger.warning("Cannot fit a convergence order with error: %s", e)
        return order
    return order


def geometric_decay_rate(level_sums: Sequence[float]) -> float:
    """
    Ratio r of the fit S_n ~ C r^n over the positive level sums; r < 1 means
    geometric decay. Fewer than two positive sums count as decaying (r = 0).
    """
    sums = np.asarray(level_sums, dtype=np.float64)
    if not np.all(np.isfinite(sums)):
        return float('inf')
    levels = np.nonzero(sums > 0)[0]
    if len(levels) < 2:
        return 0.0
    slope, _ = _fit_slope(levels, np.log(sums[levels]))
    return math.exp(slope)


def within_band(estimate, reference, standard_error, n_sigma: float = 3.0) -> bool:
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    standard_error = np.asarray(standard_error, dtype=np.float64)
    deviation = np.abs(estimate - reference)
    # a zero standard error leaves room for roundoff only
    band = n_sigma * standard_error + 1e-12 * np.maximum(1.0, np.abs(reference))
    return bool(np.all(deviation <= band))


def ratio_drift(ratios: Sequence[float], tolerance: float = 0.1) -> bool:
    """True when the ratios grow by more than `tolerance` (relative) at every refinement."""
    ratios = [r for r in ratios if r is not None and math.isfinite(r)]
    if len(ratios) < 2:
        return False
    return all(b > a * (1.0 + tolerance) for a, b in zip(ratios[:-1], ratios[1:]))
