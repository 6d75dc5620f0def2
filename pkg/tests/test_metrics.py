import math

import numpy as np
import pytest

from wce.metrics import geometric_decay_rate, observed_order, ratio_drift, within_band


def test_observed_order_of_power_law():
    steps = [0.1, 0.05, 0.025, 0.0125]
    errors = [3.0 * h ** 2 for h in steps]
    assert observed_order(steps, errors) == pytest.approx(2.0, abs=1e-10)


def test_observed_order_skips_zero_errors():
    steps = [0.1, 0.05, 0.025]
    errors = [0.1, 0.0, 0.025]
    assert observed_order(steps, errors) == pytest.approx(1.0, abs=1e-10)


def test_observed_order_needs_two_errors():
    assert math.isnan(observed_order([0.1, 0.05], [0.0, 1e-3]))


def test_geometric_decay_rate():
    sums = [0.5 ** n for n in range(6)]
    assert geometric_decay_rate(sums) == pytest.approx(0.5, rel=1e-10)
    assert geometric_decay_rate([1.0, 3.0, 9.0]) == pytest.approx(3.0, rel=1e-10)


def test_geometric_decay_rate_edge_cases():
    assert geometric_decay_rate([1.0, 0.0, 0.0]) == 0.0
    assert geometric_decay_rate([]) == 0.0
    assert geometric_decay_rate([1.0, float('inf')]) == float('inf')
    assert geometric_decay_rate([1.0, float('nan'), 0.1]) == float('inf')


def test_within_band():
    reference = np.array([1.0, 2.0])
    se = np.array([0.1, 0.1])
    assert within_band([1.2, 1.75], reference, se, 3.0)
    assert not within_band([1.2, 2.4], reference, se, 3.0)
    assert within_band(reference + 1e-13, reference, np.zeros(2))
    assert not within_band(reference + 1e-6, reference, np.zeros(2))


def test_ratio_drift():
    assert ratio_drift([1.0, 1.2, 1.5])
    assert not ratio_drift([1.0, 1.05, 1.5])
    assert not ratio_drift([1.0, 1.0, 1.0])
    assert not ratio_drift([1.0])
    assert ratio_drift([1.0, float('nan'), 2.0, None, 4.0])
