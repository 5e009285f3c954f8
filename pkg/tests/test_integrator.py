import math

import numpy as np
import pytest

from mflab.errors import IntegrationAbort, ParameterError
from mflab.integrator import StepControls, dopri_step, solve


def oscillator(y):
    return np.array([y[1], -y[0]])


def test_oscillator_matches_closed_form():
    stops = np.linspace(0, 10, 21)
    out, stats = solve(oscillator, [1.0, 0.0], stops, StepControls())
    got = np.array(out)
    assert np.allclose(got[:, 0], np.cos(stops), atol=1e-9)
    assert np.allclose(got[:, 1], -np.sin(stops), atol=1e-9)
    assert stats.accepted > 0


def test_exponential_growth():
    out, _ = solve(lambda y: y, [1.0], [0.5, 2.0], StepControls())
    assert out[-1][0] == pytest.approx(math.exp(2.0), rel=1e-9)


def test_fixed_step_is_fifth_order():
    errs = []
    for h in (0.2, 0.1, 0.05):
        y = np.array([1.0, 0.0])
        for _ in range(int(round(1 / h))):
            y, _, _ = dopri_step(oscillator, y, h, oscillator(y))
        errs.append(abs(y[0] - math.cos(1)))
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(4.5 < r < 6.5 for r in rates)


def test_embedded_error_estimate_is_order_of_local_error():
    y = np.array([1.0, 0.0])
    y5, err, k7 = dopri_step(oscillator, y, 0.1, oscillator(y))
    true = abs(y5[0] - math.cos(0.1))
    assert true < np.max(np.abs(err))
    assert np.allclose(k7, oscillator(y5))


def test_repeated_stops_allowed_and_lands_exactly():
    out, stats = solve(oscillator, [1.0, 0.0], [0.0, 0.3, 0.3, 1.0], StepControls())
    assert np.array_equal(out[1], out[2])
    assert np.array_equal(out[0], [1.0, 0.0])
    assert math.isclose(sum(stats.dt_history), 1.0, rel_tol=1e-14)


def test_decreasing_stops_rejected():
    with pytest.raises(ParameterError):
        solve(oscillator, [1.0, 0.0], [1.0, 0.5], StepControls())


def test_step_budget_abort():
    with pytest.raises(IntegrationAbort):
        solve(oscillator, [1.0, 0.0], [100.0], StepControls(max_steps=5))


def test_hook_abort_propagates():
    def hook(t, y):
        if t > 0.5:
            raise IntegrationAbort("stop", t=t)

    with pytest.raises(IntegrationAbort) as info:
        solve(oscillator, [1.0, 0.0], [2.0], StepControls(), on_accept=hook)
    assert info.value.t > 0.5


def test_step_cap_is_respected():
    _, stats = solve(oscillator, [1.0, 0.0], [1.0], StepControls(), step_cap=lambda y, k: 0.01)
    assert max(stats.dt_history) <= 0.01 + 1e-15


@pytest.mark.parametrize("kw", [{"rtol": 0}, {"energy_tol": -1}, {"dt_min": 1, "dt_max": 0.1}])
def test_bad_controls_rejected(kw):
    with pytest.raises(ParameterError):
        StepControls(**kw)
