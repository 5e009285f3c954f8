"""Adaptive Dormand-Prince 5(4) integrator for autonomous systems y' = f(y).

Steps are clipped so the integrator lands exactly on every requested output
time; no dense-output interpolation is involved, which keeps sampled states
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationAbort, ParameterError

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class StepControls:
    """Tolerances and limits for adaptive time stepping."""

    rtol: float = 1e-10
    atol: float = 1e-12
    energy_tol: float = 1e-6
    collision_floor: float = 1e-9
    dt_init: float | None = None
    dt_min: float = 1e-14
    dt_max: float = math.inf
    cfl: float = 0.1
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ParameterError("rtol and atol must be positive")
        if not self.energy_tol > 0:
            raise ParameterError("energy_tol must be positive")
        if not (0 < self.dt_min <= self.dt_max):
            raise ParameterError("need 0 < dt_min <= dt_max")


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    rhs_evals: int = 0
    dt_history: list = field(default_factory=list)


def dopri_step(f, y, h, k1):
    """One DP5(4) step from y with stage k1 = f(y); returns (y5, err, k7)."""
    k = [k1]
    for i in range(1, 7):
        acc = y.copy()
        for a, kj in zip(_A[i], k):
            if a != 0.0:
                acc += (h * a) * kj
        k.append(f(acc))
    # stage 7 is evaluated at the 5th-order solution (FSAL)
    y5 = acc
    err = np.zeros_like(y)
    for e, kj in zip(_E, k):
        if e != 0.0:
            err += (h * e) * kj
    return y5, err, k[6]


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, y0, k1, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((k1 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    k2 = f(y0 + h0 * k1)
    d2 = np.sqrt(np.mean(((k2 - k1) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def solve(f, y0, stops, controls: StepControls, step_cap=None, on_accept=None, stats=None):
    """Integrate from t = 0 and return the states at each time in ``stops``.

    ``stops`` must be nondecreasing and nonnegative.  ``step_cap(y, k1)``
    bounds the next step; ``on_accept(t, y)`` runs after every accepted step
    and may raise IntegrationAbort.
    """
    stops = [float(s) for s in stops]
    if any(b < a for a, b in zip(stops, stops[1:])) or (stops and stops[0] < 0):
        raise ParameterError("output times must be nonnegative and nondecreasing")
    stats = stats if stats is not None else StepStats()
    y = np.array(y0, dtype=float)
    t = 0.0
    out = []
    k1 = f(y)
    stats.rhs_evals += 1
    h = controls.dt_init or _initial_step(f, y, k1, controls.rtol, controls.atol)
    stats.rhs_evals += 1
    for stop in stops:
        while t < stop:
            if stats.accepted + stats.rejected >= controls.max_steps:
                raise IntegrationAbort("step budget exhausted", t=t)
            cap = controls.dt_max
            if step_cap is not None:
                cap = min(cap, step_cap(y, k1))
            h = min(h, cap)
            remaining = stop - t
            last = h >= remaining * (1 - 1e-12)
            step = remaining if last else h
            y_new, err, k7 = dopri_step(f, y, step, k1)
            stats.rhs_evals += 6
            en = _error_norm(err, y, y_new, controls.rtol, controls.atol)
            if en <= 1.0:
                t = stop if last else t + step
                y, k1 = y_new, k7
                stats.accepted += 1
                stats.dt_history.append(step)
                if on_accept is not None:
                    on_accept(t, y)
                fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                # a clipped final step says nothing about the natural step size
                h = max(h, step * fac) if last else step * fac
            else:
                stats.rejected += 1
                h = step * max(0.2, 0.9 * en ** -0.2)
                if h < controls.dt_min:
                    raise IntegrationAbort(f"step size underflow (dt={h:.3e})", t=t,
                                           diagnostic={"error_norm": en})
        out.append(y.copy())
    return out, stats
