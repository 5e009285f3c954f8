"""Identity suite behind ``mflab validate``: kernel, mean-field and renormalisation checks."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import kernel
from .meanfield import BlobCloud, divergence_check, mf_energy, mf_velocity
from .modenergy import modulated_energy_direct, modulated_energy_truncated
from .nbody import RotationMatrix, min_separation
from .profiles import RadialProfile, UniformBall
from .sampling import SampleSpec, sample_iid


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0
    error: str | None = None

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value,
                "tolerance": self.tolerance, "seconds": round(self.seconds, 4),
                "error": self.error}


def _rng():
    return np.random.default_rng(20240601)


def _unit(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def flux(d):
    def run():
        quad = kernel.sphere_quadrature(d, order=17) if d == 3 else kernel.sphere_quadrature(d)
        return max(abs(kernel.flux_through_sphere(r, d, quad) + 1) for r in (0.1, 1.0, 7.5))
    return run


def grad_fd():
    rng = _rng()
    x = _unit(rng, 100, 3) * rng.uniform(0.1, 10, (100, 1))
    h = 1e-6 * np.linalg.norm(x, axis=1, keepdims=True)
    fd = np.stack([(kernel.coulomb_g(x + h * e) - kernel.coulomb_g(x - h * e)) / (2 * h[:, 0])
                   for e in np.eye(3)], axis=1)
    ex = kernel.grad_g(x)
    return float(np.max(np.linalg.norm(fd - ex, axis=1) / np.linalg.norm(ex, axis=1)))


def truncation_bound():
    rng = _rng()
    eta = 0.1
    x = _unit(rng, 1000, 3) * rng.uniform(0, 1, (1000, 1))
    gt = kernel.truncated_g(x, eta)
    cap = kernel.g_radial(eta, 3)
    inside = np.linalg.norm(x, axis=1) <= eta
    excess = max(float(np.max(gt - cap)), 0.0)
    return excess + float(np.max(np.abs(gt[inside] - cap)))


def difference_kernel():
    rng = _rng()
    x = _unit(rng, 1000, 3) * rng.uniform(0, 0.5, (1000, 1))
    eta, alpha = 0.1, 0.2
    f = kernel.f_eta_alpha(x, eta, alpha)
    ref = kernel.truncated_g(x, alpha) - kernel.truncated_g(x, eta)
    return float(np.max(np.abs(f - ref)) + max(np.max(f), 0.0))


def mean_value():
    rng = _rng()
    quad = kernel.lebedev(7)
    worst = 0.0
    for _ in range(50):
        c = rng.normal(size=3)
        eta = 0.05
        y = c + _unit(rng, 1, 3)[0] * eta * rng.uniform(10, 50)
        v = kernel.smeared_dirac_integrate(lambda p: kernel.coulomb_g(p - y), c, eta, quad)
        ex = float(kernel.coulomb_g(c - y))
        worst = max(worst, abs(v - ex) / ex)
    return worst


def lp_scaling():
    ratios = [kernel.f_lp_norm(a / 2, a, 1.2, 3) / a ** (2 - 3 * 0.2 / 1.2)
              for a in 2.0 ** -np.arange(3, 11)]
    return float(max(ratios) / min(ratios) - 1)


def newton_ball():
    ball = UniformBall()
    generic = RadialProfile(3, 1.0, lambda r: np.ones_like(r))
    rng = _rng()
    r = rng.uniform(0.0, 3.0, 50)
    ext = np.where(r >= 1, 1 / (4 * math.pi * np.maximum(r, 1e-300)),
                   (3 - r**2) / (8 * math.pi))
    err = max(np.max(np.abs(ball.potential(r) - ext) / ext),
              np.max(np.abs(generic.potential(r) - ext) / ext))
    return float(err)


def ball_energy():
    return abs(mf_energy(UniformBall()).h_d - 3 / (20 * math.pi))


def radial_tangency():
    rng = _rng()
    x = rng.uniform(-2, 2, (1000, 3))
    u = mf_velocity(UniformBall(), x, RotationMatrix.default(3))
    return float(np.max(np.abs(np.sum(u * x, axis=1))))


def divergence_radial():
    rng = _rng()
    pts = rng.uniform(-1.5, 1.5, (100, 3))
    pts = pts[np.abs(np.linalg.norm(pts, axis=1) - 1) > 1e-3]
    return divergence_check(UniformBall(), RotationMatrix.default(3), pts)


def divergence_blob():
    cloud = BlobCloud.from_profile(UniformBall(), 256)
    rng = _rng()
    pts = rng.uniform(-1.5, 1.5, (100, 3))
    # keep finite-difference stencils off the kink spheres |x - y_m| = width
    dist = np.linalg.norm(pts[:, None] - cloud.centers[None], axis=-1)
    pts = pts[np.all(np.abs(dist - cloud.width) > 1e-3, axis=1)]
    return divergence_check(cloud, RotationMatrix.default(3), pts)


def renormalisation():
    ball = UniformBall()
    worst = 0.0
    for n in (4, 8, 16, 32):
        st = sample_iid(SampleSpec(ball, n, 7))
        direct = modulated_energy_direct(st, ball).f_n
        trunc = modulated_energy_truncated(st, ball, 1e-3 * min_separation(st)).f_n
        worst = max(worst, abs(trunc - direct) / abs(direct))
    return worst


def smeared_positivity():
    ball = UniformBall()
    worst = math.inf
    for seed in range(5):
        st = sample_iid(SampleSpec(ball, 8, seed))
        for fac in (1e-3, 1e-2, 1e-1):
            rep = modulated_energy_truncated(st, ball, fac * min_separation(st))
            worst = min(worst, rep.smeared_form)
    return -worst  # passes when the form is >= -tol


CHECKS = [
    ("flux_identity_d3", flux(3), 1e-8),
    ("flux_identity_d4", flux(4), 1e-8),
    ("flux_identity_d5", flux(5), 1e-8),
    ("grad_g_finite_difference", grad_fd, 1e-6),
    ("truncated_g_cap", truncation_bound, 1e-15),
    ("f_eta_alpha_identity", difference_kernel, 1e-14),
    ("smeared_mean_value", mean_value, 1e-8),
    ("f_lp_scaling_bounded", lp_scaling, 1e-6),
    ("newton_uniform_ball", newton_ball, 1e-8),
    ("ball_self_energy", ball_energy, 1e-6),
    ("radial_velocity_tangent", radial_tangency, 1e-15),
    ("divergence_radial", divergence_radial, 1e-6),
    ("divergence_blob", divergence_blob, 1e-6),
    ("renormalisation_oracle", renormalisation, 1e-2),
    ("smeared_form_positive", smeared_positivity, 1e-8),
]


def run_suite(corrupt_scale: float | None = None) -> list:
    results = []
    ctx = kernel.corrupted_constant(corrupt_scale) if corrupt_scale else _null()
    with ctx:
        for name, fn, tol in CHECKS:
            t0 = time.perf_counter()
            try:
                val = float(fn())
                res = CheckResult(name, bool(val <= tol), val, tol)
            except Exception as exc:  # a crashing check is a failing check
                res = CheckResult(name, False, math.nan, tol, error=f"{type(exc).__name__}: {exc}")
            res.seconds = time.perf_counter() - t0
            results.append(res)
    return results


class _null:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  {'value':>10}  {'tol':>8}"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        val = "error" if r.error else f"{r.value:.3e}"
        lines.append(f"{r.name:<{width}}  {status:<6}  {val:>10}  {r.tolerance:>8.1e}")
        if r.error:
            lines.append(f"    {r.error}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} checks passed")
    return "\n".join(lines)
