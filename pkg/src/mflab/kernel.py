"""Coulomb potential family in dimension d >= 3.

All point arguments are arrays whose last axis is the spatial dimension, so
every function here evaluates a single point or a whole batch.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.integrate import lebedev_rule
from scipy.stats import qmc

from .errors import EvaluationError, ParameterError, SingularityError

# Test hook: validate's negative control multiplies c_d by this factor.
_CD_SCALE = 1.0

RADIAL_ABS_TOL = 1e-10
DEFAULT_LEBEDEV_DEGREE = 7  # 26 nodes
DEFAULT_QMC_NODES = 512


def check_dim(d) -> int:
    d = int(d)
    if d < 3:
        raise ParameterError(f"dimension must be >= 3, got {d}")
    return d


def coulomb_constant(d: int) -> float:
    """Newtonian normalisation c_d = Gamma(d/2 - 1) / (4 pi^(d/2)), so -Lap g = delta_0."""
    d = check_dim(d)
    return _CD_SCALE * math.gamma(d / 2 - 1) / (4 * math.pi ** (d / 2))


@contextlib.contextmanager
def corrupted_constant(scale: float):
    """Temporarily scale c_d. Only used as a negative control by ``mflab validate``."""
    global _CD_SCALE
    old = _CD_SCALE
    _CD_SCALE = scale
    try:
        yield
    finally:
        _CD_SCALE = old


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1}."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d: int) -> float:
    return sphere_area(d) / d


def _dim_of(x, d):
    x = np.asarray(x, dtype=float)
    if d is None:
        d = x.shape[-1]
    elif x.shape[-1] != d:
        raise ParameterError(f"point has {x.shape[-1]} coordinates, expected d={d}")
    return x, check_dim(d)


def g_radial(r, d: int):
    """Radial profile g~(r) = c_d r^(2-d)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise SingularityError("Coulomb potential evaluated at r = 0")
    return coulomb_constant(d) * r ** (2 - d)


def coulomb_g(x, d: int | None = None):
    """g(x) = c_d |x|^(2-d). Raises SingularityError at x = 0."""
    x, d = _dim_of(x, d)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularityError("Coulomb potential evaluated at x = 0")
    out = coulomb_constant(d) * r ** (2 - d)
    return float(out) if out.ndim == 0 else out


def grad_g(x, d: int | None = None):
    """Gradient -c_d (d-2) x / |x|^d of the Coulomb potential."""
    x, d = _dim_of(x, d)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise SingularityError("Coulomb gradient evaluated at x = 0")
    scale = -coulomb_constant(d) * (d - 2) / r**d
    return x * scale[..., None]


def _check_eta(eta):
    eta = float(eta)
    if not (eta > 0 and math.isfinite(eta)):
        raise ParameterError(f"truncation radius must be positive and finite, got {eta}")
    return eta


def truncated_g(x, eta: float, d: int | None = None):
    """g capped at its value on the sphere of radius eta."""
    x, d = _dim_of(x, d)
    eta = _check_eta(eta)
    r = np.maximum(np.linalg.norm(x, axis=-1), eta)
    out = coulomb_constant(d) * r ** (2 - d)
    return float(out) if out.ndim == 0 else out


def truncated_grad_g(x, eta: float, d: int | None = None):
    """Gradient of the truncated potential: grad g outside B(0, eta), zero inside."""
    x, d = _dim_of(x, d)
    eta = _check_eta(eta)
    r = np.linalg.norm(x, axis=-1)
    outside = r >= eta
    safe = np.where(outside, r, 1.0)
    scale = np.where(outside, -coulomb_constant(d) * (d - 2) / safe**d, 0.0)
    return x * scale[..., None]


def f_eta_alpha(x, eta: float, alpha: float, d: int | None = None):
    """Difference kernel g_alpha - g_eta for 0 < eta < alpha (nonpositive, supported in B(0, alpha))."""
    x, d = _dim_of(x, d)
    if not (0 < eta < alpha):
        raise ParameterError(f"need 0 < eta < alpha, got eta={eta}, alpha={alpha}")
    c = coulomb_constant(d)
    r = np.linalg.norm(x, axis=-1)
    rr = np.clip(r, eta, alpha)
    out = c * (alpha ** (2 - d) - rr ** (2 - d))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# sphere quadrature


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes on S^{d-1} with probability weights.

    ``degree`` is the polynomial degree integrated exactly.
    """

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self):
        return len(self.weights)


def lebedev(degree: int = DEFAULT_LEBEDEV_DEGREE) -> SphereQuadrature:
    x, w = lebedev_rule(degree)
    return SphereQuadrature(np.ascontiguousarray(x.T), w / w.sum(), degree)


def qmc_sphere(d: int, n_nodes: int = DEFAULT_QMC_NODES, seed: int = 0) -> SphereQuadrature:
    """Antipodally symmetric scrambled-Sobol points on S^{d-1}, equal weights.

    Symmetrisation makes every odd moment vanish, so degree 1 is exact.
    """
    half = max(n_nodes // 2, 1)
    u = qmc.Sobol(d, scramble=True, seed=seed).random(half)
    z = special.ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    nodes = np.concatenate([z, -z])
    return SphereQuadrature(nodes, np.full(len(nodes), 1.0 / len(nodes)), 1)


def sphere_quadrature(d: int, order: int | None = None, n_nodes: int | None = None,
                      seed: int = 0) -> SphereQuadrature:
    """Default rule: Lebedev in d = 3, seeded QMC on S^{d-1} for d >= 4."""
    d = check_dim(d)
    if d == 3:
        return lebedev(order or DEFAULT_LEBEDEV_DEGREE)
    return qmc_sphere(d, n_nodes or DEFAULT_QMC_NODES, seed)


def smeared_dirac_integrate(f, center, eta: float, quad: SphereQuadrature) -> float:
    """Integral of f against the uniform probability measure on the sphere dB(center, eta)."""
    eta = _check_eta(eta)
    center = np.asarray(center, dtype=float)
    vals = np.asarray(f(center + eta * quad.nodes), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("integrand is not finite on the smearing sphere")
    return float(np.dot(quad.weights, vals))


def sphere_average_radial(phi, centers, eta, d: int, kinks=(), n_gauss: int = 32):
    """Average of a radial function phi(|x|) over spheres dB(c, eta), one per centre.

    Reduces to a 1D polar-angle integral with weight sin^{d-2}; pieces are split
    where |x| crosses a kink radius so each Gauss-Legendre piece sees a smooth integrand.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    m = len(centers)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (m,))
    rc = np.linalg.norm(centers, axis=1)
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    breaks = [np.zeros(m), np.full(m, math.pi)]
    for k in kinks:
        with np.errstate(divide="ignore", invalid="ignore"):
            cos_k = (k * k - rc**2 - eta**2) / (2 * rc * eta)
        cos_k = np.where(np.isfinite(cos_k), np.clip(cos_k, -1, 1), 1.0)
        breaks.append(np.arccos(cos_k))
    breaks = np.sort(np.stack(breaks, axis=1), axis=1)
    total = np.zeros(m)
    norm = np.zeros(m)
    for a, b in zip(breaks[:, :-1].T, breaks[:, 1:].T):
        half = 0.5 * (b - a)
        theta = (a + half)[:, None] + half[:, None] * xg[None, :]
        w = half[:, None] * wg[None, :] * np.sin(theta) ** (d - 2)
        r = np.sqrt(np.maximum(rc[:, None] ** 2 + eta[:, None] ** 2
                               + 2 * rc[:, None] * eta[:, None] * np.cos(theta), 0.0))
        total += np.sum(w * phi(r), axis=1)
        norm += np.sum(w, axis=1)
    return total / norm


# ---------------------------------------------------------------------------
# radial integrals


def radial_quad(fn, a: float, b: float, points=None) -> float:
    """Adaptive 1D quadrature on [a, b] to absolute tolerance RADIAL_ABS_TOL."""
    if b <= a:
        return 0.0
    val, _ = integrate.quad(fn, a, b, epsabs=RADIAL_ABS_TOL, epsrel=1e-12, limit=500,
                            points=points)
    return val


def f_lp_norm(eta: float, alpha: float, p: float, d: int) -> float:
    """L^p norm of f_{eta,alpha} via polar coordinates."""
    d = check_dim(d)
    if not (0 < eta < alpha):
        raise ParameterError(f"need 0 < eta < alpha, got eta={eta}, alpha={alpha}")
    if not (1 <= p < d / (d - 2)):
        raise ParameterError(f"p must lie in [1, d/(d-2)) = [1, {d / (d - 2):g}), got {p}")
    c = coulomb_constant(d)
    core = (c * (eta ** (2 - d) - alpha ** (2 - d))) ** p * eta**d / d
    shell = radial_quad(lambda r: (c * (r ** (2 - d) - alpha ** (2 - d))) ** p * r ** (d - 1),
                        eta, alpha)
    return float((sphere_area(d) * (core + shell)) ** (1 / p))


def radial_potential(profile, x, d: int | None = None):
    """Newtonian potential g * omega of a radial density, evaluated at x."""
    x, d = _dim_of(x, d)
    if profile.dim != d:
        raise ParameterError(f"profile lives in d={profile.dim}, point in d={d}")
    return profile.potential(np.linalg.norm(x, axis=-1))


def flux_through_sphere(r: float, d: int, quad: SphereQuadrature | None = None) -> float:
    """Surface integral of grad g . n over dB(0, r); equals -1 when -Lap g = delta_0."""
    quad = quad or sphere_quadrature(d)
    n = quad.nodes
    vals = np.sum(grad_g(r * n, d) * n, axis=1)
    return float(np.dot(quad.weights, vals) * sphere_area(d) * r ** (d - 1))
