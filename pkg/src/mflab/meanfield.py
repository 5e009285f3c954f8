"""Mean-field density omega(t) and its velocity u = J grad g * omega.

Two backends share one interface: a ``RadialProfile`` (stationary, closed
form or 1D quadrature) and a ``BlobCloud`` of sphere-smeared point masses
advected by the regularised velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from . import kernel, summation
from .errors import ParameterError
from .integrator import StepControls, StepStats
from .nbody import RotationMatrix, _integrate_system, sample_times
from .profiles import RadialProfile, angular_average_exp


def _truncated_rows(targets, sources, weights, delta, gradient: bool, threads=None):
    t = np.ascontiguousarray(np.atleast_2d(targets), dtype=float)
    s = np.ascontiguousarray(sources, dtype=float)
    w = np.asarray(weights, dtype=float)
    d = t.shape[1]
    c = kernel.coulomb_constant(d)

    def tile(i0, i1, j0, j1):
        diff = t[i0:i1, None, :] - s[None, j0:j1, :]
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
        if gradient:
            outside = r2 >= delta * delta
            coef = np.where(outside, w[None, j0:j1] * -c * (d - 2)
                            * np.where(outside, r2, 1.0) ** (-d / 2), 0.0)
            return np.einsum("ij,ijk->ik", coef, diff)
        rr = np.maximum(r2, delta * delta)
        return (c * (w[None, j0:j1] * rr ** (1 - d / 2)).sum(axis=1))[:, None]

    width = d if gradient else 1
    out = summation.row_sums(tile, len(t), len(s), width, threads=threads)
    return out if gradient else out[:, 0]


@dataclass(frozen=True, eq=False)
class BlobCloud:
    """M sphere-smeared point masses of common width ``width`` and weights summing to 1."""

    centers: np.ndarray
    weights: np.ndarray
    width: float
    sup_norm: float = math.nan

    def __post_init__(self):
        y = np.array(self.centers, dtype=float)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if y.ndim != 2 or len(w) != len(y):
            raise ParameterError("centers must be (M, d) with one weight per blob")
        kernel.check_dim(y.shape[1])
        if np.any(w <= 0):
            raise ParameterError("blob weights must be positive")
        if abs(summation.exact_total(w) - 1.0) > 1e-12:
            raise ParameterError("blob weights must sum to 1")
        if not self.width > 0:
            raise ParameterError("blob width must be positive")
        y.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "centers", y)
        object.__setattr__(self, "weights", w)
        if math.isnan(self.sup_norm):
            object.__setattr__(self, "sup_norm", local_density_max(y, w, self.width))

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def m(self) -> int:
        return len(self.weights)

    @classmethod
    def from_profile(cls, profile: RadialProfile, m: int, width: float | None = None,
                     seed: int = 0) -> "BlobCloud":
        """Quasi-random cloud: scrambled Sobol points pushed through the radial inverse CDF."""
        d = profile.dim
        u = qmc.Sobol(d + 1 if d != 3 else 3, scramble=True, seed=seed).random(m)
        r = profile.inverse_cdf(u[:, 0])
        if d == 3:
            cos_t = 2 * u[:, 1] - 1
            sin_t = np.sqrt(np.maximum(1 - cos_t**2, 0.0))
            phi = 2 * math.pi * u[:, 2]
            n = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)
        else:
            from scipy.special import ndtri
            z = ndtri(np.clip(u[:, 1:], 1e-12, 1 - 1e-12))
            n = z / np.linalg.norm(z, axis=1, keepdims=True)
        width = default_blob_width(m, d) if width is None else width
        return cls(r[:, None] * n, np.full(m, 1.0 / m), width, profile.sup_norm)

    def with_centers(self, centers) -> "BlobCloud":
        return BlobCloud(centers, self.weights, self.width, self.sup_norm)

    def potential(self, x, threads=None):
        """(g * omega)(x) = sum_m w_m g_width(x - y_m)."""
        x = np.asarray(x, dtype=float)
        out = _truncated_rows(x.reshape(-1, self.dim), self.centers, self.weights, self.width,
                              False, threads)
        return out.reshape(x.shape[:-1])

    def field(self, x, threads=None):
        """grad (g * omega)(x) with the truncated kernel."""
        x = np.asarray(x, dtype=float)
        out = _truncated_rows(x.reshape(-1, self.dim), self.centers, self.weights, self.width,
                              True, threads)
        return out.reshape(x.shape)

    def energy(self, threads=None) -> float:
        rows = _truncated_rows(self.centers, self.centers, self.weights, self.width, False, threads)
        return 0.5 * summation.exact_total(self.weights * rows)

    def fourier(self, xi):
        """sum_m w_m exp(-i xi.y_m) Lambda_d(|xi| width), as (real, imag)."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        k = np.linalg.norm(xi, axis=1)
        re, im = _exp_sums(xi, self.centers, self.weights)
        smear = angular_average_exp(k * self.width, self.dim)
        return re * smear, im * smear


def default_blob_width(m: int, d: int) -> float:
    """Inter-particle spacing M^(-1/d)."""
    return float(m) ** (-1.0 / d)


def local_density_max(centers, weights, width) -> float:
    """L-infinity proxy: largest blob mass within 2*width of a centre, per unit volume."""
    centers = np.asarray(centers, dtype=float)
    d = centers.shape[1]
    h = 2.0 * width
    tree = cKDTree(centers)
    hits = tree.query_ball_point(centers, h)
    mass = np.array([np.sum(weights[idx]) for idx in hits])
    return float(mass.max() / (kernel.ball_volume(d) * h**d))


def _exp_sums(xi, points, weights, threads=None):
    """Re/Im of sum_j w_j exp(-i xi_k . x_j) for each row xi_k."""
    xi = np.ascontiguousarray(xi, dtype=float)
    pts = np.ascontiguousarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)

    def tile(i0, i1, j0, j1):
        ph = xi[i0:i1] @ pts[j0:j1].T
        return np.stack([np.cos(ph) @ w[j0:j1], -(np.sin(ph) @ w[j0:j1])], axis=1)

    out = summation.row_sums(tile, len(xi), len(pts), 2, chunk=1024, threads=threads)
    return out[:, 0], out[:, 1]


ReferenceDensity = Union[RadialProfile, BlobCloud]


def density_potential(omega: ReferenceDensity, x, threads=None):
    """(g * omega)(x)."""
    x = np.asarray(x, dtype=float)
    if isinstance(omega, BlobCloud):
        return omega.potential(x, threads)
    return omega.potential(np.linalg.norm(x, axis=-1))


def density_field(omega: ReferenceDensity, x, threads=None):
    """grad (g * omega)(x)."""
    x = np.asarray(x, dtype=float)
    if isinstance(omega, BlobCloud):
        return omega.field(x, threads)
    r = np.linalg.norm(x, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    return x * np.where(r > 0, omega.potential_derivative(r) / safe, 0.0)[..., None]


def mf_velocity(omega: ReferenceDensity, x, J: RotationMatrix, threads=None):
    """u(x) = J grad (g * omega)(x)."""
    if J.dim != omega.dim:
        raise ParameterError("rotation matrix and density dimensions differ")
    return J.apply(density_field(omega, x, threads))


@dataclass(frozen=True)
class MfEnergy:
    h_d: float


def mf_energy(omega: ReferenceDensity, threads=None) -> MfEnergy:
    """H_d = (1/2) <omega, g * omega> (blob diagonal included)."""
    if isinstance(omega, BlobCloud):
        return MfEnergy(omega.energy(threads))
    return MfEnergy(float(omega.energy()))


def sup_norm(omega: ReferenceDensity) -> float:
    return float(omega.sup_norm)


def divergence_check(omega: ReferenceDensity, J: RotationMatrix, points, h: float = 1e-5,
                     threads=None) -> float:
    """max |div u| over ``points`` by central differences with step h."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts.shape[1]
    if not np.any(J.matrix):
        return 0.0
    div = np.zeros(len(pts))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        up = mf_velocity(omega, pts + e, J, threads)[:, k]
        dn = mf_velocity(omega, pts - e, J, threads)[:, k]
        div += (up - dn) / (2 * h)
    return float(np.max(np.abs(div)))


@dataclass
class BlobTrajectory:
    times: np.ndarray
    clouds: list
    energy: np.ndarray
    sup_proxy: np.ndarray
    stats: StepStats = field(default_factory=StepStats)

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])) / abs(self.energy[0]))

    @property
    def sup_proxy_drift(self) -> float:
        return float(np.max(np.abs(self.sup_proxy - self.sup_proxy[0])) / self.sup_proxy[0])


def evolve(cloud: BlobCloud, J: RotationMatrix, t_end: float,
           controls: StepControls | None = None, times=None, threads=None) -> BlobTrajectory:
    """Advect blob centres along their own regularised velocity; weights never change."""
    # the truncated velocity has a kink at |x| = width, so tight tolerances only buy rejections
    controls = controls or StepControls(rtol=1e-6, atol=1e-8, energy_tol=1e-3)
    if times is None:
        times = sample_times(t_end)
    times = np.asarray(times, dtype=float)
    w, delta = cloud.weights, cloud.width

    def rhs(y):
        return J.apply(_truncated_rows(y, y, w, delta, True, threads))

    def energy(y):
        rows = _truncated_rows(y, y, w, delta, False, threads)
        return 0.5 * summation.exact_total(w * rows)

    pos, stats, _ = _integrate_system(cloud.centers, w, rhs, energy, times, controls,
                                      collision=False)
    clouds = [cloud.with_centers(p) for p in pos]
    return BlobTrajectory(times, clouds, np.array([energy(p) for p in pos]),
                          np.array([local_density_max(p, w, delta) for p in pos]), stats)
