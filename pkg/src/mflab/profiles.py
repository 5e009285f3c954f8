"""Radial probability densities with their Newtonian potentials.

``RadialProfile`` handles any compactly supported radial density by 1D
quadrature (Newton's theorem); ``UniformBall`` overrides everything with
closed forms.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from . import kernel
from .errors import ParameterError

_PANELS = 256
_GAUSS = 16


def angular_average_exp(z, d: int):
    """Average of exp(-i z n.e) over n on S^{d-1}: Gamma(d/2) (2/z)^(d/2-1) J_{d/2-1}(z)."""
    z = np.asarray(z, dtype=float)
    if d == 3:
        small = np.abs(z) < 1e-3
        zs = np.where(small, 1.0, z)
        return np.where(small, 1 - z**2 / 6 + z**4 / 120, np.sin(zs) / zs)
    nu = d / 2 - 1
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    big = math.gamma(d / 2) * (2 / zs) ** nu * special.jv(nu, zs)
    return np.where(small, 1 - z**2 / (2 * d) + z**4 / (8 * d * (d + 2)), big)


class RadialProfile:
    """Radial density rho(r) = shape(r) / Z supported on B(0, R).

    ``shape`` must be vectorised, nonnegative, bounded and smooth on [0, R].
    """

    kind = "radial"

    def __init__(self, dim: int, radius: float, shape, label: str = "radial"):
        self.dim = kernel.check_dim(dim)
        if not radius > 0:
            raise ParameterError(f"support radius must be positive, got {radius}")
        self.radius = float(radius)
        self.shape = shape
        self.label = label
        self._build_tables()

    # tables of cumulative radial integrals on a composite Gauss grid
    def _build_tables(self):
        d, R = self.dim, self.radius
        self._edges = np.linspace(0.0, R, _PANELS + 1)
        self._xg, self._wg = np.polynomial.legendre.leggauss(_GAUSS)
        area = kernel.sphere_area(d)
        mass_panel = self._panel_integral(lambda r: area * self.shape(r) * r ** (d - 1))
        self._z = float(np.sum(mass_panel))
        if not self._z > 0:
            raise ParameterError("radial density has zero mass")
        self._mass_cum = np.concatenate([[0.0], np.cumsum(mass_panel)]) / self._z
        outer_panel = self._panel_integral(lambda r: area * self.shape(r) * r) / self._z
        self._outer_cum = np.concatenate([[0.0], np.cumsum(outer_panel)])

    def _panel_integral(self, fn):
        a, b = self._edges[:-1], self._edges[1:]
        half = 0.5 * (b - a)
        nodes = (a + half)[:, None] + half[:, None] * self._xg[None, :]
        return np.sum(half[:, None] * self._wg[None, :] * fn(nodes), axis=1)

    def _cumulative(self, r, cum, integrand):
        r = np.clip(np.asarray(r, dtype=float), 0.0, self.radius)
        idx = np.minimum(np.searchsorted(self._edges, r, side="right") - 1, _PANELS - 1)
        a = self._edges[idx]
        half = 0.5 * (r - a)
        nodes = (a + half)[..., None] + half[..., None] * self._xg
        part = np.sum(half[..., None] * self._wg * integrand(nodes), axis=-1)
        return cum[idx] + part

    def density(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.radius
        return np.where(inside, self.shape(np.where(inside, r, 0.0)) / self._z, 0.0)

    def __call__(self, x):
        return self.density(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))

    def mass_within(self, r):
        area, d = kernel.sphere_area(self.dim), self.dim
        return self._cumulative(r, self._mass_cum,
                                lambda s: area * self.shape(s) * s ** (d - 1) / self._z)

    def _outer(self, r):
        # int_r^R rho(s) |S| s ds
        area = kernel.sphere_area(self.dim)
        total = self._outer_cum[-1]
        return total - self._cumulative(r, self._outer_cum,
                                        lambda s: area * self.shape(s) * s / self._z)

    def potential(self, r):
        """phi(r) = c_d [M(r) r^(2-d) + int_r^R rho |S| s ds]."""
        r = np.asarray(r, dtype=float)
        d, c = self.dim, kernel.coulomb_constant(self.dim)
        m = self.mass_within(r)
        safe = np.where(r > 0, r, 1.0)
        inner = np.where(r > 0, m * safe ** (2 - d), 0.0)
        return c * (inner + self._outer(r))

    def potential_derivative(self, r):
        """phi'(r) = -c_d (d-2) M(r) r^(1-d)."""
        r = np.asarray(r, dtype=float)
        d, c = self.dim, kernel.coulomb_constant(self.dim)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, -c * (d - 2) * self.mass_within(r) * safe ** (1 - d), 0.0)

    def energy(self) -> float:
        """H_d = (1/2) int phi rho dx."""
        d = self.dim
        area = kernel.sphere_area(d)
        vals = self._panel_integral(
            lambda r: self.potential(r) * self.density(r) * area * r ** (d - 1))
        return 0.5 * float(np.sum(vals))

    @property
    def sup_norm(self) -> float:
        grid = np.linspace(0.0, self.radius, 4097)
        return float(np.max(self.density(grid)))

    @property
    def kinks(self):
        return (self.radius,)

    def fourier(self, k):
        """Radial Fourier transform omega^(k) = int exp(-i xi.x) d omega, |xi| = k."""
        k = np.asarray(k, dtype=float)
        d = self.dim
        area = kernel.sphere_area(d)
        flat = k.reshape(-1)
        vals = np.array([np.sum(self._panel_integral(
            lambda r, kk=kk: area * self.shape(r) * r ** (d - 1) * angular_average_exp(kk * r, d)))
            for kk in flat]) / self._z
        return vals.reshape(k.shape)

    def inverse_cdf(self, u):
        """Radius with mass_within(radius) = u, by bisection on the cumulative table."""
        u = np.asarray(u, dtype=float)
        lo = np.zeros_like(u)
        hi = np.full_like(u, self.radius)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.mass_within(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def to_spec(self) -> dict:
        spec = {"type": self.label, "radius": self.radius, "dim": self.dim}
        if hasattr(self, "exponent"):
            spec["exponent"] = self.exponent
        return spec


class UniformBall(RadialProfile):
    """Uniform probability density on B(0, R), all quantities in closed form."""

    kind = "uniform_ball"

    def __init__(self, dim: int = 3, radius: float = 1.0):
        self.dim = kernel.check_dim(dim)
        if not radius > 0:
            raise ParameterError(f"support radius must be positive, got {radius}")
        self.radius = float(radius)
        self.label = "uniform_ball"
        self._rho = 1.0 / (kernel.ball_volume(self.dim) * self.radius**self.dim)
        self.shape = lambda r: np.ones_like(r)

    def density(self, r):
        return np.where(np.asarray(r) <= self.radius, self._rho, 0.0)

    def mass_within(self, r):
        r = np.asarray(r, dtype=float)
        return np.minimum(r / self.radius, 1.0) ** self.dim

    def potential(self, r):
        """Interior c_d (d R^2 - (d-2) r^2) / (2 R^d); exterior c_d r^(2-d)."""
        r = np.asarray(r, dtype=float)
        d, R, c = self.dim, self.radius, kernel.coulomb_constant(self.dim)
        inside = r < R
        safe = np.where(inside, R, r)
        interior = c * (d * R**2 - (d - 2) * r**2) / (2 * R**d)
        return np.where(inside, interior, c * safe ** (2 - d))

    def potential_derivative(self, r):
        r = np.asarray(r, dtype=float)
        d, R, c = self.dim, self.radius, kernel.coulomb_constant(self.dim)
        inside = r < R
        safe = np.where(inside, R, r)
        return np.where(inside, -c * (d - 2) * r / R**d, -c * (d - 2) * safe ** (1 - d))

    def energy(self) -> float:
        d, R = self.dim, self.radius
        return kernel.coulomb_constant(d) * d / ((d + 2) * R ** (d - 2))

    @property
    def sup_norm(self) -> float:
        return self._rho

    def fourier(self, k):
        k = np.asarray(k, dtype=float)
        z = k * self.radius
        d = self.dim
        small = np.abs(z) < 1e-2
        zs = np.where(small, 1.0, z)
        if d == 3:
            big = 3 * (np.sin(zs) - zs * np.cos(zs)) / zs**3
        else:
            big = math.gamma(d / 2 + 1) * (2 / zs) ** (d / 2) * special.jv(d / 2, zs)
        series = 1 - z**2 / (2 * (d + 2)) + z**4 / (8 * (d + 2) * (d + 4))
        return np.where(small, series, big)

    def inverse_cdf(self, u):
        return self.radius * np.asarray(u, dtype=float) ** (1.0 / self.dim)


def bump(dim: int, radius: float = 1.0, exponent: float = 1.0) -> RadialProfile:
    """Density proportional to (1 - r^2/R^2)^exponent on B(0, R)."""
    R = float(radius)
    prof = RadialProfile(dim, R, lambda r: np.clip(1 - (r / R) ** 2, 0.0, None) ** exponent,
                         label="bump")
    prof.exponent = exponent
    return prof


def profile_from_spec(spec: dict, dim: int) -> RadialProfile:
    kind = spec.get("type", "uniform_ball")
    radius = float(spec.get("radius", 1.0))
    if kind == "uniform_ball":
        return UniformBall(dim, radius)
    if kind == "bump":
        return bump(dim, radius, float(spec.get("exponent", 1.0)))
    raise ParameterError(f"unknown density type {kind!r}")
