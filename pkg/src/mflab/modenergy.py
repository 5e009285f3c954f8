"""Modulated energy F_N(x_N, omega) and the diagnostics built on it.

F_N = sum_{i != j} g(x_i - x_j) + N^2 <omega, g * omega> - 2 N sum_i (g * omega)(x_i),
and F_N^avg = F_N / N^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import kernel, summation
from .errors import ParameterError
from .meanfield import (BlobCloud, ReferenceDensity, _exp_sums, density_potential,
                        mf_energy, mf_velocity)
from .nbody import (ParticleConfig, RotationMatrix, coulomb_field, coulomb_potential_rows,
                    nearest_neighbor_distances)
from .profiles import RadialProfile


@dataclass(frozen=True)
class ModulatedEnergyReport:
    f_n: float
    f_n_avg: float
    pair_sum: float
    mf_self: float
    cross: float
    method: str
    eta_max: float | None = None
    n: int = 0
    # smeared quadratic form  int |grad H_{N,eta}|^2  (truncated method only)
    smeared_form: float | None = None

    def to_json(self) -> dict:
        return {"f_n": self.f_n, "f_n_avg": self.f_n_avg, "pair_sum": self.pair_sum,
                "mf_self": self.mf_self, "cross": self.cross, "method": self.method,
                "eta_max": self.eta_max}


def _report(pair_sum, mf_self, cross, n, method, eta_max=None, form=None):
    f_n = pair_sum + mf_self + cross
    return ModulatedEnergyReport(f_n, f_n / (n * n), pair_sum, mf_self, cross, method,
                                 eta_max, n, form)


def _unit_pair_sum(x, threads=None) -> float:
    if len(x) < 2:
        return 0.0
    rows = coulomb_potential_rows(x, x, np.ones(len(x)), True, threads)
    return summation.exact_total(rows)


def modulated_energy_direct(state: ParticleConfig, omega: ReferenceDensity,
                            threads=None) -> ModulatedEnergyReport:
    """Three-term expansion with the exact kernel off the diagonal."""
    x = state.positions
    n = state.n
    pair_sum = _unit_pair_sum(x, threads)
    mf_self = n * n * 2.0 * mf_energy(omega, threads).h_d
    cross = -2.0 * n * summation.exact_total(density_potential(omega, x, threads))
    return _report(pair_sum, mf_self, cross, n, "direct")


# ---------------------------------------------------------------------------
# truncation vectors


def truncation_radii(state: ParticleConfig, eps1: float | None = None) -> np.ndarray:
    """r_i = min(nn_i / 4, eps1); eps1 defaults to N^(-(d+2)/(d^2-2))."""
    n, d = state.n, state.dim
    if eps1 is None:
        eps1 = default_eps1(n, d)
    return np.minimum(0.25 * nearest_neighbor_distances(state.positions), eps1)


def default_eps1(n: int, d: int) -> float:
    return float(n) ** (-(d + 2) / (d * d - 2))


def default_eps3(n: int) -> float:
    return float(n) ** (-1 / 3)


def _check_truncation(state, eta):
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (state.n,)).copy()
    if np.any(~(eta > 0)) or not np.all(np.isfinite(eta)):
        raise ParameterError("truncation radii must be positive and finite")
    if state.n > 1:
        nn = nearest_neighbor_distances(state.positions)
        if np.any(eta > 0.25 * nn * (1 + 1e-12)):
            i = int(np.argmax(eta / nn))
            raise ParameterError(f"eta_{i} = {eta[i]:.3e} exceeds a quarter of the nearest-"
                                 f"neighbour distance {nn[i]:.3e}")
    return eta


def modulated_energy_truncated(state: ParticleConfig, omega: ReferenceDensity, eta,
                               quad: kernel.SphereQuadrature | None = None,
                               threads=None) -> ModulatedEnergyReport:
    """Renormalised smeared energy  int |grad H_{N,eta}|^2 - sum_i g~(eta_i).

    Point masses are replaced by uniform measures on dB(x_i, eta_i).  The
    self-interaction of each smeared point is exactly g~(eta_i) and cancels
    the renormalisation, so only the off-diagonal, cross and omega-omega
    terms are assembled; ``smeared_form`` keeps the full quadratic form.
    """
    x = state.positions
    n, d = state.n, state.dim
    eta = _check_truncation(state, eta)
    quad = quad or kernel.sphere_quadrature(d)
    c = kernel.coulomb_constant(d)
    k = len(quad)

    # off-diagonal: int g_{eta_i}(y - x_i) d delta_{x_j}^{(eta_j)}(y), by sphere quadrature on j
    pair_sum = 0.0
    if n > 1:
        nodes = (x[:, None, :] + eta[:, None, None] * quad.nodes[None, :, :]).reshape(-1, d)
        owner = np.repeat(np.arange(n), k)
        eta2 = eta * eta

        def tile(i0, i1, j0, j1):
            diff = nodes[i0:i1, None, :] - x[None, j0:j1, :]
            r2 = np.maximum(np.einsum("ijk,ijk->ij", diff, diff), eta2[None, j0:j1])
            val = c * r2 ** (1 - d / 2)
            val[owner[i0:i1, None] == np.arange(j0, j1)[None, :]] = 0.0
            return val.sum(axis=1)[:, None]

        rows = summation.row_sums(tile, len(nodes), n, 1, threads=threads)[:, 0]
        pair_sum = summation.exact_total(rows * np.tile(quad.weights, n))

    # cross: -2N sum_i int (g * omega) d delta_{x_i}^{(eta_i)}
    if isinstance(omega, BlobCloud):
        pts = (x[:, None, :] + eta[:, None, None] * quad.nodes[None, :, :]).reshape(-1, d)
        pot = omega.potential(pts, threads).reshape(n, k) @ quad.weights
    else:
        pot = kernel.sphere_average_radial(omega.potential, x, eta, d, kinks=omega.kinks)
    cross = -2.0 * n * summation.exact_total(pot)
    mf_self = n * n * 2.0 * mf_energy(omega, threads).h_d
    diag = summation.exact_total(kernel.g_radial(eta, d))
    form = math.fsum([diag, pair_sum, cross, mf_self])
    return _report(pair_sum, mf_self, cross, n, "truncated", float(eta.max()), form)


# ---------------------------------------------------------------------------
# close-pair counting diagnostic


@dataclass(frozen=True)
class CountingReport:
    lhs: float
    f_n: float
    self_term: float
    density_term: float
    eps3: float

    @property
    def rhs(self) -> float:
        return self.f_n + self.self_term + self.density_term

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


def close_pair_energy(positions, eps3: float) -> float:
    """sum over ordered pairs with |x_i - x_j| <= eps3 of g(x_i - x_j)."""
    x = np.asarray(positions, dtype=float)
    d = x.shape[1]
    pairs = cKDTree(x).query_pairs(eps3, output_type="ndarray")
    if len(pairs) == 0:
        return 0.0
    r = np.linalg.norm(x[pairs[:, 0]] - x[pairs[:, 1]], axis=1)
    return 2.0 * summation.exact_total(kernel.g_radial(r, d))


def counting_report(state: ParticleConfig, omega: ReferenceDensity, eps3: float | None = None,
                    f_n: float | None = None, threads=None) -> CountingReport:
    """Close-pair energy against F_N + N g~(2 eps3) + N^2 |omega|_inf eps3^2."""
    n, d = state.n, state.dim
    eps3 = default_eps3(n) if eps3 is None else float(eps3)
    if not 0 < eps3 < 1:
        raise ParameterError("eps3 must lie in (0, 1)")
    if f_n is None:
        f_n = modulated_energy_direct(state, omega, threads).f_n
    lhs = close_pair_energy(state.positions, eps3)
    self_term = n * float(kernel.g_radial(2 * eps3, d))
    density_term = n * n * float(omega.sup_norm) * eps3**2
    return CountingReport(lhs, float(f_n), self_term, density_term, eps3)


# ---------------------------------------------------------------------------
# Sobolev distance


@dataclass(frozen=True)
class SpectralProbe:
    s: float = -2.0
    cutoff: float = 200.0
    n_radial: int = 256
    sphere_degree: int = 17

    def __post_init__(self):
        if not self.cutoff > 0 or self.n_radial < 1:
            raise ParameterError("cutoff and n_radial must be positive")


@dataclass(frozen=True)
class SobolevDistance:
    value: float
    tail_bound: float
    s: float
    cutoff: float

    def __float__(self):
        return self.value


def sobolev_tail_bound(s: float, cutoff: float, d: int) -> float:
    """Bound on the part of the squared norm beyond |xi| = cutoff, using |omega_N^ - omega^| <= 2."""
    val = kernel.radial_quad(lambda r: (1 + r * r) ** s * r ** (d - 1), cutoff, np.inf)
    return 4.0 * kernel.sphere_area(d) * val


def _fourier_grid(d, probe):
    rg, wg = np.polynomial.legendre.leggauss(probe.n_radial)
    rho = 0.5 * probe.cutoff * (rg + 1)
    wr = 0.5 * probe.cutoff * wg * rho ** (d - 1) * (1 + rho * rho) ** probe.s
    sq = kernel.sphere_quadrature(d, order=probe.sphere_degree)
    xi = (rho[:, None, None] * sq.nodes[None, :, :]).reshape(-1, d)
    w = (wr[:, None] * sq.weights[None, :] * kernel.sphere_area(d)).reshape(-1)
    return rho, xi, w, len(sq)


def sobolev_distance(state: ParticleConfig, omega: ReferenceDensity,
                     probe: SpectralProbe | None = None, threads=None) -> SobolevDistance:
    """||omega_N - omega||_{H^s} by radial Gauss-Legendre x sphere quadrature up to the cutoff."""
    probe = probe or SpectralProbe()
    d = state.dim
    if not probe.s < -d / 2:
        raise ParameterError(f"need s < -d/2 = {-d / 2}, got s = {probe.s}")
    rho, xi, w, k = _fourier_grid(d, probe)
    n = state.n
    re_n, im_n = _exp_sums(xi, state.positions, np.full(n, 1.0 / n), threads)
    if isinstance(omega, BlobCloud):
        re_w, im_w = omega.fourier(xi)
    else:
        re_w = np.repeat(omega.fourier(rho), k)
        im_w = np.zeros_like(re_w)
    integrand = (re_n - re_w) ** 2 + (im_n - im_w) ** 2
    sq_norm = summation.exact_total(w * integrand)
    return SobolevDistance(math.sqrt(max(sq_norm, 0.0)), sobolev_tail_bound(probe.s, probe.cutoff, d),
                           probe.s, probe.cutoff)


# ---------------------------------------------------------------------------
# time derivative of the modulated energy


def _ray_interval(x, n, radius):
    """Parameter range r >= 0 with |x + r n| <= radius, per direction (empty -> lo = hi)."""
    b = n @ x
    disc = b * b - (x @ x - radius * radius)
    root = np.sqrt(np.maximum(disc, 0.0))
    lo = np.maximum(-b - root, 0.0)
    hi = np.maximum(-b + root, 0.0)
    hi = np.where(disc > 0, hi, 0.0)
    return lo, np.maximum(hi, lo)


def _particle_omega_term(point, u_point, profile, J, quad, n_radial):
    """int grad g(x - y) . (u(x) - u(y)) d omega(y) in polar coordinates about x.

    With y = x + r n the kernel times r^(d-1) is c_d (d-2) n, so the integrand is bounded.
    """
    d = profile.dim
    c = kernel.coulomb_constant(d)
    lo, hi = _ray_interval(point, quad.nodes, profile.radius)
    rg, wg = np.polynomial.legendre.leggauss(n_radial)
    half = 0.5 * (hi - lo)
    r = (lo + half)[:, None] + half[:, None] * rg[None, :]
    y = point + r[..., None] * quad.nodes[:, None, :]
    u_y = mf_velocity(profile, y.reshape(-1, d), J).reshape(y.shape)
    dens = profile.density(np.linalg.norm(y, axis=-1))
    dot = np.einsum("kd,kqd->kq", quad.nodes, u_point - u_y)
    per_dir = np.sum(half[:, None] * wg[None, :] * dens * dot, axis=1)
    return c * (d - 2) * kernel.sphere_area(d) * float(quad.weights @ per_dir)


def omega_omega_term(profile: RadialProfile, J: RotationMatrix, quad=None, n_radial: int = 12):
    """Double integral of grad g(x - y) . (u(x) - u(y)) against omega x omega."""
    d = profile.dim
    quad = quad or kernel.sphere_quadrature(d)
    rg, wg = np.polynomial.legendre.leggauss(n_radial)
    R = profile.radius
    rad = 0.5 * R * (rg + 1)
    wrad = 0.5 * R * wg * rad ** (d - 1) * profile.density(rad) * kernel.sphere_area(d)
    total = []
    for rk, wk in zip(rad, wrad):
        pts = rk * quad.nodes
        us = mf_velocity(profile, pts, J)
        for p, u, wq in zip(pts, us, quad.weights):
            total.append(wk * wq * _particle_omega_term(p, u, profile, J, quad, n_radial))
    return math.fsum(total)


def derivative_rhs(state: ParticleConfig, profile: RadialProfile, J: RotationMatrix,
                   quad=None, n_radial: int = 24, symmetrized: bool = True,
                   include_omega_omega: bool = True, threads=None) -> float:
    """Right-hand side of d/dt F_N^avg for a radial (stationary) omega.

    Particle-particle part plus -2/N times the particle-omega integrals plus the
    omega-omega integral, each computed by quadrature.
    """
    if not isinstance(profile, RadialProfile):
        raise ParameterError("derivative check needs a radial reference density")
    x = state.positions
    n, d = state.n, state.dim
    quad = quad or kernel.sphere_quadrature(d, order=17)
    u = mf_velocity(profile, x, J)
    if n > 1 and symmetrized:
        pref = -kernel.coulomb_constant(d) * (d - 2)

        def tile(i0, i1, j0, j1):
            diff = x[i0:i1, None, :] - x[None, j0:j1, :]
            r2 = np.einsum("ijk,ijk->ij", diff, diff)
            diag = np.arange(i0, i1)[:, None] == np.arange(j0, j1)[None, :]
            r2 = np.where(diag, np.inf, r2)
            du = u[i0:i1, None, :] - u[None, j0:j1, :]
            return (pref * r2 ** (-d / 2) * np.einsum("ijk,ijk->ij", diff, du)).sum(axis=1)[:, None]

        pp = summation.exact_total(summation.row_sums(tile, n, n, 1, threads=threads)) / n**2
    elif n > 1:
        field_ = coulomb_field(x, x, np.ones(n), True, threads)
        pp = 2.0 * summation.exact_total(np.einsum("ij,ij->i", u, field_)) / n**2
    else:
        pp = 0.0
    po = math.fsum(_particle_omega_term(xi, ui, profile, J, quad, n_radial)
                   for xi, ui in zip(x, u))
    oo = omega_omega_term(profile, J) if include_omega_omega else 0.0
    return pp - 2.0 * po / n + oo


@dataclass(frozen=True)
class DerivativeCheck:
    fd: float
    rhs: float
    rel_err: float


def derivative_check(state_t: ParticleConfig, state_t_dt: ParticleConfig, dt: float,
                     profile: RadialProfile, J: RotationMatrix, floor: float | None = None,
                     state_t_2dt: ParticleConfig | None = None, **kw) -> DerivativeCheck:
    """Forward difference of F_N^avg against the double-integral identity.

    With a third state at t + 2 dt the difference is Richardson-extrapolated
    to second order.  The default floor is the round-off level of the
    difference quotient, 64 eps |F_N^avg| / dt.
    """
    f0 = modulated_energy_direct(state_t, profile).f_n_avg
    f1 = modulated_energy_direct(state_t_dt, profile).f_n_avg
    fd = (f1 - f0) / dt
    scale = max(abs(f0), abs(f1))
    if state_t_2dt is not None:
        f2 = modulated_energy_direct(state_t_2dt, profile).f_n_avg
        fd = 2 * fd - (f2 - f0) / (2 * dt)
        scale = max(scale, abs(f2))
    if floor is None:
        floor = 64 * np.finfo(float).eps * max(scale, 1e-300) / dt
    rhs = derivative_rhs(state_t, profile, J, **kw)
    rel = abs(fd - rhs) / max(abs(fd), abs(rhs), floor)
    return DerivativeCheck(fd, rhs, rel)


# ---------------------------------------------------------------------------
# growth envelope


def envelope_log_factor(n: int, hamiltonian_nd: float) -> float:
    """ln_+(N^2 H_{N,d}) + ln N."""
    return max(math.log(n * n * hamiltonian_nd), 0.0) + math.log(n)


def growth_envelope(t, f0_abs: float, const: float, n: int, d: int, hamiltonian_nd: float,
                    sup: float):
    """G_{d,N}(t) exp(C t |omega0|_inf L) with L = ln_+(N^2 H) + ln N."""
    t = np.asarray(t, dtype=float)
    L = envelope_log_factor(n, hamiltonian_nd)
    g = f0_abs + const * t * (sup + sup * sup) * L / n ** (2 / (d * d - 2))
    return g * np.exp(const * t * sup * L)


@dataclass
class GrowthSummary:
    c_fit: float
    n: int
    d: int
    log_n: float
    log_energy: float
    sup_norm: float
    hamiltonian_nd: float
    f_avg_abs: np.ndarray = field(repr=False)
    envelope: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        return {"c_fit": self.c_fit, "n": self.n, "d": self.d, "ln_n": self.log_n,
                "ln_plus_n2_h": self.log_energy, "omega0_sup": self.sup_norm,
                "hamiltonian_nd": self.hamiltonian_nd,
                "sup_f_avg": float(np.max(self.f_avg_abs))}


def _smallest_dominating(ok, lo: float, hi: float) -> float:
    """Bisection for the threshold of a monotone predicate; the returned end always satisfies it."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def theorem_monitor(times, f_avg, n: int, d: int, hamiltonian_nd: float,
                    sup: float) -> GrowthSummary:
    """Smallest constant C >= 0 whose envelope dominates |F_N^avg(t)| at every sample."""
    times = np.asarray(times, dtype=float)
    fa = np.abs(np.asarray(f_avg, dtype=float))
    f0 = fa[0]
    c_fit = 0.0
    for t, f in zip(times[1:], fa[1:]):
        if f <= growth_envelope(t, f0, c_fit, n, d, hamiltonian_nd, sup):
            continue
        if t <= 0:
            raise ParameterError("|F_N^avg| changed at t = 0")
        hi = max(2 * c_fit, 1.0)
        while growth_envelope(t, f0, hi, n, d, hamiltonian_nd, sup) < f:
            hi *= 2.0
        c_fit = _smallest_dominating(
            lambda cc: growth_envelope(t, f0, cc, n, d, hamiltonian_nd, sup) >= f, c_fit, hi)
    env = growth_envelope(times, f0, c_fit, n, d, hamiltonian_nd, sup)
    return GrowthSummary(float(c_fit), n, d, math.log(n),
                         max(math.log(n * n * hamiltonian_nd), 0.0), sup, hamiltonian_nd,
                         fa, env, times)
