"""Conservative first-order Coulomb N-body system x_i' = sum_j a_j J grad g(x_i - x_j)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import kernel, summation
from .errors import IntegrationAbort, ParameterError, SingularityError
from .integrator import StepControls, StepStats, solve


@dataclass(frozen=True)
class RotationMatrix:
    """Antisymmetric d x d matrix stored through its strict upper triangle (row-major)."""

    dim: int
    upper: tuple

    def __post_init__(self):
        d = kernel.check_dim(self.dim)
        if len(self.upper) != d * (d - 1) // 2:
            raise ParameterError(f"strict upper triangle of a {d}x{d} matrix has "
                                 f"{d * (d - 1) // 2} entries, got {len(self.upper)}")
        object.__setattr__(self, "upper", tuple(float(u) for u in self.upper))

    @classmethod
    def default(cls, d: int) -> "RotationMatrix":
        """Single rotation block in the (e1, e2) plane: J e1 = e2, J e2 = -e1."""
        upper = [0.0] * (d * (d - 1) // 2)
        upper[0] = -1.0  # J[0, 1]
        return cls(d, tuple(upper))

    @classmethod
    def zero(cls, d: int) -> "RotationMatrix":
        return cls(d, (0.0,) * (d * (d - 1) // 2))

    @classmethod
    def from_matrix(cls, m) -> "RotationMatrix":
        m = np.asarray(m, dtype=float)
        if not np.array_equal(m, -m.T):
            raise ParameterError("matrix is not antisymmetric")
        iu = np.triu_indices(len(m), 1)
        return cls(len(m), tuple(m[iu]))

    @property
    def matrix(self) -> np.ndarray:
        d = self.dim
        m = np.zeros((d, d))
        iu = np.triu_indices(d, 1)
        m[iu] = self.upper
        return m - m.T

    def apply(self, v):
        """J v for a single vector or each row of a batch."""
        return np.asarray(v, dtype=float) @ self.matrix.T

    def __neg__(self):
        return RotationMatrix(self.dim, tuple(-u for u in self.upper))


@dataclass(frozen=True, eq=False)
class ParticleConfig:
    """Immutable snapshot: positions (N, d) and intensities a_i > 0."""

    positions: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        if x.ndim != 2:
            raise ParameterError("positions must be an (N, d) array")
        kernel.check_dim(x.shape[1])
        a = np.array(self.intensities, dtype=float).reshape(-1)
        if len(a) != len(x):
            raise ParameterError("one intensity per particle required")
        if np.any(a <= 0):
            raise ParameterError("intensities must be strictly positive")
        if len(x) > 1:
            pairs = cKDTree(x).query_pairs(0.0, output_type="ndarray")
            if len(pairs):
                i, j = map(int, pairs[0])
                raise SingularityError(f"particles {i} and {j} coincide", pair=(i, j))
        x.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "intensities", a)

    @classmethod
    def mean_field(cls, positions) -> "ParticleConfig":
        """Equal intensities 1/N."""
        positions = np.asarray(positions, dtype=float)
        n = len(positions)
        return cls(positions, np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def with_positions(self, positions) -> "ParticleConfig":
        return ParticleConfig(positions, self.intensities)

    def shifted(self, v) -> "ParticleConfig":
        return self.with_positions(self.positions + np.asarray(v, dtype=float))


# ---------------------------------------------------------------------------
# pair sums


def _pair_tile(x, y, i0, i1, j0, j1, same):
    diff = x[i0:i1, None, :] - y[None, j0:j1, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    if same:
        ii = np.arange(i0, i1)[:, None]
        jj = np.arange(j0, j1)[None, :]
        diag = ii == jj
        bad = (r2 == 0) & ~diag
        r2 = np.where(diag, np.inf, r2)
    else:
        bad = r2 == 0
    if np.any(bad):
        a, b = np.argwhere(bad)[0]
        raise SingularityError(f"coincident particles {i0 + a} and {j0 + b}",
                               pair=(int(i0 + a), int(j0 + b)))
    return diff, r2


def coulomb_field(targets, sources, weights, same: bool, threads=None):
    """G_i = sum_j w_j grad g(t_i - s_j), skipping i == j when ``same``."""
    t = np.ascontiguousarray(targets, dtype=float)
    s = np.ascontiguousarray(sources, dtype=float)
    w = np.asarray(weights, dtype=float)
    d = t.shape[1]
    pref = -kernel.coulomb_constant(d) * (d - 2)

    def tile(i0, i1, j0, j1):
        diff, r2 = _pair_tile(t, s, i0, i1, j0, j1, same)
        coef = w[None, j0:j1] * pref * r2 ** (-d / 2)
        return np.einsum("ij,ijk->ik", coef, diff)

    return summation.row_sums(tile, len(t), len(s), d, threads=threads)


def coulomb_potential_rows(targets, sources, weights, same: bool, threads=None):
    """P_i = sum_j w_j g(t_i - s_j), skipping i == j when ``same``."""
    t = np.ascontiguousarray(targets, dtype=float)
    s = np.ascontiguousarray(sources, dtype=float)
    w = np.asarray(weights, dtype=float)
    d = t.shape[1]
    c = kernel.coulomb_constant(d)

    def tile(i0, i1, j0, j1):
        _, r2 = _pair_tile(t, s, i0, i1, j0, j1, same)
        return (c * (w[None, j0:j1] * r2 ** (1 - d / 2)).sum(axis=1))[:, None]

    return summation.row_sums(tile, len(t), len(s), 1, threads=threads)[:, 0]


def nbody_velocity(state: ParticleConfig, J: RotationMatrix, threads=None,
                   method: str = "direct", theta: float = 0.5):
    """v_i = sum_{j != i} a_j J grad g(x_i - x_j)."""
    if J.dim != state.dim:
        raise ParameterError("rotation matrix and state dimensions differ")
    return _velocity(state.positions, state.intensities, J, threads, method, theta)


def _velocity(x, a, J, threads=None, method="direct", theta=0.5):
    if len(x) == 1:
        return np.zeros_like(x)
    if method == "barnes_hut":
        from .barneshut import barnes_hut_field
        field_ = barnes_hut_field(x, a, theta)
    elif method == "direct":
        field_ = coulomb_field(x, x, a, True, threads)
    else:
        raise ParameterError(f"unknown summation method {method!r}")
    return J.apply(field_)


def hamiltonian(state: ParticleConfig, threads=None) -> float:
    """H = (1/2) sum_{i != j} a_i a_j g(x_i - x_j)."""
    if state.n < 2:
        return 0.0
    rows = coulomb_potential_rows(state.positions, state.positions, state.intensities, True,
                                  threads)
    return 0.5 * summation.exact_total(state.intensities * rows)


def nearest_neighbor_distances(positions) -> np.ndarray:
    positions = np.asarray(positions, dtype=float)
    if len(positions) < 2:
        raise ParameterError("need at least two particles")
    dist, _ = cKDTree(positions).query(positions, k=2)
    return dist[:, 1]


def min_separation(state) -> float:
    """Minimum over unordered pairs of |x_i - x_j|."""
    x = state.positions if isinstance(state, ParticleConfig) else np.asarray(state, float)
    if len(x) < 2:
        raise ParameterError("min_separation needs N >= 2")
    return float(nearest_neighbor_distances(x).min())


def separation_floor(hamiltonian_sup: float, n: int, d: int, const: float | None = None) -> float:
    """Energy floor const * (N^2 H)^(-1/(d-2)).

    With a_i = 1/N every pair term is bounded by H, so g(x_i - x_j) <= N^2 H,
    which gives the default constant c_d^(1/(d-2)).
    """
    if const is None:
        const = kernel.coulomb_constant(d) ** (1 / (d - 2))
    return const * (n * n * hamiltonian_sup) ** (-1 / (d - 2))


# ---------------------------------------------------------------------------
# time integration


@dataclass
class Trajectory:
    """Sampled solution: times (S,), positions (S, N, d), per-sample H and min separation."""

    times: np.ndarray
    positions: np.ndarray
    intensities: np.ndarray
    hamiltonian: np.ndarray
    min_separation: np.ndarray
    stats: StepStats = field(default_factory=StepStats)
    max_energy_drift: float = 0.0

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def state(self, k: int) -> ParticleConfig:
        return ParticleConfig(self.positions[k], self.intensities)

    def states(self):
        return [self.state(k) for k in range(self.n_samples)]


def sample_times(t_end: float, n_samples: int | None = None, dt: float | None = None):
    """Uniform output grid on [0, t_end] including both ends."""
    if t_end < 0:
        raise ParameterError("t_end must be nonnegative")
    if t_end == 0:
        return np.zeros(1)
    if dt is not None:
        n = max(1, int(round(t_end / dt)))
    else:
        n = max(1, (n_samples or 11) - 1)
    return np.linspace(0.0, t_end, n + 1)


def _integrate_system(positions, weights, rhs, energy_fn, t_stops, controls, *, collision=True):
    n, d = positions.shape
    h0 = energy_fn(positions)
    drift = [0.0]

    def f(y):
        return rhs(y.reshape(n, d)).reshape(-1)

    def cap(y, k1):
        if n < 2:
            return math.inf
        x = y.reshape(n, d)
        vmax = float(np.max(np.linalg.norm(k1.reshape(n, d), axis=1)))
        if vmax == 0:
            return math.inf
        return controls.cfl * min_separation(x) / vmax

    def monitor(t, y):
        x = y.reshape(n, d)
        if collision and n > 1:
            sep = min_separation(x)
            if sep < controls.collision_floor:
                raise IntegrationAbort(
                    f"minimal separation {sep:.3e} below collision floor", t=t,
                    diagnostic={"min_separation": sep})
        if h0 != 0:
            rel = abs(energy_fn(x) - h0) / abs(h0)
            drift[0] = max(drift[0], rel)
            if rel > controls.energy_tol:
                raise IntegrationAbort(
                    f"relative energy drift {rel:.3e} exceeds {controls.energy_tol:.1e}",
                    t=t, diagnostic={"energy_drift": rel})

    stats = StepStats()
    states, stats = solve(f, positions.reshape(-1), t_stops, controls,
                          step_cap=cap if collision else None, on_accept=monitor, stats=stats)
    pos = np.stack([s.reshape(n, d) for s in states])
    return pos, stats, drift[0]


def integrate(state: ParticleConfig, J: RotationMatrix, t_end: float,
              controls: StepControls | None = None, times=None, threads=None,
              method: str = "direct", theta: float = 0.5) -> Trajectory:
    """Adaptive DP5(4) trajectory sampled at ``times`` (default 11 uniform samples)."""
    controls = controls or StepControls()
    if t_end < 0:
        raise ParameterError("t_end must be nonnegative")
    if times is None:
        times = sample_times(t_end)
    times = np.asarray(times, dtype=float)
    if len(times) and (times[-1] > t_end * (1 + 1e-12) or times[0] < 0):
        raise ParameterError("sample times must lie in [0, t_end]")
    a = state.intensities

    def rhs(x):
        return _velocity(x, a, J, threads, method, theta)

    def energy(x):
        if len(x) < 2:
            return 0.0
        rows = coulomb_potential_rows(x, x, a, True, threads)
        return 0.5 * summation.exact_total(a * rows)

    pos, stats, drift = _integrate_system(state.positions, a, rhs, energy, times, controls)
    ham = np.array([energy(p) for p in pos])
    sep = np.array([min_separation(p) if state.n > 1 else math.inf for p in pos])
    return Trajectory(times, pos, np.array(a), ham, sep, stats, drift)
