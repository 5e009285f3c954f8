"""Seeded i.i.d. initial data from a radial density and the F_N^avg(0) scaling study."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .modenergy import modulated_energy_direct
from .nbody import ParticleConfig
from .profiles import RadialProfile

_MULT = 6364136223846793005
_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


class PCG32:
    """PCG-XSH-RR 64/32: 64-bit LCG state, 32-bit permuted output.

    Scalar methods are plain integer arithmetic; ``next_block`` produces the
    same stream in bulk through LCG jump-ahead with numpy uint64.
    """

    def __init__(self, seed: int, stream: int = 54):
        self.inc = ((int(stream) << 1) | 1) & _MASK64
        self.state = 0
        self._step()
        self.state = (self.state + (int(seed) & _MASK64)) & _MASK64
        self._step()

    def _step(self):
        self.state = (self.state * _MULT + self.inc) & _MASK64

    @staticmethod
    def _output(old: int) -> int:
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def next_u32(self) -> int:
        old = self.state
        self._step()
        return self._output(old)

    def next_double(self) -> float:
        """Uniform in [0, 1) with 53 random bits from two outputs."""
        a = self.next_u32() >> 5
        b = self.next_u32() >> 6
        return (a * 67108864.0 + b) / 9007199254740992.0

    def _jump_tables(self, n: int):
        """State multipliers/increments A_k, C_k with s_k = A_k s_0 + C_k (mod 2^64)."""
        mult = np.empty(n, dtype=np.uint64)
        add = np.empty(n, dtype=np.uint64)
        mult[0], add[0] = 1, 0
        # doubling: fill [m, 2m) from [0, m) with the m-step map (am, cm)
        m = 1
        am, cm = _MULT, self.inc
        while m < n:
            k = min(m, n - m)
            with np.errstate(over="ignore"):
                mult[m:m + k] = mult[:k] * np.uint64(am)
                add[m:m + k] = add[:k] * np.uint64(am) + np.uint64(cm)
            cm = (cm * am + cm) & _MASK64
            am = (am * am) & _MASK64
            m *= 2
        return mult, add

    def next_block(self, n: int) -> np.ndarray:
        """Next n outputs as uint32, identical to n calls of ``next_u32``."""
        if n <= 0:
            return np.zeros(0, dtype=np.uint32)
        mult, add = self._jump_tables(n + 1)
        with np.errstate(over="ignore"):
            states = mult * np.uint64(self.state) + add
        old = states[:n]
        self.state = int(states[n])
        xs = (((old >> np.uint64(18)) ^ old) >> np.uint64(27)) & np.uint64(_MASK32)
        rot = old >> np.uint64(59)
        out = (xs >> rot) | (xs << ((np.uint64(32) - rot) & np.uint64(31)))
        return (out & np.uint64(_MASK32)).astype(np.uint32)

    def doubles(self, n: int) -> np.ndarray:
        raw = self.next_block(2 * n).astype(np.uint64)
        a = raw[0::2] >> np.uint64(5)
        b = raw[1::2] >> np.uint64(6)
        return (a.astype(float) * 67108864.0 + b.astype(float)) / 9007199254740992.0


def _gaussians(rng: PCG32, n: int) -> np.ndarray:
    """Box-Muller pairs; u1 is shifted into (0, 1] so the log stays finite."""
    m = (n + 1) // 2
    u = rng.doubles(2 * m)
    u1 = 1.0 - u[0::2]
    u2 = u[1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([rad * np.cos(2 * math.pi * u2), rad * np.sin(2 * math.pi * u2)])
    return z[:n]


@dataclass(frozen=True)
class SampleSpec:
    density: RadialProfile
    n: int
    seed: int

    def __post_init__(self):
        if not isinstance(self.density, RadialProfile):
            raise ParameterError("only radial densities can be sampled")
        if int(self.n) < 1:
            raise ParameterError("N must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")


def _draw(rng: PCG32, profile: RadialProfile, n: int) -> np.ndarray:
    d = profile.dim
    u = rng.doubles(n)
    r = profile.inverse_cdf(u)
    z = _gaussians(rng, n * d).reshape(n, d)
    norm = np.linalg.norm(z, axis=1)
    while np.any(norm == 0):  # pragma: no cover - needs an all-zero gaussian vector
        bad = norm == 0
        z[bad] = _gaussians(rng, int(bad.sum()) * d).reshape(-1, d)
        norm = np.linalg.norm(z, axis=1)
    return r[:, None] * z / norm[:, None]


def sample_iid(spec: SampleSpec) -> ParticleConfig:
    """N i.i.d. draws: radius by inverse CDF, direction uniform on the sphere; a_i = 1/N."""
    rng = PCG32(spec.seed)
    x = _draw(rng, spec.density, spec.n)
    # coincident draws have probability zero; redraw the later copy if one shows up
    while True:
        _, first = np.unique(x, axis=0, return_index=True)
        if len(first) == len(x):
            break
        dup = np.setdiff1d(np.arange(len(x)), first)
        x[dup] = _draw(rng, spec.density, len(dup))
    return ParticleConfig.mean_field(x)


@dataclass
class ScalingStudy:
    n_values: list
    seeds: list
    f_n_avg: np.ndarray  # (len(n_values), len(seeds))
    medians: np.ndarray
    slope: float
    intercept: float

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "n_values": [int(n) for n in self.n_values],
                "medians": [float(m) for m in self.medians]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "seed", "f_n_avg"])
        for i, n in enumerate(self.n_values):
            for j, s in enumerate(self.seeds):
                w.writerow([int(n), int(s), repr(float(self.f_n_avg[i, j]))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def loglog_fit(n_values, values):
    """Least-squares line through (ln n, ln value)."""
    slope, intercept = np.polyfit(np.log(np.asarray(n_values, float)),
                                  np.log(np.asarray(values, float)), 1)
    return float(slope), float(intercept)


def scaling_study(density: RadialProfile, n_values, seeds, threads=None,
                  sampler=None) -> ScalingStudy:
    """F_N^avg(0) for every (N, seed) and the log-log slope of the median |F_N^avg|.

    The expectation of F_N^avg over i.i.d. draws is negative (-2 H_d / N), so
    the fit uses magnitudes.
    """
    n_values = [int(n) for n in n_values]
    seeds = [int(s) for s in seeds]
    if len(n_values) < 3:
        raise ParameterError("scaling study needs at least 3 N values")
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ParameterError("N values must be strictly increasing")
    if not seeds:
        raise ParameterError("need at least one seed")
    if len(seeds) == 1:
        warnings.warn("a single seed makes the per-N median degenerate", stacklevel=2)
    sampler = sampler or (lambda n, s: sample_iid(SampleSpec(density, n, s)))
    table = np.empty((len(n_values), len(seeds)))
    for i, n in enumerate(n_values):
        for j, s in enumerate(seeds):
            table[i, j] = modulated_energy_direct(sampler(n, s), density, threads).f_n_avg
    medians = np.median(np.abs(table), axis=1)
    slope, intercept = loglog_fit(n_values, medians)
    return ScalingStudy(n_values, seeds, table, medians, slope, intercept)
