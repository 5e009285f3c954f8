"""Acceptance criteria, one recorded line per sub-check and one summary line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they are
produced; the summary is printed at the end of any pytest run.
"""

import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record
from mflab import cli, kernel
from mflab.meanfield import BlobCloud, mf_energy
from mflab.modenergy import (counting_report, derivative_check, modulated_energy_direct,
                             modulated_energy_truncated, sobolev_distance, theorem_monitor)
from mflab.nbody import ParticleConfig, RotationMatrix, integrate, min_separation
from mflab.profiles import RadialProfile, UniformBall, bump
from mflab.sampling import SampleSpec, sample_iid, scaling_study

ROOT = Path(__file__).resolve().parents[1]
BALL = UniformBall()
J = RotationMatrix.default(3)
LADDER = [64, 128, 256, 512, 1024]
SEEDS = list(range(10))

K1 = "1 kernel identity suite"
K2 = "2 energy conservation"
K3 = "3 renormalisation oracle"
K4 = "4 mean-field self-energy"
K5 = "5 stationarity/convergence study"
K6 = "6 derivative identity"
K7 = "7 counting monitor"
K8 = "8 determinism"


# ---------------------------------------------------------------------------
# 1


def test_kernel_identity_suite():
    t0 = time.perf_counter()
    worst_flux = 0.0
    for d in (3, 4, 5):
        quad = kernel.sphere_quadrature(d)
        for r in (0.01, 0.3, 1.0, 4.0, 25.0):
            worst_flux = max(worst_flux, abs(kernel.flux_through_sphere(r, d, quad) + 1))
    rng = np.random.default_rng(0)
    z = rng.normal(size=(50, 3))
    x = z / np.linalg.norm(z, axis=1, keepdims=True) * rng.uniform(0, 3, (50, 1))
    r = np.linalg.norm(x, axis=1)
    exact = np.where(r >= 1, 1 / (4 * math.pi * r), (3 - r**2) / (8 * math.pi))
    closed = kernel.radial_potential(BALL, x)
    generic = kernel.radial_potential(RadialProfile(3, 1.0, lambda s: np.ones_like(s)), x)
    newton = max(np.max(np.abs(closed - exact) / exact), np.max(np.abs(generic - exact) / exact))
    elapsed = time.perf_counter() - t0
    record(K1, "flux", worst_flux <= 1e-8, f"max |flux + 1| = {worst_flux:.2e} (d=3,4,5)")
    record(K1, "newton", newton <= 1e-8, f"max rel err at 50 probes = {newton:.2e}")
    record(K1, "runtime", elapsed < 5, f"{elapsed:.2f} s")
    assert worst_flux <= 1e-8 and newton <= 1e-8 and elapsed < 5


# ---------------------------------------------------------------------------
# 2


def test_energy_conservation():
    t0 = time.perf_counter()
    st = sample_iid(SampleSpec(BALL, 64, 2024))
    tr = integrate(st, J, 1.0)
    drift = float(np.max(np.abs(tr.hamiltonian - tr.hamiltonian[0])) / tr.hamiltonian[0])
    pair = ParticleConfig([[0, 0, 0], [1, 0, 0]], [0.5, 0.5])
    tp = integrate(pair, J, 1.0, times=np.linspace(0, 1, 101))
    sep = np.linalg.norm(tp.positions[:, 0] - tp.positions[:, 1], axis=1)
    sep_dev = float(np.max(np.abs(sep - 1)))
    elapsed = time.perf_counter() - t0
    record(K2, "N=64 drift", drift <= 1e-6, f"max relative H drift = {drift:.2e}")
    record(K2, "two-body", sep_dev <= 1e-6, f"max |sep - 1| = {sep_dev:.2e}")
    record(K2, "runtime", elapsed < 60, f"{elapsed:.2f} s")
    assert drift <= 1e-6 and sep_dev <= 1e-6 and elapsed < 60


# ---------------------------------------------------------------------------
# 3


def test_renormalisation_oracle():
    t0 = time.perf_counter()
    worst, worst_form = 0.0, math.inf
    for n in (4, 8, 16, 32):
        for seed in range(5):
            st = sample_iid(SampleSpec(BALL, n, 100 + seed))
            direct = modulated_energy_direct(st, BALL).f_n
            rep = modulated_energy_truncated(st, BALL, 1e-3 * min_separation(st))
            worst = max(worst, abs(rep.f_n - direct) / abs(direct))
            worst_form = min(worst_form, rep.smeared_form)
    elapsed = time.perf_counter() - t0
    record(K3, "truncated vs direct", worst <= 1e-2, f"max rel diff = {worst:.2e}")
    record(K3, "form >= -1e-8", worst_form >= -1e-8, f"min smeared form = {worst_form:.3e}")
    record(K3, "runtime", elapsed < 120, f"{elapsed:.2f} s")
    assert worst <= 1e-2 and worst_form >= -1e-8 and elapsed < 120


# ---------------------------------------------------------------------------
# 4


def test_mean_field_self_energy():
    exact = 3 / (20 * math.pi)
    closed = mf_energy(BALL).h_d
    quad = mf_energy(RadialProfile(3, 1.0, lambda s: np.ones_like(s))).h_d
    err = max(abs(closed - exact), abs(quad - exact))
    blob_err = [abs(mf_energy(BlobCloud.from_profile(BALL, m)).h_d - exact)
                for m in (512, 1024, 2048, 4096, 8192)]
    mono = all(b < a for a, b in zip(blob_err, blob_err[1:]))
    record(K4, "closed vs quadrature", err <= 1e-6, f"max |H - 3/(20 pi)| = {err:.2e}")
    record(K4, "blob monotone", mono, "errors " + ", ".join(f"{e:.2e}" for e in blob_err))
    assert err <= 1e-6 and mono


# ---------------------------------------------------------------------------
# 5


@pytest.fixture(scope="module")
def ladder_runs():
    """Trajectories to t = 0.5 for N in {128, 256, 512} and all 10 seeds."""
    t0 = time.perf_counter()
    out = {}
    for n in (128, 256, 512):
        for seed in SEEDS:
            st = sample_iid(SampleSpec(BALL, n, seed))
            tr = integrate(st, J, 0.5)
            f = np.array([modulated_energy_direct(s, BALL).f_n_avg for s in tr.states()])
            out[n, seed] = (tr, f)
    _T5["trajectories"] = time.perf_counter() - t0
    return out


_T5 = {}


def test_convergence_scaling():
    t0 = time.perf_counter()
    study = scaling_study(BALL, LADDER, SEEDS)
    med = study.medians
    strict = all(b < a for a, b in zip(med, med[1:]))
    _T5["scaling"] = time.perf_counter() - t0
    record(K5, "median |F_avg(0)| decreasing", strict,
           "medians " + ", ".join(f"{m:.2e}" for m in med))
    record(K5, "slope < -0.2", study.slope < -0.2, f"slope = {study.slope:.3f}")
    assert strict and study.slope < -0.2


def test_convergence_sobolev():
    t0 = time.perf_counter()
    med = [np.median([sobolev_distance(sample_iid(SampleSpec(BALL, n, s)), BALL).value
                      for s in SEEDS]) for n in LADDER]
    strict = all(b < a for a, b in zip(med, med[1:]))
    _T5["sobolev"] = time.perf_counter() - t0
    record(K5, "median H^-2 distance decreasing", strict,
           "medians " + ", ".join(f"{m:.3f}" for m in med))
    assert strict


def test_convergence_growth_bound(ladder_runs):
    t0 = time.perf_counter()
    worst, growth = -math.inf, 0.0
    for seed in SEEDS:
        _, f = ladder_runs[512, seed]
        sup = float(np.max(np.abs(f)))
        worst = max(worst, sup / (5 * abs(f[0]) + 1e-3))
        growth = max(growth, sup / abs(f[0]))
    _T5["growth"] = time.perf_counter() - t0
    ok = worst <= 1
    record(K5, "sup|F_avg| <= 5|F_avg(0)| + 1e-3 at N=512", ok,
           f"max sup|F|/(5|F0| + 1e-3) = {worst:.3f}, max sup|F|/|F0| = {growth:.5f} (10 seeds)")
    assert ok


def test_convergence_cfit_stable(ladder_runs):
    t0 = time.perf_counter()
    fits = {}
    for n in (128, 256, 512):
        per_seed = []
        for seed in SEEDS:
            tr, f = ladder_runs[n, seed]
            per_seed.append(theorem_monitor(tr.times, f, n, 3, float(tr.hamiltonian.max()),
                                            BALL.sup_norm).c_fit)
        fits[n] = max(per_seed)
    vals = list(fits.values())
    spread = max(vals) / min(vals) if min(vals) > 0 else math.inf
    ok = spread <= 2
    _T5["cfit"] = time.perf_counter() - t0
    record(K5, "C_fit within factor 2 across N", ok,
           "C_fit " + ", ".join(f"N={n}: {c:.2e}" for n, c in fits.items())
           + f", spread {spread:.2f}")
    assert ok


def test_convergence_runtime(ladder_runs):
    total = sum(_T5.values())
    record(K5, "runtime", total < 1800, "total " + f"{total:.0f} s (" + ", ".join(f"{k} {v:.0f} s" for k, v in _T5.items()) + ")")
    assert total < 1800


# ---------------------------------------------------------------------------
# 6


def test_derivative_identity():
    t0 = time.perf_counter()
    prof = bump(3, 1.0, 2.0)
    st = sample_iid(SampleSpec(prof, 32, 5))
    dt = 1e-5
    tk = np.linspace(0.0, 0.45, 10)
    times = np.sort(np.concatenate([tk, tk + dt, tk + 2 * dt]))
    tr = integrate(st, J, float(times[-1]), times=times)
    S = tr.states()
    errs = [derivative_check(S[3 * k], S[3 * k + 1], dt, prof, J, state_t_2dt=S[3 * k + 2]).rel_err
            for k in range(10)]
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 5e-2
    record(K6, "rel_err at 10 times", ok, f"max rel_err = {max(errs):.2e} (N=32, radial bump)")
    record(K6, "runtime", elapsed < 120, f"{elapsed:.2f} s")
    assert ok and elapsed < 120


# ---------------------------------------------------------------------------
# 7


def test_counting_monitor():
    n, eps3 = 256, 256 ** (-1 / 3)
    const = max(counting_report(sample_iid(SampleSpec(BALL, n, s)), BALL, eps3).ratio
                for s in SEEDS)
    tr = integrate(sample_iid(SampleSpec(BALL, n, 0)), J, 0.5)
    ratios = [counting_report(s, BALL, eps3).ratio for s in tr.states()]
    ok = max(ratios) <= const
    record(K7, "envelope never violated", ok,
           f"fitted constant {const:.4f} (t=0, 10 seeds), trajectory max ratio {max(ratios):.4f}")
    assert ok


# ---------------------------------------------------------------------------
# 8


def test_determinism(tmp_path):
    cfg = ROOT / "configs" / "ball_n256.toml"
    outs = []
    for k in (1, 4):
        out = tmp_path / f"threads{k}"
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(out),
                         "--threads", str(k)]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir()
                   if p.suffix in (".csv", ".json") and p.name != "manifest.json")
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    svgs = len(list(outs[0].glob("*.svg")))
    csvs = len(list(outs[0].glob("*.csv")))
    record(K8, "byte-identical CSV/JSON", same, f"compared {', '.join(files)}")
    record(K8, "outputs", svgs == 3 and csvs == 2, f"{svgs} SVGs, {csvs} CSVs")
    shutil.rmtree(tmp_path, ignore_errors=True)
    assert same and svgs == 3 and csvs == 2


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v", "-s"]))
