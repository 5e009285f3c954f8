import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sint

from mflab import kernel
from mflab.errors import ParameterError, SingularityError
from mflab.meanfield import BlobCloud
from mflab.modenergy import (SpectralProbe, close_pair_energy, counting_report, derivative_check,
                             derivative_rhs, growth_envelope, modulated_energy_direct,
                             modulated_energy_truncated, sobolev_distance, sobolev_tail_bound,
                             theorem_monitor, truncation_radii)
from mflab.nbody import ParticleConfig, RotationMatrix, integrate, min_separation
from mflab.profiles import UniformBall, bump
from mflab.sampling import SampleSpec, sample_iid

BALL = UniformBall()
J = RotationMatrix.default(3)


def ball_state(n, seed):
    return sample_iid(SampleSpec(BALL, n, seed))


# --- direct energy -------------------------------------------------------------


def test_single_particle_at_centre():
    rep = modulated_energy_direct(ParticleConfig([[0.0, 0, 0]], [1.0]), BALL)
    assert rep.pair_sum == 0
    assert rep.mf_self == pytest.approx(3 / (10 * math.pi), rel=1e-14)
    assert rep.f_n == pytest.approx(-9 / (20 * math.pi), rel=1e-14)


def test_antipodal_pair_on_boundary():
    # 2 g(2) + 4 * 2 H - 4 * 2 phi(1) = 1/(4 pi) + 6/(5 pi) - 2/pi
    st_ = ParticleConfig.mean_field([[0, 0, 1.0], [0, 0, -1.0]])
    rep = modulated_energy_direct(st_, BALL)
    assert rep.f_n == pytest.approx(-11 / (20 * math.pi), rel=1e-14)
    assert rep.f_n_avg * 4 == rep.f_n


def test_report_fields_add_up():
    rep = modulated_energy_direct(ball_state(50, 1), BALL)
    assert rep.f_n == rep.pair_sum + rep.mf_self + rep.cross
    assert set(rep.to_json()) == {"f_n", "f_n_avg", "pair_sum", "mf_self", "cross", "method",
                                  "eta_max"}


@given(st.permutations(list(range(12))))
def test_exchange_symmetry(perm):
    st_ = ball_state(12, 3)
    a = modulated_energy_direct(st_, BALL)
    b = modulated_energy_direct(st_.with_positions(st_.positions[list(perm)]), BALL)
    for f in ("f_n", "pair_sum", "mf_self", "cross"):
        assert getattr(b, f) == pytest.approx(getattr(a, f), rel=1e-13)


def test_iid_mean_is_minus_twice_self_energy_over_n():
    n = 64
    vals = [modulated_energy_direct(ball_state(n, s), BALL).f_n_avg for s in range(200)]
    target = -2 * 3 / (20 * math.pi) / n
    assert abs(np.mean(vals) - target) < 4 * np.std(vals) / math.sqrt(len(vals))


def test_blob_reference_density_close_to_exact():
    st_ = ball_state(32, 0)
    exact = modulated_energy_direct(st_, BALL).f_n_avg
    blob = modulated_energy_direct(st_, BlobCloud.from_profile(BALL, 4096)).f_n_avg
    assert blob == pytest.approx(exact, abs=5e-3)


# --- truncated energy ----------------------------------------------------------


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_truncated_matches_direct(n):
    st_ = ball_state(n, 11)
    direct = modulated_energy_direct(st_, BALL).f_n
    rep = modulated_energy_truncated(st_, BALL, 1e-3 * min_separation(st_))
    assert abs(rep.f_n - direct) <= 1e-2 * abs(direct)
    assert rep.smeared_form >= -1e-8
    assert rep.method == "truncated"


def test_truncated_single_particle():
    st_ = ParticleConfig([[0.1, 0.2, 0.0]], [1.0])
    direct = modulated_energy_direct(st_, BALL).f_n
    assert modulated_energy_truncated(st_, BALL, 1e-4).f_n == pytest.approx(direct, abs=1e-8)


def test_truncation_error_shrinks_with_eta():
    st_ = ball_state(8, 2)
    direct = modulated_energy_direct(st_, BALL).f_n
    sep = min_separation(st_)
    errs = [abs(modulated_energy_truncated(st_, BALL, f * sep).f_n - direct)
            for f in (0.2, 0.05, 0.01)]
    assert errs[0] > errs[1] > errs[2]


def test_smeared_self_energy_is_truncated_kernel_on_the_sphere():
    """int int g d delta^eta d delta^eta = g~(eta): averaging g_eta over the sphere."""
    eta = 0.3
    val = kernel.smeared_dirac_integrate(lambda p: kernel.truncated_g(p, eta), np.zeros(3), eta,
                                         kernel.lebedev(7))
    assert val == pytest.approx(kernel.g_radial(eta, 3), rel=1e-14)


def test_smeared_form_nonnegative_with_blob_density():
    st_ = ball_state(8, 5)
    cloud = BlobCloud.from_profile(BALL, 512)
    rep = modulated_energy_truncated(st_, cloud, 0.01 * min_separation(st_))
    assert rep.smeared_form >= -1e-8


def test_truncation_radii_and_guard():
    st_ = ball_state(20, 4)
    r = truncation_radii(st_, eps1=0.05)
    assert np.all(r <= 0.05) and np.all(r > 0)
    with pytest.raises(ParameterError):
        modulated_energy_truncated(st_, BALL, 0.3 * min_separation(st_))
    with pytest.raises(ParameterError):
        modulated_energy_truncated(st_, BALL, -1.0)


def test_coincident_particles_rejected():
    with pytest.raises(SingularityError):
        modulated_energy_direct(ParticleConfig.mean_field([[0, 0, 0], [0, 0, 0]]), BALL)


# --- counting ------------------------------------------------------------------


def test_no_close_pairs_means_zero_lhs():
    st_ = ParticleConfig.mean_field(np.eye(3))
    rep = counting_report(st_, BALL, 0.5)
    assert rep.lhs == 0
    assert rep.rhs == pytest.approx(rep.f_n + 3 * kernel.g_radial(1.0, 3)
                                    + 9 * 3 / (4 * math.pi) * 0.25)


@given(st.floats(0.01, 0.5), st.floats(1.01, 1.9))
def test_close_pair_energy_monotone(eps, factor):
    x = ball_state(64, 6).positions
    assert close_pair_energy(x, eps) <= close_pair_energy(x, eps * factor)


def test_close_pair_energy_hand_sum():
    x = np.array([[0, 0, 0], [0.1, 0, 0], [2.0, 0, 0]])
    assert close_pair_energy(x, 0.2) == pytest.approx(2 * kernel.g_radial(0.1, 3))


def test_counting_ratio_stable_across_seeds():
    ratios = [counting_report(ball_state(256, s), BALL).ratio for s in range(10)]
    assert max(ratios) / min(ratios) < 2
    with pytest.raises(ParameterError):
        counting_report(ball_state(8, 0), BALL, 1.5)


# --- Sobolev distance ------------------------------------------------------------


def test_tail_bound_closed_form():
    for cut in (10.0, 200.0):
        want = 8 * math.pi * (math.pi / 2 - math.atan(cut) + cut / (1 + cut * cut))
        assert sobolev_tail_bound(-2, cut, 3) == pytest.approx(want, rel=1e-8)


def _exp_kernel_ball(a):
    """int exp(-|x - y|) d omega(y) for the unit ball, |x| = a."""
    def shell(r):
        if a == 0 or r == 0:
            return math.exp(-max(a, r))
        lo, hi = abs(a - r), a + r
        return ((lo + 1) * math.exp(-lo) - (hi + 1) * math.exp(-hi)) / (2 * a * r)
    return sint.quad(lambda r: 3 * r * r * shell(r), 0, 1, points=[min(a, 1)] if a < 1 else None,
                     epsabs=1e-13)[0]


def test_sobolev_distance_against_real_space_oracle():
    """For s = -2 in d = 3 the weight has inverse transform exp(-r)/(8 pi)."""
    n = 64
    x = ball_state(n, 9).positions
    r = np.linalg.norm(x[:, None] - x[None], axis=-1)
    pp = np.exp(-r).sum() / n**2
    pw = np.mean([_exp_kernel_ball(float(a)) for a in np.linalg.norm(x, axis=1)])
    ww = sint.quad(lambda a: 3 * a * a * _exp_kernel_ball(a), 0, 1, epsabs=1e-13)[0]
    oracle = math.pi**2 * (pp - 2 * pw + ww)
    got = sobolev_distance(ParticleConfig.mean_field(x), BALL)
    # beyond the cutoff |omega_N^|^2 averages 1/N: remainder about 4 pi / (cutoff N)
    remainder = 4 * math.pi / (got.cutoff * n)
    assert got.value**2 + remainder == pytest.approx(oracle, rel=1e-2)


def test_sobolev_distance_requires_negative_index():
    with pytest.raises(ParameterError):
        sobolev_distance(ball_state(8, 0), BALL, SpectralProbe(s=-1.0))


def test_sobolev_distance_shrinks_for_blob_self_consistency():
    cloud = BlobCloud.from_profile(BALL, 2048, width=1e-3)
    probe = SpectralProbe(cutoff=50.0, n_radial=64, sphere_degree=11)
    vals = []
    for m in (64, 256, 2048):
        sub = BlobCloud.from_profile(BALL, m)
        vals.append(sobolev_distance(ParticleConfig.mean_field(sub.centers), cloud, probe).value)
    assert vals[0] > vals[1] > vals[2]


# --- derivative identity ----------------------------------------------------------


def test_derivative_trivial_stationary_case():
    st_ = ParticleConfig([[0.0, 0, 0]], [1.0])
    chk = derivative_check(st_, st_, 1e-3, BALL, J)
    assert abs(chk.fd) == 0 and abs(chk.rhs) < 1e-15


def test_derivative_symmetric_pair():
    prof = bump(3, 1.0, 2.0)
    pair = ParticleConfig.mean_field([[0.3, 0, 0.1], [-0.3, 0, -0.1]])
    dt = 1e-3
    tr = integrate(pair, J, 2 * dt, times=[0, dt, 2 * dt])
    s = tr.states()
    chk = derivative_check(s[0], s[1], dt, prof, J, state_t_2dt=s[2])
    assert chk.rel_err <= 5e-2


def test_symmetrized_equals_unsymmetrized():
    st_ = sample_iid(SampleSpec(bump(3, 1.0, 2.0), 20, 1))
    a = derivative_rhs(st_, bump(3, 1.0, 2.0), J, symmetrized=True)
    b = derivative_rhs(st_, bump(3, 1.0, 2.0), J, symmetrized=False)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


def test_derivative_ball_is_degenerate_inside():
    """Rigid rotation inside the ball leaves F_N unchanged: both sides at round-off."""
    st_ = ParticleConfig.mean_field(ball_state(16, 2).positions * 0.9)
    assert abs(derivative_rhs(st_, BALL, J)) < 1e-12


# --- growth envelope ---------------------------------------------------------


def test_constant_energy_needs_no_growth():
    t = np.linspace(0, 0.5, 11)
    summ = theorem_monitor(t, np.full(11, -1e-3), 512, 3, 0.05, 3 / (4 * math.pi))
    assert summ.c_fit == 0
    assert set(summ.to_json()) == {"c_fit", "n", "d", "ln_n", "ln_plus_n2_h", "omega0_sup",
                                   "hamiltonian_nd", "sup_f_avg"}
    assert summ.log_n == pytest.approx(math.log(512))


def test_fitted_constant_is_smallest_dominating():
    t = np.linspace(0, 0.5, 11)
    f = 1e-3 * (1 + 0.3 * t**2)
    args = (512, 3, 0.05, 0.24)
    c = theorem_monitor(t, f, *args).c_fit
    assert c > 0
    assert np.all(growth_envelope(t, f[0], c, *args) >= f)
    assert np.any(growth_envelope(t, f[0], 0.999 * c, *args) < f)


def test_envelope_at_zero_is_initial_value():
    assert float(growth_envelope(0.0, 2e-3, 5.0, 128, 3, 0.05, 0.24)) == 2e-3
