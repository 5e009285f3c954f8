import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mflab import summation


def test_kahan_beats_naive_on_cancellation():
    vals = np.array([1.0] + [1e-16] * 10_000)
    assert summation.kahan_sum(vals) == pytest.approx(1.0 + 1e-12, rel=1e-15)
    assert summation.exact_total(vals) == math.fsum(vals.tolist())


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200), st.randoms())
def test_exact_total_is_order_independent(vals, rnd):
    shuffled = list(vals)
    rnd.shuffle(shuffled)
    assert summation.exact_total(vals) == summation.exact_total(shuffled)


@given(st.integers(1, 700), st.integers(1, 600), st.integers(1, 4))
def test_row_sums_thread_invariant(n_t, n_s, threads):
    rng = np.random.default_rng(n_t * 1000 + n_s)
    a = rng.normal(size=(n_t, n_s))

    def tile(i0, i1, j0, j1):
        return a[i0:i1, j0:j1].sum(axis=1)[:, None]

    one = summation.row_sums(tile, n_t, n_s, 1, threads=1)
    many = summation.row_sums(tile, n_t, n_s, 1, threads=threads)
    assert np.array_equal(one, many)
    assert np.allclose(one[:, 0], a.sum(axis=1))


def test_thread_setting(monkeypatch):
    summation.set_num_threads(None)
    monkeypatch.setenv("MFLAB_THREADS", "3")
    assert summation.get_num_threads() == 3
    summation.set_num_threads(2)
    assert summation.get_num_threads() == 2
    with pytest.raises(ValueError):
        summation.set_num_threads(0)
