import numpy as np
import pytest

from mflab import trajio
from mflab.errors import ParameterError
from mflab.nbody import RotationMatrix, integrate
from mflab.profiles import UniformBall
from mflab.sampling import SampleSpec, sample_iid


@pytest.fixture(scope="module")
def traj():
    st = sample_iid(SampleSpec(UniformBall(), 12, 1))
    return integrate(st, RotationMatrix.default(3), 0.2, times=[0.0, 0.1, 0.2])


def test_csv_roundtrip_is_exact(traj, tmp_path):
    path = tmp_path / "t.csv"
    trajio.write_csv(path, traj)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:4] == ["t", "H", "minsep", "x_0_0"] and len(header) == 3 + 12 * 3
    t, h, sep, pos = trajio.read_csv(path, 3)
    assert np.array_equal(t, traj.times) and np.array_equal(h, traj.hamiltonian)
    assert np.array_equal(sep, traj.min_separation) and np.array_equal(pos, traj.positions)


def test_binary_roundtrip_is_exact(traj, tmp_path):
    path = tmp_path / "t.mfl"
    trajio.write_binary(path, traj)
    back = trajio.read_binary(path)
    for f in ("times", "positions", "intensities", "hamiltonian", "min_separation"):
        assert np.array_equal(getattr(back, f), getattr(traj, f))
    assert path.read_bytes()[:4] == b"MFL1"


def test_binary_rejects_damage(traj):
    blob = trajio.to_bytes(traj.times, traj.hamiltonian, traj.min_separation, traj.positions,
                           traj.intensities)
    with pytest.raises(ParameterError):
        trajio.from_bytes(blob[:-8])
    with pytest.raises(ParameterError):
        trajio.from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ParameterError):
        trajio.from_bytes(blob[:6])


def test_csv_dimension_mismatch(traj, tmp_path):
    path = tmp_path / "t.csv"
    trajio.write_csv(path, traj)
    with pytest.raises(ParameterError):
        trajio.read_csv(path, 5)
