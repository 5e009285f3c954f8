"""Trajectory serialisation: CSV text and the compact MFL1 binary format.

MFL1 layout (all little-endian):

    4 bytes   magic b"MFL1"
    uint32    d
    uint32    N
    uint32    S, number of samples
    N float64 intensities
    S records of (3 + N*d) float64: t, H, minsep, then positions row-major

Blob clouds use the same layout with the weights in place of intensities
and NaN for the minsep column.
"""

from __future__ import annotations

import csv
import io
import struct

import numpy as np

from .errors import ParameterError
from .nbody import Trajectory

MAGIC = b"MFL1"
_HEADER = struct.Struct("<4sIII")


def _fmt(v: float) -> str:
    return repr(float(v))


def trajectory_csv(times, hamiltonian, min_sep, positions) -> str:
    """One row per sample: t, H, minsep, x_0_0, x_0_1, ... (floats via repr, so round-trip exact)."""
    positions = np.asarray(positions, dtype=float)
    s, n, d = positions.shape
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "H", "minsep"] + [f"x_{i}_{k}" for i in range(n) for k in range(d)])
    for k in range(s):
        w.writerow([_fmt(times[k]), _fmt(hamiltonian[k]), _fmt(min_sep[k])]
                   + [_fmt(v) for v in positions[k].ravel()])
    return buf.getvalue()


def write_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(trajectory_csv(traj.times, traj.hamiltonian, traj.min_separation,
                                traj.positions))


def read_csv(path, dim: int):
    """Returns (times, hamiltonian, minsep, positions (S, N, d))."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    if data.size == 0:
        raise ParameterError("trajectory CSV has no samples")
    pos = data[:, 3:]
    if pos.shape[1] % dim:
        raise ParameterError("column count does not match the dimension")
    return data[:, 0], data[:, 1], data[:, 2], pos.reshape(len(data), -1, dim)


def to_bytes(times, hamiltonian, min_sep, positions, intensities) -> bytes:
    positions = np.asarray(positions, dtype="<f8")
    s, n, d = positions.shape
    out = [_HEADER.pack(MAGIC, d, n, s), np.asarray(intensities, dtype="<f8").tobytes()]
    rec = np.empty((s, 3 + n * d), dtype="<f8")
    rec[:, 0], rec[:, 1], rec[:, 2] = times, hamiltonian, min_sep
    rec[:, 3:] = positions.reshape(s, -1)
    out.append(rec.tobytes())
    return b"".join(out)


def write_binary(path, traj: Trajectory) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(traj.times, traj.hamiltonian, traj.min_separation, traj.positions,
                          traj.intensities))


def from_bytes(blob: bytes) -> Trajectory:
    if len(blob) < _HEADER.size:
        raise ParameterError("truncated MFL1 header")
    magic, d, n, s = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ParameterError(f"bad magic {magic!r}")
    expect = _HEADER.size + 8 * (n + s * (3 + n * d))
    if len(blob) != expect:
        raise ParameterError(f"MFL1 payload is {len(blob)} bytes, expected {expect}")
    off = _HEADER.size
    a = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(float)
    rec = np.frombuffer(blob, dtype="<f8", offset=off + 8 * n).reshape(s, 3 + n * d).astype(float)
    return Trajectory(rec[:, 0].copy(), rec[:, 3:].reshape(s, n, d).copy(), a,
                      rec[:, 1].copy(), rec[:, 2].copy())


def read_binary(path) -> Trajectory:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
