"""Barnes-Hut octree (d = 3, monopole) for large-N velocity sweeps.

Opt-in only: accuracy is controlled by the opening angle theta, so the tree
path is never used by the oracle checks.
"""

from __future__ import annotations

import numpy as np

from . import kernel
from .errors import ParameterError

LEAF_SIZE = 8


class Octree:
    def __init__(self, x, w, leaf_size: int = LEAF_SIZE):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != 3:
            raise ParameterError("Barnes-Hut is implemented for d = 3 only")
        self.x = x
        self.w = np.asarray(w, dtype=float)
        self.leaf_size = leaf_size
        self.size, self.com, self.mass, self.children, self.members = [], [], [], [], []
        lo, hi = x.min(axis=0), x.max(axis=0)
        center = 0.5 * (lo + hi)
        half = 0.5 * float(np.max(hi - lo)) * (1 + 1e-9) + 1e-300
        self._build(np.arange(len(x)), center, half)
        self.size = np.array(self.size)
        self.com = np.array(self.com)
        self.mass = np.array(self.mass)

    def _build(self, idx, center, half) -> int:
        node = len(self.size)
        m = self.w[idx]
        self.size.append(2 * half)
        self.mass.append(m.sum())
        self.com.append(m @ self.x[idx] / m.sum())
        self.children.append([])
        self.members.append(None)
        if len(idx) <= self.leaf_size or half < 1e-12:
            self.members[node] = idx
            return node
        octant = ((self.x[idx] > center) * np.array([1, 2, 4])).sum(axis=1)
        kids = []
        for o in range(8):
            sub = idx[octant == o]
            if len(sub) == 0:
                continue
            shift = np.array([(o >> k) & 1 for k in range(3)]) - 0.5
            kids.append(self._build(sub, center + shift * half, 0.5 * half))
        self.children[node] = kids
        return node


def barnes_hut_field(x, w, theta: float = 0.5):
    """Approximate G_i = sum_{j != i} w_j grad g(x_i - x_j)."""
    if not theta > 0:
        raise ParameterError("opening angle must be positive")
    x = np.asarray(x, dtype=float)
    tree = Octree(x, w)
    c = kernel.coulomb_constant(3)
    out = np.zeros_like(x)
    tgt = np.arange(len(x))
    node = np.zeros(len(x), dtype=int)
    while len(tgt):
        diff = x[tgt] - tree.com[node]
        dist = np.linalg.norm(diff, axis=1)
        far = tree.size[node] < theta * dist
        if np.any(far):
            coef = -c * tree.mass[node[far]] / dist[far] ** 3
            np.add.at(out, tgt[far], coef[:, None] * diff[far])
        near_t, near_n = tgt[~far], node[~far]
        next_t, next_n = [], []
        for t, n in zip(near_t, near_n):
            members = tree.members[n]
            if members is None:
                kids = tree.children[n]
                next_t.extend([t] * len(kids))
                next_n.extend(kids)
                continue
            members = members[members != t]
            if len(members):
                dv = x[t] - x[members]
                r = np.linalg.norm(dv, axis=1)
                out[t] += (-c * tree.w[members] / r**3) @ dv
        tgt = np.array(next_t, dtype=int)
        node = np.array(next_n, dtype=int)
    return out
