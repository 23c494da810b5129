"""Evaluation metrics, space-filling designs and the toy target functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

RANDOM_LHD = "random-lhd"
MAXIMIN_LHD = "maximin-lhd"
UNIFORM = "uniform"

MAXIMIN_RESTARTS = 50


@dataclass(frozen=True)
class Design:
    """A batch of points in the unit cube."""

    points: np.ndarray
    seed: int
    kind: str

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dimension(self):
        return self.points.shape[1]

    def min_distance(self) -> float:
        if self.n < 2:
            return np.inf
        d, _ = cKDTree(self.points).query(self.points, k=2)
        return float(d[:, 1].min())

    def to_csv(self, path):
        np.savetxt(path, self.points, delimiter=",", fmt="%.17g",
                   header=",".join(f"x{i + 1}" for i in range(self.dimension)),
                   comments="")


def _one_lhd(n, D, rng):
    """Stratified columns: one uniform draw per stratum, independently
    permuted per column."""
    out = np.empty((n, D))
    for j in range(D):
        out[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return out


def lhd(n: int, D: int, seed: int = 0, kind: str = RANDOM_LHD) -> Design:
    """Latin hypercube (random or maximin-restarted) or plain uniform design.

    The maximin variant generates ``MAXIMIN_RESTARTS`` random hypercubes and
    keeps the one with the largest minimum pairwise distance.
    """
    if n < 1 or D < 1:
        raise ValueError("n and D must be positive")
    rng = np.random.default_rng(seed)
    if kind == UNIFORM:
        return Design(rng.random((n, D)), seed, kind)
    if kind == RANDOM_LHD:
        return Design(_one_lhd(n, D, rng), seed, kind)
    if kind == MAXIMIN_LHD:
        best, best_d = None, -np.inf
        for _ in range(MAXIMIN_RESTARTS):
            pts = _one_lhd(n, D, rng)
            if n < 2:
                best = pts
                break
            d, _ = cKDTree(pts).query(pts, k=2)
            dmin = d[:, 1].min()
            if dmin > best_d:
                best, best_d = pts, dmin
        return Design(best, seed, kind)
    raise ValueError(f"unknown design kind {kind!r}")


def q2(y_true, y_pred) -> float:
    """One minus the standardized mean squared error; 1 iff exact."""
    y = np.asarray(y_true, dtype=float).ravel()
    yh = np.asarray(y_pred, dtype=float).ravel()
    if y.size != yh.size or y.size < 2:
        raise ValueError("need two same-length vectors of size >= 2")
    denom = float(np.sum((y - y.mean()) ** 2))
    if denom == 0.0:
        raise ValueError("q2 is undefined for constant targets")
    return 1.0 - float(np.sum((y - yh) ** 2)) / denom


def bending_energy(y_true, y_pred) -> float:
    """Squared prediction error normalized by the response energy."""
    y = np.asarray(y_true, dtype=float).ravel()
    yh = np.asarray(y_pred, dtype=float).ravel()
    if y.size != yh.size:
        raise ValueError("length mismatch")
    denom = float(np.sum(y ** 2))
    if denom == 0.0:
        raise ValueError("bending energy is undefined for an all-zero target")
    return float(np.sum((y - yh) ** 2)) / denom


def toy_block_arctan(D: int, x) -> np.ndarray | float:
    """Non-decreasing target built from D/2 two-variable arctan blocks, with
    block weights shrinking as the block index grows."""
    if D % 2:
        raise ValueError("D must be even")
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != D:
        raise ValueError(f"points must have {D} coordinates")
    d = D // 2
    out = np.zeros(X.shape[0])
    for j in range(1, d + 1):
        w = 5.0 * (1.0 - j / (d + 1.0))
        out += np.arctan(w * (X[:, 2 * j - 2] + 2.0 * X[:, 2 * j - 1]))
    return float(out[0]) if squeeze else out


def toy_6d(x) -> np.ndarray | float:
    """Three-block benchmark target ``2 x1 x3 + sin(x2 x4) + arctan(3 x5 +
    5 x6)``; coordinates beyond the sixth are ignored (dummy variables)."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] < 6:
        raise ValueError("need at least 6 coordinates")
    out = (2.0 * X[:, 0] * X[:, 2]
           + np.sin(X[:, 1] * X[:, 3])
           + np.arctan(3.0 * X[:, 4] + 5.0 * X[:, 5]))
    return float(out[0]) if squeeze else out
