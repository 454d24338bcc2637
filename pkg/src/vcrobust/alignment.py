"""Dynamic time warping between parallel feature sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.spatial.distance import cdist

# backtrack codes, in tie-break order
_DIAG, _DOWN, _RIGHT = 0, 1, 2


@dataclass(frozen=True)
class AlignmentPath:
    """Monotone path from (0, 0) to (N-1, M-1); ``pairs`` is an (L, 2) int array."""

    pairs: np.ndarray
    cost: float

    @property
    def src_index(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def tgt_index(self) -> np.ndarray:
        return self.pairs[:, 1]

    def __len__(self):
        return len(self.pairs)

    def transposed(self) -> "AlignmentPath":
        return AlignmentPath(self.pairs[:, ::-1].copy(), self.cost)


@numba.njit(cache=True)
def _accumulate(dist, penalty):
    n, m = dist.shape
    acc = np.empty((n, m))
    step = np.zeros((n, m), dtype=np.int8)
    acc[0, 0] = dist[0, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + dist[0, j] + penalty
        step[0, j] = _RIGHT
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + dist[i, 0] + penalty
        step[i, 0] = _DOWN
        for j in range(1, m):
            best = acc[i - 1, j - 1]
            code = _DIAG
            if acc[i - 1, j] + penalty < best:
                best = acc[i - 1, j] + penalty
                code = _DOWN
            if acc[i, j - 1] + penalty < best:
                best = acc[i, j - 1] + penalty
                code = _RIGHT
            acc[i, j] = best + dist[i, j]
            step[i, j] = code
    return acc, step


@numba.njit(cache=True)
def _backtrack(step):
    n, m = step.shape
    out = np.empty((n + m - 1, 2), dtype=np.int64)
    i, j = n - 1, m - 1
    k = 0
    while True:
        out[k, 0] = i
        out[k, 1] = j
        k += 1
        if i == 0 and j == 0:
            break
        code = step[i, j]
        if code == _DIAG:
            i -= 1
            j -= 1
        elif code == _DOWN:
            i -= 1
        else:
            j -= 1
    return out[:k][::-1].copy()


def dtw_from_cost(dist: np.ndarray, penalty: float = 0.0) -> AlignmentPath:
    """Minimum-cost monotone path through a local cost matrix.

    Steps (1,1), (1,0), (0,1) without slope constraints; `penalty` is added
    to every (1,0) and (0,1) step. On ties the diagonal wins, then (1,0).
    """
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] == 0 or dist.shape[1] == 0:
        raise ValueError("DTW needs two nonempty sequences")
    acc, step = _accumulate(dist, float(penalty))
    return AlignmentPath(_backtrack(step), float(acc[-1, -1]))


def dtw_arrays(a: np.ndarray, b: np.ndarray) -> AlignmentPath:
    """DTW of two vector sequences under Euclidean local distance."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("DTW needs two nonempty sequences")
    return dtw_from_cost(cdist(a, b))


def alignment_features(track, feature: str) -> np.ndarray:
    if feature == "lsf":
        return track.lsf
    if feature == "mcc":
        return track.mcc[:, 1:]  # c0 is gain, kept out of the distance
    raise ValueError(f"unknown alignment feature {feature!r}")


def dtw_align(src, tgt, feature: str = "mcc") -> AlignmentPath:
    """Align two FeatureTracks on LSFs or on c1..c24."""
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("cannot align an empty track")
    return dtw_arrays(alignment_features(src, feature), alignment_features(tgt, feature))
