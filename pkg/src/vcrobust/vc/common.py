"""Helpers shared by the conversion methods."""

from __future__ import annotations

import numpy as np

LSF_MARGIN = 1e-3
LSF_MIN_GAP = 1e-3


def project_lsf(lsf: np.ndarray, margin: float = LSF_MARGIN, gap: float = LSF_MIN_GAP) -> np.ndarray:
    """Nearest-ish valid LSF vector(s): sorted, inside [margin, pi - margin],
    neighbours at least `gap` apart."""
    x = np.sort(np.asarray(lsf, dtype=np.float64), axis=-1)
    x = np.where(np.isfinite(x), x, np.pi / 2)
    x = np.sort(x, axis=-1)
    lo, hi = margin, np.pi - margin
    x = np.clip(x, lo, hi)
    p = x.shape[-1]
    for i in range(1, p):
        x[..., i] = np.maximum(x[..., i], x[..., i - 1] + gap)
    x[..., p - 1] = np.minimum(x[..., p - 1], hi)
    for i in range(p - 2, -1, -1):
        x[..., i] = np.minimum(x[..., i], x[..., i + 1] - gap)
    return x


def as_frames(x, dim: int | None = None):
    """View a vector or matrix as (N, D); returns the array and a flag to undo."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"expected {dim}-dim frames, got {arr.shape[1]}")
    return arr, single
