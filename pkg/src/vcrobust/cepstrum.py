"""All-pass frequency warping and mel-cepstral transforms.

Cepstra here follow the causal convention
``log|H(w)| = c0 + sum_{m>=1} c_m cos(m w)``, for which the mel-cepstral
distortion formula equals the RMS log-spectral distance in dB.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .lpc import ENVELOPE_POINTS, envelope_grid

MEL_ALPHA = 0.42
MCC_ORDER = 24


def allpass_map(w, alpha: float):
    """Frequency map of the first-order all-pass ``(z^-1 - alpha)/(1 - alpha z^-1)``.

    ``w' = w + 2 arctan(alpha sin w / (1 - alpha cos w))``; a bijection of
    [0, pi] for ``|alpha| < 1`` whose inverse is the map for ``-alpha``.
    """
    if abs(alpha) >= 1:
        raise ValueError("|alpha| must be < 1")
    w = np.asarray(w, dtype=np.float64)
    return w + 2.0 * np.arctan2(alpha * np.sin(w), 1.0 - alpha * np.cos(w))


def _freqt_columns(c: np.ndarray, out_order: int, alpha: float) -> np.ndarray:
    """Recursive cepstral frequency transform applied to each column of `c`."""
    in_order = c.shape[0] - 1
    beta = 1.0 - alpha * alpha
    g = np.zeros((out_order + 1,) + c.shape[1:])
    for i in range(in_order, -1, -1):
        d = g.copy()
        g[0] = c[i] + alpha * d[0]
        if out_order >= 1:
            g[1] = beta * d[0] + alpha * d[1]
        for j in range(2, out_order + 1):
            g[j] = d[j - 1] + alpha * (d[j] - g[j - 1])
    return g


@lru_cache(maxsize=512)
def _warp_matrix_cached(alpha: float, order: int) -> np.ndarray:
    if alpha == 0.0:
        m = np.eye(order + 1)
    else:
        m = _freqt_columns(np.eye(order + 1), order, alpha)
    m.setflags(write=False)
    return m


def bilinear_warp_matrix(alpha: float, order: int = MCC_ORDER) -> np.ndarray:
    """Matrix ``W`` with ``W @ c`` the cepstrum of the spectrum warped by `alpha`.

    If ``c`` describes ``L(w)``, ``W @ c`` describes ``L'`` with
    ``L'(allpass_map(w, alpha)) = L(w)``, truncated to `order`.
    """
    if abs(alpha) >= 1:
        raise ValueError("|alpha| must be < 1")
    return _warp_matrix_cached(float(alpha), int(order))


@lru_cache(maxsize=8)
def _analysis_matrix(alpha: float, order: int, n_points: int) -> np.ndarray:
    """Linear map from a sampled log envelope to mel-cepstral coefficients.

    Resamples the envelope (cubic spline) at the linear frequencies that
    land on a uniform midpoint grid after warping, then applies a DCT-II.
    """
    grid = envelope_grid(n_points)
    n = n_points
    warped = (np.arange(n) + 0.5) * np.pi / n
    linear = allpass_map(warped, -alpha)
    spline = CubicSpline(grid, np.eye(n), axis=0)
    resample = spline(linear)  # (n, n_points)
    m = np.arange(order + 1)
    dct = np.cos(np.outer(m, warped)) * (2.0 / n)
    dct[0] *= 0.5
    mat = (dct @ resample).T  # (n_points, order+1)
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=8)
def _synthesis_matrix(alpha: float, order: int, n_points: int) -> np.ndarray:
    grid = envelope_grid(n_points)
    mat = np.cos(np.outer(np.arange(order + 1), allpass_map(grid, alpha)))
    mat.setflags(write=False)
    return mat


def mcc_from_envelope(log_env: np.ndarray, order: int = MCC_ORDER, alpha: float = MEL_ALPHA) -> np.ndarray:
    """Mel-cepstrum ``c0..c_order`` of natural-log envelope(s) on the [0, pi] grid."""
    log_env = np.asarray(log_env, dtype=np.float64)
    return log_env @ _analysis_matrix(float(alpha), order, log_env.shape[-1])


def envelope_from_mcc(mcc: np.ndarray, alpha: float = MEL_ALPHA, n_points: int = ENVELOPE_POINTS) -> np.ndarray:
    """Natural-log envelope on the linear [0, pi] grid described by `mcc`."""
    mcc = np.asarray(mcc, dtype=np.float64)
    return mcc @ _synthesis_matrix(float(alpha), mcc.shape[-1] - 1, n_points)
