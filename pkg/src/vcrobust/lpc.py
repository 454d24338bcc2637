"""Linear prediction: Levinson-Durbin, LPC <-> LSF, and all-pole envelopes.

All routines accept a single coefficient vector or a stack of them in the
last axis, so whole utterances can be processed without Python loops.
"""

from __future__ import annotations

import numpy as np

ENVELOPE_POINTS = 257
_LSF_GRID = 512
_LSF_TOL = 1e-10
_LSF_FINE_GRIDS = (8192, 131072)  # retried only for rows with near-coincident roots


def levinson(r: np.ndarray, order: int | None = None):
    """Solve the normal equations for autocorrelation `r` (last axis).

    Returns ``(a, err, k)``: the monic predictor polynomial ``a`` with
    ``a[..., 0] == 1``, the final prediction-error energy and the reflection
    coefficients. Rows whose recursion hits ``|k| >= 1`` or a non-positive
    error (numerically unstable) keep going with ``k`` clipped, and are
    reported through ``~np.all(np.abs(k) < 1, axis=-1)``.
    """
    r = np.asarray(r, dtype=np.float64)
    p = r.shape[-1] - 1 if order is None else order
    batch = r.shape[:-1]
    a = np.zeros(batch + (p + 1,))
    a[..., 0] = 1.0
    k_all = np.zeros(batch + (p,))
    err = r[..., 0].copy()
    for i in range(1, p + 1):
        acc = np.einsum("...j,...j->...", a[..., :i], r[..., i:0:-1])
        safe_err = np.where(err > 0, err, 1.0)
        k = np.where(err > 0, -acc / safe_err, 0.0)
        k_all[..., i - 1] = k
        k = np.clip(k, -0.999999, 0.999999)
        prev = a[..., :i + 1].copy()
        a[..., 1:i + 1] = prev[..., 1:i + 1] + k[..., None] * prev[..., i - 1::-1]
        err = err * (1.0 - k * k)
    return a, err, k_all


def reflection_coefficients(a: np.ndarray) -> np.ndarray:
    """Step-down recursion from predictor polynomial to reflection coefficients."""
    a = np.array(a, dtype=np.float64)
    p = a.shape[-1] - 1
    k = np.zeros(a.shape[:-1] + (p,))
    cur = a / a[..., :1]
    for i in range(p, 0, -1):
        ki = cur[..., i]
        k[..., i - 1] = ki
        denom = 1.0 - ki * ki
        denom = np.where(np.abs(denom) < 1e-300, 1e-300, denom)
        nxt = (cur[..., :i + 1] - ki[..., None] * cur[..., i::-1]) / denom[..., None]
        cur = nxt[..., :i]
    return k


def is_stable(a: np.ndarray) -> np.ndarray:
    """True where ``1/A(z)`` has all poles strictly inside the unit circle."""
    k = reflection_coefficients(a)
    return np.all(np.abs(k) < 1.0, axis=-1)


def bandwidth_expand(a: np.ndarray, gamma: float) -> np.ndarray:
    """Scale pole radii by `gamma`: ``a_i <- a_i * gamma**i``."""
    a = np.asarray(a, dtype=np.float64)
    return a * gamma ** np.arange(a.shape[-1])


def _cos_series(a: np.ndarray):
    """Cosine-series coefficients of the two symmetric LSF polynomials.

    For even order p, ``P(z)/(1 + z^-1)`` and ``Q(z)/(1 - z^-1)`` are
    palindromic of degree p. On the unit circle each equals
    ``e^{-j p w / 2} * sum_m g_m cos(m w)``, with ``g`` returned here.
    """
    p = a.shape[-1] - 1
    ext = np.concatenate([a, np.zeros(a.shape[:-1] + (1,))], axis=-1)
    rev = ext[..., ::-1]
    P = ext + rev
    Q = ext - rev
    # deflate the trivial roots at z = -1 and z = +1
    Pd = np.zeros(a.shape[:-1] + (p + 1,))
    Qd = np.zeros(a.shape[:-1] + (p + 1,))
    Pd[..., 0] = P[..., 0]
    Qd[..., 0] = Q[..., 0]
    for i in range(1, p + 1):
        Pd[..., i] = P[..., i] - Pd[..., i - 1]
        Qd[..., i] = Q[..., i] + Qd[..., i - 1]
    half = p // 2
    gP = np.zeros(a.shape[:-1] + (half + 1,))
    gQ = np.zeros(a.shape[:-1] + (half + 1,))
    gP[..., 0] = Pd[..., half]
    gQ[..., 0] = Qd[..., half]
    for m in range(1, half + 1):
        gP[..., m] = 2.0 * Pd[..., half - m]
        gQ[..., m] = 2.0 * Qd[..., half - m]
    return gP, gQ


def _eval_cos(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    m = np.arange(g.shape[-1])
    return np.sum(g[..., None, :] * np.cos(w[..., :, None] * m), axis=-1)


def _roots_on_grid(g: np.ndarray, n_roots: int, n_grid: int = _LSF_GRID):
    """Bracket and bisect the zeros of each cosine series in (0, pi)."""
    grid = np.linspace(0.0, np.pi, n_grid + 1)
    vals = g @ np.cos(np.outer(np.arange(g.shape[-1]), grid))
    sign = np.signbit(vals)
    change = sign[:, 1:] != sign[:, :-1]
    ok = change.sum(axis=1) == n_roots
    lo = np.zeros((g.shape[0], n_roots))
    hi = np.zeros((g.shape[0], n_roots))
    for row in np.flatnonzero(ok):
        idx = np.flatnonzero(change[row])
        lo[row] = grid[idx]
        hi[row] = grid[idx + 1]
    f_lo = _eval_cos(g, lo)
    n_iter = int(np.ceil(np.log2(np.pi / n_grid / _LSF_TOL))) + 2
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        f_mid = _eval_cos(g, mid)
        left = np.signbit(f_mid) != np.signbit(f_lo)
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
        f_lo = np.where(left, f_lo, f_mid)
    return 0.5 * (lo + hi), ok


def lpc_to_lsf(a: np.ndarray) -> np.ndarray:
    """Line spectral frequencies of a minimum-phase predictor polynomial.

    Parameters
    ----------
    a : array (..., p+1)
        Monic LPC polynomial(s), even order p.

    Returns
    -------
    array (..., p)
        Strictly increasing angles in (0, pi).
    """
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    a2 = np.atleast_2d(a).reshape(-1, a.shape[-1])
    p = a2.shape[-1] - 1
    if p % 2:
        raise ValueError("LPC order must be even")
    if not np.all(is_stable(a2)):
        raise ValueError("LPC polynomial is not minimum phase; bandwidth-expand first")
    gP, gQ = _cos_series(a2 / a2[:, :1])
    rP, okP = _roots_on_grid(gP, p // 2)
    rQ, okQ = _roots_on_grid(gQ, p // 2)
    for n_grid in _LSF_FINE_GRIDS:
        for g, roots, ok in ((gP, rP, okP), (gQ, rQ, okQ)):
            redo = np.flatnonzero(~ok)
            if redo.size:
                roots[redo], ok[redo] = _roots_on_grid(g[redo], p // 2, n_grid)
    if not np.all(okP & okQ):
        raise ValueError("LSF root search failed (roots closer than the search grid)")
    lsf = np.empty((a2.shape[0], p))
    lsf[:, 0::2] = rP
    lsf[:, 1::2] = rQ
    lsf = lsf.reshape(a.shape[:-1] + (p,))
    return lsf[0] if single and lsf.ndim > 1 else lsf


def _poly_from_angles(w: np.ndarray) -> np.ndarray:
    """Product of ``1 - 2 cos(w_i) z^-1 + z^-2`` over the last axis."""
    n = w.shape[-1]
    poly = np.zeros(w.shape[:-1] + (2 * n + 1,))
    poly[..., 0] = 1.0
    for i in range(n):
        c = -2.0 * np.cos(w[..., i])
        new = poly.copy()
        new[..., 1:] += c[..., None] * poly[..., :-1]
        new[..., 2:] += poly[..., :-2]
        poly = new
    return poly


def validate_lsf(lsf: np.ndarray) -> None:
    lsf = np.asarray(lsf)
    if np.any(lsf <= 0) or np.any(lsf >= np.pi):
        raise ValueError("LSFs must lie in the open interval (0, pi)")
    if np.any(np.diff(lsf, axis=-1) <= 0):
        raise ValueError("LSFs must be strictly increasing")


def lsf_to_lpc(lsf: np.ndarray) -> np.ndarray:
    """Inverse of :func:`lpc_to_lsf`; returns the monic polynomial(s)."""
    lsf = np.asarray(lsf, dtype=np.float64)
    validate_lsf(lsf)
    p = lsf.shape[-1]
    if p % 2:
        raise ValueError("LSF order must be even")
    Pd = _poly_from_angles(lsf[..., 0::2])
    Qd = _poly_from_angles(lsf[..., 1::2])
    zero = np.zeros(lsf.shape[:-1] + (1,))
    P = np.concatenate([Pd, zero], axis=-1) + np.concatenate([zero, Pd], axis=-1)
    Q = np.concatenate([Qd, zero], axis=-1) - np.concatenate([zero, Qd], axis=-1)
    return (0.5 * (P + Q))[..., : p + 1]


def envelope_grid(n_points: int = ENVELOPE_POINTS) -> np.ndarray:
    return np.linspace(0.0, np.pi, n_points)


def lpc_log_envelope(a: np.ndarray, log_gain=0.0, n_points: int = ENVELOPE_POINTS) -> np.ndarray:
    """Natural-log magnitude ``log g - log|A(e^jw)|`` on a uniform [0, pi] grid."""
    a = np.asarray(a, dtype=np.float64)
    nfft = 2 * (n_points - 1)
    A = np.fft.rfft(a, n=nfft, axis=-1)
    mag = np.maximum(np.abs(A), 1e-300)
    return np.asarray(log_gain)[..., None] - np.log(mag)


def lpc_from_log_envelope(log_env: np.ndarray, order: int = 14):
    """Fit an all-pole model to a sampled log-magnitude envelope.

    The autocorrelation is the inverse DFT of the power spectrum; returns
    ``(a, log_gain)`` where ``log_gain`` is the natural log of the model's
    amplitude gain.
    """
    log_env = np.asarray(log_env, dtype=np.float64)
    n = log_env.shape[-1]
    power = np.exp(2.0 * log_env)
    r = np.fft.irfft(power, n=2 * (n - 1), axis=-1)[..., : order + 1]
    # white-noise correction keeps the Toeplitz system well conditioned
    r = r.copy()
    r[..., 0] *= 1.0 + 1e-9
    a, err, _ = levinson(r, order)
    log_gain = 0.5 * np.log(np.maximum(err, 1e-300))
    bad = ~is_stable(a)
    if np.any(bad):
        a = np.where(bad[..., None], bandwidth_expand(a, 0.995), a)
    return a, log_gain
