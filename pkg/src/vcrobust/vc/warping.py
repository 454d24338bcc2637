"""Frequency-warping conversion: DFW (warp only) and WFW (warp plus
per-class energy-correction filters)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..alignment import dtw_from_cost
from ..gmm import Gmm
from ..lpc import ENVELOPE_POINTS, envelope_grid, lpc_from_log_envelope, lpc_to_lsf
from ..vocoder import LPC_ORDER, lsf_log_envelope
from .common import as_frames, project_lsf

MAX_BREAKPOINTS = 16
MIN_CLASS_MASS = 1.0
# Non-diagonal frequency-DTW steps cost this multiple of the per-step cost of
# the unpenalized path. Exact warps (zero residual) stay unpenalized, while
# envelopes that also differ in level and tilt no longer produce flat runs
# that collapse LSFs together.
STEP_PENALTY = 32.0


@dataclass
class DfwModel:
    class_gmm: Gmm
    breakpoints_x: np.ndarray  # (K, B) source frequencies, rad
    breakpoints_y: np.ndarray  # (K, B) warped frequencies, rad

    def warp(self, k: int, w) -> np.ndarray:
        return np.interp(w, self.breakpoints_x[k], self.breakpoints_y[k])

    def inverse_warp(self, k: int, w) -> np.ndarray:
        return np.interp(w, self.breakpoints_y[k], self.breakpoints_x[k])


@dataclass
class WfwModel:
    dfw: DfwModel
    corrections: np.ndarray  # (K, 257) natural-log magnitude


def identity_breakpoints(n: int = MAX_BREAKPOINTS):
    g = np.linspace(0.0, np.pi, n)
    return g, g.copy()


def _envelopes(lsf, log_gain=None):
    env = lsf_log_envelope(lsf)
    if log_gain is not None:
        env = env + np.asarray(log_gain, dtype=np.float64)[:, None]
    return env


def fit_warp(src_env: np.ndarray, tgt_env: np.ndarray, n_breakpoints: int = MAX_BREAKPOINTS):
    """Piecewise-linear warp from a DTW over the frequency axis.

    A first unpenalized pass measures the residual mismatch that sets the
    step penalty of the second pass. The path is collapsed to the mean
    target bin per source bin, then sampled at `n_breakpoints` uniformly
    spaced source bins.
    """
    n = len(src_env)
    cost = (src_env[:, None] - tgt_env[None, :]) ** 2
    free = dtw_from_cost(cost)
    path = dtw_from_cost(cost, STEP_PENALTY * free.cost / len(free))
    sums = np.bincount(path.src_index, weights=path.tgt_index, minlength=n)
    counts = np.bincount(path.src_index, minlength=n)
    mapped = sums / counts
    idx = np.round(np.linspace(0, n - 1, n_breakpoints)).astype(int)
    grid = envelope_grid(n)
    bx = grid[idx]
    by = mapped[idx] * np.pi / (n - 1)
    bx[0], by[0] = 0.0, 0.0
    bx[-1], by[-1] = np.pi, np.pi
    by = np.maximum.accumulate(by)
    return bx, by


def _class_means(post, env):
    mass = post.sum(axis=0)
    means = (post.T @ env) / np.maximum(mass, 1e-300)[:, None]
    return mass, means


def train_dfw(x, y, class_gmm: Gmm, n_breakpoints: int = MAX_BREAKPOINTS,
              src_log_gain=None, tgt_log_gain=None) -> DfwModel:
    """Per-class warping functions between posterior-weighted mean envelopes."""
    model, _, _ = _train_warps(x, y, class_gmm, n_breakpoints, src_log_gain, tgt_log_gain)
    return model


def _train_warps(x, y, class_gmm, n_breakpoints, src_log_gain, tgt_log_gain):
    X, _ = as_frames(x, class_gmm.dim)
    Y, _ = as_frames(y, X.shape[1])
    post = class_gmm.posterior(X)
    return warps_from_envelopes(_envelopes(X, src_log_gain), _envelopes(Y, tgt_log_gain),
                                post, class_gmm, n_breakpoints)


def warps_from_envelopes(src_env, tgt_env, post, class_gmm: Gmm, n_breakpoints: int = MAX_BREAKPOINTS):
    """DFW training core on aligned log envelopes with class posteriors `post`.

    Returns the model, the per-class mean envelopes and the empty-class mask.
    """
    mass, src_mean = _class_means(post, src_env)
    _, tgt_mean = _class_means(post, tgt_env)
    K = class_gmm.n_components
    bx = np.empty((K, n_breakpoints))
    by = np.empty((K, n_breakpoints))
    empty = mass < MIN_CLASS_MASS
    for k in range(K):
        if empty[k]:
            bx[k], by[k] = identity_breakpoints(n_breakpoints)
        else:
            bx[k], by[k] = fit_warp(src_mean[k], tgt_mean[k], n_breakpoints)
    return DfwModel(class_gmm, bx, by), (src_mean, tgt_mean), empty


def convert_dfw(m: DfwModel, x) -> np.ndarray:
    """Warp each LSF with the warp of the most probable class."""
    X, single = as_frames(x, m.class_gmm.dim)
    best = np.argmax(m.class_gmm.posterior(X), axis=1)
    out = np.empty_like(X)
    for k in np.unique(best):
        rows = best == k
        out[rows] = m.warp(k, X[rows])
    out = project_lsf(out)
    return out[0] if single else out


def warp_envelope(env: np.ndarray, m: DfwModel, k: int) -> np.ndarray:
    """Envelope moved along frequency: ``out(w_k(f)) = env(f)``."""
    grid = envelope_grid(env.shape[-1])
    src_freq = m.inverse_warp(k, grid)
    if env.ndim == 1:
        return np.interp(src_freq, grid, env)
    return np.stack([np.interp(src_freq, grid, e) for e in env])


def train_wfw(x, y, class_gmm: Gmm, n_breakpoints: int = MAX_BREAKPOINTS,
              src_log_gain=None, tgt_log_gain=None) -> WfwModel:
    """DFW warps plus ``r_k = mean target env - warped mean source env``."""
    dfw, (src_mean, tgt_mean), empty = _train_warps(x, y, class_gmm, n_breakpoints,
                                                     src_log_gain, tgt_log_gain)
    corr = np.zeros((class_gmm.n_components, ENVELOPE_POINTS))
    for k in range(class_gmm.n_components):
        if not empty[k]:
            corr[k] = tgt_mean[k] - warp_envelope(src_mean[k], dfw, k)
    return WfwModel(dfw, corr)


def wfw_envelope(m: WfwModel, x, log_gain=None) -> np.ndarray:
    """Converted log envelopes before the all-pole refit."""
    X, single = as_frames(x, m.dfw.class_gmm.dim)
    post = m.dfw.class_gmm.posterior(X)
    env = _envelopes(X, None if log_gain is None else np.atleast_1d(log_gain))
    out = post @ m.corrections
    for k in range(post.shape[1]):
        w = post[:, k]
        active = w > 1e-12
        if np.any(active):
            out[active] += w[active, None] * warp_envelope(env[active], m.dfw, k)
    return out[0] if single else out


def convert_wfw(m: WfwModel, x, log_gain=None, return_gain: bool = False):
    """Posterior-weighted warped envelope plus correction, refit to LSFs."""
    env = np.atleast_2d(wfw_envelope(m, x, log_gain))
    a, gain = lpc_from_log_envelope(env, LPC_ORDER)
    lsf = project_lsf(lpc_to_lsf(a))
    single = np.asarray(x).ndim == 1
    if single:
        lsf, gain = lsf[0], gain[0]
    return (lsf, gain) if return_gain else lsf
