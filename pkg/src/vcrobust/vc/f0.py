"""Log-F0 mean/variance equalisation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..vocoder import F0_MAX, F0_MIN

SIGMA_FLOOR = 1e-4
MIN_VOICED = 10


@dataclass(frozen=True)
class F0Stats:
    mu_src: float
    sigma_src: float
    mu_tgt: float
    sigma_tgt: float


def _log_stats(tracks, who):
    if isinstance(tracks, np.ndarray) and tracks.ndim == 1:
        tracks = [tracks]
    f0 = np.concatenate([np.asarray(t, dtype=np.float64).ravel() for t in tracks]) if len(tracks) else np.zeros(0)
    voiced = f0[f0 > 0]
    if voiced.size < MIN_VOICED:
        raise ValueError(f"{who}: {voiced.size} voiced frames, need at least {MIN_VOICED}")
    lf = np.log(voiced)
    return float(lf.mean()), max(float(lf.std()), SIGMA_FLOOR)


def fit_f0_stats(src_f0, tgt_f0) -> F0Stats:
    """Stats of log F0 over voiced frames; each argument is a track or list of tracks."""
    mu_s, sd_s = _log_stats(src_f0, "source")
    mu_t, sd_t = _log_stats(tgt_f0, "target")
    return F0Stats(mu_s, sd_s, mu_t, sd_t)


def convert_f0(stats: F0Stats, f0):
    f0 = np.asarray(f0, dtype=np.float64)
    if np.any(f0 < 0):
        raise ValueError("f0 must be non-negative")
    voiced = f0 > 0
    with np.errstate(divide="ignore"):
        lf = np.log(np.where(voiced, f0, 1.0))
    conv = np.exp(stats.mu_tgt + stats.sigma_tgt / stats.sigma_src * (lf - stats.mu_src))
    out = np.where(voiced, np.clip(conv, F0_MIN, F0_MAX), 0.0)
    return out if out.ndim else float(out)
