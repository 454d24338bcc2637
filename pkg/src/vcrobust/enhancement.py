"""Single-channel speech enhancement: spectral subtraction, iterative Wiener
filtering and the log-spectral-amplitude MMSE estimator.

Every enhancer estimates a stationary noise PSD from the leading frames,
modifies STFT magnitudes, reuses the noisy phase and resynthesizes with
overlap-add, so output length always equals input length.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .lpc import levinson
from .signal_io import Spectrogram, Waveform, istft, stft

logger = logging.getLogger(__name__)

ENHANCER_KINDS = ("none", "spectral_subtraction", "iterative_wiener", "log_mmse")
_SHORT_NAMES = {"ss": "spectral_subtraction", "iw": "iterative_wiener", "logmmse": "log_mmse"}

WIN_LEN = 512
HOP = 256
NFFT = 512
_EULER_GAMMA = 0.57721566490153286061
_XI_MIN = 10.0 ** (-25.0 / 10.0)


@dataclass(frozen=True)
class EnhancerConfig:
    kind: str = "none"
    noise_est_frames: int = 6
    oversubtraction: float = 2.0
    spectral_floor: float = 0.002
    dd_alpha: float = 0.98
    wiener_iterations: int = 3
    lpc_order: int = 14

    def __post_init__(self):
        kind = _SHORT_NAMES.get(self.kind, self.kind)
        if kind not in ENHANCER_KINDS:
            raise ValueError(f"unknown enhancer {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.noise_est_frames < 1:
            raise ValueError("noise_est_frames must be >= 1")
        if not 0.0 < self.spectral_floor <= 0.1:
            raise ValueError("spectral_floor must be in (0, 0.1]")
        if not 0.9 <= self.dd_alpha <= 0.999:
            raise ValueError("dd_alpha must be in [0.9, 0.999]")
        if not 1 <= self.wiener_iterations <= 8:
            raise ValueError("wiener_iterations must be in [1, 8]")
        if self.lpc_order < 1:
            raise ValueError("lpc_order must be positive")

    @property
    def label(self) -> str:
        return self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "noise_est_frames": self.noise_est_frames,
            "oversubtraction": self.oversubtraction,
            "spectral_floor": self.spectral_floor,
            "dd_alpha": self.dd_alpha,
            "wiener_iterations": self.wiener_iterations,
            "lpc_order": self.lpc_order,
        }


def exp1(v) -> np.ndarray:
    """Exponential integral ``E1(v)`` for ``v > 0``.

    Power series below 1, modified-Lentz continued fraction above.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.any(v <= 0):
        raise ValueError("E1 is only implemented for v > 0")
    out = np.empty_like(v)
    small = v < 1.0

    x = v[small]
    if x.size:
        term = np.ones_like(x)
        total = np.zeros_like(x)
        for k in range(1, 60):
            term = term * (-x) / k
            total += term / k
        out[small] = -_EULER_GAMMA - np.log(x) - total

    x = v[~small]
    if x.size:
        tiny = 1e-300
        b = x + 1.0
        c = np.full_like(x, 1.0 / tiny)
        d = 1.0 / b
        h = d.copy()
        for i in range(1, 500):
            an = -float(i * i)
            b = b + 2.0
            d = 1.0 / (an * d + b)
            c = b + an / c
            delta = c * d
            h *= delta
            if np.all(np.abs(delta - 1.0) < 1e-16):
                break
        out[~small] = h * np.exp(-x)
    return out


def log_mmse_gain(xi, gamma) -> np.ndarray:
    """Log-spectral-amplitude gain, clipped to (0, 1]."""
    xi = np.asarray(xi, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    ratio = xi / (1.0 + xi)
    v = np.maximum(ratio * gamma, 1e-8)
    gain = ratio * np.exp(0.5 * exp1(v))
    return np.clip(gain, 1e-12, 1.0)


def _check_length(noisy: Waveform, cfg: EnhancerConfig):
    if len(noisy) < cfg.noise_est_frames * HOP or len(noisy) < WIN_LEN:
        raise ValueError(
            f"signal too short for noise estimation: {len(noisy)} samples "
            f"< {cfg.noise_est_frames} frames x {HOP}"
        )


def noise_psd(S: Spectrogram, n_frames: int) -> np.ndarray:
    """Mean power of the leading frames.

    Frame 0 straddles the zero padding in front of the signal, so averaging
    starts at frame 1 whenever enough frames exist.
    """
    power = np.abs(S.frames) ** 2
    start = 1 if S.num_frames > n_frames else 0
    return power[start:start + n_frames].mean(axis=0)


def spectral_subtract(noisy: Waveform, cfg: EnhancerConfig | None = None) -> Waveform:
    cfg = cfg or EnhancerConfig("spectral_subtraction")
    _check_length(noisy, cfg)
    S = stft(noisy, WIN_LEN, HOP, NFFT)
    N2 = noise_psd(S, cfg.noise_est_frames)
    Y2 = np.abs(S.frames) ** 2
    X2 = np.maximum(Y2 - cfg.oversubtraction * N2, cfg.spectral_floor * Y2)
    gain = np.sqrt(X2 / np.maximum(Y2, 1e-300))
    gain[Y2 == 0] = 1.0
    return istft(S.with_frames(S.frames * gain))


def _ar_power(est: np.ndarray, order: int):
    """All-pole PSD of each frame's current estimate (same scale as |X|^2)."""
    r = np.fft.irfft(np.abs(est) ** 2, n=NFFT, axis=1)[:, : order + 1]
    r = r.copy()
    r[:, 0] *= 1.0 + 1e-9
    a, err, k = levinson(r, order)
    stable = np.all(np.abs(k) < 1.0, axis=1) & (r[:, 0] > 0) & (err > 0)
    A2 = np.abs(np.fft.rfft(a, n=NFFT, axis=1)) ** 2
    Ps = np.maximum(err, 0.0)[:, None] / np.maximum(A2, 1e-300)
    return Ps, stable


def iterative_wiener(noisy: Waveform, cfg: EnhancerConfig | None = None, diagnostics: dict | None = None) -> Waveform:
    """Iterative all-pole Wiener filtering.

    Each iteration fits an LPC model to the current estimate, forms its AR
    power spectrum ``Ps`` and applies ``H = Ps / (Ps + N)`` to the noisy
    spectrum. Frames whose LPC fit is unstable keep the previous estimate.
    """
    cfg = cfg or EnhancerConfig("iterative_wiener")
    _check_length(noisy, cfg)
    S = stft(noisy, WIN_LEN, HOP, NFFT)
    N2 = noise_psd(S, cfg.noise_est_frames)
    Y = S.frames
    est = Y.copy()
    fallbacks = 0
    for _ in range(cfg.wiener_iterations):
        Ps, stable = _ar_power(est, cfg.lpc_order)
        H = Ps / np.maximum(Ps + N2, 1e-300)
        fallbacks += int(np.count_nonzero(~stable))
        est = np.where(stable[:, None], H * Y, est)
    if diagnostics is not None:
        diagnostics["lpc_fallbacks"] = fallbacks
    if fallbacks:
        logger.debug("iterative Wiener: %d unstable LPC frames kept previous estimate", fallbacks)
    return istft(S.with_frames(est))


def log_mmse(noisy: Waveform, cfg: EnhancerConfig | None = None) -> Waveform:
    cfg = cfg or EnhancerConfig("log_mmse")
    _check_length(noisy, cfg)
    S = stft(noisy, WIN_LEN, HOP, NFFT)
    N2 = np.maximum(noise_psd(S, cfg.noise_est_frames), 1e-300)
    Y2 = np.abs(S.frames) ** 2
    out = np.empty_like(S.frames)
    prev_x2 = None
    a = cfg.dd_alpha
    for t in range(S.num_frames):
        gamma = Y2[t] / N2
        if prev_x2 is None:
            xi = a + (1.0 - a) * np.maximum(gamma - 1.0, 0.0)
        else:
            xi = a * prev_x2 / N2 + (1.0 - a) * np.maximum(gamma - 1.0, 0.0)
        xi = np.maximum(xi, _XI_MIN)
        G = log_mmse_gain(xi, gamma)
        out[t] = G * S.frames[t]
        prev_x2 = G * G * Y2[t]
    return istft(S.with_frames(out))


def enhance(noisy: Waveform, cfg: EnhancerConfig) -> Waveform:
    if cfg.kind == "none":
        return noisy
    if cfg.kind == "spectral_subtraction":
        return spectral_subtract(noisy, cfg)
    if cfg.kind == "iterative_wiener":
        return iterative_wiener(noisy, cfg)
    if cfg.kind == "log_mmse":
        return log_mmse(noisy, cfg)
    raise ValueError(f"unknown enhancer {cfg.kind!r}")


def make_config(kind: str, **overrides) -> EnhancerConfig:
    return replace(EnhancerConfig(kind), **overrides)
