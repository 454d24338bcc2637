"""Add noise to clean speech at a calibrated signal-to-noise ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .signal_io import Waveform, frame_signal

NOISE_KINDS = ("white", "babble_like", "volvo_like")
_ALIASES = {"babble": "babble_like", "volvo": "volvo_like"}

_LEVEL_FRAME = 512  # 32 ms at 16 kHz
_LEVEL_HOP = 256
_ACTIVITY_RANGE_DB = 40.0


@dataclass(frozen=True)
class SnrSpec:
    snr_db: float
    noise_id: str = "white"
    offset: int = 0
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.offset < 0:
            raise ValueError("offset must be non-negative")


def canonical_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
    return kind


def power_level(x: np.ndarray) -> float:
    """Mean-square level in dB; ``-inf`` for an all-zero signal."""
    ms = float(np.mean(np.square(x))) if len(x) else 0.0
    return 10.0 * np.log10(ms) if ms > 0 else -np.inf


def active_speech_level(w: Waveform) -> float:
    """Level (dB) of frames within 40 dB of the loudest frame.

    Frames are 32 ms with 50% overlap. Signals shorter than one frame, or
    without any frame above the activity threshold, fall back to the overall
    mean-square level. Returns ``-inf`` for silence.
    """
    x = w.samples
    if x.size == 0:
        raise ValueError("empty waveform")
    if not np.any(x):
        return -np.inf
    if len(x) < _LEVEL_FRAME:
        return power_level(x)
    # whole frames only: a zero-padded tail frame would bias the level
    n_full = 1 + (len(x) - _LEVEL_FRAME) // _LEVEL_HOP
    frames = frame_signal(x[: (n_full - 1) * _LEVEL_HOP + _LEVEL_FRAME], _LEVEL_FRAME, _LEVEL_HOP)
    ms = np.mean(frames ** 2, axis=1)
    threshold = ms.max() * 10.0 ** (-_ACTIVITY_RANGE_DB / 10.0)
    active = ms > threshold
    if not np.any(active):
        return power_level(x)
    return float(10.0 * np.log10(np.mean(ms[active])))


def noise_segment(noise: np.ndarray, length: int, offset: int = 0) -> np.ndarray:
    """`length` samples of `noise` starting at `offset`, wrapping around."""
    if noise.size == 0:
        raise ValueError("empty noise")
    idx = (offset + np.arange(length)) % noise.size
    return noise[idx]


def mix_at_snr(speech: Waveform, noise: Waveform, spec: SnrSpec) -> Waveform:
    if speech.sample_rate != noise.sample_rate:
        raise ValueError("speech and noise sample rates differ")
    seg = noise_segment(noise.samples, len(speech), spec.offset)
    speech_level = active_speech_level(speech)
    noise_level = power_level(seg)
    if not np.isfinite(speech_level):
        raise ValueError("speech has zero energy")
    if not np.isfinite(noise_level):
        raise ValueError("noise has zero energy")
    gain = 10.0 ** ((speech_level - noise_level - spec.snr_db) / 20.0)
    return speech.with_samples(speech.samples + gain * seg)


def measured_snr(speech: Waveform, mixed: Waveform) -> float:
    """SNR of a mix, using the same level definitions as :func:`mix_at_snr`."""
    return active_speech_level(speech) - power_level(mixed.samples - speech.samples)


def _babble(length, rng, fs, streams=8):
    sos = scipy.signal.butter(4, [300.0, 3400.0], btype="bandpass", fs=fs, output="sos")
    env_sos = scipy.signal.butter(2, 4.0, btype="lowpass", fs=fs, output="sos")
    out = np.zeros(length)
    for _ in range(streams):
        carrier = scipy.signal.sosfilt(sos, rng.standard_normal(length))
        # slow syllable-rate envelope, kept positive
        env = scipy.signal.sosfilt(env_sos, rng.standard_normal(length))
        env = np.abs(env)
        env /= env.max() + 1e-12
        out += carrier * (0.2 + env)
    return out


def generate_noise(kind: str, length: int, seed: int = 0, sample_rate: int = 16000) -> Waveform:
    """Synthetic stand-ins for the white, babble and car-interior noises.

    white
        i.i.d. Gaussian.
    babble_like
        sum of 8 amplitude-modulated 300-3400 Hz noise streams.
    volvo_like
        white noise low-passed at 300 Hz (6th-order Butterworth).
    """
    kind = canonical_kind(kind)
    rng = np.random.default_rng(seed)
    if kind == "white":
        x = rng.standard_normal(length)
    elif kind == "babble_like":
        x = _babble(length, rng, sample_rate)
    else:
        sos = scipy.signal.butter(6, 300.0, btype="lowpass", fs=sample_rate, output="sos")
        x = scipy.signal.sosfilt(sos, rng.standard_normal(length))
    peak = np.max(np.abs(x)) if length else 0.0
    if peak > 0:
        x = 0.5 * x / peak
    return Waveform(x, sample_rate)
