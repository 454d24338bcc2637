"""Objective scores: mel-cepstral distortion and a frequency-weighted
segmental SNR used as the quality proxy."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .alignment import dtw_arrays
from .signal_io import Waveform, frame_signal, hann

MCD_CONST = 10.0 / np.log(10.0)
QUALITY_FLOOR = -10.0
QUALITY_CEIL = 35.0
QUALITY_FRAME = 512  # 32 ms
QUALITY_HOP = 256
MEL_BANDS = 23
_ACTIVITY_RANGE_DB = 40.0


@dataclass(frozen=True)
class ScorePair:
    mcd_db: float
    quality: float  # quality proxy (fw segmental SNR), not PESQ


def mcd_frames(tgt: np.ndarray, conv: np.ndarray) -> np.ndarray:
    """Per-frame MCD of already paired frames; c0 (column 0) is ignored."""
    tgt = np.atleast_2d(np.asarray(tgt, dtype=np.float64))
    conv = np.atleast_2d(np.asarray(conv, dtype=np.float64))
    diff = tgt[:, 1:] - conv[:, 1:]
    return MCD_CONST * np.sqrt(2.0 * np.sum(diff * diff, axis=1))


def mcd(tgt: np.ndarray, conv: np.ndarray, align: bool = True) -> float:
    """Mean MCD in dB over DTW-aligned frame pairs (alignment on c1..c24)."""
    tgt = np.atleast_2d(np.asarray(tgt, dtype=np.float64))
    conv = np.atleast_2d(np.asarray(conv, dtype=np.float64))
    if tgt.size == 0 or conv.size == 0 or len(tgt) == 0 or len(conv) == 0:
        raise ValueError("MCD needs two nonempty sequences")
    if not align:
        if len(tgt) != len(conv):
            raise ValueError("unaligned MCD needs equal lengths")
        return float(np.mean(mcd_frames(tgt, conv)))
    path = dtw_arrays(tgt[:, 1:], conv[:, 1:])
    return float(np.mean(mcd_frames(tgt[path.src_index], conv[path.tgt_index])))


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


@lru_cache(maxsize=4)
def mel_filterbank(n_bands: int = MEL_BANDS, nfft: int = QUALITY_FRAME, fs: int = 16000) -> np.ndarray:
    """Triangular mel filters, shape (n_bands, nfft//2 + 1)."""
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(fs / 2), n_bands + 2))
    freqs = np.arange(nfft // 2 + 1) * fs / nfft
    fb = np.zeros((n_bands, len(freqs)))
    for b in range(n_bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[b] = np.clip(np.minimum(up, down), 0.0, None)
    fb.setflags(write=False)
    return fb


def fw_seg_snr(reference: Waveform, test: Waveform, magnitude: bool = False) -> float:
    """Frequency-weighted segmental SNR in dB (quality proxy).

    Per 32 ms Hann frame, each mel band's SNR compares reference energy
    with the energy of the complex spectral difference; bands are averaged
    with the reference band energy as weight. Frame scores are clamped to
    [-10, 35] dB and averaged over frames within 40 dB of the loudest
    reference frame. With `magnitude` the band error compares magnitude
    spectra only, which suits resynthesized speech whose phase is unrelated
    to the reference.
    """
    if reference.sample_rate != test.sample_rate:
        raise ValueError("sample rates differ")
    n = min(len(reference), len(test))
    ref = reference.samples[:n]
    tst = test.samples[:n]
    if n == 0 or not np.any(ref):
        raise ValueError("reference signal is empty or all zero")
    if n < QUALITY_FRAME:
        pad = QUALITY_FRAME - n
        ref = np.pad(ref, (0, pad))
        tst = np.pad(tst, (0, pad))
    win = hann(QUALITY_FRAME)
    R = np.fft.rfft(frame_signal(ref, QUALITY_FRAME, QUALITY_HOP) * win, axis=1)
    T = np.fft.rfft(frame_signal(tst, QUALITY_FRAME, QUALITY_HOP) * win, axis=1)
    fb = mel_filterbank(MEL_BANDS, QUALITY_FRAME, reference.sample_rate)
    ref_band = np.abs(R) ** 2 @ fb.T
    diff = np.abs(R) - np.abs(T) if magnitude else R - T
    err_band = np.abs(diff) ** 2 @ fb.T
    frame_energy = np.sum(np.abs(R) ** 2, axis=1)
    active = frame_energy > np.max(frame_energy) * 10.0 ** (-_ACTIVITY_RANGE_DB / 10.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = 10.0 * np.log10(ref_band / err_band)
    snr = np.where(err_band == 0, QUALITY_CEIL, snr)
    snr = np.where(ref_band == 0, QUALITY_FLOOR, snr)
    snr = np.clip(snr, QUALITY_FLOOR, QUALITY_CEIL)
    weight = np.sum(ref_band, axis=1)
    # written as a shortfall from the ceiling so a perfect frame scores exactly 35
    frame_score = QUALITY_CEIL - np.sum((QUALITY_CEIL - snr) * ref_band, axis=1) / np.where(weight > 0, weight, 1.0)
    frame_score = np.clip(frame_score, QUALITY_FLOOR, QUALITY_CEIL)
    return float(np.mean(frame_score[active]))


def seg_snr(clean: np.ndarray, test: np.ndarray, frame: int = QUALITY_FRAME,
            floor: float = QUALITY_FLOOR, ceil: float = QUALITY_CEIL) -> float:
    """Classic time-domain segmental SNR over frames with clean-signal activity."""
    n = min(len(clean), len(test))
    c = np.asarray(clean[:n], dtype=np.float64)
    t = np.asarray(test[:n], dtype=np.float64)
    frames = n // frame
    if frames == 0:
        raise ValueError("signal shorter than one frame")
    c = c[: frames * frame].reshape(frames, frame)
    e = (c - t[: frames * frame].reshape(frames, frame))
    sig = np.sum(c * c, axis=1)
    err = np.sum(e * e, axis=1)
    active = sig > np.max(sig) * 10.0 ** (-_ACTIVITY_RANGE_DB / 10.0)
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(sig / np.maximum(err, 1e-300))
    return float(np.mean(np.clip(snr[active], floor, ceil)))
