"""Audio file I/O, framing and the STFT used across the toolkit."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
import scipy.io.wavfile

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
_PCM_SCALE = 32768.0
_PCM_MAX = 1.0 - 2.0 ** -15


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate)


def read_wav(path) -> Waveform:
    """Read a PCM16 or float32 WAV file, downmixing stereo to mono."""
    try:
        rate, data = scipy.io.wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise ValueError(f"{path}: malformed or unsupported WAV ({exc})") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / _PCM_SCALE
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")

    if x.ndim == 2:
        if x.shape[1] > 1:
            logger.warning("%s: downmixing %d channels to mono", path, x.shape[1])
        x = x.mean(axis=1)
    if x.size == 0:
        raise ValueError(f"{path}: empty audio")
    return Waveform(x, rate)


def write_wav(w: Waveform, path) -> int:
    """Write `w` as 16-bit PCM mono. Returns the number of clipped samples."""
    x = w.samples
    clipped = int(np.count_nonzero((x > _PCM_MAX) | (x < -1.0)))
    if clipped:
        logger.warning("%s: clipped %d samples", path, clipped)
    pcm = np.round(np.clip(x, -1.0, _PCM_MAX) * _PCM_SCALE).astype("<i2")
    scipy.io.wavfile.write(os.fspath(path), w.sample_rate, pcm)
    return clipped


def hann(win_len: int) -> np.ndarray:
    """Periodic Hann window (COLA at 50% overlap)."""
    n = np.arange(win_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / win_len)


def frame_signal(x: np.ndarray, win_len: int, hop: int) -> np.ndarray:
    """Split `x` into frames `[t*hop, t*hop + win_len)`, zero-padding the tail."""
    if len(x) < win_len:
        return np.zeros((0, win_len))
    n_frames = 1 + int(np.ceil((len(x) - win_len) / hop))
    padded = np.zeros((n_frames - 1) * hop + win_len)
    padded[: len(x)] = x
    idx = np.arange(win_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


@dataclass(frozen=True)
class Spectrogram:
    """Complex STFT frames plus everything needed to invert them.

    The analysed signal is padded with ``win_len - hop`` zeros on both
    sides so that every original sample gets full overlap-add weight;
    frame ``t`` therefore starts at original sample ``t*hop - pad``.
    """

    frames: np.ndarray
    nfft: int
    hop: int
    win_len: int
    window: str = "hann"
    length: int | None = None
    pad: int = 0
    sample_rate: int = SAMPLE_RATE

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_bins(self) -> int:
        return self.nfft // 2 + 1

    def with_frames(self, frames) -> "Spectrogram":
        frames = np.asarray(frames)
        if frames.shape != self.frames.shape:
            raise ValueError(f"frame shape {frames.shape} != {self.frames.shape}")
        return Spectrogram(frames, self.nfft, self.hop, self.win_len, self.window,
                           self.length, self.pad, self.sample_rate)


def _check_stft_args(win_len, hop, nfft):
    if nfft < win_len:
        raise ValueError("nfft must be >= win_len")
    if nfft & (nfft - 1):
        raise ValueError("nfft must be a power of two")
    if hop <= 0 or hop > win_len or win_len % hop:
        raise ValueError("hop must divide win_len")
    # periodic Hann is COLA for hop = win_len / k with k >= 2
    if win_len // hop < 2:
        raise ValueError("Hann window needs at least 50% overlap for COLA")


def stft(w: Waveform, win_len: int = 512, hop: int = 256, nfft: int = 512) -> Spectrogram:
    _check_stft_args(win_len, hop, nfft)
    x = w.samples
    pad = win_len - hop
    if len(x) < win_len:
        frames = np.zeros((0, nfft // 2 + 1), dtype=complex)
        return Spectrogram(frames, nfft, hop, win_len, "hann", len(x), pad, w.sample_rate)
    padded = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    framed = frame_signal(padded, win_len, hop) * hann(win_len)
    frames = np.fft.rfft(framed, n=nfft, axis=1)
    return Spectrogram(frames, nfft, hop, win_len, "hann", len(x), pad, w.sample_rate)


def ola_weight(n_frames: int, win_len: int, hop: int) -> np.ndarray:
    """Sum of squared analysis windows seen by each padded sample."""
    win2 = hann(win_len) ** 2
    total = np.zeros((n_frames - 1) * hop + win_len)
    for t in range(n_frames):
        total[t * hop: t * hop + win_len] += win2
    return total


def istft(S: Spectrogram) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`."""
    if S.frames.ndim != 2 or S.frames.shape[1] != S.num_bins:
        raise ValueError(f"expected (frames, {S.num_bins}) bins, got {S.frames.shape}")
    length = S.length
    if S.num_frames == 0:
        return Waveform(np.zeros(length or 0), S.sample_rate)

    win = hann(S.win_len)
    chunks = np.fft.irfft(S.frames, n=S.nfft, axis=1)[:, : S.win_len] * win
    y = np.zeros((S.num_frames - 1) * S.hop + S.win_len)
    for t in range(S.num_frames):
        y[t * S.hop: t * S.hop + S.win_len] += chunks[t]
    norm = ola_weight(S.num_frames, S.win_len, S.hop)
    nz = norm > 1e-10
    y[nz] /= norm[nz]
    y[~nz] = 0.0

    y = y[S.pad:]
    if length is not None:
        y = y[:length]
        if len(y) < length:
            y = np.concatenate([y, np.zeros(length - len(y))])
    return Waveform(y, S.sample_rate)
