"""Source-filter vocoder: F0 tracking, LPC/LSF/mel-cepstral analysis and
pulse/noise-excited resynthesis on a 5 ms frame grid."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
import scipy.signal

from .cepstrum import MCC_ORDER, mcc_from_envelope, envelope_from_mcc
from .lpc import (
    bandwidth_expand,
    is_stable,
    levinson,
    lpc_from_log_envelope,
    lpc_log_envelope,
    lpc_to_lsf,
    lsf_to_lpc,
)
from .signal_io import SAMPLE_RATE, Waveform

LPC_ORDER = 14
FRAME_HOP = 80  # 5 ms
FRAME_LEN = 400  # 25 ms
PRE_EMPHASIS = 0.97
F0_MIN = 50.0
F0_MAX = 500.0
VOICING_THRESHOLD = 0.5
SILENCE_RANGE_DB = 40.0

_F0_LOWPASS = scipy.signal.butter(4, 1000.0, fs=SAMPLE_RATE, output="sos")

_FEAT_MAGIC = b"VCFT"
_FEAT_VERSION = 1
_FEAT_HEADER = struct.Struct("<4sHIHHHI")


def uniform_lsf(order: int = LPC_ORDER) -> np.ndarray:
    return np.arange(1, order + 1) * np.pi / (order + 1)


@dataclass
class FeatureTrack:
    """Per-frame vocoder parameters of one utterance.

    ``energy`` is the natural log of the frame's mean-square power
    (``-inf`` for digital silence); ``mcc`` holds c0..c24.
    """

    f0: np.ndarray
    lsf: np.ndarray
    mcc: np.ndarray
    energy: np.ndarray
    hop: int = FRAME_HOP
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        self.lsf = np.asarray(self.lsf, dtype=np.float64).reshape(len(self.f0), -1)
        self.mcc = np.asarray(self.mcc, dtype=np.float64).reshape(len(self.f0), -1)
        self.energy = np.asarray(self.energy, dtype=np.float64)
        n = len(self.f0)
        if not (len(self.lsf) == len(self.mcc) == len(self.energy) == n):
            raise ValueError("feature tracks must have equal frame counts")

    def __len__(self):
        return len(self.f0)

    @property
    def silent(self) -> np.ndarray:
        """Frames of digital silence or more than 40 dB below the loudest frame."""
        e = self.energy
        if len(e) == 0:
            return np.zeros(0, dtype=bool)
        finite = np.isfinite(e)
        if not np.any(finite):
            return np.ones(len(e), dtype=bool)
        floor = np.max(e[finite]) - SILENCE_RANGE_DB * np.log(10.0) / 10.0
        return ~finite | (e < floor)

    @property
    def voiced(self) -> np.ndarray:
        return self.f0 > 0

    def select(self, mask) -> "FeatureTrack":
        return FeatureTrack(self.f0[mask], self.lsf[mask], self.mcc[mask], self.energy[mask],
                            self.hop, self.sample_rate)

    def trimmed(self) -> "FeatureTrack":
        return self.select(~self.silent)

    def replace(self, **fields) -> "FeatureTrack":
        kw = dict(f0=self.f0, lsf=self.lsf, mcc=self.mcc, energy=self.energy,
                  hop=self.hop, sample_rate=self.sample_rate)
        kw.update(fields)
        return FeatureTrack(**kw)


def _centered_frames(x: np.ndarray, n_frames: int, length: int, hop: int = FRAME_HOP, extra: int = 0) -> np.ndarray:
    """Frames of `length` (+`extra`) samples centred on ``t*hop + hop/2``."""
    half = length // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(half + extra + hop)])
    starts = np.arange(n_frames) * hop + hop // 2
    idx = starts[:, None] + np.arange(length + extra)[None, :]
    return padded[idx]


def _num_frames(n_samples: int, hop: int = FRAME_HOP) -> int:
    return n_samples // hop


def _refine_peak(r: np.ndarray, i: int):
    """Parabolic peak position and height around integer lag `i`."""
    if i <= 0 or i >= len(r) - 1:
        return float(i), float(r[i])
    y0, y1, y2 = r[i - 1], r[i], r[i + 1]
    den = y0 - 2.0 * y1 + y2
    if den >= 0:
        return float(i), float(y1)
    shift = float(np.clip(0.5 * (y0 - y2) / den, -0.5, 0.5))
    return i + shift, float(y1 - 0.25 * (y0 - y2) * shift)


def estimate_f0(w: Waveform) -> np.ndarray:
    """Normalized-autocorrelation pitch tracker (25 ms window, 5 ms hop).

    A frame is voiced when the best normalized autocorrelation in the
    50-500 Hz lag range reaches 0.5. Integer sub-multiples of the best lag are
    preferred when nearly as periodic (suppresses period doubling); a length-5
    median filter then removes isolated octave jumps.
    """
    fs = w.sample_rate
    n_frames = _num_frames(len(w))
    if n_frames == 0:
        return np.zeros(0)
    # low-passing makes the correlation tolerant of fractional-lag error
    x = scipy.signal.sosfiltfilt(_F0_LOWPASS, w.samples) if len(w) > 30 else w.samples
    lag_min = int(np.floor(fs / F0_MAX))
    lag_max = int(np.ceil(fs / F0_MIN))
    W = FRAME_LEN
    seg = _centered_frames(x, n_frames, W, extra=lag_max)
    head = seg[:, :W]

    nfft = 1 << int(np.ceil(np.log2(2 * W + lag_max)))
    corr = np.fft.irfft(np.conj(np.fft.rfft(head, nfft, axis=1)) * np.fft.rfft(seg, nfft, axis=1),
                        nfft, axis=1)[:, : lag_max + 1]
    csum = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(seg ** 2, axis=1)], axis=1)
    lags = np.arange(lag_max + 1)
    e_lag = csum[:, lags + W] - csum[:, lags]
    e0 = e_lag[:, :1]
    denom = np.sqrt(np.maximum(e0 * e_lag, 0.0))
    nac = np.where(denom > 1e-20 * np.maximum(e0, 1e-300), corr / np.maximum(denom, 1e-300), 0.0)
    nac[e0[:, 0] <= 0] = 0.0

    f0 = np.zeros(n_frames)
    for t in range(n_frames):
        r = nac[t]
        band = r[lag_min: lag_max + 1]
        best = band.max()
        if best < VOICING_THRESHOLD:
            continue
        cand = lag_min + int(np.argmax(band))
        lag, height = _refine_peak(r, cand)
        # prefer sub-multiples of the best lag while they are nearly as periodic
        moved = True
        while moved:
            moved = False
            for k in (6, 5, 4, 3, 2):
                sub = int(round(lag / k))
                if sub - 1 <= lag_min:
                    continue
                sub = sub - 1 + int(np.argmax(r[sub - 1: sub + 2]))
                sub_lag, sub_height = _refine_peak(r, sub)
                if sub_height >= 0.97 * height:
                    cand, lag, height, moved = sub, sub_lag, sub_height, True
                    break
        if cand <= lag_min or cand >= lag_max:
            continue
        freq = fs / lag
        if F0_MIN <= freq <= F0_MAX:
            f0[t] = freq
    if n_frames >= 5:
        f0 = scipy.signal.medfilt(f0, 5)
    return f0


def analyze(w: Waveform) -> FeatureTrack:
    """Frame-wise source-filter parameters of `w`.

    Each 25 ms Hann frame of the pre-emphasized signal gets an order-14
    autocorrelation LPC fit, its LSFs, and the mel-cepstrum of the gain-
    scaled LPC envelope. All-zero frames get the uniform LSF grid, zero
    cepstrum and ``-inf`` energy.
    """
    if w.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {w.sample_rate}")
    x = w.samples
    n_frames = _num_frames(len(x))
    win = np.hanning(FRAME_LEN + 2)[1:-1]
    win_energy = np.sum(win ** 2)

    raw = _centered_frames(x, n_frames, FRAME_LEN) * win
    emph = scipy.signal.lfilter([1.0, -PRE_EMPHASIS], [1.0], x)
    frames = _centered_frames(emph, n_frames, FRAME_LEN) * win

    r = np.fft.irfft(np.abs(np.fft.rfft(frames, 1024, axis=1)) ** 2, 1024, axis=1)[:, : LPC_ORDER + 1]
    live = r[:, 0] > 1e-20 * max(np.max(r[:, 0], initial=0.0), 1e-300)
    live &= r[:, 0] > 0

    lsf = np.tile(uniform_lsf(), (n_frames, 1))
    mcc = np.zeros((n_frames, MCC_ORDER + 1))
    if np.any(live):
        rl = r[live].copy()
        rl[:, 0] *= 1.0 + 1e-9
        a, err, _ = levinson(rl, LPC_ORDER)
        bad = ~is_stable(a)
        if np.any(bad):
            a[bad] = bandwidth_expand(a[bad], 0.995)
        log_gain = 0.5 * np.log(np.maximum(err, 1e-300) / win_energy)
        lsf[live] = lpc_to_lsf(a)
        mcc[live] = mcc_from_envelope(lpc_log_envelope(a, log_gain))

    ms = np.sum(raw ** 2, axis=1) / win_energy
    with np.errstate(divide="ignore"):
        energy = np.where(ms > 0, np.log(np.maximum(ms, 1e-300)), -np.inf)
    return FeatureTrack(estimate_f0(w), lsf, mcc, energy)


def lsf_log_envelope(lsf: np.ndarray, log_gain=0.0) -> np.ndarray:
    return lpc_log_envelope(lsf_to_lpc(lsf), log_gain)


def mcc_from_lsf(lsf: np.ndarray, log_gain=0.0) -> np.ndarray:
    """Mel-cepstrum of the all-pole envelope described by `lsf`."""
    return mcc_from_envelope(lsf_log_envelope(lsf, log_gain))


def lsf_from_mcc(mcc: np.ndarray) -> np.ndarray:
    """Order-14 LSFs of an all-pole fit to the envelope described by `mcc`."""
    a, _ = lpc_from_log_envelope(envelope_from_mcc(mcc), LPC_ORDER)
    return lpc_to_lsf(a)


def _stable_filters(lsf: np.ndarray) -> np.ndarray:
    a = lsf_to_lpc(lsf)
    for _ in range(50):
        bad = ~is_stable(a)
        if not np.any(bad):
            break
        a[bad] = bandwidth_expand(a[bad], 0.995)
    return a


def fractional_pulses(phase: np.ndarray, start_phase: float = 0.0) -> np.ndarray:
    """Unit pulses where the cycle count `phase` passes an integer.

    Each pulse is split linearly between the two samples around its exact
    crossing instant, so periods are not rounded to whole samples.
    """
    phase = np.asarray(phase, dtype=np.float64)
    full = np.concatenate([[start_phase], phase])
    cross = np.flatnonzero(np.diff(np.floor(full)) > 0)
    inc = np.diff(full)[cross]
    late = np.clip((phase[cross] - np.floor(phase[cross])) / np.maximum(inc, 1e-12), 0.0, 1.0)
    out = np.zeros(len(phase))
    np.add.at(out, cross, 1.0 - late)
    np.add.at(out, np.maximum(cross - 1, 0), late)
    return out


def synthesize(ft: FeatureTrack, seed: int = 0) -> Waveform:
    """Resynthesize a waveform of ``len(ft) * hop`` samples.

    Excitation is a phase-continuous unit-power pulse train in voiced frames
    and unit-variance white noise otherwise, scaled so that the output of the
    LPC + de-emphasis filter carries each frame's energy. The time-varying
    all-pole filter keeps its past outputs across frame boundaries.
    """
    hop = ft.hop
    fs = ft.sample_rate
    n = len(ft)
    out = np.zeros(n * hop)
    if n == 0:
        return Waveform(out, fs)
    a = _stable_filters(ft.lsf)
    denom = np.array([scipy.signal.convolve(row, [1.0, -PRE_EMPHASIS]) for row in a])
    nfft = 4096
    power_gain = np.mean(1.0 / np.maximum(np.abs(np.fft.fft(denom, nfft, axis=1)) ** 2, 1e-300), axis=1)
    with np.errstate(over="ignore"):
        target_power = np.where(np.isfinite(ft.energy), np.exp(np.minimum(ft.energy, 50.0)), 0.0)
    scale = np.sqrt(target_power / power_gain)

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n * hop)
    phase = 0.0
    order = denom.shape[1] - 1
    for t in range(n):
        f0 = ft.f0[t]
        if f0 > 0:
            inc = f0 / fs
            ph = phase + inc * np.arange(1, hop + 1)
            exc = fractional_pulses(ph, phase) * np.sqrt(fs / f0)
            phase = ph[-1] - np.floor(ph[-1])
        else:
            exc = noise[t * hop:(t + 1) * hop]
        # restart from past outputs so coefficient switches stay glitch-free
        past = out[max(t * hop - order, 0): t * hop][::-1]
        zi = scipy.signal.lfiltic([1.0], denom[t], past)
        out[t * hop:(t + 1) * hop], _ = scipy.signal.lfilter([1.0], denom[t], exc * scale[t], zi=zi)
    return Waveform(out, fs)


def write_features(ft: FeatureTrack, path) -> None:
    """Little-endian binary feature file (magic ``VCFT``)."""
    header = _FEAT_HEADER.pack(_FEAT_MAGIC, _FEAT_VERSION, len(ft), ft.hop,
                               ft.lsf.shape[1], ft.mcc.shape[1] - 1, ft.sample_rate)
    body = np.column_stack([ft.f0, ft.energy, ft.lsf, ft.mcc]).astype("<f4")
    with open(os.fspath(path), "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())


def read_features(path) -> FeatureTrack:
    with open(os.fspath(path), "rb") as fh:
        raw = fh.read()
    if len(raw) < _FEAT_HEADER.size:
        raise ValueError(f"{path}: truncated feature file")
    magic, version, n, hop, p, m, fs = _FEAT_HEADER.unpack_from(raw)
    if magic != _FEAT_MAGIC or version != _FEAT_VERSION:
        raise ValueError(f"{path}: not a VCFT v{_FEAT_VERSION} feature file")
    width = 2 + p + m + 1
    body = np.frombuffer(raw, dtype="<f4", offset=_FEAT_HEADER.size).astype(np.float64)
    if body.size != n * width:
        raise ValueError(f"{path}: expected {n} frames of {width} values")
    body = body.reshape(n, width)
    return FeatureTrack(body[:, 0], body[:, 2:2 + p], body[:, 2 + p:], body[:, 1], hop, fs)
