"""Formant-synthesized vowel sequences used as a stand-in speech corpus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .signal_io import SAMPLE_RATE, Waveform
from .vocoder import fractional_pulses

# F1-F4 in Hz for a neutral adult voice
VOWELS = {
    "a": (730, 1090, 2440, 3400),
    "i": (270, 2290, 3010, 3700),
    "u": (300, 870, 2240, 3300),
    "e": (530, 1840, 2480, 3500),
    "o": (570, 840, 2410, 3300),
    "ae": (660, 1720, 2410, 3400),
    "er": (490, 1350, 1690, 3300),
    "uh": (520, 1190, 2390, 3400),
}
VOWEL_NAMES = tuple(VOWELS)
BANDWIDTHS = (70.0, 100.0, 140.0, 180.0)
_BLOCK = 80
_UPPER_FORMANTS = ((4500.0, 300.0), (6000.0, 500.0))


@dataclass(frozen=True)
class Voice:
    speaker_id: str
    f0_base: float
    formant_scale: float
    tilt: float = 0.9  # glottal low-pass pole
    bandwidth_scale: float = 1.0


@dataclass(frozen=True)
class Segment:
    vowel: str
    duration: float
    f0_start: float  # multipliers of the speaker's base F0
    f0_end: float
    gap: float  # consonant-like dip after the segment, seconds


def random_script(rng: np.random.Generator, n_min: int = 6, n_max: int = 10) -> list[Segment]:
    count = int(rng.integers(n_min, n_max + 1))
    script = []
    for _ in range(count):
        script.append(Segment(
            vowel=VOWEL_NAMES[int(rng.integers(len(VOWEL_NAMES)))],
            duration=float(rng.uniform(0.12, 0.25)),
            f0_start=float(rng.uniform(0.9, 1.15)),
            f0_end=float(rng.uniform(0.85, 1.1)),
            gap=float(rng.choice([0.0, 0.03, 0.05])),
        ))
    return script


def _trajectories(script, voice, fs, lead, tail):
    """Per-sample formant, F0 and amplitude tracks."""
    n = int(round(fs * (lead + tail + sum(s.duration + s.gap for s in script))))
    formants = np.zeros((n, 4))
    f0 = np.zeros(n)
    amp = np.zeros(n)
    pos = int(round(lead * fs))
    first = np.array(VOWELS[script[0].vowel], dtype=float) * voice.formant_scale
    formants[:pos] = first
    f0[:pos] = voice.f0_base * script[0].f0_start
    ramp = int(0.02 * fs)
    prev_end = pos
    for seg in script:
        targ = np.array(VOWELS[seg.vowel], dtype=float) * voice.formant_scale
        n_seg = int(round(seg.duration * fs))
        n_gap = int(round(seg.gap * fs))
        start = pos
        stop = pos + n_seg
        # 30 ms formant transition from the previous target
        trans = min(int(0.03 * fs), n_seg)
        prev = formants[start - 1] if start > 0 else targ
        w = np.linspace(0.0, 1.0, trans)[:, None]
        formants[start:start + trans] = (1 - w) * prev + w * targ
        formants[start + trans:stop] = targ
        f0[start:stop] = voice.f0_base * np.linspace(seg.f0_start, seg.f0_end, n_seg)
        env = np.ones(n_seg)
        r = min(ramp, n_seg // 2)
        env[:r] = np.linspace(0.0, 1.0, r)
        env[n_seg - r:] = np.linspace(1.0, 0.0, r)
        amp[start:stop] = env
        formants[stop:stop + n_gap] = targ
        f0[stop:stop + n_gap] = f0[stop - 1]
        pos = stop + n_gap
        prev_end = pos
    formants[prev_end:] = formants[prev_end - 1]
    f0[prev_end:] = f0[prev_end - 1]
    return formants, f0, amp


def render(script, voice: Voice, seed: int, fs: int = SAMPLE_RATE,
           lead: float = 0.25, tail: float = 0.15, floor_db: float = 45.0,
           aspiration: float = 0.02, vibrato: float = 0.01) -> Waveform:
    """Render a vowel script with a cascade formant synthesizer.

    A recording-noise floor `floor_db` below the speech RMS is added so
    that "clean" files, like real recordings, are not digitally silent.
    """
    rng = np.random.default_rng(seed)
    formants, f0, amp = _trajectories(script, voice, fs, lead, tail)
    n = len(f0)
    # slight vibrato keeps the pitch track from being perfectly flat
    f0 = f0 * (1.0 + vibrato * np.sin(2 * np.pi * 5.0 * np.arange(n) / fs))
    phase = np.cumsum(f0 / fs)
    source = fractional_pulses(phase) * np.sqrt(fs / np.maximum(f0, 1.0))
    source = scipy.signal.lfilter([1.0 - voice.tilt], [1.0, -voice.tilt], source)
    source += aspiration * rng.standard_normal(n) * np.std(source)
    source *= amp

    y = source
    bw = np.array(BANDWIDTHS) * voice.bandwidth_scale
    for k in range(4):
        out = np.zeros(n)
        zi = np.zeros(2)
        for start in range(0, n, _BLOCK):
            stop = min(start + _BLOCK, n)
            fk = formants[start, k]
            r = np.exp(-np.pi * bw[k] / fs)
            c = -2.0 * r * np.cos(2 * np.pi * fk / fs)
            a = [1.0, c, r * r]
            out[start:stop], zi = scipy.signal.lfilter([1.0 + c + r * r], a, y[start:stop], zi=zi)
        y = out
    # fixed upper resonances and lip radiation keep the top octave above the floor
    for fk, bk in _UPPER_FORMANTS:
        r = np.exp(-np.pi * bk / fs)
        c = -2.0 * r * np.cos(2 * np.pi * fk / fs)
        y = scipy.signal.lfilter([1.0 + c + r * r], [1.0, c, r * r], y)
    y = scipy.signal.lfilter([1.0, -1.0], [1.0], y)

    active = amp > 0.5
    scale = 0.5 / (np.max(np.abs(y)) + 1e-12)
    y = y * scale
    rms = np.sqrt(np.mean(y[active] ** 2)) if np.any(active) else 0.5
    y = y + rng.standard_normal(n) * rms * 10.0 ** (-floor_db / 20.0)
    return Waveform(y, fs)


def steady_vowel(vowel: str = "a", f0: float = 150.0, duration: float = 1.0,
                 formant_scale: float = 1.0, seed: int = 0, floor_db: float = 60.0,
                 vibrato: float = 0.01, aspiration: float = 0.02) -> Waveform:
    """A single sustained vowel without leading silence (for unit tests)."""
    voice = Voice("test", f0, formant_scale)
    script = [Segment(vowel, duration, 1.0, 1.0, 0.0)]
    return render(script, voice, seed, lead=0.0, tail=0.0, floor_db=floor_db,
                  vibrato=vibrato, aspiration=aspiration)
