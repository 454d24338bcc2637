"""Grayscale PGM spectrograms."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..signal_io import Waveform, stft

DYNAMIC_RANGE_DB = 60.0


def spectrogram_image(w: Waveform, win_len: int = 512, hop: int = 128,
                      dynamic_range: float = DYNAMIC_RANGE_DB) -> np.ndarray:
    """uint8 image, rows = frequency bins (row 0 is the top, i.e. Nyquist)."""
    if len(w) == 0:
        raise ValueError("cannot render an empty waveform")
    S = stft(w, win_len, hop, win_len)
    power = np.abs(S.frames.T) ** 2  # (bins, frames)
    peak = float(power.max())
    if peak <= 0:
        return np.zeros(power.shape, dtype=np.uint8)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(power / peak)
    level = np.clip(1.0 + db / dynamic_range, 0.0, 1.0)
    img = np.round(255.0 * level).astype(np.uint8)
    return img[::-1]


def write_pgm(img: np.ndarray, out) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, wd = img.shape
    with open(out, "wb") as fh:
        fh.write(f"P5\n{wd} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError("not a binary PGM file")
    fields, pos = [], 2
    while len(fields) < 3:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(int(raw[pos:end]))
        pos = end
    pos += 1
    wd, h, maxval = fields
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    return np.frombuffer(raw, dtype=np.uint8, count=wd * h, offset=pos).reshape(h, wd)


def render_spectrogram(w: Waveform, out) -> None:
    """Write a P5 PGM: log magnitude over a 60 dB range, 0 Hz on the bottom row."""
    write_pgm(spectrogram_image(w), out)
