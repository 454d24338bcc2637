"""Corpus manifests and the synthetic parallel mini-corpus."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..signal_io import Waveform, read_wav, write_wav
from ..synth import Voice, random_script, render

MANIFEST_NAME = "manifest.json"

# (id, F0 base, formant scale, glottal tilt)
MAIN_VOICES = (
    ("m1", 110.0, 0.90, 0.90),
    ("m2", 125.0, 0.95, 0.88),
    ("f1", 200.0, 1.05, 0.85),
    ("f2", 220.0, 1.10, 0.86),
)


@dataclass
class CorpusManifest:
    """Speakers, per-speaker utterance files and the train/test split.

    ``root`` is the directory WAV paths are relative to (the manifest's own
    directory when loaded from disk). Speakers with role ``prior`` hold
    non-parallel data used only for the MFA prior.
    """

    speakers: list
    utterances: dict
    train_utt_ids: list
    test_utt_ids: list
    root: Path = field(default=Path("."))
    seed: int | None = None

    def __post_init__(self):
        self.root = Path(self.root)
        overlap = set(self.train_utt_ids) & set(self.test_utt_ids)
        if overlap:
            raise ValueError(f"train and test splits overlap: {sorted(overlap)[:3]}")
        for spk in self.parallel_speakers:
            ids = {u["utt_id"] for u in self.utterances.get(spk, [])}
            missing = (set(self.train_utt_ids) | set(self.test_utt_ids)) - ids
            if missing:
                raise ValueError(f"speaker {spk} lacks utterances {sorted(missing)[:3]}")

    @property
    def parallel_speakers(self) -> list:
        return [s["id"] for s in self.speakers if s.get("role", "main") != "prior"]

    @property
    def prior_speakers(self) -> list:
        return [s["id"] for s in self.speakers if s.get("role") == "prior"]

    def wav_path(self, speaker: str, utt_id: str) -> Path:
        for u in self.utterances[speaker]:
            if u["utt_id"] == utt_id:
                return self.root / u["wav"]
        raise KeyError(f"{speaker}/{utt_id}")

    def utt_ids(self, speaker: str) -> list:
        return [u["utt_id"] for u in self.utterances[speaker]]

    def load(self, speaker: str, utt_id: str) -> Waveform:
        return read_wav(self.wav_path(speaker, utt_id))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "speakers": self.speakers,
            "utterances": self.utterances,
            "train_utt_ids": self.train_utt_ids,
            "test_utt_ids": self.test_utt_ids,
        }

    def save(self, path=None) -> Path:
        path = Path(path) if path is not None else self.root / MANIFEST_NAME
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load_json(cls, path) -> "CorpusManifest":
        path = Path(path)
        d = json.loads(path.read_text())
        return cls(d["speakers"], d["utterances"], d["train_utt_ids"], d["test_utt_ids"],
                   root=path.parent, seed=d.get("seed"))


def _utt_name(i: int) -> str:
    return f"u{i:04d}"


def split_ids(n_train: int, n_test: int):
    """Train ids count from 1; test ids start at 51 when they fit (1-30 / 51-70 layout)."""
    train = [_utt_name(i) for i in range(1, n_train + 1)]
    start = 51 if n_train <= 50 else n_train + 1
    test = [_utt_name(i) for i in range(start, start + n_test)]
    return train, test


def prior_voices(n: int, seed: int):
    rng = np.random.default_rng([seed, 7919])
    out = []
    for i in range(n):
        out.append((f"p{i + 1:02d}", float(rng.uniform(95.0, 240.0)),
                    float(rng.uniform(0.88, 1.12)), float(rng.uniform(0.84, 0.92))))
    return out


def generate_synthetic_corpus(seed: int, n_train: int, n_test: int, out_dir,
                              n_prior_speakers: int = 12, n_prior_utts: int = 4) -> CorpusManifest:
    """Render a deterministic 4-speaker parallel corpus plus MFA prior speakers.

    Every main speaker reads the same vowel script per utterance id; prior
    speakers read their own scripts.
    """
    if n_train < 2 or n_test < 2:
        raise ValueError("n_train and n_test must be >= 2")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "wav").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"corpus directory {out} is not writable")

    train, test = split_ids(n_train, n_test)
    speakers, utterances = [], {}
    for sid, f0, scale, tilt in MAIN_VOICES:
        speakers.append({"id": sid, "role": "main", "f0_base": f0, "formant_scale": scale})
        utterances[sid] = []
    for sid, f0, scale, tilt in prior_voices(n_prior_speakers, seed):
        speakers.append({"id": sid, "role": "prior", "f0_base": f0, "formant_scale": scale})
        utterances[sid] = []

    for utt in train + test:
        script = random_script(np.random.default_rng([seed, int(utt[1:])]))
        for k, (sid, f0, scale, tilt) in enumerate(MAIN_VOICES):
            w = render(script, Voice(sid, f0, scale, tilt), seed=_render_seed(seed, k, utt))
            rel = f"wav/{sid}_{utt}.wav"
            write_wav(w, out / rel)
            utterances[sid].append({"utt_id": utt, "wav": rel})

    for k, (sid, f0, scale, tilt) in enumerate(prior_voices(n_prior_speakers, seed)):
        for j in range(n_prior_utts):
            utt = f"x{j + 1:04d}"
            script = random_script(np.random.default_rng([seed, 1000 + k, j]))
            w = render(script, Voice(sid, f0, scale, tilt), seed=_render_seed(seed, 100 + k, utt))
            rel = f"wav/{sid}_{utt}.wav"
            write_wav(w, out / rel)
            utterances[sid].append({"utt_id": utt, "wav": rel})

    manifest = CorpusManifest(speakers, utterances, train, test, root=out, seed=seed)
    manifest.save()
    return manifest


def _render_seed(seed: int, speaker_index: int, utt: str) -> int:
    return int(np.random.default_rng([seed, speaker_index, int(utt[1:])]).integers(2 ** 31))
