"""Trained conversion models: one tagged container for all five methods,
training from aligned parallel data, track conversion and ``VCM1`` files."""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..alignment import dtw_align
from ..gmm import _KIND_CODE, COVARIANCE_KINDS, Gmm, JointGmm, train_em
from ..vocoder import FeatureTrack, lsf_from_mcc, mcc_from_lsf
from .blfwas import BLFWAS_COMPONENTS, BlfwasModel, convert_blfwas, train_blfwas
from .f0 import F0Stats, convert_f0, fit_f0_stats
from .jdgmm import JDGMM_COMPONENTS, JdgmmModel, convert_jdgmm, train_jdgmm
from .mfa import IDENTITY_DIM, MFA_COMPONENTS, MfaModel, MfaPrior, convert_mfa, train_mfa, train_mfa_prior
from .warping import DfwModel, WfwModel, convert_dfw, convert_wfw, train_dfw, train_wfw

logger = logging.getLogger(__name__)

METHODS = ("jdgmm", "dfw", "wfw", "mfa", "blfwas")
METHOD_FEATURE = {"jdgmm": "lsf", "dfw": "lsf", "wfw": "lsf", "mfa": "mcc", "blfwas": "mcc"}
DFW_COMPONENTS = 8

_MODEL_MAGIC = b"VCM1"
_DTYPES = {0: "<f8", 1: "<i8", 2: "u1"}
_DTYPE_CODE = {np.dtype("<f8"): 0, np.dtype("<i8"): 1, np.dtype("u1"): 2}


def check_method(tag: str) -> str:
    if tag not in METHODS:
        raise ValueError(f"unknown conversion method {tag!r}; expected one of {', '.join(METHODS)}")
    return tag


@dataclass
class ParallelData:
    """Aligned training material for one conversion direction.

    Frames are silence-trimmed. Pairs come from DTW paths computed on each
    method's own feature.
    """

    src_tracks: list
    tgt_tracks: list
    pairs: dict = field(default_factory=dict)

    @classmethod
    def from_tracks(cls, src_tracks, tgt_tracks) -> "ParallelData":
        src = [t.trimmed() for t in src_tracks]
        tgt = [t.trimmed() for t in tgt_tracks]
        if len(src) != len(tgt):
            raise ValueError("parallel track lists differ in length")
        return cls(src, tgt)

    def aligned(self, feature: str):
        if feature not in self.pairs:
            xs, ys = [], []
            for s, t in zip(self.src_tracks, self.tgt_tracks):
                if len(s) == 0 or len(t) == 0:
                    continue
                path = dtw_align(s, t, feature)
                xs.append(getattr(s, feature)[path.src_index])
                ys.append(getattr(t, feature)[path.tgt_index])
            if not xs:
                raise ValueError("no non-silent training frames")
            self.pairs[feature] = (np.vstack(xs), np.vstack(ys))
        return self.pairs[feature]

    def frames(self, who: str, feature: str) -> np.ndarray:
        tracks = self.src_tracks if who == "src" else self.tgt_tracks
        return np.vstack([getattr(t, feature) for t in tracks])

    def f0_tracks(self, who: str):
        return [t.f0 for t in (self.src_tracks if who == "src" else self.tgt_tracks)]

    def mean_energy(self, who: str) -> float:
        tracks = self.src_tracks if who == "src" else self.tgt_tracks
        e = np.concatenate([t.energy for t in tracks])
        e = e[np.isfinite(e)]
        return float(e.mean()) if e.size else 0.0


@dataclass
class ConversionModel:
    """Spectral model of one method plus F0 statistics and a global energy shift."""

    method: str
    spectral: object
    f0_stats: F0Stats
    energy_shift: float = 0.0

    @property
    def feature(self) -> str:
        return METHOD_FEATURE[self.method]

    def convert_spectral(self, frames: np.ndarray) -> np.ndarray:
        m = self.spectral
        if self.method == "jdgmm":
            return convert_jdgmm(m, frames)
        if self.method == "dfw":
            return convert_dfw(m, frames)
        if self.method == "wfw":
            return convert_wfw(m, frames)
        if self.method == "mfa":
            return convert_mfa(m, frames)
        return convert_blfwas(m, frames)

    def convert_track(self, ft: FeatureTrack) -> FeatureTrack:
        """Convert the non-silent frames of `ft`; silent frames pass through."""
        live = ~ft.silent
        lsf, mcc = ft.lsf.copy(), ft.mcc.copy()
        if np.any(live):
            if self.feature == "lsf":
                lsf[live] = self.convert_spectral(ft.lsf[live])
                conv = mcc_from_lsf(lsf[live])
                conv[:, 0] = ft.mcc[live, 0] + 0.5 * self.energy_shift
                mcc[live] = conv
            else:
                mcc[live] = self.convert_spectral(ft.mcc[live])
                mcc[live, 0] = ft.mcc[live, 0] + 0.5 * self.energy_shift
                lsf[live] = lsf_from_mcc(mcc[live])
        energy = np.where(live, ft.energy + self.energy_shift, ft.energy)
        return ft.replace(f0=convert_f0(self.f0_stats, ft.f0), lsf=lsf, mcc=mcc, energy=energy)


def train_method(method: str, data: ParallelData, seed: int = 0, prior: MfaPrior | None = None,
                 prior_sets=None) -> ConversionModel:
    """Train one method on a direction's parallel data.

    MFA needs either a trained `prior` or raw `prior_sets` (per-speaker MCC
    frames) to train one.
    """
    check_method(method)
    feature = METHOD_FEATURE[method]
    x, y = data.aligned(feature)
    if method == "jdgmm":
        spectral = train_jdgmm(x, y, JDGMM_COMPONENTS, seed)
    elif method in ("dfw", "wfw"):
        gmm = train_em(x, min(DFW_COMPONENTS, len(x) // 10), "full", seed)
        spectral = train_dfw(x, y, gmm) if method == "dfw" else train_wfw(x, y, gmm)
    elif method == "blfwas":
        gmm = train_em(x[:, 1:], min(BLFWAS_COMPONENTS, len(x) // 10), "full", seed)
        spectral = train_blfwas(x, y, gmm)
    else:
        if prior is None:
            if prior_sets is None:
                raise ValueError("MFA needs prior data or a trained prior")
            prior = train_mfa_prior(prior_sets, MFA_COMPONENTS, IDENTITY_DIM, seed)
        spectral = train_mfa(prior, data.frames("src", "mcc"), data.frames("tgt", "mcc"), x, y)
    stats = fit_f0_stats(data.f0_tracks("src"), data.f0_tracks("tgt"))
    shift = data.mean_energy("tgt") - data.mean_energy("src")
    return ConversionModel(method, spectral, stats, shift)


# -- serialisation ---------------------------------------------------------

def _gmm_entries(prefix: str, g: Gmm) -> dict:
    return {
        f"{prefix}.kind": np.array([_KIND_CODE[g.kind]], dtype="u1"),
        f"{prefix}.weights": g.weights,
        f"{prefix}.means": g.means,
        f"{prefix}.covariances": g.covariances,
    }


def _gmm_from(prefix: str, d: dict) -> Gmm:
    return Gmm(d[f"{prefix}.weights"], d[f"{prefix}.means"], d[f"{prefix}.covariances"],
               COVARIANCE_KINDS[int(d[f"{prefix}.kind"][0])])


def _model_entries(m: ConversionModel) -> dict:
    s = m.f0_stats
    out = {"f0_stats": np.array([s.mu_src, s.sigma_src, s.mu_tgt, s.sigma_tgt]),
           "energy_shift": np.array([m.energy_shift])}
    sp = m.spectral
    if m.method == "jdgmm":
        out.update(_gmm_entries("joint", sp.joint.gmm))
        out.update({"dx": np.array([sp.joint.dx], dtype="<i8"), "A": sp.A, "b": sp.b,
                    "project": np.array([int(sp.project)], dtype="u1")})
    elif m.method in ("dfw", "wfw"):
        dfw = sp if m.method == "dfw" else sp.dfw
        out.update(_gmm_entries("classes", dfw.class_gmm))
        out.update({"bx": dfw.breakpoints_x, "by": dfw.breakpoints_y})
        if m.method == "wfw":
            out["corrections"] = sp.corrections
    elif m.method == "blfwas":
        out.update(_gmm_entries("classes", sp.class_gmm))
        out.update({"alphas": sp.alphas, "offsets": sp.offsets})
    else:
        out.update(_gmm_entries("prior", sp.prior.gmm))
        out.update({"loadings": sp.prior.loadings, "v_src": sp.v_src, "v_tgt": sp.v_tgt,
                    "psi": sp.psi, "C": sp.C, "e": sp.e})
    return out


def _model_from(method: str, d: dict) -> ConversionModel:
    stats = F0Stats(*[float(v) for v in d["f0_stats"]])
    if method == "jdgmm":
        joint = JointGmm(_gmm_from("joint", d), int(d["dx"][0]))
        sp = JdgmmModel(joint, d["A"], d["b"], bool(d["project"][0]))
    elif method in ("dfw", "wfw"):
        sp = DfwModel(_gmm_from("classes", d), d["bx"], d["by"])
        if method == "wfw":
            sp = WfwModel(sp, d["corrections"])
    elif method == "blfwas":
        sp = BlfwasModel(_gmm_from("classes", d), d["alphas"], d["offsets"])
    else:
        prior = MfaPrior(_gmm_from("prior", d), d["loadings"])
        sp = MfaModel(prior, d["v_src"], d["v_tgt"], d["psi"], d["C"], d["e"])
    return ConversionModel(method, sp, stats, float(d["energy_shift"][0]))


def model_to_bytes(m: ConversionModel) -> bytes:
    """``VCM1``, method tag, then named little-endian arrays."""
    tag = m.method.encode("ascii")
    entries = _model_entries(m)
    chunks = [_MODEL_MAGIC, struct.pack("<H", len(tag)), tag, struct.pack("<I", len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        if arr.dtype.kind == "f":
            arr = arr.astype("<f8")
        elif arr.dtype.kind in "iu" and arr.dtype != np.dtype("u1"):
            arr = arr.astype("<i8")
        key = name.encode("ascii")
        chunks.append(struct.pack("<H", len(key)) + key)
        chunks.append(struct.pack("<BB", _DTYPE_CODE[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(chunks)


def model_from_bytes(raw: bytes) -> ConversionModel:
    if raw[:4] != _MODEL_MAGIC:
        raise ValueError("not a VCM1 model file")
    pos = 4
    (n,) = struct.unpack_from("<H", raw, pos)
    pos += 2
    method = check_method(raw[pos:pos + n].decode("ascii"))
    pos += n
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    d = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + n].decode("ascii")
        pos += n
        code, ndim = struct.unpack_from("<BB", raw, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        dt = np.dtype(_DTYPES[code])
        size = int(np.prod(shape)) if ndim else 1
        d[name] = np.frombuffer(raw, dtype=dt, count=size, offset=pos).reshape(shape).copy()
        pos += size * dt.itemsize
    if pos != len(raw):
        raise ValueError("trailing bytes in model file")
    return _model_from(method, d)


def save_model(m: ConversionModel, path) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(model_to_bytes(m))


def load_model(path) -> ConversionModel:
    with open(os.fspath(path), "rb") as fh:
        return model_from_bytes(fh.read())
