"""Experiment runner: noise corruption, enhancement, training, conversion
and scoring for every cell of an experiment matrix.

Work is split into jobs, one per (direction, noise condition, enhancer).
Each job trains all methods of the matrix and writes one JSON file with
per-utterance scores, so an interrupted run resumes by skipping finished
jobs. Features are cached per (enhancer, condition, speaker, utterance).
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import tempfile
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..alignment import dtw_arrays
from ..enhancement import EnhancerConfig, enhance
from ..gmm import Gmm
from ..metrics import fw_seg_snr, mcd
from ..noise_mixer import SnrSpec, generate_noise, mix_at_snr
from ..signal_io import Waveform
from ..vc.mfa import IDENTITY_DIM, MFA_COMPONENTS, MfaPrior, train_mfa_prior
from ..vc.model import ParallelData, train_method
from ..vocoder import FeatureTrack, analyze, synthesize, uniform_lsf
from .corpus import CorpusManifest
from .matrix import BASELINE, ExperimentMatrix, NoiseCondition
from .results import Cell, ResultTable, table_to_csv, table_to_markdown

logger = logging.getLogger(__name__)

CELL_DIR = "cells"
CACHE_DIR = "cache"
RESULTS_CSV = "results.csv"
RESULTS_MD = "results.md"


def stable_seed(*parts) -> int:
    """Process-independent 31-bit seed from a tuple of labels."""
    return zlib.crc32("/".join(str(p) for p in parts).encode()) & 0x7FFFFFFF


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def enhancer_key(e: EnhancerConfig) -> str:
    """The enhancer kind, plus a parameter hash for non-default settings."""
    if e == EnhancerConfig(e.kind):
        return e.kind
    digest = hashlib.sha256(json.dumps(e.to_dict(), sort_keys=True).encode()).hexdigest()[:8]
    return f"{e.kind}-{digest}"


@dataclass(frozen=True)
class Job:
    source: str
    target: str
    condition: NoiseCondition
    enhancer: EnhancerConfig

    @property
    def name(self) -> str:
        return f"{self.source}-{self.target}__{self.condition.label}__{enhancer_key(self.enhancer)}"


# -- signal preparation -------------------------------------------------------

def corrupted(manifest: CorpusManifest, speaker: str, utt: str, cond: NoiseCondition, seed: int) -> Waveform:
    """The clean file mixed with seeded noise of `cond` (clean passes through)."""
    w = manifest.load(speaker, utt)
    if cond.is_clean:
        return w
    nseed = stable_seed(seed, "noise", cond.kind, speaker, utt)
    noise = generate_noise(cond.kind, len(w), seed=nseed, sample_rate=w.sample_rate)
    return mix_at_snr(w, noise, SnrSpec(cond.snr_db, cond.kind, 0, nseed))


def noisy_roles(matrix: ExperimentMatrix) -> set:
    """Roles whose waveforms receive the matrix noise."""
    if matrix.noise_applies_to == "both":
        return {"target_train", "source_train", "source_test"}
    return {"target_train"}


def prepared_waveform(manifest, matrix, job: Job, role: str, speaker: str, utt: str) -> Waveform:
    """Input waveform of one role after corruption and enhancement.

    Roles: ``source_train``, ``target_train``, ``source_test``, ``prior``.
    """
    cond = job.condition if role in noisy_roles(matrix) else NoiseCondition()
    return enhance(corrupted(manifest, speaker, utt, cond, matrix.seed), job.enhancer)


class FeatureCache:
    """Analysed tracks on disk, keyed by enhancer, condition and file."""

    def __init__(self, root: Path, fingerprint: str):
        self.root = Path(root) / fingerprint

    def _path(self, enhancer, cond_label, speaker, utt) -> Path:
        return self.root / enhancer_key(enhancer) / cond_label / f"{speaker}_{utt}.npz"

    def get(self, enhancer: EnhancerConfig, cond_label: str, speaker: str, utt: str, make) -> FeatureTrack:
        path = self._path(enhancer, cond_label, speaker, utt)
        if path.exists():
            with np.load(path) as z:
                return FeatureTrack(z["f0"], z["lsf"], z["mcc"], z["energy"])
        ft = analyze(make())
        buf = _npz_bytes(f0=ft.f0, lsf=ft.lsf, mcc=ft.mcc, energy=ft.energy)
        _atomic_write(path, buf)
        return ft


def _npz_bytes(**arrays) -> bytes:
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


# -- MFA prior ---------------------------------------------------------------

def _prior_path(out: Path, fingerprint: str, enhancer: EnhancerConfig) -> Path:
    return out / CACHE_DIR / fingerprint / enhancer_key(enhancer) / "mfa_prior.npz"


def load_or_train_prior(manifest, matrix, out: Path, fingerprint: str, enhancer: EnhancerConfig,
                        cache: FeatureCache) -> MfaPrior:
    """MFA prior from the (enhanced, clean) prior speakers, stored once per enhancer."""
    path = _prior_path(out, fingerprint, enhancer)
    if path.exists():
        with np.load(path) as z:
            g = Gmm(z["weights"], z["means"], z["covariances"], "diag")
            return MfaPrior(g, z["loadings"])
    speakers = manifest.prior_speakers or manifest.parallel_speakers
    job = Job("", "", NoiseCondition(), enhancer)
    sets = []
    for spk in speakers:
        utts = manifest.utt_ids(spk) if spk in manifest.prior_speakers else manifest.train_utt_ids
        tracks = [cache.get(enhancer, "clean", spk, u,
                            lambda s=spk, u=u: prepared_waveform(manifest, matrix, job, "prior", s, u))
                  for u in utts]
        sets.append(np.vstack([t.trimmed().mcc for t in tracks]))
    prior = train_mfa_prior(sets, MFA_COMPONENTS, IDENTITY_DIM, stable_seed(matrix.seed, "prior"))
    _atomic_write(path, _npz_bytes(weights=prior.gmm.weights, means=prior.gmm.means,
                                   covariances=prior.gmm.covariances, loadings=prior.loadings))
    return prior


# -- scoring -----------------------------------------------------------------

def on_target_timeline(conv: FeatureTrack, conv_live: np.ndarray, ref: FeatureTrack) -> FeatureTrack:
    """Converted frames re-timed onto the reference's frames by DTW on c1..c24.

    Reference silent frames become digital silence.
    """
    ref_live = ~ref.silent
    n = len(ref)
    f0 = np.zeros(n)
    lsf = np.tile(uniform_lsf(conv.lsf.shape[1]), (n, 1))
    mcc = np.zeros((n, conv.mcc.shape[1]))
    energy = np.full(n, -np.inf)
    src_rows = np.flatnonzero(conv_live)
    dst_rows = np.flatnonzero(ref_live)
    if len(src_rows) and len(dst_rows):
        path = dtw_arrays(ref.mcc[dst_rows, 1:], conv.mcc[src_rows, 1:])
        # first converted frame matched to each reference frame
        first = np.full(len(dst_rows), -1)
        for i, j in path.pairs[::-1]:
            first[i] = j
        pick = src_rows[first]
        f0[dst_rows] = conv.f0[pick]
        lsf[dst_rows] = conv.lsf[pick]
        mcc[dst_rows] = conv.mcc[pick]
        energy[dst_rows] = conv.energy[pick]
    return FeatureTrack(f0, lsf, mcc, energy, conv.hop, conv.sample_rate)


def score_utterance(conv: FeatureTrack, src_live: np.ndarray, ref: FeatureTrack, ref_wav: Waveform,
                    seed: int) -> tuple:
    """(MCD against the clean reference, quality proxy of the resynthesis)."""
    d = mcd(ref.trimmed().mcc, conv.mcc[src_live])
    timed = on_target_timeline(conv, src_live, ref)
    q = fw_seg_snr(ref_wav, synthesize(timed, seed=seed), magnitude=True)
    return float(d), float(q)


# -- jobs --------------------------------------------------------------------

def run_job(manifest: CorpusManifest, matrix: ExperimentMatrix, job: Job, out: Path, fingerprint: str,
            prior: MfaPrior | None, prior_error: str | None = None) -> dict:
    """Train and score every method of one job; never raises."""
    record = {"job": job.name, "fingerprint": fingerprint, "methods": {}}
    cache = FeatureCache(out / CACHE_DIR, fingerprint)
    enh = job.enhancer

    def feats(role, speaker, utt):
        noisy = role in noisy_roles(matrix) and not job.condition.is_clean
        label = job.condition.label if noisy else "clean"
        return cache.get(enh, label, speaker, utt,
                         lambda: prepared_waveform(manifest, matrix, job, role, speaker, utt))

    try:
        src_train = [feats("source_train", job.source, u) for u in manifest.train_utt_ids]
        tgt_train = [feats("target_train", job.target, u) for u in manifest.train_utt_ids]
        tests = []
        for u in manifest.test_utt_ids:
            src = feats("source_test", job.source, u)
            ref_wav = manifest.load(job.target, u)
            ref = cache.get(EnhancerConfig("none"), "reference", job.target, u, lambda w=ref_wav: w)
            tests.append((u, src, ref, ref_wav))
        data = ParallelData.from_tracks(src_train, tgt_train)
    except Exception as exc:  # noqa: BLE001 - recorded as an error cell
        msg = f"{type(exc).__name__}: {exc}"
        logger.error("job %s failed during preparation: %s", job.name, msg)
        for m in matrix.scored_methods:
            record["methods"][m] = {"error": msg}
        return record

    for method in matrix.scored_methods:
        try:
            model = None
            if method == "mfa" and prior is None:
                raise RuntimeError(prior_error or "no MFA prior available")
            if method != BASELINE:
                model = train_method(method, data, seed=stable_seed(matrix.seed, job.name, method), prior=prior)
            mcds, quals = [], []
            for u, src, ref, ref_wav in tests:
                conv = src if model is None else model.convert_track(src)
                d, q = score_utterance(conv, ~src.silent, ref, ref_wav,
                                       seed=stable_seed(matrix.seed, job.name, method, u))
                mcds.append(d)
                quals.append(q)
            record["methods"][method] = {"utts": list(manifest.test_utt_ids), "mcd": mcds, "quality": quals}
        except Exception as exc:  # noqa: BLE001 - recorded as an error cell
            msg = f"{type(exc).__name__}: {exc}"
            logger.error("job %s method %s failed: %s", job.name, method, msg)
            logger.debug("%s", traceback.format_exc())
            record["methods"][method] = {"error": msg}
    return record


def _job_path(out: Path, job: Job) -> Path:
    return out / CELL_DIR / f"{job.name}.json"


def _load_record(path: Path, fingerprint: str):
    try:
        rec = json.loads(path.read_text())
    except (OSError, ValueError):
        return None
    return rec if rec.get("fingerprint") == fingerprint else None


def _complete(rec) -> bool:
    """A stored job counts as done only if every method scored; errors are retried."""
    return rec is not None and not any("error" in r for r in rec["methods"].values())


def _worker(args):
    manifest_dict, root, matrix_dict, job, out, fingerprint, prior_path, prior_error = args
    manifest = CorpusManifest(manifest_dict["speakers"], manifest_dict["utterances"],
                              manifest_dict["train_utt_ids"], manifest_dict["test_utt_ids"], root=root,
                              seed=manifest_dict.get("seed"))
    matrix = ExperimentMatrix.from_dict(matrix_dict)
    prior = None
    if prior_path is not None:
        with np.load(prior_path) as z:
            prior = MfaPrior(Gmm(z["weights"], z["means"], z["covariances"], "diag"), z["loadings"])
    rec = run_job(manifest, matrix, job, Path(out), fingerprint, prior, prior_error)
    _atomic_write(_job_path(Path(out), job), (json.dumps(rec, indent=1) + "\n").encode())
    return job.name


def matrix_jobs(matrix: ExperimentMatrix) -> list:
    return [Job(a, b, cond, enh) for enh in matrix.enhancers for cond in matrix.noise_conditions
            for a, b in matrix.conversion_directions]


def run_fingerprint(manifest: CorpusManifest, matrix: ExperimentMatrix) -> str:
    """Hash of the settings shared by all jobs; job names carry the rest."""
    key = json.dumps({"manifest": manifest.to_dict(), "seed": matrix.seed,
                      "scope": matrix.noise_applies_to}, sort_keys=True)
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def run_matrix(manifest: CorpusManifest, matrix: ExperimentMatrix, out, workers: int = 1,
               max_jobs: int | None = None) -> ResultTable:
    """Run (or resume) every job of `matrix` and aggregate the result table.

    `max_jobs` stops after that many newly computed jobs (used to test
    resumption); the returned table then has error cells for the rest.
    Writes per-job JSON files plus ``results.csv`` and ``results.md``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for spk in {s for d in matrix.conversion_directions for s in d}:
        if spk not in manifest.parallel_speakers:
            raise ValueError(f"direction speaker {spk!r} is not a parallel speaker of the manifest")
    fp = run_fingerprint(manifest, matrix)
    (out / "matrix.json").write_text(json.dumps(matrix.to_dict(), indent=1) + "\n")

    jobs = matrix_jobs(matrix)
    todo = [j for j in jobs if not _complete(_load_record(_job_path(out, j), fp))]
    if max_jobs is not None:
        todo = todo[:max_jobs]
    logger.info("%d jobs, %d to run", len(jobs), len(todo))

    cache = FeatureCache(out / CACHE_DIR, fp)
    prior_paths, prior_errors = {}, {}
    if "mfa" in matrix.methods:
        for enh in {j.enhancer for j in todo}:
            try:
                load_or_train_prior(manifest, matrix, out, fp, enh, cache)
                prior_paths[enh] = _prior_path(out, fp, enh)
            except Exception as exc:  # noqa: BLE001 - becomes mfa error cells
                prior_errors[enh] = f"MFA prior: {type(exc).__name__}: {exc}"
                logger.error("%s (enhancer %s)", prior_errors[enh], enhancer_key(enh))

    args = [(manifest.to_dict(), manifest.root, matrix.to_dict(), j, str(out), fp, prior_paths.get(j.enhancer),
             prior_errors.get(j.enhancer)) for j in todo]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for name in pool.map(_worker, args):
                logger.info("finished %s", name)
    else:
        for a in args:
            logger.info("finished %s", _worker(a))

    table = collect_results(matrix, out, fp)
    (out / RESULTS_CSV).write_text(table_to_csv(table))
    (out / RESULTS_MD).write_text(table_to_markdown(table))
    return table


def collect_results(matrix: ExperimentMatrix, out, fingerprint: str) -> ResultTable:
    """Aggregate job files into per-(method, enhancer, noise, SNR) means."""
    out = Path(out)
    table = ResultTable()
    records = {}
    for j in matrix_jobs(matrix):
        records[j] = _load_record(_job_path(out, j), fingerprint)
    for method in matrix.scored_methods:
        for enh in matrix.enhancers:
            for cond in matrix.noise_conditions:
                mcds, quals, errors = [], [], []
                for a, b in matrix.conversion_directions:
                    rec = records[Job(a, b, cond, enh)]
                    if rec is None:
                        errors.append(f"{a}-{b}: not computed")
                        continue
                    r = rec["methods"].get(method)
                    if r is None or "error" in r:
                        errors.append(f"{a}-{b}: {r['error'] if r else 'missing'}")
                        continue
                    mcds.extend(r["mcd"])
                    quals.extend(r["quality"])
                if errors:
                    cell = Cell(float("nan"), float("nan"), len(mcds), "; ".join(errors))
                else:
                    cell = Cell(float(np.mean(mcds)), float(np.mean(quals)), len(mcds))
                table.add(method, enhancer_key(enh), cond.kind, cond.snr_db, cell)
    return table


def per_utterance_scores(matrix: ExperimentMatrix, out, manifest: CorpusManifest) -> dict:
    """Raw per-utterance scores: ``{(method, enhancer, noise label, direction): (mcd, quality)}``."""
    fp = run_fingerprint(manifest, matrix)
    result = {}
    for j in matrix_jobs(matrix):
        rec = _load_record(_job_path(Path(out), j), fp)
        if rec is None:
            continue
        for method, r in rec["methods"].items():
            if "error" not in r:
                result[(method, enhancer_key(j.enhancer), j.condition.label, (j.source, j.target))] = (
                    np.array(r["mcd"]), np.array(r["quality"]))
    return result
