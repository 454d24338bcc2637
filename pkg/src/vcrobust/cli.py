"""Command-line entry point: ``vcrobust <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .enhancement import enhance, make_config
from .metrics import fw_seg_snr, mcd
from .noise_mixer import NOISE_KINDS, SnrSpec, generate_noise, measured_snr, mix_at_snr
from .signal_io import read_wav, write_wav
from .vocoder import analyze, read_features, synthesize, write_features

logger = logging.getLogger("vcrobust")


def _features(path):
    """Feature track from a ``.wav`` (analysed) or a VCFT feature file."""
    path = Path(path)
    if path.suffix.lower() == ".wav":
        return analyze(read_wav(path))
    return read_features(path)


def cmd_mix(args) -> int:
    speech = read_wav(args.input)
    if args.noise in NOISE_KINDS or args.noise in ("babble", "volvo"):
        noise = generate_noise(args.noise, len(speech), seed=args.seed, sample_rate=speech.sample_rate)
        offset = 0
    else:
        noise = read_wav(args.noise)
        offset = int(np.random.default_rng(args.seed).integers(len(noise))) if len(noise) else 0
    mixed = mix_at_snr(speech, noise, SnrSpec(args.snr_db, str(args.noise), offset, args.seed))
    clipped = write_wav(mixed, args.out)
    if clipped:
        logger.warning("%d samples clipped while writing %s", clipped, args.out)
    print(f"measured SNR {measured_snr(speech, mixed):.3f} dB")
    return 0


def cmd_enhance(args) -> int:
    overrides = {}
    if args.noise_frames is not None:
        overrides["noise_est_frames"] = args.noise_frames
    if args.oversubtraction is not None:
        overrides["oversubtraction"] = args.oversubtraction
    if args.iterations is not None:
        overrides["wiener_iterations"] = args.iterations
    cfg = make_config(args.method, **overrides)
    write_wav(enhance(read_wav(args.input), cfg), args.out)
    return 0


def cmd_analyze(args) -> int:
    write_features(analyze(read_wav(args.input)), args.out)
    return 0


def _parallel_from_args(args):
    from .harness.corpus import CorpusManifest
    from .vc.model import ParallelData

    prior_sets = None
    if args.manifest:
        if not (args.source and args.target):
            raise SystemExit("--manifest needs --source and --target speaker ids")
        m = CorpusManifest.load_json(args.manifest)
        src = [analyze(m.load(args.source[0], u)) for u in m.train_utt_ids]
        tgt = [analyze(m.load(args.target[0], u)) for u in m.train_utt_ids]
        if args.method == "mfa":
            prior_sets = [np.vstack([analyze(m.load(s, u)).trimmed().mcc for u in m.utt_ids(s)])
                          for s in (m.prior_speakers or m.parallel_speakers)]
    else:
        if not args.source or not args.target or len(args.source) != len(args.target):
            raise SystemExit("--source and --target need equally many parallel files")
        src = [_features(p) for p in args.source]
        tgt = [_features(p) for p in args.target]
    if args.method == "mfa" and prior_sets is None:
        if not args.prior:
            raise SystemExit("mfa needs --prior feature files (one per prior speaker) or --manifest")
        prior_sets = [_features(p).trimmed().mcc for p in args.prior]
    return ParallelData.from_tracks(src, tgt), prior_sets


def cmd_train(args) -> int:
    from .vc.model import save_model, train_method

    data, prior_sets = _parallel_from_args(args)
    model = train_method(args.method, data, seed=args.seed, prior_sets=prior_sets)
    save_model(model, args.out)
    return 0


def cmd_convert(args) -> int:
    from .vc.model import load_model

    model = load_model(args.model)
    conv = model.convert_track(_features(args.input))
    write_features(conv, args.out)
    if args.wav:
        write_wav(synthesize(conv, seed=args.seed), args.wav)
    return 0


def cmd_evaluate(args) -> int:
    tgt = _features(args.target)
    conv = _features(args.converted)
    row = {"mcd_db": mcd(tgt.trimmed().mcc, conv.trimmed().mcc), "quality": ""}
    if Path(args.target).suffix.lower() == ".wav" and Path(args.converted).suffix.lower() == ".wav":
        row["quality"] = fw_seg_snr(read_wav(args.target), read_wav(args.converted), magnitude=True)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=["mcd_db", "quality"], lineterminator="\n")
        w.writeheader()
        w.writerow(row)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_run_matrix(args) -> int:
    from .harness.corpus import CorpusManifest
    from .harness.matrix import ExperimentMatrix
    from .harness.runner import run_matrix

    manifest = CorpusManifest.load_json(args.manifest)
    matrix = ExperimentMatrix.load(args.config, speakers=manifest.parallel_speakers)
    table = run_matrix(manifest, matrix, args.out, workers=args.workers)
    errors = table.errors
    for key, cell in errors.items():
        logger.error("error cell %s: %s", key, cell.error)
    print(f"{len(table)} cells, {len(errors)} errors; results in {args.out}")
    return 1 if errors else 0


def cmd_make_corpus(args) -> int:
    from .harness.corpus import generate_synthetic_corpus

    m = generate_synthetic_corpus(args.seed, args.train, args.test, args.out,
                                  n_prior_speakers=args.prior_speakers)
    print(f"wrote {m.root / 'manifest.json'}")
    return 0


def cmd_table(args) -> int:
    from .harness.results import table_from_csv, table_to_csv, table_to_markdown
    from .harness.runner import RESULTS_CSV

    rt = table_from_csv((Path(args.results) / RESULTS_CSV).read_text())
    text = table_to_csv(rt) if args.format == "csv" else table_to_markdown(rt)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_spectrogram(args) -> int:
    from .harness.spectrogram import render_spectrogram

    render_spectrogram(read_wav(args.input), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vcrobust", description="Noise-robustness experiments for voice conversion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mix", help="add noise at a target SNR")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--noise", required=True, help="noise WAV or one of " + ", ".join(NOISE_KINDS))
    s.add_argument("--snr-db", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser("enhance", help="single-channel speech enhancement")
    s.add_argument("--method", required=True, choices=["none", "ss", "iw", "logmmse",
                                                       "spectral_subtraction", "iterative_wiener", "log_mmse"])
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--noise-frames", type=int)
    s.add_argument("--oversubtraction", type=float)
    s.add_argument("--iterations", type=int)
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("analyze", help="WAV to VCFT feature file")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("train", help="train a conversion model")
    s.add_argument("--method", required=True, choices=["jdgmm", "dfw", "wfw", "mfa", "blfwas"])
    s.add_argument("--source", nargs="+", help="source feature/WAV files, or a speaker id with --manifest")
    s.add_argument("--target", nargs="+", help="parallel target files, or a speaker id with --manifest")
    s.add_argument("--prior", nargs="+", help="MFA prior data, one file per speaker")
    s.add_argument("--manifest", help="take training utterances from a corpus manifest")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("convert", help="convert a feature file with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--wav", help="also write the resynthesized waveform")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("evaluate", help="MCD and quality proxy of a converted utterance")
    s.add_argument("--target", required=True)
    s.add_argument("--converted", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("run-matrix", help="run an experiment matrix")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_run_matrix)

    s = sub.add_parser("make-corpus", help="render the synthetic parallel corpus")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--train", type=int, default=30)
    s.add_argument("--test", type=int, default=20)
    s.add_argument("--prior-speakers", type=int, default=12)
    s.set_defaults(func=cmd_make_corpus)

    s = sub.add_parser("table", help="print a results table")
    s.add_argument("--results", required=True)
    s.add_argument("--format", choices=["md", "markdown", "csv"], default="md")
    s.add_argument("--out")
    s.set_defaults(func=cmd_table)

    s = sub.add_parser("spectrogram", help="render a PGM spectrogram")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_spectrogram)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
