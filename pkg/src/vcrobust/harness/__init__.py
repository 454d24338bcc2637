"""Experiment harness: corpora, matrices, the runner and result tables."""

from .corpus import CorpusManifest, generate_synthetic_corpus, split_ids
from .matrix import BASELINE, ExperimentMatrix, NoiseCondition, all_conditions, all_directions
from .results import Cell, ResultTable, emit_tables, table_from_csv, table_to_csv, table_to_markdown
from .runner import collect_results, per_utterance_scores, run_fingerprint, run_matrix
from .spectrogram import read_pgm, render_spectrogram, spectrogram_image

__all__ = [
    "BASELINE", "Cell", "CorpusManifest", "ExperimentMatrix", "NoiseCondition", "ResultTable",
    "all_conditions", "all_directions", "collect_results", "emit_tables", "generate_synthetic_corpus",
    "per_utterance_scores", "read_pgm", "render_spectrogram", "run_fingerprint", "run_matrix",
    "spectrogram_image", "split_ids", "table_from_csv", "table_to_csv", "table_to_markdown",
]
