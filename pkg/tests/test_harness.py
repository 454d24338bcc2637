import json
import math

import numpy as np
import pytest

from vcrobust.enhancement import EnhancerConfig
from vcrobust.harness import runner
from vcrobust.harness.corpus import CorpusManifest, generate_synthetic_corpus, split_ids
from vcrobust.harness.matrix import ExperimentMatrix, NoiseCondition, all_conditions, all_directions
from vcrobust.harness.results import (CSV_COLUMNS, Cell, ResultTable, emit_tables, table_from_csv, table_to_csv,
                                      table_to_markdown)
from vcrobust.harness.runner import (Job, collect_results, per_utterance_scores, prepared_waveform, run_fingerprint,
                                     run_matrix)
from vcrobust.harness.spectrogram import read_pgm, render_spectrogram, spectrogram_image
from vcrobust.metrics import mcd
from vcrobust.noise_mixer import SnrSpec, generate_noise, mix_at_snr
from vcrobust.signal_io import Waveform
from vcrobust.synth import Voice, random_script, render
from vcrobust.vocoder import analyze

from conftest import sine


# -- corpus -------------------------------------------------------------------

def test_corpus_determinism(tmp_path):
    a = generate_synthetic_corpus(5, 2, 2, tmp_path / "a", n_prior_speakers=2, n_prior_utts=1)
    b = generate_synthetic_corpus(5, 2, 2, tmp_path / "b", n_prior_speakers=2, n_prior_utts=1)
    assert a.to_dict() == b.to_dict()
    for spk in a.utterances:
        for u in a.utt_ids(spk):
            assert a.wav_path(spk, u).read_bytes() == b.wav_path(spk, u).read_bytes()
    c = generate_synthetic_corpus(6, 2, 2, tmp_path / "c", n_prior_speakers=2, n_prior_utts=1)
    assert a.wav_path("m1", "u0001").read_bytes() != c.wav_path("m1", "u0001").read_bytes()


def test_corpus_split_sizes(tmp_path):
    m = generate_synthetic_corpus(0, 30, 20, tmp_path, n_prior_speakers=1, n_prior_utts=1)
    assert m.parallel_speakers == ["m1", "m2", "f1", "f2"]
    for spk in m.parallel_speakers:
        assert len(m.utt_ids(spk)) == 50
    assert not set(m.train_utt_ids) & set(m.test_utt_ids)
    assert m.train_utt_ids[0] == "u0001" and m.test_utt_ids[0] == "u0051" and m.test_utt_ids[-1] == "u0070"
    loaded = CorpusManifest.load_json(tmp_path / "manifest.json")
    assert loaded.to_dict() == m.to_dict()


def test_speakers_differ(small_corpus):
    u = small_corpus.train_utt_ids[0]
    tracks = {s: analyze(small_corpus.load(s, u)).trimmed() for s in small_corpus.parallel_speakers}
    names = list(tracks)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            assert mcd(tracks[a].mcc, tracks[b].mcc) >= 2.0


def test_same_speaker_reanalysis(small_corpus):
    # the stored 16-bit file analyses like the float render it came from
    from vcrobust.harness.corpus import MAIN_VOICES, _render_seed

    u = small_corpus.train_utt_ids[0]
    script = random_script(np.random.default_rng([small_corpus.seed, int(u[1:])]))
    for k, (sid, f0, scale, tilt) in enumerate(MAIN_VOICES):
        fresh = render(script, Voice(sid, f0, scale, tilt), seed=_render_seed(small_corpus.seed, k, u))
        stored = small_corpus.load(sid, u)
        assert mcd(analyze(fresh).trimmed().mcc, analyze(stored).trimmed().mcc) <= 0.5


def test_manifest_validation(tmp_path):
    with pytest.raises(ValueError):
        CorpusManifest([{"id": "a"}], {"a": [{"utt_id": "u1", "wav": "x"}]}, ["u1"], ["u1"])
    with pytest.raises(ValueError):
        CorpusManifest([{"id": "a"}], {"a": []}, ["u1"], ["u2"])
    with pytest.raises(ValueError):
        generate_synthetic_corpus(0, 1, 2, tmp_path)
    assert split_ids(3, 2) == (["u0001", "u0002", "u0003"], ["u0051", "u0052"])


# -- matrix -------------------------------------------------------------------

def test_noise_condition_parsing():
    assert NoiseCondition.parse("clean").is_clean
    c = NoiseCondition.parse("white:10")
    assert c.kind == "white" and c.snr_db == 10.0 and c.label == "white_10dB"
    assert NoiseCondition.parse({"kind": "volvo", "snr_db": 0}).kind == "volvo_like"
    assert len(all_conditions()) == 10
    assert len(all_directions(["m1", "m2", "f1", "f2"])) == 12
    with pytest.raises(ValueError):
        NoiseCondition("white")


def test_matrix_validation_and_round_trip(tmp_path):
    m = ExperimentMatrix([("m1", "f1")], ["clean", "white:0"], ["none", "ss"], ["jdgmm"])
    m.save(tmp_path / "m.json")
    back = ExperimentMatrix.load(tmp_path / "m.json")
    assert back.to_dict() == m.to_dict()
    d = json.loads((tmp_path / "m.json").read_text())
    d["conversion_directions"] = "all"
    assert len(ExperimentMatrix.from_dict(d, ["a", "b", "c"]).conversion_directions) == 6
    with pytest.raises(ValueError):
        ExperimentMatrix([("m1", "f1")], methods=["ann"])
    with pytest.raises(ValueError):
        ExperimentMatrix([("m1", "m1")])
    with pytest.raises(ValueError):
        ExperimentMatrix([])
    with pytest.raises(ValueError):
        ExperimentMatrix([("m1", "f1")], noise_applies_to="source")


def test_noise_scope(small_corpus):
    cond = NoiseCondition("white", 0.0)
    job = Job("m1", "f1", cond, EnhancerConfig("none"))
    u = small_corpus.train_utt_ids[0]
    t = small_corpus.test_utt_ids[0]
    default = ExperimentMatrix([("m1", "f1")], [cond])
    clean_src = small_corpus.load("m1", u).samples
    assert np.array_equal(prepared_waveform(small_corpus, default, job, "source_train", "m1", u).samples, clean_src)
    assert np.array_equal(prepared_waveform(small_corpus, default, job, "source_test", "m1", t).samples,
                          small_corpus.load("m1", t).samples)
    assert not np.array_equal(prepared_waveform(small_corpus, default, job, "target_train", "f1", u).samples,
                              small_corpus.load("f1", u).samples)
    both = ExperimentMatrix([("m1", "f1")], [cond], noise_applies_to="both")
    assert not np.array_equal(prepared_waveform(small_corpus, both, job, "source_train", "m1", u).samples, clean_src)
    assert run_fingerprint(small_corpus, default) != run_fingerprint(small_corpus, both)


def test_enhancer_applied_to_clean_inputs(small_corpus):
    job = Job("m1", "f1", NoiseCondition(), EnhancerConfig("ss"))
    m = ExperimentMatrix([("m1", "f1")], ["clean"], ["ss"])
    u = small_corpus.train_utt_ids[0]
    assert not np.array_equal(prepared_waveform(small_corpus, m, job, "source_train", "m1", u).samples,
                              small_corpus.load("m1", u).samples)


# -- results --------------------------------------------------------------------

def _table():
    rt = ResultTable()
    rt.add("source", "none", "clean", None, Cell(8.5, 1.25, 4))
    rt.add("jdgmm", "none", "clean", None, Cell(1.5, 3.0, 4))
    rt.add("dfw", "none", "clean", None, Cell(6.0, 4.5, 4))
    rt.add("jdgmm", "none", "white", 10.0, Cell(2.0 / 3.0, 0.1, 4))
    return rt


def test_csv_round_trip():
    rt = _table()
    text = table_to_csv(rt)
    assert text.splitlines()[0].startswith(",".join(CSV_COLUMNS))
    assert table_from_csv(text) == rt


def test_single_cell_csv():
    rt = ResultTable()
    rt.add("jdgmm", "none", "clean", None, Cell(1.0, 2.0, 3))
    assert len(table_to_csv(rt).strip().splitlines()) == 2


def test_markdown_bolding(tmp_path):
    md = table_to_markdown(_table())
    rows = {line.split("|")[1].strip(): line for line in md.splitlines() if line.startswith("| ")}
    assert "**1.50**" in rows["jdgmm"] and "**4.50**" in rows["dfw"]
    assert "**8.50**" not in rows["source"]
    assert "not PESQ" in md
    emit_tables(_table(), "md", tmp_path / "t.md")
    emit_tables(_table(), "csv", tmp_path / "t.csv")
    assert table_from_csv((tmp_path / "t.csv").read_text()) == _table()
    with pytest.raises(ValueError):
        emit_tables(_table(), "xlsx", tmp_path / "t.x")


# -- spectrogram ------------------------------------------------------------------

def test_spectrogram_silence(tmp_path):
    render_spectrogram(Waveform(np.zeros(8000)), tmp_path / "s.pgm")
    img = read_pgm(tmp_path / "s.pgm")
    assert img.shape[0] == 257 and img.max() <= 10
    assert (tmp_path / "s.pgm").read_bytes().startswith(b"P5")


def test_spectrogram_tone_band():
    img = spectrogram_image(sine(4000.0, 1.0))
    rows = np.argmax(img.mean(axis=1))
    assert abs(rows - img.shape[0] // 2) <= 1
    assert img[rows].mean() > 240 and np.median(img) < 60


def test_spectrogram_low_noise_brightens_bottom(small_corpus):
    w = small_corpus.load("m1", small_corpus.train_utt_ids[0])
    noisy = mix_at_snr(w, generate_noise("volvo", len(w), 1), SnrSpec(0.0))
    clean_img = spectrogram_image(w).astype(float)
    noisy_img = spectrogram_image(noisy).astype(float)
    assert noisy_img[-8:].mean() > clean_img[-8:].mean()


def test_spectrogram_empty():
    with pytest.raises(ValueError):
        spectrogram_image(Waveform(np.zeros(0)))


# -- running ------------------------------------------------------------------------

def _small_matrix(**kw):
    kw.setdefault("methods", ["jdgmm", "blfwas"])
    return ExperimentMatrix([("m1", "f1"), ("f1", "m1")], ["clean", "white:10"], ["none"], **kw)


@pytest.fixture(scope="module")
def first_run(small_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return out, run_matrix(small_corpus, _small_matrix(), out)


def test_run_outputs(first_run, small_corpus):
    out, table = first_run
    assert not table.errors
    assert len(table) == 3 * 2
    for key, cell in table.cells.items():
        assert cell.count == 2 * len(small_corpus.test_utt_ids)
        assert math.isfinite(cell.mcd_db) and -10 <= cell.quality <= 35
    assert table_from_csv((out / "results.csv").read_text()) == table
    assert (out / "results.md").exists() and (out / "matrix.json").exists()


def test_conversion_helps_per_utterance(first_run, small_corpus):
    out, _ = first_run
    scores = per_utterance_scores(_small_matrix(), out, small_corpus)
    better = total = 0
    for d in (("m1", "f1"), ("f1", "m1")):
        conv = scores[("jdgmm", "none", "clean", d)][0]
        base = scores[("source", "none", "clean", d)][0]
        better += int(np.sum(conv < base))
        total += len(conv)
    assert better >= 0.9 * total


def test_determinism_and_resume(first_run, small_corpus, tmp_path):
    _, table = first_run
    again = run_matrix(small_corpus, _small_matrix(), tmp_path / "again")
    assert list(again.cells) == list(table.cells)
    for k in table.cells:
        assert abs(again.cells[k].mcd_db - table.cells[k].mcd_db) <= 1e-9
        assert abs(again.cells[k].quality - table.cells[k].quality) <= 1e-9
    partial = run_matrix(small_corpus, _small_matrix(), tmp_path / "resume", max_jobs=1)
    assert partial.errors
    resumed = run_matrix(small_corpus, _small_matrix(), tmp_path / "resume")
    assert resumed == again


def test_error_cells(small_corpus, tmp_path, monkeypatch):
    real = runner.train_method

    def flaky(method, data, **kw):
        if method == "blfwas":
            raise RuntimeError("boom")
        return real(method, data, **kw)

    monkeypatch.setattr(runner, "train_method", flaky)
    m = ExperimentMatrix([("m1", "f1")], ["clean"], ["none"], ["jdgmm", "blfwas"])
    table = run_matrix(small_corpus, m, tmp_path)
    assert set(k[0] for k in table.errors) == {"blfwas"}
    assert "boom" in table.get("blfwas").error
    assert table.get("jdgmm").ok
    assert "error" in (tmp_path / "results.md").read_text()
    monkeypatch.setattr(runner, "train_method", real)
    fixed = run_matrix(small_corpus, m, tmp_path)
    assert not fixed.errors


def test_collect_missing_cells(small_corpus, tmp_path):
    m = ExperimentMatrix([("m1", "f1")], ["clean"], ["none"], ["jdgmm"])
    table = collect_results(m, tmp_path, run_fingerprint(small_corpus, m))
    assert all("not computed" in c.error for c in table.cells.values())


def test_unknown_direction_speaker(small_corpus, tmp_path):
    with pytest.raises(ValueError):
        run_matrix(small_corpus, ExperimentMatrix([("m1", "zz")], ["clean"]), tmp_path)
