import numpy as np
import pytest
import scipy.signal

from vcrobust.cepstrum import envelope_from_mcc
from vcrobust.signal_io import Waveform
from vcrobust.synth import steady_vowel
from vcrobust.vocoder import (FRAME_HOP, FeatureTrack, analyze, estimate_f0, fractional_pulses, lsf_from_mcc,
                              lsf_log_envelope, mcc_from_lsf, read_features, synthesize, uniform_lsf,
                              write_features)


def sawtooth(f0=200.0, dur=1.0, fs=16000):
    t = np.arange(int(dur * fs)) / fs
    return Waveform(0.5 * scipy.signal.sawtooth(2 * np.pi * f0 * t), fs)


def test_f0_sawtooth():
    f0 = estimate_f0(sawtooth())
    voiced = f0 > 0
    assert voiced.mean() >= 0.9
    assert 198 <= np.median(f0[voiced]) <= 202


@pytest.mark.parametrize("target", [90.0, 137.0, 310.0])
def test_f0_synthetic_vowel(target):
    f0 = estimate_f0(steady_vowel("a", target, 0.8, vibrato=0.0))
    assert abs(np.median(f0[f0 > 0]) - target) <= 0.02 * target


def test_f0_noise_and_silence():
    noise = Waveform(np.random.default_rng(0).normal(0, 0.1, 16000))
    assert (estimate_f0(noise) == 0).mean() >= 0.9
    assert np.all(estimate_f0(Waveform(np.zeros(16000))) == 0)


def test_frame_layout():
    ft = analyze(steady_vowel(duration=0.5))
    assert len(ft) == 8000 // FRAME_HOP
    assert ft.lsf.shape == (len(ft), 14) and ft.mcc.shape == (len(ft), 25)


def test_stationary_vowel_lsfs():
    ft = analyze(steady_vowel("e", 200.0, 1.0, floor_db=200, vibrato=0.0, aspiration=0.0))
    lsf = ft.lsf[5:-5]
    assert np.max(np.abs(np.diff(lsf, axis=0))) <= 0.01


def test_lsf_invariant_on_signals():
    rng = np.random.default_rng(1)
    for w in (steady_vowel("i", 120.0), Waveform(rng.normal(0, 0.3, 8000)), sawtooth(330.0, 0.3)):
        lsf = analyze(w).lsf
        assert np.all(np.diff(lsf, axis=1) > 0) and np.all((lsf > 0) & (lsf < np.pi))


def test_all_zero_input():
    ft = analyze(Waveform(np.zeros(4000)))
    assert np.all(ft.silent)
    assert np.allclose(ft.lsf, uniform_lsf())
    assert np.all(ft.mcc == 0) and np.all(ft.energy == -np.inf)
    assert np.allclose(uniform_lsf(), np.arange(1, 15) * np.pi / 15)


def test_gain_lives_in_c0():
    w = steady_vowel("o", 140.0, 0.5)
    a = analyze(w)
    b = analyze(w.with_samples(0.5 * w.samples))
    assert np.max(np.abs(a.lsf - b.lsf)) <= 1e-9
    assert np.max(np.abs(a.mcc[:, 1:] - b.mcc[:, 1:])) <= 1e-9
    assert np.max(np.abs(b.mcc[:, 0] - a.mcc[:, 0] - np.log(0.5))) <= 1e-9
    assert np.max(np.abs(b.energy - a.energy - 2 * np.log(0.5))) <= 1e-9


def test_mcc_describes_lpc_envelope():
    ft = analyze(steady_vowel("a", 150.0, 0.3))
    t = len(ft) // 2
    env = lsf_log_envelope(ft.lsf[t])
    rebuilt = envelope_from_mcc(ft.mcc[t])
    # gain-free shapes agree up to truncation of the cepstrum
    d = (rebuilt - rebuilt.mean()) - (env - env.mean())
    assert np.sqrt(np.mean(d ** 2)) < 0.15


def test_lsf_mcc_round_trip():
    ft = analyze(steady_vowel("u", 150.0, 0.3)).trimmed()
    back = lsf_from_mcc(mcc_from_lsf(ft.lsf))
    assert np.sqrt(np.mean((back - ft.lsf) ** 2)) <= 0.05


def test_resynthesis_round_trip():
    ft = analyze(steady_vowel("a", 150.0, 1.0))
    ft2 = analyze(synthesize(ft))
    v = (ft.f0 > 0) & (ft2.f0 > 0)
    assert abs(np.median(ft2.f0[v]) - np.median(ft.f0[ft.f0 > 0])) <= 3.0
    inner = slice(10, -10)
    assert np.sqrt(np.mean((ft2.lsf[inner] - ft.lsf[inner]) ** 2)) <= 0.05


def test_synthesis_length_and_gain():
    ft = analyze(steady_vowel("e", 180.0, 0.6))
    a = synthesize(ft)
    b = synthesize(ft.replace(energy=ft.energy + np.log(4.0)))
    assert len(a) == len(ft) * FRAME_HOP
    ratio = np.sum(b.samples ** 2) / np.sum(a.samples ** 2)
    assert abs(ratio - 4.0) <= 0.2


def test_synthesis_silence():
    n = 50
    ft = FeatureTrack(np.zeros(n), np.tile(uniform_lsf(), (n, 1)), np.zeros((n, 25)), np.full(n, -np.inf))
    assert np.all(synthesize(ft).samples == 0)


def test_synthesis_energy_matches_track():
    ft = analyze(steady_vowel("a", 160.0, 0.8))
    y = synthesize(ft)
    ms = np.exp(ft.energy[20:-20]).mean()
    got = np.mean(y.samples[20 * FRAME_HOP:-20 * FRAME_HOP] ** 2)
    assert abs(10 * np.log10(got / ms)) < 1.0


def test_fractional_pulses():
    phase = np.arange(1, 1001) * (1 / 80.0) + 0.3
    p = fractional_pulses(phase, 0.3)
    assert abs(p.sum() - np.floor(phase[-1])) < 1e-12
    assert np.all(p >= 0)


def test_feature_file_round_trip(tmp_path):
    ft = analyze(steady_vowel("i", 120.0, 0.3))
    write_features(ft, tmp_path / "x.feat")
    back = read_features(tmp_path / "x.feat")
    raw = (tmp_path / "x.feat").read_bytes()
    assert raw[:4] == b"VCFT"
    assert len(raw) == 20 + len(ft) * 41 * 4
    assert np.allclose(back.lsf, ft.lsf, rtol=1e-6) and np.allclose(back.mcc, ft.mcc, rtol=1e-5, atol=1e-6)
    assert np.array_equal(back.f0, ft.f0.astype(np.float32))
    (tmp_path / "bad.feat").write_bytes(b"VCFX" + raw[4:])
    with pytest.raises(ValueError):
        read_features(tmp_path / "bad.feat")
    (tmp_path / "short.feat").write_bytes(raw[:-4])
    with pytest.raises(ValueError):
        read_features(tmp_path / "short.feat")


def test_track_helpers():
    ft = analyze(Waveform(np.concatenate([np.zeros(4000), steady_vowel().samples])))
    assert ft.silent[:30].all() and not ft.silent[-30:].any()
    trimmed = ft.trimmed()
    assert len(trimmed) == int((~ft.silent).sum())
    with pytest.raises(ValueError):
        FeatureTrack(np.zeros(3), np.zeros((2, 14)), np.zeros((3, 25)), np.zeros(3))


def test_wrong_rate():
    with pytest.raises(ValueError):
        analyze(Waveform(np.zeros(800), 8000))
