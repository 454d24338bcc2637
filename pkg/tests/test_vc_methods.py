import numpy as np
import pytest

from vcrobust.cepstrum import bilinear_warp_matrix
from vcrobust.gmm import Gmm, train_em
from vcrobust.lpc import envelope_grid
from vcrobust.metrics import mcd
from vcrobust.synth import Voice, random_script, render
from vcrobust.vc.blfwas import convert_blfwas, train_blfwas
from vcrobust.vc.common import project_lsf
from vcrobust.vc.f0 import SIGMA_FLOOR, F0Stats, convert_f0, fit_f0_stats
from vcrobust.vc.jdgmm import convert_jdgmm, train_jdgmm
from vcrobust.vc.mfa import MfaPrior, convert_mfa, estimate_identity, train_mfa, train_mfa_prior
from vcrobust.vc.model import (METHODS, ParallelData, check_method, load_model, model_from_bytes,
                               model_to_bytes, save_model, train_method)
from vcrobust.vc.warping import (DfwModel, WfwModel, convert_dfw, convert_wfw, identity_breakpoints,
                                 train_dfw, train_wfw, warp_envelope, warps_from_envelopes,
                                 wfw_envelope)
from vcrobust.vocoder import analyze, lsf_log_envelope


def valid_lsf(lsf):
    return np.all(np.diff(lsf, axis=-1) > 0) and np.all((lsf > 0) & (lsf < np.pi))


@pytest.fixture(scope="module")
def tracks():
    """Two speakers reading the same four scripts, plus a held-out utterance."""
    rng = np.random.default_rng(11)
    scripts = [random_script(rng) for _ in range(5)]
    a = Voice("a", 120.0, 1.0)
    b = Voice("b", 210.0, 1.17, tilt=0.85)
    src = [analyze(render(s, a, seed=i)).trimmed() for i, s in enumerate(scripts)]
    tgt = [analyze(render(s, b, seed=50 + i)).trimmed() for i, s in enumerate(scripts)]
    return src, tgt


@pytest.fixture(scope="module")
def lsf_frames(tracks):
    src, _ = tracks
    return np.vstack([t.lsf for t in src[:4]]), src[4].lsf


@pytest.fixture(scope="module")
def mcc_frames(tracks):
    src, _ = tracks
    return np.vstack([t.mcc for t in src[:4]]), src[4].mcc


# -- F0 ---------------------------------------------------------------------

def test_f0_stats_direct_formula():
    rng = np.random.default_rng(0)
    f0 = np.where(rng.random(100) < 0.7, rng.uniform(80, 300, 100), 0.0)
    s = fit_f0_stats(f0, f0)
    lf = np.log(f0[f0 > 0])
    assert abs(s.mu_src - lf.mean()) < 1e-12 and abs(s.sigma_src - lf.std()) < 1e-12
    assert s.mu_src == s.mu_tgt and s.sigma_src == s.sigma_tgt


def test_f0_constant_floor_and_errors():
    assert fit_f0_stats(np.full(20, 150.0), np.full(20, 150.0)).sigma_src == SIGMA_FLOOR
    with pytest.raises(ValueError):
        fit_f0_stats(np.full(5, 100.0), np.full(20, 100.0))


def test_convert_f0():
    s = F0Stats(np.log(100.0), 0.2, np.log(200.0), 0.2)
    assert abs(convert_f0(s, 100.0) - 200.0) <= 1e-9
    out = convert_f0(s, np.array([0.0, 90.0, 120.0, 1000.0]))
    assert out[0] == 0 and np.all(np.diff(out[1:]) >= 0) and out[-1] == 500.0
    same = F0Stats(5.0, 0.3, 5.0, 0.3)
    assert np.allclose(convert_f0(same, np.array([80.0, 140.0])), [80.0, 140.0])
    with pytest.raises(ValueError):
        convert_f0(s, np.array([-1.0]))


# -- JDGMM ------------------------------------------------------------------

def test_jdgmm_identity(lsf_frames):
    train, held = lsf_frames
    m = train_jdgmm(train, train, seed=0)
    assert np.max(np.linalg.norm(convert_jdgmm(m, held) - held, axis=1)) <= 1e-2


def test_jdgmm_linear_map(lsf_frames):
    train, held = lsf_frames
    rng = np.random.default_rng(1)
    A = np.eye(14) * 0.9 + 0.01 * rng.normal(size=(14, 14))
    b = 0.05 * rng.normal(size=14)
    m = train_jdgmm(train, train @ A.T + b, K=1, project=False)
    assert np.sqrt(np.mean((convert_jdgmm(m, held) - (held @ A.T + b)) ** 2)) <= 1e-4


def test_jdgmm_single_component_is_conditional_mean(lsf_frames):
    train, held = lsf_frames
    y = np.sqrt(train)
    m = train_jdgmm(train, y, K=1, project=False)
    S = m.joint.gmm.covariance(0)
    mu = m.joint.gmm.means[0]
    expect = mu[14:] + (held - mu[:14]) @ np.linalg.solve(S[:14, :14], S[:14, 14:])
    assert np.max(np.abs(convert_jdgmm(m, held) - expect)) <= 1e-10


def test_jdgmm_output_valid(lsf_frames):
    train, _ = lsf_frames
    m = train_jdgmm(train, train[::-1].copy(), K=2)
    x = np.sort(np.random.default_rng(2).uniform(0.01, 3.1, (10000, 14)), axis=1)
    assert valid_lsf(convert_jdgmm(m, x))


def test_project_lsf_property():
    x = np.random.default_rng(3).normal(1.5, 2.0, (10000, 14))
    y = project_lsf(x)
    assert np.all(np.diff(y, axis=1) >= 1e-3 - 1e-12) and np.all((y >= 1e-3) & (y <= np.pi - 1e-3))
    ok = np.linspace(0.2, 3.0, 14)
    assert np.array_equal(project_lsf(ok), ok)


# -- DFW / WFW --------------------------------------------------------------

def test_dfw_self_warp(lsf_frames):
    train, _ = lsf_frames
    g = train_em(train, 8, seed=0)
    m = train_dfw(train, train, g)
    grid = np.linspace(0, np.pi, 200)
    for k in range(8):
        assert np.max(np.abs(m.warp(k, grid) - grid)) <= 0.01


def test_dfw_planted_linear_warp(lsf_frames):
    train, _ = lsf_frames
    grid = envelope_grid()
    src_env = lsf_log_envelope(train)
    # target spectra are source spectra moved down: tgt(0.9 w) = src(w)
    tgt_env = np.stack([np.interp(np.minimum(grid / 0.9, np.pi), grid, e) for e in src_env])
    g = Gmm(np.ones(1), train.mean(axis=0, keepdims=True), np.cov(train.T)[None] + 1e-6 * np.eye(14))
    post = np.ones((len(train), 1))
    m, _, _ = warps_from_envelopes(src_env, tgt_env, post, g)
    w = np.linspace(0.2, 2.5, 100)
    assert np.max(np.abs(m.warp(0, w) - 0.9 * w)) <= 0.05


def test_dfw_empty_class_identity(lsf_frames):
    train, _ = lsf_frames
    env = lsf_log_envelope(train)
    g = Gmm([0.5, 0.5], [train.mean(0), train.mean(0) + 1], np.stack([np.eye(14)] * 2))
    post = np.column_stack([np.ones(len(train)), np.zeros(len(train))])
    m, _, empty = warps_from_envelopes(env, env[::-1], post, g)
    assert empty.tolist() == [False, True]
    assert np.array_equal(m.breakpoints_y[1], identity_breakpoints()[1])


def test_dfw_breakpoint_invariants(tracks):
    src, tgt = tracks
    data = ParallelData.from_tracks(src[:4], tgt[:4])
    x, y = data.aligned("lsf")
    m = train_dfw(x, y, train_em(x, 8, seed=0))
    assert m.breakpoints_x.shape[1] <= 16
    assert np.all(m.breakpoints_y[:, 0] == 0) and np.all(m.breakpoints_y[:, -1] == np.pi)
    assert np.all(np.diff(m.breakpoints_y, axis=1) >= 0)


def test_dfw_linear_warp_scales_lsfs(lsf_frames):
    _, held = lsf_frames
    g = Gmm(np.ones(1), held.mean(0, keepdims=True), np.eye(14)[None])
    bx = np.linspace(0, np.pi, 16)
    m = DfwModel(g, bx[None], 0.9 * bx[None])
    assert np.allclose(convert_dfw(m, held), 0.9 * held, atol=1e-12)
    ident = DfwModel(g, bx[None], bx[None])
    assert np.allclose(convert_dfw(ident, held), held, atol=1e-12)


def test_dfw_output_valid(lsf_frames):
    train, _ = lsf_frames
    m = train_dfw(train, train[::-1].copy(), train_em(train, 4, seed=1))
    x = np.sort(np.random.default_rng(4).uniform(0.01, 3.1, (10000, 14)), axis=1)
    assert valid_lsf(convert_dfw(m, x))


def test_wfw_self_conversion(lsf_frames):
    train, held = lsf_frames
    m = train_wfw(train, train, train_em(train, 8, seed=0))
    assert np.max(np.abs(m.corrections)) <= 0.1
    out = convert_wfw(m, held)
    d = (lsf_log_envelope(out) - lsf_log_envelope(held)) * 20 / np.log(10)
    assert np.sqrt(np.mean(d ** 2)) <= 0.2


def test_wfw_absorbs_gain(lsf_frames):
    train, _ = lsf_frames
    g = train_em(train, 1)
    gain = np.zeros(len(train))
    m = train_wfw(train, train, g, src_log_gain=gain, tgt_log_gain=gain + np.log(2.0))
    db = m.corrections[0] * 20 / np.log(10)
    assert np.max(np.abs(db - 6.0206)) <= 0.1


def test_wfw_posterior_limit(lsf_frames):
    train, _ = lsf_frames
    m0 = train[0]
    m1 = np.linspace(0.3, 2.9, 14)
    g = Gmm([0.5, 0.5], [m0, m1], np.stack([1e-4 * np.eye(14)] * 2))
    dfw = DfwModel(g, np.stack([np.linspace(0, np.pi, 16)] * 2),
                   np.stack([np.linspace(0, np.pi, 16) ** 1.05 / np.pi ** 0.05, np.linspace(0, np.pi, 16)]))
    corr = np.stack([np.full(257, 0.3), np.linspace(-1, 1, 257)])
    m = WfwModel(dfw, corr)
    pure = warp_envelope(lsf_log_envelope(m0), dfw, 0) + corr[0]
    assert np.max(np.abs(wfw_envelope(m, m0) - pure)) <= 1e-3


def test_wfw_output_valid(lsf_frames):
    train, _ = lsf_frames
    m = train_wfw(train, train[::-1].copy(), train_em(train, 4, seed=1))
    x = np.sort(np.random.default_rng(5).uniform(0.05, 3.05, (300, 14)), axis=1)
    assert valid_lsf(convert_wfw(m, x))


# -- BLFWAS -----------------------------------------------------------------

def test_blfwas_self_training(mcc_frames):
    train, _ = mcc_frames
    m = train_blfwas(train, train, train_em(train[:, 1:], 4, seed=0))
    assert np.all(m.alphas == 0)
    assert np.max(np.linalg.norm(m.offsets, axis=1)) <= 1e-6


def test_blfwas_planted_alpha(mcc_frames):
    train, held = mcc_frames
    W = bilinear_warp_matrix(0.2)
    m = train_blfwas(train, train @ W.T, train_em(train[:, 1:], 4, seed=0))
    assert np.all((m.alphas >= 0.19) & (m.alphas <= 0.21))
    assert mcd(held @ W.T, convert_blfwas(m, held), align=False) <= 0.5


def test_blfwas_single_class_exact(mcc_frames):
    train, held = mcc_frames
    W = bilinear_warp_matrix(-0.1)
    s = np.linspace(0.1, -0.1, 25)
    m = train_blfwas(train, train @ W.T + s, train_em(train[:, 1:], 1))
    assert abs(m.alphas[0] + 0.1) < 1e-12
    assert np.max(np.abs(convert_blfwas(m, held) - (held @ W.T + s))) <= 1e-9


def test_blfwas_empty_class_defaults(mcc_frames):
    train, _ = mcc_frames
    far = Gmm([0.5, 0.5], [train[:, 1:].mean(0), train[:, 1:].mean(0) + 100], np.stack([np.eye(24)] * 2))
    m = train_blfwas(train, train @ bilinear_warp_matrix(0.1).T, far)
    assert m.alphas[1] == 0 and np.all(m.offsets[1] == 0)


# -- MFA --------------------------------------------------------------------

def planted_prior(K=6, D=24, q=3, seed=0):
    rng = np.random.default_rng(seed)
    means = rng.normal(0, 3, (K, D))
    g = Gmm(np.full(K, 1 / K), means, np.full((K, D), 0.05), "diag")
    return MfaPrior(g, rng.normal(0, 0.3, (K, D, q))), rng


def sample_speaker(prior, v, n, rng):
    means = prior.adapted_means(v)
    comp = rng.integers(prior.gmm.n_components, size=n)
    return means[comp] + rng.normal(0, np.sqrt(0.05), (n, prior.gmm.dim))


def test_mfa_identity_recovery():
    prior, rng = planted_prior()
    v_true = np.array([1.0, -0.7, 0.5])
    X = sample_speaker(prior, v_true, 3000, rng)
    v = estimate_identity(prior, X, drop_c0=False)
    assert np.linalg.norm(v - v_true) / np.linalg.norm(v_true) <= 0.1


def _prior_sets(seed=0, n_speakers=6):
    rng = np.random.default_rng(seed)
    sets = []
    for s in range(n_speakers):
        voice = Voice(f"p{s}", float(rng.uniform(100, 220)), float(rng.uniform(0.9, 1.2)))
        sets.append(np.vstack([analyze(render(random_script(rng), voice, seed=s * 10 + u)).trimmed().mcc
                               for u in range(2)]))
    return sets


@pytest.fixture(scope="module")
def small_prior():
    return train_mfa_prior(_prior_sets(), K=8, q=4, seed=0)


def test_mfa_prior_shapes(small_prior):
    assert small_prior.loadings.shape == (8, 24, 4)
    assert np.all(np.isfinite(small_prior.loadings))


def test_mfa_identical_adaptation(small_prior, mcc_frames):
    train, held = mcc_frames
    m = train_mfa(small_prior, train, train, train, train)
    assert np.max(np.abs(m.v_src - m.v_tgt)) <= 1e-8
    assert np.max(np.abs(convert_mfa(m, held) - held)) <= 1e-2
    assert np.array_equal(m.covariance(0), m.covariance(5))
    assert np.allclose(m.psi, m.psi.T) and np.min(np.linalg.eigvalsh(m.psi)) > 0


def test_mfa_planted_linear_difference(small_prior, mcc_frames):
    train, held = mcc_frames
    rng = np.random.default_rng(6)
    A = np.eye(24) * 0.95 + 0.01 * rng.normal(size=(24, 24))
    d = 0.1 * rng.normal(size=24)

    def speaker(x):
        return np.column_stack([x[:, 0], x[:, 1:] @ A.T + d])

    m = train_mfa(small_prior, train, speaker(train), train, speaker(train))
    assert np.sqrt(np.mean((convert_mfa(m, held) - speaker(held)) ** 2)) <= 1e-2


def test_mfa_c0_passthrough(small_prior, mcc_frames):
    train, held = mcc_frames
    m = train_mfa(small_prior, train, train + 0.1, train, train + 0.1)
    assert np.array_equal(convert_mfa(m, held)[:, 0], held[:, 0])


def test_mfa_far_mean_limit(small_prior, mcc_frames):
    train, _ = mcc_frames
    m = train_mfa(small_prior, train, train + 0.05, train, train + 0.05)
    spread = Gmm(m.prior.gmm.weights, m.means_src * 0 + np.arange(8)[:, None] * 50.0, m.prior.gmm.covariances, "diag")
    m.prior = MfaPrior(spread, m.prior.loadings * 0)
    m.v_src = m.v_src * 0
    m.v_tgt = m.v_tgt * 0
    m._post_gmm = None
    k = 3
    x = np.concatenate([[0.0], m.means_src[k]])
    pure = m.means_tgt[k] + m.e[k] + (x[1:] - m.means_src[k]) @ m.C[k].T
    assert np.max(np.abs(convert_mfa(m, x)[1:] - pure)) <= 1e-3


# -- model container ----------------------------------------------------------

def test_check_method():
    assert check_method("jdgmm") == "jdgmm"
    with pytest.raises(ValueError):
        check_method("ppca")


@pytest.mark.parametrize("method", METHODS)
def test_train_convert_serialize(method, tracks, small_prior, tmp_path):
    src, tgt = tracks
    data = ParallelData.from_tracks(src[:4], tgt[:4])
    model = train_method(method, data, seed=0, prior=small_prior)
    out = model.convert_track(src[4])
    assert len(out) == len(src[4]) and valid_lsf(out.lsf)
    raw = model_to_bytes(model)
    assert raw[:4] == b"VCM1"
    again = model_from_bytes(raw)
    assert model_to_bytes(again) == raw
    save_model(model, tmp_path / "m.bin")
    back = load_model(tmp_path / "m.bin").convert_track(src[4])
    assert np.array_equal(back.mcc, out.mcc) and np.array_equal(back.f0, out.f0)
    # conversion pulls toward the target
    before = np.mean([mcd(t.mcc, s.mcc) for s, t in zip(src[4:], tgt[4:])])
    after = mcd(tgt[4].mcc, out.mcc)
    assert after < before


def test_model_file_errors():
    with pytest.raises(ValueError):
        model_from_bytes(b"XXXX")
