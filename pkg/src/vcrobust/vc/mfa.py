"""Mixture-of-factor-analysers conversion.

Offline, a diagonal prior GMM and per-component factor loadings are
learned from many speakers. Each conversion speaker then gets an identity
vector ``v`` that shifts every component mean to ``mu_k + Lambda_k v``.
Conversion regresses target on source around the adapted means.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..gmm import Gmm, train_em
from .common import as_frames

logger = logging.getLogger(__name__)

MFA_COMPONENTS = 128
IDENTITY_DIM = 16
FRAMES_PER_COMPONENT = 20
RELEVANCE = 4.0  # pseudo-frames in the per-speaker offset estimate
REGRESSION_SHRINK = 48.0  # pseudo-frames pulling C_k toward the pooled map
ADAPT_ITERS = 3


@dataclass
class MfaPrior:
    """Speaker-independent part: GMM on c1..c24 and loadings (K, D, q)."""

    gmm: Gmm
    loadings: np.ndarray

    @property
    def q(self) -> int:
        return self.loadings.shape[2]

    def adapted_means(self, v) -> np.ndarray:
        return self.gmm.means + self.loadings @ np.asarray(v, dtype=np.float64)


@dataclass
class MfaModel:
    prior: MfaPrior
    v_src: np.ndarray
    v_tgt: np.ndarray
    psi: np.ndarray  # tied residual covariance (D, D)
    C: np.ndarray  # (K, D, D) regression matrices
    e: np.ndarray  # (K, D) regression offsets

    def __post_init__(self):
        self._post_gmm = None

    @property
    def means_src(self) -> np.ndarray:
        return self.prior.adapted_means(self.v_src)

    @property
    def means_tgt(self) -> np.ndarray:
        return self.prior.adapted_means(self.v_tgt)

    def covariance(self, k: int) -> np.ndarray:
        return self.psi

    @property
    def posterior_gmm(self) -> Gmm:
        if self._post_gmm is None:
            self._post_gmm = Gmm(self.prior.gmm.weights, self.means_src, self.psi, "tied")
        return self._post_gmm


def _strip_c0(frames):
    X, _ = as_frames(frames)
    return X[:, 1:]


def _stats(g: Gmm, X):
    post = g.posterior(X)
    return post.sum(axis=0), post.T @ X


def train_mfa_prior(prior_sets, K: int = MFA_COMPONENTS, q: int = IDENTITY_DIM,
                    seed: int = 0, max_iters: int = 50) -> MfaPrior:
    """Prior GMM plus top-q loadings from per-speaker supervector offsets.

    `prior_sets` is one (N_s, 25) MCC array per prior speaker. Loadings use
    the closed-form probabilistic PCA solution on the centred offsets.
    """
    sets = [_strip_c0(s) for s in prior_sets]
    if len(sets) < 2:
        raise ValueError("MFA prior needs at least two speakers")
    pooled = np.vstack(sets)
    n = len(pooled)
    k_eff = min(K, n // FRAMES_PER_COMPONENT)
    if k_eff < 1:
        raise ValueError(f"prior data too small: {n} frames")
    if k_eff < K:
        logger.warning("MFA prior: reducing K from %d to %d for %d frames", K, k_eff, n)
    g = train_em(pooled, k_eff, "diag", seed, max_iters=max_iters)
    D = g.dim

    offsets = []
    for X in sets:
        Nk, Fk = _stats(g, X)
        offsets.append(((Fk - Nk[:, None] * g.means) / (Nk[:, None] + RELEVANCE)).ravel())
    O = np.array(offsets)
    centre = O.mean(axis=0)
    g = Gmm(g.weights, g.means + centre.reshape(k_eff, D), g.covariances, "diag")
    O = O - centre
    _, sv, Vt = np.linalg.svd(O, full_matrices=False)
    lam = sv ** 2 / len(O)
    rank = int(np.sum(sv > 1e-10 * max(sv[0], 1e-300)))
    q_eff = min(q, rank)
    if q_eff < q:
        logger.warning("MFA prior: identity dimension reduced from %d to %d (offset rank)", q, q_eff)
    if q_eff < 1:
        raise ValueError("prior speakers show no mean-offset variability")
    resid = lam[q_eff:]
    sigma2 = float(resid.sum()) / max(k_eff * D - q_eff, 1)
    scale = np.sqrt(np.maximum(lam[:q_eff] - sigma2, 0.0))
    L = np.ascontiguousarray((Vt[:q_eff].T * scale).reshape(k_eff, D, q_eff))
    return MfaPrior(g, L)


def estimate_identity(prior: MfaPrior, frames, iters: int = ADAPT_ITERS, drop_c0: bool = True) -> np.ndarray:
    """MAP identity vector under a standard normal prior on ``v``.

    Ridge solution ``(I + sum_k N_k L_k' S_k^-1 L_k)^-1 sum_k L_k' S_k^-1 (F_k - N_k mu_k)``,
    with posteriors refreshed from the adapted means `iters` times.
    """
    X = _strip_c0(frames) if drop_c0 else np.atleast_2d(frames)
    g = prior.gmm
    L = prior.loadings
    prec = 1.0 / g.covariances  # (K, D)
    v = np.zeros(prior.q)
    for _ in range(iters):
        adapted = Gmm(g.weights, prior.adapted_means(v), g.covariances, "diag")
        Nk, Fk = _stats(adapted, X)
        centred = Fk - Nk[:, None] * g.means
        LtP = L.transpose(0, 2, 1) * prec[:, None, :]  # (K, q, D)
        A = np.eye(prior.q) + np.einsum("k,kqd,kdr->qr", Nk, LtP, L)
        rhs = np.einsum("kqd,kd->q", LtP, centred)
        v = cho_solve(cho_factor(A), rhs)
    return v


def _pooled_residual(prior: MfaPrior, sets, vs):
    D = prior.gmm.dim
    acc = np.zeros((D, D))
    total = 0
    for X, v in zip(sets, vs):
        means = prior.adapted_means(v)
        g = Gmm(prior.gmm.weights, means, prior.gmm.covariances, "diag")
        post = g.posterior(X)
        for k in range(g.n_components):
            diff = X - means[k]
            acc += (diff * post[:, k:k + 1]).T @ diff
        total += len(X)
    psi = acc / total
    psi = 0.5 * (psi + psi.T)
    return psi + 1e-6 * np.trace(psi) / D * np.eye(D)


def train_mfa(prior: MfaPrior, src_adapt, tgt_adapt, x_pairs, y_pairs,
              shrink: float = REGRESSION_SHRINK) -> MfaModel:
    """Adapt identity vectors, pool the tied covariance and fit C_k, e_k.

    Per component an affine regression of aligned target on source frames,
    with sufficient statistics smoothed by `shrink` pseudo-frames of the
    pooled statistics.
    """
    S = _strip_c0(src_adapt)
    T = _strip_c0(tgt_adapt)
    v_src = estimate_identity(prior, S, drop_c0=False)
    v_tgt = estimate_identity(prior, T, drop_c0=False)
    psi = _pooled_residual(prior, [S, T], [v_src, v_tgt])
    model = MfaModel(prior, v_src, v_tgt, psi, None, None)

    X = _strip_c0(x_pairs)
    Y = _strip_c0(y_pairs)
    if len(X) != len(Y):
        raise ValueError("aligned pair arrays differ in length")
    post = model.posterior_gmm.posterior(X)
    Nk = post.sum(axis=0)
    n, D = X.shape
    mx_pool = X.mean(axis=0)
    my_pool = Y.mean(axis=0)
    Xc, Yc = X - mx_pool, Y - my_pool
    sxx_pool = Xc.T @ Xc / n
    syx_pool = Yc.T @ Xc / n
    eps = 1e-6 * np.trace(sxx_pool) / D * np.eye(D)
    K = prior.gmm.n_components
    C = np.empty((K, D, D))
    e = np.empty((K, D))
    ms, mt = model.means_src, model.means_tgt
    for k in range(K):
        p = post[:, k]
        mx = (p @ X + shrink * mx_pool) / (Nk[k] + shrink)
        my = (p @ Y + shrink * my_pool) / (Nk[k] + shrink)
        dx, dy = X - mx, Y - my
        sxx = (dx * p[:, None]).T @ dx + shrink * (sxx_pool + np.outer(mx_pool - mx, mx_pool - mx))
        syx = (dy * p[:, None]).T @ dx + shrink * (syx_pool + np.outer(my_pool - my, mx_pool - mx))
        C[k] = cho_solve(cho_factor(sxx + (Nk[k] + shrink) * eps), syx.T).T
        b = my - C[k] @ mx
        e[k] = b + C[k] @ ms[k] - mt[k]
    model.C, model.e = C, e
    return model


def convert_mfa(m: MfaModel, x) -> np.ndarray:
    """``y = sum_k p_k (mu_tgt_k + e_k + C_k (x - mu_src_k))``; c0 passes through."""
    X, single = as_frames(x, m.prior.gmm.dim + 1)
    body = X[:, 1:]
    post = m.posterior_gmm.posterior(body)
    ms, mt = m.means_src, m.means_tgt
    out = np.zeros_like(body)
    for k in range(post.shape[1]):
        pk = post[:, k]
        active = pk > 1e-14
        if not np.any(active):
            continue
        pred = mt[k] + m.e[k] + (body[active] - ms[k]) @ m.C[k].T
        out[active] += pk[active, None] * pred
    res = np.column_stack([X[:, 0], out])
    return res[0] if single else res
