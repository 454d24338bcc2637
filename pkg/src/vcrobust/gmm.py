"""Gaussian mixture models with full, diagonal or tied covariances.

Densities go through Cholesky factors; no covariance inverse is formed.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

COVARIANCE_KINDS = ("full", "diag", "tied")
_KIND_CODE = {"full": 0, "diag": 1, "tied": 2}
_GMM_MAGIC = b"VCGM"
_GMM_VERSION = 1
_GMM_HEADER = struct.Struct("<4sHIIB")
_LOG_2PI = np.log(2.0 * np.pi)


class InsufficientDataError(ValueError):
    pass


@dataclass
class Gmm:
    """Mixture parameters.

    ``covariances`` has shape (K, D, D) for full, (K, D) for diag and (D, D)
    for tied. ``ll_history`` holds the per-sample training log-likelihood
    after initialisation and after each EM iteration.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    kind: str = "full"
    ll_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covariances = np.asarray(self.covariances, dtype=np.float64)
        K, D = self.means.shape
        expect = {"full": (K, D, D), "diag": (K, D), "tied": (D, D)}[self.kind]
        if self.weights.shape != (K,) or self.covariances.shape != expect:
            raise ValueError("inconsistent GMM parameter shapes")
        self._chol = None

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def covariance(self, k: int) -> np.ndarray:
        if self.kind == "full":
            return self.covariances[k]
        if self.kind == "diag":
            return np.diag(self.covariances[k])
        return self.covariances

    def full_covariances(self) -> np.ndarray:
        return np.stack([self.covariance(k) for k in range(self.n_components)])

    def _cholesky(self):
        if self._chol is None:
            if self.kind == "full":
                self._chol = np.stack([cholesky(c, lower=True) for c in self.covariances])
            elif self.kind == "tied":
                self._chol = cholesky(self.covariances, lower=True)
            else:
                self._chol = np.sqrt(self.covariances)
        return self._chol

    def component_log_density(self, X: np.ndarray) -> np.ndarray:
        """log N(x; mu_k, Sigma_k) for every row of `X`, shape (N, K)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-dim data, got {X.shape[1]}")
        if self.kind == "diag":
            # expanded quadratic form, one matrix product for all components
            prec = 1.0 / self.covariances
            mp = self.means * prec
            quad = (X * X) @ prec.T - 2.0 * X @ mp.T + np.sum(self.means * mp, axis=1)
            logdet = np.sum(np.log(self.covariances), axis=1)
            return -0.5 * (np.maximum(quad, 0.0) + logdet + self.dim * _LOG_2PI)
        L = self._cholesky()
        out = np.empty((len(X), self.n_components))
        for k in range(self.n_components):
            diff = X - self.means[k]
            Lk = L[k] if self.kind == "full" else L
            z = solve_triangular(Lk, diff.T, lower=True, check_finite=False).T
            logdet = 2.0 * np.sum(np.log(np.diag(Lk)))
            out[:, k] = -0.5 * (np.sum(z * z, axis=1) + logdet + self.dim * _LOG_2PI)
        return out

    def weighted_log_density(self, X) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.component_log_density(X) + np.log(self.weights)

    def posterior(self, X) -> np.ndarray:
        """Responsibilities, (N, K) for a matrix or (K,) for one vector."""
        single = np.asarray(X).ndim == 1
        lw = self.weighted_log_density(X)
        post = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
        post /= post.sum(axis=1, keepdims=True)
        return post[0] if single else post

    def log_likelihood(self, X) -> float:
        """Mean per-sample log density."""
        return float(np.mean(logsumexp(self.weighted_log_density(X), axis=1)))

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for k in range(self.n_components):
            idx = np.flatnonzero(comp == k)
            if idx.size:
                out[idx] = rng.multivariate_normal(self.means[k], self.covariance(k), size=idx.size)
        return out


def posterior(g: Gmm, x) -> np.ndarray:
    return g.posterior(x)


def log_likelihood(g: Gmm, data) -> float:
    return g.log_likelihood(data)


def default_reg(data: np.ndarray) -> float:
    """Variance floor 1e-6 * trace(cov) / D."""
    data = np.atleast_2d(data)
    tr = float(np.sum(np.var(data, axis=0)))
    return 1e-6 * max(tr, 1e-12) / data.shape[1]


def _kmeans_pp(X: np.ndarray, K: int, rng: np.random.Generator, lloyd_iters: int = 10) -> np.ndarray:
    n = len(X)
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[k] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[k]) ** 2, axis=1))
    for _ in range(lloyd_iters):
        dist = (np.sum(X * X, axis=1)[:, None] - 2.0 * X @ centers.T
                + np.sum(centers * centers, axis=1)[None, :])
        label = np.argmin(dist, axis=1)
        for k in range(K):
            members = X[label == k]
            if len(members):
                centers[k] = members.mean(axis=0)
    return centers


def _m_step(X, resp, kind, reg, prev: Gmm | None):
    N, D = X.shape
    K = resp.shape[1]
    Nk = resp.sum(axis=0)
    weights = Nk / Nk.sum()
    means = np.empty((K, D))
    eye = np.eye(D)
    if kind == "full":
        covs = np.empty((K, D, D))
    elif kind == "diag":
        covs = np.empty((K, D))
    else:
        covs = np.zeros((D, D))
    if kind == "diag":
        safe = np.maximum(Nk, 1e-300)[:, None]
        means = resp.T @ X / safe
        covs = np.maximum(resp.T @ (X * X) / safe - means * means, 0.0) + reg
    for k in range(K):
        if kind == "diag" and Nk[k] >= 1e-8:
            continue
        if Nk[k] < 1e-8:
            # starved component: keep its previous parameters
            means[k] = prev.means[k] if prev is not None else X[k % N]
            if kind == "full":
                covs[k] = prev.covariances[k] if prev is not None else np.cov(X.T).reshape(D, D) + reg * eye
            elif kind == "diag":
                covs[k] = prev.covariances[k] if prev is not None else np.var(X, axis=0) + reg
            continue
        means[k] = resp[:, k] @ X / Nk[k]
        diff = X - means[k]
        rd = diff * resp[:, k:k + 1]
        if kind == "full":
            c = rd.T @ diff / Nk[k]
            covs[k] = 0.5 * (c + c.T) + reg * eye
        else:
            covs += rd.T @ diff
    if kind == "tied":
        covs = covs / Nk.sum()
        covs = 0.5 * (covs + covs.T) + reg * eye
    return Gmm(weights, means, covs, kind)


def train_em(data, K: int, kind: str = "full", seed: int = 0, max_iters: int = 100,
             reg: float | None = None, tol: float = 1e-6) -> Gmm:
    """Maximum-likelihood GMM by EM from a k-means++ start.

    Stops once the mean log-likelihood gains less than `tol` per sample,
    or when a step would lower it (the variance floor makes the M-step
    inexact), so ``ll_history`` is non-decreasing.
    `reg` (default ``1e-6 * trace/D``) is added to every covariance
    diagonal in each M-step.
    """
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("data must be an (N, D) array")
    if K < 1:
        raise ValueError("K must be >= 1")
    if kind not in COVARIANCE_KINDS:
        raise ValueError(f"unknown covariance kind {kind!r}")
    if len(X) < 10 * K:
        raise InsufficientDataError(f"{len(X)} samples < 10 x K = {10 * K}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite values")
    reg = default_reg(X) if reg is None else float(reg)
    rng = np.random.default_rng(seed)

    centers = _kmeans_pp(X, K, rng) if K > 1 else X.mean(axis=0, keepdims=True)
    dist = (np.sum(X * X, axis=1)[:, None] - 2.0 * X @ centers.T
            + np.sum(centers * centers, axis=1)[None, :])
    resp = np.zeros((len(X), K))
    resp[np.arange(len(X)), np.argmin(dist, axis=1)] = 1.0
    g = _m_step(X, resp, kind, reg, None)

    history = []
    lw = g.weighted_log_density(X)
    ll = float(np.mean(logsumexp(lw, axis=1)))
    history.append(ll)
    for _ in range(max_iters):
        resp = np.exp(lw - logsumexp(lw, axis=1, keepdims=True))
        g_new = _m_step(X, resp, kind, reg, g)
        lw_new = g_new.weighted_log_density(X)
        ll_new = float(np.mean(logsumexp(lw_new, axis=1)))
        if ll_new < ll:
            # the variance floor makes the M-step inexact; keep the better model
            logger.debug("EM step rejected: log-likelihood would drop by %.3g", ll - ll_new)
            break
        g, lw = g_new, lw_new
        history.append(ll_new)
        gain = ll_new - ll
        ll = ll_new
        if gain < tol:
            break
    g.ll_history = tuple(history)
    return g


def write_gmm(g: Gmm, path) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(gmm_to_bytes(g))


def read_gmm(path) -> Gmm:
    with open(os.fspath(path), "rb") as fh:
        g, _ = gmm_from_bytes(fh.read())
    return g


def gmm_to_bytes(g: Gmm) -> bytes:
    """Little-endian ``VCGM`` record: header, weights, means, covariances."""
    head = _GMM_HEADER.pack(_GMM_MAGIC, _GMM_VERSION, g.n_components, g.dim, _KIND_CODE[g.kind])
    body = [np.ascontiguousarray(a, dtype="<f8").tobytes()
            for a in (g.weights, g.means, g.covariances)]
    return head + b"".join(body)


def gmm_from_bytes(raw: bytes, offset: int = 0):
    """Parse a ``VCGM`` record; returns ``(gmm, next_offset)``."""
    magic, version, K, D, code = _GMM_HEADER.unpack_from(raw, offset)
    if magic != _GMM_MAGIC or version != _GMM_VERSION:
        raise ValueError("not a VCGM model record")
    kind = COVARIANCE_KINDS[code]
    pos = offset + _GMM_HEADER.size
    cov_shape = {"full": (K, D, D), "diag": (K, D), "tied": (D, D)}[kind]
    parts = []
    for shape in ((K,), (K, D), cov_shape):
        n = int(np.prod(shape))
        parts.append(np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64))
        pos += 8 * n
    return Gmm(parts[0], parts[1], parts[2], kind), pos


@dataclass
class JointGmm:
    """GMM over stacked ``[x; y]`` with ``x`` in the first `dx` dimensions."""

    gmm: Gmm
    dx: int

    def __post_init__(self):
        if not 0 < self.dx < self.gmm.dim:
            raise ValueError("partition sizes must be positive")

    @property
    def dy(self) -> int:
        return self.gmm.dim - self.dx

    def marginal_x(self) -> Gmm:
        dx = self.dx
        g = self.gmm
        if g.kind == "full":
            cov = g.covariances[:, :dx, :dx]
        elif g.kind == "diag":
            cov = g.covariances[:, :dx]
        else:
            cov = g.covariances[:dx, :dx]
        return Gmm(g.weights.copy(), g.means[:, :dx].copy(), cov.copy(), g.kind)

    def regression_terms(self):
        """Per component ``(A_k, b_k)`` with ``E[y | x, k] = A_k x + b_k``."""
        dx = self.dx
        A = np.empty((self.gmm.n_components, self.dy, dx))
        b = np.empty((self.gmm.n_components, self.dy))
        for k in range(self.gmm.n_components):
            S = self.gmm.covariance(k)
            cf = cholesky(S[:dx, :dx], lower=True)
            A[k] = cho_solve((cf, True), S[:dx, dx:], check_finite=False).T
            b[k] = self.gmm.means[k, dx:] - A[k] @ self.gmm.means[k, :dx]
        return A, b


def train_joint(x, y, K: int, kind: str = "full", seed: int = 0, **kw) -> JointGmm:
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if len(x) != len(y):
        raise ValueError("x and y must have the same number of rows")
    return JointGmm(train_em(np.hstack([x, y]), K, kind, seed, **kw), x.shape[1])
