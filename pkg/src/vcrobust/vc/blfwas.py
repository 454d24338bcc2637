"""Bilinear frequency warping with amplitude scaling on mel-cepstra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cepstrum import bilinear_warp_matrix
from ..gmm import Gmm
from .common import as_frames

BLFWAS_COMPONENTS = 16
ALPHA_GRID = np.round(np.arange(-40, 41) * 0.01, 2)
MIN_CLASS_MASS = 1.0


@dataclass
class BlfwasModel:
    """``class_gmm`` lives on c1..c24; ``alphas`` (K,), ``offsets`` (K, 25)."""

    class_gmm: Gmm
    alphas: np.ndarray
    offsets: np.ndarray

    @property
    def order(self) -> int:
        return self.offsets.shape[1] - 1


def _fit_alpha(Sxx, Syx, order):
    """Grid minimum of sum_n p_n ||y - W x||^2 over rows 1..order.

    With second moments ``Sxx = sum p x x'`` and ``Syx = sum p y x'`` the
    alpha-dependent part is ``tr(W Sxx W') - 2 tr(W Sxy)``.
    """
    best, best_cost = 0.0, None
    # visit the grid by increasing |alpha| so ties resolve toward no warp
    for alpha in sorted(ALPHA_GRID, key=lambda a: (abs(a), a)):
        W = bilinear_warp_matrix(float(alpha), order)[1:]
        cost = np.sum((W @ Sxx) * W) - 2.0 * np.sum(W * Syx[1:])
        if best_cost is None or cost < best_cost - 1e-12 * max(abs(best_cost), 1.0):
            best, best_cost = float(alpha), cost
    return best


def train_blfwas(x, y, class_gmm: Gmm) -> BlfwasModel:
    """Per-class warp factor by grid search, then the mean cepstral residual."""
    X, _ = as_frames(x)
    Y, _ = as_frames(y, X.shape[1])
    order = X.shape[1] - 1
    post = class_gmm.posterior(X[:, 1:])
    K = class_gmm.n_components
    alphas = np.zeros(K)
    offsets = np.zeros((K, order + 1))
    mass = post.sum(axis=0)
    for k in range(K):
        if mass[k] < MIN_CLASS_MASS:
            continue
        p = post[:, k]
        Xp = X * p[:, None]
        Sxx = Xp.T @ X
        Syx = (Y * p[:, None]).T @ X
        alphas[k] = _fit_alpha(Sxx, Syx, order)
        W = bilinear_warp_matrix(alphas[k], order)
        offsets[k] = p @ (Y - X @ W.T) / mass[k]
    return BlfwasModel(class_gmm, alphas, offsets)


def convert_blfwas(m: BlfwasModel, x) -> np.ndarray:
    """``sum_k p_k(x) (W(alpha_k) x + s_k)`` with posteriors on c1..c24."""
    X, single = as_frames(x, m.order + 1)
    post = m.class_gmm.posterior(X[:, 1:])
    out = post @ m.offsets
    for k in range(len(m.alphas)):
        W = bilinear_warp_matrix(float(m.alphas[k]), m.order)
        out += post[:, k:k + 1] * (X @ W.T)
    return out[0] if single else out
