"""Joint-density GMM mapping of LSF vectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..gmm import Gmm, JointGmm, train_joint
from .common import as_frames, project_lsf

logger = logging.getLogger(__name__)

JDGMM_COMPONENTS = 8


@dataclass
class JdgmmModel:
    joint: JointGmm
    A: np.ndarray  # (K, dy, dx) regression matrices
    b: np.ndarray  # (K, dy) offsets
    project: bool = True

    @classmethod
    def from_joint(cls, joint: JointGmm, project: bool = True) -> "JdgmmModel":
        A, b = joint.regression_terms()
        return cls(joint, A, b, project)

    @property
    def source_gmm(self) -> Gmm:
        if not hasattr(self, "_marginal"):
            self._marginal = self.joint.marginal_x()
        return self._marginal


def train_jdgmm(x, y, K: int = JDGMM_COMPONENTS, seed: int = 0, kind: str = "full",
                project: bool = True, **em_kw) -> JdgmmModel:
    """EM on stacked aligned pairs; regression terms cached per component."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    recommended = 10 * K * (x.shape[1] + y.shape[1])
    if len(x) < recommended:
        logger.warning("JDGMM: %d training pairs, %d recommended", len(x), recommended)
    joint = train_joint(x, y, K, kind, seed, **em_kw)
    return JdgmmModel.from_joint(joint, project)


def convert_jdgmm(m: JdgmmModel, x) -> np.ndarray:
    """Posterior-weighted conditional mean, projected to valid LSFs."""
    X, single = as_frames(x, m.joint.dx)
    post = m.source_gmm.posterior(X)
    per_comp = np.einsum("kij,nj->nki", m.A, X) + m.b[None]
    y = np.einsum("nk,nki->ni", post, per_comp)
    if m.project:
        y = project_lsf(y)
    return y[0] if single else y
