"""Voice-conversion spectral mapping methods."""

from .blfwas import BlfwasModel, convert_blfwas, train_blfwas
from .common import project_lsf
from .f0 import F0Stats, convert_f0, fit_f0_stats
from .jdgmm import JdgmmModel, convert_jdgmm, train_jdgmm
from .mfa import MfaModel, MfaPrior, convert_mfa, estimate_identity, train_mfa, train_mfa_prior
from .model import (METHOD_FEATURE, METHODS, ConversionModel, ParallelData, load_model,
                    model_from_bytes, model_to_bytes, save_model, train_method)
from .warping import DfwModel, WfwModel, convert_dfw, convert_wfw, train_dfw, train_wfw
