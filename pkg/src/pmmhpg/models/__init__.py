from .discrete import DiscreteToyModel, ToyParams
from .linear_gaussian import LgParams, LinearGaussianModel
from .sv import SvParams, SVModel, sv_log_prior, sv_model, sv_transform, sv_untransform

__all__ = [
    "DiscreteToyModel",
    "LgParams",
    "LinearGaussianModel",
    "SVModel",
    "SvParams",
    "ToyParams",
    "sv_log_prior",
    "sv_model",
    "sv_transform",
    "sv_untransform",
]
