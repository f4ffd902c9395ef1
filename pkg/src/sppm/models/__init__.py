from .base import (
    Dataset,
    CpsSpec,
    JointSpec,
    McmcConfig,
    PosteriorSamples,
)
from .cps import fit_cps, predict_cps
from .joint import fit_joint, predict_joint

__all__ = [
    "Dataset",
    "CpsSpec",
    "JointSpec",
    "McmcConfig",
    "PosteriorSamples",
    "fit_cps",
    "predict_cps",
    "fit_joint",
    "predict_joint",
]
