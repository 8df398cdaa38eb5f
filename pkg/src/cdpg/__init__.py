"""Conditional distributional policy gradients on exactly enumerable sequence spaces."""

from .ebm import ExponentialEBM, PointwiseEBM, estimate_lambda_snis, estimate_Z, exact_Z
from .kernels import BACKEND
from .seq import BigramPolicy, Context, ContextFeaturizer, PrefixTreePolicy, SequenceSpace, Vocab
from .trainers import Trainer, TrainerConfig

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BigramPolicy",
    "Context",
    "ContextFeaturizer",
    "ExponentialEBM",
    "PointwiseEBM",
    "PrefixTreePolicy",
    "SequenceSpace",
    "Trainer",
    "TrainerConfig",
    "Vocab",
    "estimate_Z",
    "estimate_lambda_snis",
    "exact_Z",
]
