"""poisonlab: poison few-shot ICL support sets, measure the damage, and
filter the poison back out with a spectral outlier defense."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .attack import AttackConfig, PerturbationKind, PerturbationRecord, SynonymLexicon
from .corpus import Dataset, Example, Sentiment
from .embeddings import EmbeddingMatrix, EmbeddingProvider
from .icl import Prediction, PredictorConfig, Prompt, SupportSet
from .spectral import DefenseEvalRow, SpectralConfig, SpectralReport

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "Dataset",
    "DefenseEvalRow",
    "EmbeddingMatrix",
    "EmbeddingProvider",
    "Example",
    "KERNEL_BACKEND",
    "PerturbationKind",
    "PerturbationRecord",
    "Prediction",
    "PredictorConfig",
    "Prompt",
    "Sentiment",
    "SpectralConfig",
    "SpectralReport",
    "SupportSet",
    "SynonymLexicon",
    "__version__",
]
