"""Perplexity-guided corpus curation and promote/suppress training objectives.

Curate fine-tuning corpora by model confidence: keep verified-correct
trajectories whose perplexity profile matches a target Gaussian, flag
confidently-wrong ones for unlikelihood suppression, and demonstrate the
resulting entropy dynamics on a tabular toy model.
"""

from ._kernels import active_backend, available_backends, use_backend
from .metrics import entropy, mean_sequence_entropy, perplexity
from .objective import (
    CLAMP_EPS,
    DEFAULT_UL_WEIGHT,
    GradCheckReport,
    LossBreakdown,
    Mode,
    Step,
    TokenBatch,
    ce_grad,
    ce_loss,
    combined_loss,
    grad_check,
    softmax,
    ul_grad,
    ul_loss,
)
from .records import Corpus, TrajectoryRecord, ValidationError, load_corpus, save_corpus
from .sampler import (
    BinAllocation,
    Direction,
    GaussianTarget,
    allocate_targets,
    bin_records,
    select_extreme,
    select_promotion,
)
from .toylm import (
    Objective,
    ToyModel,
    ToyTask,
    pass_at_k,
    rollout,
    sequence_logprob,
    train,
)
from .verifier import Status, VerificationResult, answers_equivalent, extract_boxed, verify

__version__ = "0.1.0"

__all__ = [
    "BinAllocation",
    "CLAMP_EPS",
    "Corpus",
    "DEFAULT_UL_WEIGHT",
    "Direction",
    "GaussianTarget",
    "GradCheckReport",
    "LossBreakdown",
    "Mode",
    "Objective",
    "Status",
    "Step",
    "TokenBatch",
    "ToyModel",
    "ToyTask",
    "TrajectoryRecord",
    "ValidationError",
    "VerificationResult",
    "active_backend",
    "allocate_targets",
    "answers_equivalent",
    "available_backends",
    "bin_records",
    "ce_grad",
    "ce_loss",
    "combined_loss",
    "entropy",
    "extract_boxed",
    "grad_check",
    "load_corpus",
    "mean_sequence_entropy",
    "pass_at_k",
    "perplexity",
    "rollout",
    "save_corpus",
    "select_extreme",
    "select_promotion",
    "sequence_logprob",
    "softmax",
    "train",
    "ul_grad",
    "ul_loss",
    "use_backend",
    "verify",
]
