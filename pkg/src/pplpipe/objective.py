"""Token-level training objectives and their logit gradients.

Two step modes: PROMOTE steps pay cross-entropy (push the target token up),
SUPPRESS steps pay unlikelihood, -log(1 - p_target) (push it down). The
combined objective is ce + alpha * ul, with each term normalized by its own
token count so ragged batches keep a length-independent scale.

The unlikelihood gradient scales off-target components by the odds ratio
p/(1-p), which diverges as p -> 1; p_target is therefore clamped to
1 - CLAMP_EPS and clamp events are counted and surfaced.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

DEFAULT_UL_WEIGHT = 1e-4
CLAMP_EPS = 1e-12
GRAD_CHECK_TOL = 1e-6


class Mode(enum.Enum):
    PROMOTE = "promote"
    SUPPRESS = "suppress"


@dataclass(frozen=True)
class Step:
    """One token position: a logit vector, its target index, and a mode."""

    logits: np.ndarray
    target: int
    mode: Mode


@dataclass(frozen=True)
class TokenBatch:
    """Steps plus sequence boundaries (offsets partitioning the steps)."""

    steps: tuple[Step, ...]
    boundaries: tuple[int, ...]

    @classmethod
    def from_sequences(cls, sequences: Iterable[tuple[Sequence, Sequence[int], Mode]]) -> "TokenBatch":
        """Build from (per-step logits, targets, mode) triples, one per sequence."""
        steps: list[Step] = []
        bounds = [0]
        for logit_rows, targets, mode in sequences:
            rows = [_kernels.as_logits(row) for row in logit_rows]
            if len(rows) != len(targets):
                raise ValueError(f"{len(rows)} logit rows for {len(targets)} targets")
            steps.extend(Step(r, int(t), mode) for r, t in zip(rows, targets))
            bounds.append(len(steps))
        batch = cls(steps=tuple(steps), boundaries=tuple(bounds))
        batch.validate()
        return batch

    def validate(self) -> None:
        if self.boundaries[0] != 0 or self.boundaries[-1] != len(self.steps):
            raise ValueError("boundaries must start at 0 and end at the step count")
        if any(lo > hi for lo, hi in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be nondecreasing")
        for i, step in enumerate(self.steps):
            v = step.logits.shape[0]
            if v < 2:
                raise ValueError(f"step {i}: need at least 2 logits, got {v}")
            if not np.all(np.isfinite(step.logits)):
                raise ValueError(f"step {i}: logits must be finite")
            if not 0 <= step.target < v:
                raise ValueError(f"step {i}: target {step.target} out of range for {v} logits")

    def count(self, mode: Mode) -> int:
        return sum(1 for s in self.steps if s.mode is mode)


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    ul: float
    combined: float
    promote_tokens: int
    suppress_tokens: int
    clamp_events: int


def softmax(z) -> np.ndarray:
    arr = _validate_logits(z)
    return _kernels.get_backend().softmax(arr)


def _validate_logits(z) -> np.ndarray:
    arr = _kernels.as_logits(z)
    if arr.shape[0] < 2:
        raise ValueError(f"need at least 2 logits, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("logits must be finite")
    return arr


def batch_breakdown(batch: TokenBatch, alpha: float = DEFAULT_UL_WEIGHT) -> LossBreakdown:
    """Per-mode mean losses and their alpha-weighted combination.

    A mode with no steps contributes 0. Sums run in step order so results
    are reproducible bit for bit.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if not batch.steps:
        raise ValueError("empty batch")
    kern = _kernels.get_backend()
    ce_sum = 0.0
    ul_sum = 0.0
    n_ce = 0
    n_ul = 0
    clamps = 0
    for step in batch.steps:
        if step.mode is Mode.PROMOTE:
            ce_sum += kern.ce_loss(step.logits, step.target)
            n_ce += 1
        else:
            loss, clamped = kern.ul_loss(step.logits, step.target, CLAMP_EPS)
            ul_sum += loss
            n_ul += 1
            if clamped:
                clamps += 1
    ce = ce_sum / n_ce if n_ce else 0.0
    ul = ul_sum / n_ul if n_ul else 0.0
    return LossBreakdown(
        ce=ce,
        ul=ul,
        combined=ce + alpha * ul,
        promote_tokens=n_ce,
        suppress_tokens=n_ul,
        clamp_events=clamps,
    )


def ce_loss(batch: TokenBatch) -> float:
    """Mean negative log-likelihood over the batch's PROMOTE steps."""
    if batch.count(Mode.PROMOTE) == 0:
        raise ValueError("batch has no promote steps")
    return batch_breakdown(batch, alpha=0.0).ce


def ul_loss(batch: TokenBatch) -> float:
    """Mean unlikelihood loss over the batch's SUPPRESS steps."""
    if batch.count(Mode.SUPPRESS) == 0:
        raise ValueError("batch has no suppress steps")
    return batch_breakdown(batch, alpha=0.0).ul


def combined_loss(batch: TokenBatch, alpha: float = DEFAULT_UL_WEIGHT) -> float:
    """ce_loss + alpha * ul_loss; a missing mode contributes 0."""
    return batch_breakdown(batch, alpha=alpha).combined


def ce_grad(z, target: int) -> np.ndarray:
    """Gradient of the per-step cross-entropy: softmax(z) - one_hot(target)."""
    arr = _validate_logits(z)
    return _kernels.get_backend().ce_grad(arr, target)


def ul_grad(z, target: int) -> np.ndarray:
    """Gradient of the per-step unlikelihood loss.

    Target component p_t; off-target j gets -p_j * p_t/(1 - p_t) with p_t
    clamped to 1 - CLAMP_EPS.
    """
    arr = _validate_logits(z)
    grad, _ = _kernels.get_backend().ul_grad(arr, target, CLAMP_EPS)
    return grad


@dataclass(frozen=True)
class GradCheckReport:
    loss: str
    trials: int
    h: float
    max_rel_error: float
    worst_trial: int
    worst_vocab: int
    worst_target: int
    clamped_steps: int
    passed: bool

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return (
            f"{state} {self.loss}: {self.trials} trials, h={self.h:g}, "
            f"max relative error {self.max_rel_error:.3e} "
            f"(worst: trial {self.worst_trial}, V={self.worst_vocab}, "
            f"target {self.worst_target}), clamped steps {self.clamped_steps}"
        )


def grad_check(loss: str, trials: int = 1000, seed: int = 0, h: float = 1e-5) -> GradCheckReport:
    """Compare analytical gradients against central finite differences.

    Draws `trials` random cases with vocabulary size in [2, 64] and logits
    uniform in [-10, 10]. The per-trial relative error is the max-norm of
    (analytic - numeric) divided by the max-norm of the numeric gradient.
    Clamped suppress steps are counted but excluded from the comparison.
    Passes when the max relative error is below GRAD_CHECK_TOL.
    """
    if loss not in ("ce", "ul"):
        raise ValueError(f"loss must be 'ce' or 'ul', got {loss!r}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    kern = _kernels.get_backend()
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    worst = (0, 0, 0)
    clamped_steps = 0
    for trial in range(trials):
        v = int(rng.integers(2, 65))
        z = rng.uniform(-10.0, 10.0, v)
        target = int(rng.integers(0, v))
        if loss == "ce":
            analytic = kern.ce_grad(z, target)
        else:
            analytic, clamped = kern.ul_grad(z, target, CLAMP_EPS)
            if clamped:
                clamped_steps += 1
                continue
        numeric = np.empty(v)
        for j in range(v):
            orig = z[j]
            z[j] = orig + h
            if loss == "ce":
                up = kern.ce_loss(z, target)
            else:
                up = kern.ul_loss(z, target, CLAMP_EPS)[0]
            z[j] = orig - h
            if loss == "ce":
                down = kern.ce_loss(z, target)
            else:
                down = kern.ul_loss(z, target, CLAMP_EPS)[0]
            z[j] = orig
            numeric[j] = (up - down) / (2.0 * h)
        scale = float(np.max(np.abs(numeric)))
        rel = float(np.max(np.abs(analytic - numeric))) / max(scale, 1e-300)
        if rel > max_rel:
            max_rel = rel
            worst = (trial, v, target)
    return GradCheckReport(
        loss=loss,
        trials=trials,
        h=h,
        max_rel_error=max_rel,
        worst_trial=worst[0],
        worst_vocab=worst[1],
        worst_target=worst[2],
        clamped_steps=clamped_steps,
        passed=max_rel < GRAD_CHECK_TOL,
    )
