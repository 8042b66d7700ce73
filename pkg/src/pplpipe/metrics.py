"""Confidence metrics: sequence perplexity and next-token entropy.

Natural log throughout. Sums use math.fsum, so both metrics are exactly
invariant under permutation of their inputs.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

PROB_SUM_TOL = 1e-9


def perplexity(token_logprobs: Sequence[float]) -> float:
    """exp of the negated mean of per-token log-probabilities.

    The mean is taken first and exponentiated once, so long low-confidence
    sequences stay finite. Entries must be finite and <= 0.
    """
    lps = list(token_logprobs)
    if not lps:
        raise ValueError("perplexity of an empty sequence is undefined")
    for i, lp in enumerate(lps):
        if not math.isfinite(lp):
            raise ValueError(f"token_logprobs[{i}] is not finite: {lp!r}")
        if lp > 0.0:
            raise ValueError(f"token_logprobs[{i}] is positive: {lp!r}")
    return math.exp(-math.fsum(lps) / len(lps))


def validate_probs(probs: Sequence[float]) -> list[float]:
    """Check a probability vector: entries in [0, 1], summing to 1."""
    ps = [float(p) for p in probs]
    if not ps:
        raise ValueError("empty probability vector")
    for i, p in enumerate(ps):
        if not math.isfinite(p) or p < 0.0 or p > 1.0:
            raise ValueError(f"probs[{i}] not in [0, 1]: {p!r}")
    total = math.fsum(ps)
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probabilities sum to {total!r}, not 1")
    return ps


def entropy(probs: Sequence[float]) -> float:
    """Shannon entropy -sum(p * log p), with 0 log 0 taken as 0."""
    ps = validate_probs(probs)
    s = math.fsum(p * math.log(p) for p in ps if p > 0.0)
    return -s if s != 0.0 else 0.0


def mean_sequence_entropy(per_step_probs: Iterable[Sequence[float]]) -> float:
    """Arithmetic mean of per-step entropies along one sequence."""
    ents = [entropy(p) for p in per_step_probs]
    if not ents:
        raise ValueError("mean entropy of an empty sequence is undefined")
    return math.fsum(ents) / len(ents)
