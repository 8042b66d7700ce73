"""Tabular autoregressive toy model with a promote/suppress trainer.

The model maps a bounded context (the last 1-3 tokens, start-padded) to a
logit row; next-token distributions are softmax rows, so they stay exactly
normalized through training. Gradients come straight from the per-step
kernels, which makes the trainer double as an integration test of those
kernels: full-batch descent, no minibatch noise, bit-reproducible traces.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .metrics import mean_sequence_entropy
from .objective import CLAMP_EPS, DEFAULT_UL_WEIGHT

BOS = -1  # start-of-sequence padding id used in context keys

MIN_VOCAB, MAX_VOCAB = 2, 64
MIN_ORDER, MAX_ORDER = 1, 3

# DEFAULT_UL_WEIGHT is sized for production batches of ~1e5 tokens; the demo
# tasks batch tens of tokens, so the suppression term needs a proportionally
# larger weight to stay visible against cross-entropy within a short budget.
DEMO_UL_WEIGHT = 0.1


class Objective(enum.Enum):
    CE_ONLY = "ce"
    PROMOTE_SUPPRESS = "oxa"


@dataclass
class ToyModel:
    vocab_size: int
    context_order: int
    table: dict[tuple[int, ...], np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not MIN_VOCAB <= self.vocab_size <= MAX_VOCAB:
            raise ValueError(f"vocab_size must be in [{MIN_VOCAB}, {MAX_VOCAB}]")
        if not MIN_ORDER <= self.context_order <= MAX_ORDER:
            raise ValueError(f"context_order must be in [{MIN_ORDER}, {MAX_ORDER}]")

    @classmethod
    def uniform(cls, vocab_size: int, context_order: int) -> "ToyModel":
        """Zero logits everywhere: every next-token distribution is uniform."""
        return cls(vocab_size=vocab_size, context_order=context_order)

    def copy(self) -> "ToyModel":
        return ToyModel(
            vocab_size=self.vocab_size,
            context_order=self.context_order,
            table={k: v.copy() for k, v in self.table.items()},
        )

    def context(self, history: Sequence[int]) -> tuple[int, ...]:
        n = self.context_order
        tail = tuple(history[-n:]) if history else ()
        return (BOS,) * (n - len(tail)) + tail

    def logits_for(self, context: tuple[int, ...]) -> np.ndarray:
        row = self.table.get(context)
        if row is None:
            row = np.zeros(self.vocab_size)
            self.table[context] = row
        return row

    def next_probs(self, history: Sequence[int]) -> np.ndarray:
        return _kernels.get_backend().softmax(self.logits_for(self.context(history)))


@dataclass(frozen=True)
class TaskPrompt:
    prompt: tuple[int, ...]
    correct: tuple[tuple[int, ...], ...]
    incorrect: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class ToyTask:
    vocab_size: int
    context_order: int
    max_len: int
    prompts: tuple[TaskPrompt, ...]
    init_logits: tuple[tuple[tuple[int, ...], tuple[float, ...]], ...] = ()

    def validate(self) -> None:
        if not MIN_VOCAB <= self.vocab_size <= MAX_VOCAB:
            raise ValueError(f"vocab_size must be in [{MIN_VOCAB}, {MAX_VOCAB}]")
        if not MIN_ORDER <= self.context_order <= MAX_ORDER:
            raise ValueError(f"context_order must be in [{MIN_ORDER}, {MAX_ORDER}]")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if not self.prompts:
            raise ValueError("task has no prompts")
        for p in self.prompts:
            for seq in (p.prompt, *p.correct, *p.incorrect):
                for tok in seq:
                    if not 0 <= tok < self.vocab_size:
                        raise ValueError(f"token {tok} out of range for vocab {self.vocab_size}")
            overlap = set(p.correct) & set(p.incorrect)
            if overlap:
                raise ValueError(f"prompt {p.prompt}: sequences marked both correct and incorrect: {overlap}")
        for ctx, row in self.init_logits:
            if len(row) != self.vocab_size:
                raise ValueError(f"init logits for context {ctx} have length {len(row)}")
            if not all(math.isfinite(v) for v in row):
                raise ValueError(f"init logits for context {ctx} must be finite")


def model_for_task(task: ToyTask) -> ToyModel:
    """Fresh model matching the task, with any initial logit rows applied."""
    task.validate()
    model = ToyModel.uniform(task.vocab_size, task.context_order)
    for ctx, row in task.init_logits:
        model.table[tuple(ctx)] = np.asarray(row, dtype=np.float64).copy()
    return model


def per_token_logprobs(model: ToyModel, prompt: Sequence[int], sequence: Sequence[int]) -> list[float]:
    """log p(token | context) along the sequence, continuing the prompt."""
    kern = _kernels.get_backend()
    hist = _checked_tokens(model, prompt) + _checked_tokens(model, sequence)
    out: list[float] = []
    for i in range(len(prompt), len(hist)):
        ctx = model.context(hist[:i])
        out.append(-kern.ce_loss(model.logits_for(ctx), hist[i]))
    return out


def sequence_logprob(model: ToyModel, prompt: Sequence[int], sequence: Sequence[int]) -> float:
    """Total log-probability of the sequence given the prompt; 0 when empty."""
    return math.fsum(per_token_logprobs(model, prompt, sequence))


def _checked_tokens(model: ToyModel, tokens: Sequence[int]) -> tuple[int, ...]:
    toks = tuple(int(t) for t in tokens)
    for t in toks:
        if not 0 <= t < model.vocab_size:
            raise ValueError(f"token {t} out of range for vocab {model.vocab_size}")
    return toks


@dataclass(frozen=True)
class TraceRow:
    step: int
    loss_ce: float
    loss_ul: float
    loss_combined: float
    mean_entropy: float


TRACE_COLUMNS = ("step", "loss_ce", "loss_ul", "loss_combined", "mean_entropy")


def _walk_steps(model: ToyModel, prompts: Iterable[TaskPrompt], which: str):
    steps: list[tuple[tuple[int, ...], int]] = []
    for p in prompts:
        for seq in getattr(p, which):
            hist = p.prompt
            for tok in seq:
                steps.append((model.context(hist), tok))
                hist = hist + (tok,)
    return steps


def greedy_step_probs(model: ToyModel, prompt: Sequence[int], length: int) -> list[np.ndarray]:
    """Next-token distributions along a greedy rollout (argmax continuation)."""
    kern = _kernels.get_backend()
    hist = _checked_tokens(model, prompt)
    rows: list[np.ndarray] = []
    for _ in range(length):
        probs = kern.softmax(model.logits_for(model.context(hist)))
        rows.append(probs)
        hist = hist + (int(np.argmax(probs)),)
    return rows


def mean_policy_entropy(model: ToyModel, task: ToyTask) -> float:
    """Mean per-step entropy along greedy rollouts, averaged over prompts."""
    per_prompt = [
        mean_sequence_entropy(greedy_step_probs(model, p.prompt, task.max_len))
        for p in task.prompts
    ]
    return math.fsum(per_prompt) / len(per_prompt)


def _measure(model, task, promote, suppress, alpha, objective, kern) -> tuple[float, float, float, float]:
    ce_sum = 0.0
    for ctx, tok in promote:
        ce_sum += kern.ce_loss(model.logits_for(ctx), tok)
    ul_sum = 0.0
    for ctx, tok in suppress:
        ul_sum += kern.ul_loss(model.logits_for(ctx), tok, CLAMP_EPS)[0]
    loss_ce = ce_sum / len(promote) if promote else 0.0
    loss_ul = ul_sum / len(suppress) if suppress else 0.0
    if objective is Objective.PROMOTE_SUPPRESS:
        combined = loss_ce + alpha * loss_ul
    else:
        combined = loss_ce
    return loss_ce, loss_ul, combined, mean_policy_entropy(model, task)


def train(
    model: ToyModel,
    task: ToyTask,
    objective: Objective,
    alpha: float = DEFAULT_UL_WEIGHT,
    steps: int = 500,
    step_size: float = 0.5,
    seed: int = 0,
) -> tuple[ToyModel, list[TraceRow]]:
    """Full-batch gradient descent on the logit table.

    Correct sequences contribute cross-entropy; with PROMOTE_SUPPRESS the
    incorrect ones add alpha-weighted unlikelihood. Each loss term is
    normalized by its own token count. The trace has steps+1 rows: row k is
    the model state after k updates, including losses and the mean policy
    entropy along greedy rollouts. Training is deterministic; seed is kept
    for interface symmetry with rollout().
    """
    del seed
    task.validate()
    if model.vocab_size != task.vocab_size or model.context_order != task.context_order:
        raise ValueError("model and task disagree on vocab_size/context_order")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    model = model.copy()
    kern = _kernels.get_backend()
    promote = _walk_steps(model, task.prompts, "correct")
    suppress = _walk_steps(model, task.prompts, "incorrect")
    inv_tp = 1.0 / len(promote) if promote else 0.0
    ul_scale = alpha / len(suppress) if suppress else 0.0
    trace = [TraceRow(0, *_measure(model, task, promote, suppress, alpha, objective, kern))]
    for k in range(1, steps + 1):
        grads: dict[tuple[int, ...], np.ndarray] = {}
        for ctx, tok in promote:
            g = kern.ce_grad(model.logits_for(ctx), tok)
            acc = grads.get(ctx)
            if acc is None:
                grads[ctx] = g * inv_tp
            else:
                acc += g * inv_tp
        if objective is Objective.PROMOTE_SUPPRESS:
            for ctx, tok in suppress:
                g, _ = kern.ul_grad(model.logits_for(ctx), tok, CLAMP_EPS)
                acc = grads.get(ctx)
                if acc is None:
                    grads[ctx] = g * ul_scale
                else:
                    acc += g * ul_scale
        for ctx, g in grads.items():
            model.table[ctx] -= step_size * g
        row = TraceRow(k, *_measure(model, task, promote, suppress, alpha, objective, kern))
        if not all(map(math.isfinite, (row.loss_ce, row.loss_ul, row.loss_combined, row.mean_entropy))):
            raise RuntimeError(f"non-finite loss at step {k}: {row}")
        trace.append(row)
    return model, trace


def rollout(
    model: ToyModel,
    prompt: Sequence[int],
    samples: int,
    temperature: float,
    seed: int,
    *,
    length: int,
) -> list[tuple[int, ...]]:
    """Ancestral sampling with temperature-scaled logits, fixed-seed reproducible."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    if length < 1:
        raise ValueError("length must be >= 1")
    kern = _kernels.get_backend()
    base = _checked_tokens(model, prompt)
    rng = np.random.default_rng(seed)
    out: list[tuple[int, ...]] = []
    for _ in range(samples):
        hist = base
        seq: list[int] = []
        for _ in range(length):
            logits = model.logits_for(model.context(hist)) / temperature
            probs = kern.softmax(logits)
            u = rng.random()
            acc = 0.0
            tok = model.vocab_size - 1
            for j, p in enumerate(probs.tolist()):
                acc += p
                if u < acc:
                    tok = j
                    break
            seq.append(tok)
            hist = hist + (tok,)
        out.append(tuple(seq))
    return out


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k: 1 - C(n-c, k)/C(n, k), in exact arithmetic."""
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return float(1 - Fraction(math.comb(n - c, k), math.comb(n, k)))


def write_trace_csv(trace: Iterable[TraceRow], path: str | Path) -> None:
    """Trace rows as CSV with full-precision (repr) float formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in trace:
            fh.write(
                f"{row.step},{row.loss_ce!r},{row.loss_ul!r},"
                f"{row.loss_combined!r},{row.mean_entropy!r}\n"
            )


def task_to_dict(task: ToyTask) -> dict:
    d: dict = {
        "vocab_size": task.vocab_size,
        "context_order": task.context_order,
        "max_len": task.max_len,
        "prompts": [
            {
                "prompt": list(p.prompt),
                "correct": [list(s) for s in p.correct],
                "incorrect": [list(s) for s in p.incorrect],
            }
            for p in task.prompts
        ],
    }
    if task.init_logits:
        d["init_logits"] = [
            {"context": list(ctx), "logits": list(row)} for ctx, row in task.init_logits
        ]
    return d


def task_from_dict(obj: Mapping) -> ToyTask:
    try:
        prompts = tuple(
            TaskPrompt(
                prompt=tuple(int(t) for t in p["prompt"]),
                correct=tuple(tuple(int(t) for t in s) for s in p.get("correct", [])),
                incorrect=tuple(tuple(int(t) for t in s) for s in p.get("incorrect", [])),
            )
            for p in obj["prompts"]
        )
        task = ToyTask(
            vocab_size=int(obj["vocab_size"]),
            context_order=int(obj["context_order"]),
            max_len=int(obj["max_len"]),
            prompts=prompts,
            init_logits=tuple(
                (tuple(int(t) for t in entry["context"]), tuple(float(v) for v in entry["logits"]))
                for entry in obj.get("init_logits", [])
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed task definition: {exc}") from exc
    task.validate()
    return task


def load_task(path: str | Path) -> ToyTask:
    with open(path, "r", encoding="utf-8") as fh:
        return task_from_dict(json.load(fh))


def save_task(task: ToyTask, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(task_to_dict(task), fh, indent=2)
        fh.write("\n")


def build_overconfidence_task(num_groups: int = 2) -> ToyTask:
    """Demo task pairing overconfident errors with underconfident truths.

    Each group owns five tokens: a prompt, an incorrect attractor token whose
    next-step probability starts at 0.9 in every initialized context, two
    one-token correct answers starting at 0.02 and 0.05, and a spare. With
    max_len above the correct answers' length, a greedy rollout finishes the
    answer and then falls into the attractor context, which only suppression
    training flattens; cross-entropy alone never visits it. Restricting the
    correct set via lowest_ppl_subset() gives the sharpen-what-you-know
    baseline arm.
    """
    if not 1 <= num_groups <= 12:
        raise ValueError("num_groups must be in [1, 12]")
    vocab = 5 * num_groups
    prompts = []
    init: list[tuple[tuple[int, ...], tuple[float, ...]]] = []

    def log_row(spec: dict[int, float]) -> tuple[float, ...]:
        rest = 1.0 - sum(spec.values())
        probs = [rest / (vocab - len(spec))] * vocab
        for tok, p in spec.items():
            probs[tok] = p
        return tuple(math.log(p) for p in probs)

    for g in range(num_groups):
        b = 5 * g
        wrong, lo, hi = b + 1, b + 2, b + 3
        prompts.append(
            TaskPrompt(prompt=(b,), correct=((lo,), (hi,)), incorrect=((wrong,) * 3,))
        )
        init.append(((b,), log_row({wrong: 0.9, lo: 0.02, hi: 0.05})))
        for ctx_tok in (wrong, lo, hi):
            init.append(((ctx_tok,), log_row({wrong: 0.9})))
    task = ToyTask(
        vocab_size=vocab,
        context_order=1,
        max_len=3,
        prompts=tuple(prompts),
        init_logits=tuple(init),
    )
    task.validate()
    return task


def lowest_ppl_subset(task: ToyTask, model: ToyModel) -> ToyTask:
    """Keep only each prompt's most confident correct sequence under model.

    This is the converse of promoting low-confidence data: train exclusively
    on what the model already finds easy.
    """
    new_prompts = []
    for p in task.prompts:
        if not p.correct:
            new_prompts.append(p)
            continue
        best = min(
            p.correct,
            key=lambda seq: (-sequence_logprob(model, p.prompt, seq) / max(len(seq), 1), seq),
        )
        new_prompts.append(replace(p, correct=(best,)))
    return replace(task, prompts=tuple(new_prompts))
