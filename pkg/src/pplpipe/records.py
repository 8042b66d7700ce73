"""Trajectory records and JSONL corpus I/O.

One JSON object per line; field names are part of the wire format:
id, query, response, gold_answer, token_logprobs, length, ppl, verified.
Optional fields are omitted when absent. Unknown fields survive a
load/save round-trip. A corpus is canonically ordered by ascending id,
so identical record sets serialize to identical bytes regardless of the
order they were read in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator, Mapping

from .metrics import perplexity

FIELD_ORDER = (
    "id",
    "query",
    "response",
    "gold_answer",
    "token_logprobs",
    "length",
    "ppl",
    "verified",
)

PPL_CONSISTENCY_RTOL = 1e-9


class ValidationError(ValueError):
    """A record or corpus violates its schema contract."""


@dataclass(frozen=True)
class TrajectoryRecord:
    """One (query, response) pair with optional scoring metadata."""

    id: str
    query: str
    response: str
    gold_answer: str | None = None
    token_logprobs: tuple[float, ...] | None = None
    length: int | None = None
    ppl: float | None = None
    verified: bool | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError(f"record id must be a non-empty string, got {self.id!r}")
        for name in ("query", "response"):
            if not isinstance(getattr(self, name), str):
                raise ValidationError(f"record {self.id!r}: {name} must be a string")
        if self.gold_answer is not None and not isinstance(self.gold_answer, str):
            raise ValidationError(f"record {self.id!r}: gold_answer must be a string")
        if self.token_logprobs is not None:
            for i, lp in enumerate(self.token_logprobs):
                if not isinstance(lp, (int, float)) or isinstance(lp, bool) or not math.isfinite(lp):
                    raise ValidationError(
                        f"record {self.id!r}: token_logprobs[{i}] is not a finite number"
                    )
                if lp > 0.0:
                    raise ValidationError(
                        f"record {self.id!r}: token_logprobs[{i}] is positive ({lp!r})"
                    )
        if self.length is not None:
            if not isinstance(self.length, int) or isinstance(self.length, bool) or self.length < 0:
                raise ValidationError(f"record {self.id!r}: length must be a nonnegative integer")
            if self.token_logprobs is not None and self.length != len(self.token_logprobs):
                raise ValidationError(
                    f"record {self.id!r}: length {self.length} does not match "
                    f"{len(self.token_logprobs)} token_logprobs"
                )
        if self.ppl is not None:
            if not isinstance(self.ppl, (int, float)) or isinstance(self.ppl, bool):
                raise ValidationError(f"record {self.id!r}: ppl must be a number")
            if not math.isfinite(self.ppl) or self.ppl < 1.0:
                raise ValidationError(f"record {self.id!r}: ppl must be finite and >= 1, got {self.ppl!r}")
            if self.token_logprobs:
                expected = perplexity(self.token_logprobs)
                if abs(self.ppl - expected) > PPL_CONSISTENCY_RTOL * expected:
                    raise ValidationError(
                        f"record {self.id!r}: ppl {self.ppl!r} inconsistent with "
                        f"token_logprobs (expected {expected!r})"
                    )
        if self.verified is not None and not isinstance(self.verified, bool):
            raise ValidationError(f"record {self.id!r}: verified must be a boolean")

    def with_fields(self, **kwargs) -> "TrajectoryRecord":
        rec = replace(self, **kwargs)
        rec.validate()
        return rec

    def to_json_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "query": self.query, "response": self.response}
        if self.gold_answer is not None:
            d["gold_answer"] = self.gold_answer
        if self.token_logprobs is not None:
            d["token_logprobs"] = list(self.token_logprobs)
        if self.length is not None:
            d["length"] = self.length
        if self.ppl is not None:
            d["ppl"] = self.ppl
        if self.verified is not None:
            d["verified"] = self.verified
        for key in sorted(self.extra):
            d[key] = self.extra[key]
        return d

    @classmethod
    def from_json_dict(cls, obj: Mapping[str, Any]) -> "TrajectoryRecord":
        if not isinstance(obj, Mapping):
            raise ValidationError(f"record must be a JSON object, got {type(obj).__name__}")
        for name in ("id", "query", "response"):
            if name not in obj:
                raise ValidationError(f"record missing required field {name!r}")
        logprobs = obj.get("token_logprobs")
        rec = cls(
            id=obj["id"],
            query=obj["query"],
            response=obj["response"],
            gold_answer=obj.get("gold_answer"),
            token_logprobs=None if logprobs is None else tuple(float(x) for x in logprobs),
            length=obj.get("length"),
            ppl=obj.get("ppl"),
            verified=obj.get("verified"),
            extra={k: v for k, v in obj.items() if k not in FIELD_ORDER},
        )
        rec.validate()
        return rec


@dataclass(frozen=True)
class Corpus:
    """Immutable record collection in canonical (ascending id) order."""

    records: tuple[TrajectoryRecord, ...]

    @classmethod
    def from_records(cls, records) -> "Corpus":
        ordered = sorted(records, key=lambda r: r.id)
        seen: set[str] = set()
        for rec in ordered:
            if rec.id in seen:
                raise ValidationError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
        return cls(records=tuple(ordered))

    def __iter__(self) -> Iterator[TrajectoryRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    def filter(self, predicate) -> "Corpus":
        return Corpus(records=tuple(r for r in self.records if predicate(r)))

    def map(self, fn) -> "Corpus":
        return Corpus.from_records(fn(r) for r in self.records)


def load_corpus(path: str | Path) -> Corpus:
    """Parse a JSONL file into a Corpus; errors name the offending line."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: line {line_no}: malformed JSON ({exc.msg})") from exc
            try:
                records.append(TrajectoryRecord.from_json_dict(obj))
            except ValidationError as exc:
                raise ValidationError(f"{path}: line {line_no}: {exc}") from None
    return Corpus.from_records(records)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write one record per line in canonical order; output is byte-stable."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus:
            fh.write(json.dumps(rec.to_json_dict(), ensure_ascii=False, allow_nan=False,
                                separators=(",", ":")))
            fh.write("\n")
