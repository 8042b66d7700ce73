"""Rule-based answer verification.

Extracts the final ``\\boxed{...}`` group from a reasoning trajectory and
compares it against the gold answer. Numeric comparison is exact rational
arithmetic, never floating point, so "1/10" equals "0.1" and "0.3333"
does not equal "1/3". Everything outside the documented numeric subset
(integers, finite decimals, a/b, \\frac{a}{b}) falls back to normalized
string equality.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from fractions import Fraction

from .records import TrajectoryRecord, ValidationError


class Status(enum.Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class VerificationResult:
    extracted: str | None
    status: Status


_BOXED = "\\boxed"
_FRAC_RE = re.compile(r"^\\frac\{([^{}]+)\}\{([^{}]+)\}$")
_STRIP_TOKENS = ("\\left", "\\right", "\\,", "\\;", "\\ ")


def extract_boxed(response: str) -> str | None:
    """Contents of the last balanced \\boxed{...} group, or None.

    Nested braces are allowed; an unbalanced group is skipped in favor of
    the next-to-last one.
    """
    start = len(response)
    while True:
        idx = response.rfind(_BOXED, 0, start)
        if idx < 0:
            return None
        start = idx
        pos = idx + len(_BOXED)
        while pos < len(response) and response[pos].isspace():
            pos += 1
        if pos >= len(response) or response[pos] != "{":
            continue
        depth = 1
        pos += 1
        begin = pos
        while pos < len(response):
            ch = response[pos]
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return response[begin:pos]
            pos += 1
        # unbalanced group; try the previous occurrence


def normalize_answer(s: str) -> str:
    """Strip $, spacing macros, whitespace, and one pair of outer braces."""
    s = s.replace("$", "")
    for token in _STRIP_TOKENS:
        s = s.replace(token, "")
    s = s.strip()
    if len(s) >= 2 and s[0] == "{" and s[-1] == "}":
        depth = 0
        wraps = True
        for i, ch in enumerate(s):
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0 and i != len(s) - 1:
                    wraps = False
                    break
        if wraps and depth == 0:
            s = s[1:-1].strip()
    return s


def _parse_rational(s: str) -> Fraction | None:
    sign = 1
    if s.startswith(("+", "-")):
        if s[0] == "-":
            sign = -1
        s = s[1:]
    m = _FRAC_RE.match(s)
    if m:
        num = _parse_rational(m.group(1).strip())
        den = _parse_rational(m.group(2).strip())
        if num is None or den is None or den == 0:
            return None
        return sign * num / den
    try:
        return sign * Fraction(s)
    except (ValueError, ZeroDivisionError):
        return None


def answers_equivalent(candidate: str, gold: str) -> bool:
    """Exact equality after normalization; rational values compare as rationals."""
    a = normalize_answer(candidate)
    b = normalize_answer(gold)
    ra = _parse_rational(a)
    rb = _parse_rational(b)
    if ra is not None and rb is not None:
        return ra == rb
    return a == b


def verify(record: TrajectoryRecord) -> VerificationResult:
    """Extract the final boxed answer and compare with the gold answer."""
    if record.gold_answer is None:
        raise ValidationError(f"record {record.id!r}: gold_answer missing, cannot verify")
    boxed = extract_boxed(record.response)
    if boxed is None:
        return VerificationResult(extracted=None, status=Status.UNPARSEABLE)
    status = Status.CORRECT if answers_equivalent(boxed, record.gold_answer) else Status.INCORRECT
    return VerificationResult(extracted=normalize_answer(boxed), status=status)
