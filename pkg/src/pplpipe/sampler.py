"""Perplexity-stratified record selection.

The promotion selector partitions candidates into perplexity bins, allocates
per-bin quotas from a Gaussian density over the bin centers (floor-normalized,
with the rounding remainder distributed by largest fractional part), then
fills each quota longest-response-first under a per-query cap. The extreme
selector takes a greedy lowest- or highest-perplexity prefix under the same
cap. Both are pure functions of (corpus, parameters): ties always break by
ascending record id, so output never depends on input file order.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_right
from dataclasses import dataclass, replace
from typing import Sequence

from .records import Corpus, TrajectoryRecord, ValidationError

# Data-prep defaults; mirror the curation setup this pipeline reproduces.
DEFAULT_PPL_MIN = 1.0
DEFAULT_PPL_MAX = 5.0
DEFAULT_BIN_WIDTH = 0.05
DEFAULT_SIGMA = 0.25
DEFAULT_MU = 2.5
ALT_MU = 3.0  # alternative center used for larger scoring models
DEFAULT_TOTAL = 50_000
DEFAULT_MAX_PER_QUERY = 1


class Direction(enum.Enum):
    LOWEST = "lowest"
    HIGHEST = "highest"


@dataclass(frozen=True)
class GaussianTarget:
    """Target perplexity profile for promotion sampling."""

    mu: float = DEFAULT_MU
    sigma: float = DEFAULT_SIGMA
    p_min: float = DEFAULT_PPL_MIN
    p_max: float = DEFAULT_PPL_MAX
    bin_width: float = DEFAULT_BIN_WIDTH
    total: int = DEFAULT_TOTAL
    max_per_query: int | None = DEFAULT_MAX_PER_QUERY  # None means unlimited

    def __post_init__(self) -> None:
        if not (self.sigma > 0):
            raise ValidationError(f"sigma must be > 0, got {self.sigma}")
        if not (1.0 <= self.p_min < self.p_max):
            raise ValidationError(
                f"need 1 <= p_min < p_max, got [{self.p_min}, {self.p_max}]"
            )
        if not (0 < self.bin_width <= self.p_max - self.p_min):
            raise ValidationError(f"bin_width {self.bin_width} outside (0, p_max - p_min]")
        if self.total < 1:
            raise ValidationError(f"total must be >= 1, got {self.total}")
        if self.max_per_query is not None and self.max_per_query < 1:
            raise ValidationError(f"max_per_query must be >= 1, got {self.max_per_query}")


@dataclass(frozen=True)
class BinAllocation:
    """Per-bin audit state: edges, centers, densities, quotas, realized picks."""

    edges: tuple[float, ...]
    centers: tuple[float, ...]
    densities: tuple[float, ...] = ()
    targets: tuple[int, ...] = ()
    selected_per_bin: tuple[int, ...] = ()

    @property
    def bin_count(self) -> int:
        return len(self.centers)


def bin_edges(target: GaussianTarget) -> tuple[float, ...]:
    """ceil((p_max - p_min)/w) bins; the last edge is pinned to p_max."""
    m = math.ceil((target.p_max - target.p_min) / target.bin_width)
    edges = [target.p_min + i * target.bin_width for i in range(m)]
    edges.append(target.p_max)
    return tuple(edges)


def _bin_index(edges: Sequence[float], ppl: float) -> int | None:
    """[left, right) bins, the last one closed on the right; None if outside."""
    if ppl < edges[0] or ppl > edges[-1]:
        return None
    if ppl == edges[-1]:
        return len(edges) - 2
    return bisect_right(edges, ppl) - 1


def bin_records(
    corpus: Corpus, target: GaussianTarget
) -> tuple[BinAllocation, list[list[TrajectoryRecord]]]:
    """Partition records by perplexity, discarding those outside the range."""
    edges = bin_edges(target)
    centers = tuple((edges[i] + edges[i + 1]) / 2.0 for i in range(len(edges) - 1))
    bins: list[list[TrajectoryRecord]] = [[] for _ in centers]
    for rec in corpus:
        if rec.ppl is None:
            raise ValidationError(f"record {rec.id!r}: ppl missing, cannot bin")
        if rec.length is None:
            raise ValidationError(f"record {rec.id!r}: length missing, cannot bin")
        idx = _bin_index(edges, rec.ppl)
        if idx is not None:
            bins[idx].append(rec)
    return BinAllocation(edges=edges, centers=centers), bins


def gaussian_density(x: float, mu: float, sigma: float) -> float:
    return math.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


def allocate_targets(
    alloc: BinAllocation, target: GaussianTarget, *, remainder_topup: bool = True
) -> BinAllocation:
    """Quotas T_i = floor(N * d_i / sum(d)) from the Gaussian density.

    Flooring under-allocates by up to bin_count - 1; with remainder_topup the
    shortfall goes one by one to the bins with the largest fractional parts
    (ties to the lower bin index) so the quotas sum exactly to N.
    """
    densities = tuple(gaussian_density(x, target.mu, target.sigma) for x in alloc.centers)
    total_density = math.fsum(densities)
    shares = [target.total * d / total_density for d in densities]
    quotas = [math.floor(s) for s in shares]
    if remainder_topup:
        remainder = target.total - sum(quotas)
        order = sorted(range(len(quotas)), key=lambda i: (quotas[i] - shares[i], i))
        for i in order[:remainder]:
            quotas[i] += 1
    return replace(alloc, densities=densities, targets=tuple(quotas))


def _fill_bins(
    bins: list[list[TrajectoryRecord]],
    quotas: Sequence[int],
    max_per_query: int | None,
    query_counts: dict[str, int],
) -> tuple[list[TrajectoryRecord], list[int]]:
    """Longest-first greedy fill, bins in ascending index order."""
    cap = math.inf if max_per_query is None else max_per_query
    chosen: list[TrajectoryRecord] = []
    picked = [0] * len(bins)
    for i, bucket in enumerate(bins):
        for rec in sorted(bucket, key=lambda r: (-r.length, r.id)):
            if picked[i] >= quotas[i]:
                break
            if query_counts.get(rec.query, 0) < cap:
                chosen.append(rec)
                picked[i] += 1
                query_counts[rec.query] = query_counts.get(rec.query, 0) + 1
    return chosen, picked


def gaussian_selection(
    corpus: Corpus,
    target: GaussianTarget,
    *,
    remainder_topup: bool = True,
    redistribute: bool = False,
) -> tuple[Corpus, BinAllocation]:
    """Promotion selection plus the per-bin audit trail.

    The caller is expected to pre-filter to verified-correct records carrying
    ppl and length. With redistribute=True, quota left unfilled by under-
    supplied bins is re-offered to bins that still have unpicked candidates,
    using the same density-proportional largest-remainder rule; each round
    re-runs the greedy fill from scratch so results stay order-independent.
    """
    alloc, bins = bin_records(corpus, target)
    alloc = allocate_targets(alloc, target, remainder_topup=remainder_topup)
    quotas = list(alloc.targets)
    prev_deficit: int | None = None
    while True:
        chosen, picked = _fill_bins(bins, quotas, target.max_per_query, {})
        deficit = target.total - len(chosen)
        if not redistribute or deficit <= 0:
            break
        if prev_deficit is not None and deficit >= prev_deficit:
            break  # extra quota went to query-capped candidates; no progress
        prev_deficit = deficit
        leftover = [len(bins[i]) - picked[i] for i in range(len(bins))]
        open_bins = [i for i in range(len(bins)) if leftover[i] > 0]
        if not open_bins:
            break
        weight = math.fsum(alloc.densities[i] for i in open_bins)
        if weight <= 0:
            break
        shares = {i: deficit * alloc.densities[i] / weight for i in open_bins}
        extra = {i: min(math.floor(shares[i]), leftover[i]) for i in open_bins}
        spare = deficit - sum(extra.values())
        order = sorted(open_bins, key=lambda i: (extra[i] - shares[i], i))
        for i in order:
            if spare <= 0:
                break
            if extra[i] < leftover[i]:
                extra[i] += 1
                spare -= 1
        if all(v == 0 for v in extra.values()):
            break
        for i in open_bins:
            quotas[i] += extra[i]
    alloc = replace(alloc, targets=tuple(quotas), selected_per_bin=tuple(picked))
    return Corpus.from_records(chosen), alloc


def select_promotion(
    corpus: Corpus,
    target: GaussianTarget,
    *,
    remainder_topup: bool = True,
    redistribute: bool = False,
) -> Corpus:
    """Gaussian-guided promotion selection; returns records in id order."""
    selected, _ = gaussian_selection(
        corpus, target, remainder_topup=remainder_topup, redistribute=redistribute
    )
    return selected


def select_extreme(
    corpus: Corpus,
    count: int,
    direction: Direction = Direction.LOWEST,
    max_per_query: int | None = None,
) -> Corpus:
    """Greedy perplexity-extreme prefix under a per-query cap."""
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    for rec in corpus:
        if rec.ppl is None:
            raise ValidationError(f"record {rec.id!r}: ppl missing, cannot rank")
    if direction is Direction.LOWEST:
        ranked = sorted(corpus, key=lambda r: (r.ppl, r.id))
    else:
        ranked = sorted(corpus, key=lambda r: (-r.ppl, r.id))
    cap = math.inf if max_per_query is None else max_per_query
    counts: dict[str, int] = {}
    chosen: list[TrajectoryRecord] = []
    for rec in ranked:
        if len(chosen) >= count:
            break
        if counts.get(rec.query, 0) < cap:
            chosen.append(rec)
            counts[rec.query] = counts.get(rec.query, 0) + 1
    return Corpus.from_records(chosen)
