"""End-to-end offline curation: verify, score, split, select, report.

Stage order: re-verify every record, fill perplexity (and length) from token
log-probabilities where missing, split on the verification outcome, run the
Gaussian promotion selector over the correct split and the lowest-perplexity
extreme selector over the incorrect one, then write promote.jsonl,
suppress.jsonl, report.csv and manifest.json. Curation takes no random
input, so a rerun over identical inputs reproduces every output byte.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .metrics import perplexity
from .records import Corpus, ValidationError, load_corpus, save_corpus
from .sampler import Direction, GaussianTarget, gaussian_selection, select_extreme
from .verifier import Status, verify

DEFAULT_SUPPRESS_COUNT = 50_000
DEFAULT_SWEEP_INTERVALS = ((2.0, 2.5), (2.5, 3.0), (2.5, 3.5))

PROMOTE_FILE = "promote.jsonl"
SUPPRESS_FILE = "suppress.jsonl"
REPORT_FILE = "report.csv"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class PipelineConfig:
    input: Path
    out_dir: Path
    suppress_input: Path | None = None
    target: GaussianTarget = GaussianTarget()
    suppress_count: int = DEFAULT_SUPPRESS_COUNT
    suppress_direction: Direction = Direction.LOWEST
    suppress_max_per_query: int | None = 1
    alpha: float = 1e-4
    seed: int = 0
    remainder_topup: bool = True
    redistribute: bool = False

    def validate(self) -> None:
        inputs = {Path(self.input).resolve()}
        if self.suppress_input is not None:
            inputs.add(Path(self.suppress_input).resolve())
        if Path(self.out_dir).resolve() in inputs:
            raise ValidationError("output directory must be distinct from input paths")
        if self.suppress_count < 1:
            raise ValidationError("suppress_count must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "input": str(self.input),
            "suppress_input": None if self.suppress_input is None else str(self.suppress_input),
            "out_dir": str(self.out_dir),
            "mu": self.target.mu,
            "sigma": self.target.sigma,
            "ppl_min": self.target.p_min,
            "ppl_max": self.target.p_max,
            "bin_width": self.target.bin_width,
            "total": self.target.total,
            "max_per_query": self.target.max_per_query,
            "suppress_count": self.suppress_count,
            "suppress_direction": self.suppress_direction.value,
            "suppress_max_per_query": self.suppress_max_per_query,
            "alpha": self.alpha,
            "seed": self.seed,
            "remainder_topup": self.remainder_topup,
            "redistribute": self.redistribute,
        }


def verify_corpus(corpus: Corpus) -> Corpus:
    """Fill `verified` for every record: correct -> True, anything else False."""
    def _fill(rec):
        try:
            result = verify(rec)
        except ValidationError as exc:
            raise ValidationError(f"stage verify: {exc}") from None
        return rec.with_fields(verified=result.status is Status.CORRECT)

    return corpus.map(_fill)


def fill_ppl(corpus: Corpus) -> Corpus:
    """Fill `ppl` (and `length`) from token_logprobs where missing."""
    def _fill(rec):
        if rec.ppl is not None and rec.length is not None:
            return rec
        if rec.token_logprobs is None:
            raise ValidationError(
                f"stage ppl: record {rec.id!r}: needs token_logprobs or (ppl, length)"
            )
        updates = {}
        if rec.ppl is None:
            updates["ppl"] = perplexity(rec.token_logprobs)
        if rec.length is None:
            updates["length"] = len(rec.token_logprobs)
        return rec.with_fields(**updates)

    return corpus.map(_fill)


def _require_verified(corpus: Corpus, stage: str) -> None:
    for rec in corpus:
        if rec.verified is None:
            raise ValidationError(f"stage {stage}: record {rec.id!r}: verified missing")


def split_by_verified(corpus: Corpus) -> tuple[Corpus, Corpus]:
    _require_verified(corpus, "split")
    return (
        corpus.filter(lambda r: r.verified is True),
        corpus.filter(lambda r: r.verified is False),
    )


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_report_csv(alloc, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_center,density,target,selected\n")
        for center, dens, quota, picked in zip(
            alloc.centers, alloc.densities, alloc.targets, alloc.selected_per_bin
        ):
            fh.write(f"{center!r},{dens!r},{quota},{picked}\n")


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute the full curation flow; returns the manifest dict.

    Aborts (naming stage and record id) on any precondition failure and
    removes whatever outputs were already written.
    """
    config.validate()
    input_path = Path(config.input)
    corpus = verify_corpus(load_corpus(input_path))
    corpus = fill_ppl(corpus)

    if config.suppress_input is not None:
        suppress_path = Path(config.suppress_input)
        suppress_source = fill_ppl(verify_corpus(load_corpus(suppress_path)))
        incorrect = suppress_source.filter(lambda r: r.verified is False)
        correct, _ = split_by_verified(corpus)
    else:
        suppress_path = None
        correct, incorrect = split_by_verified(corpus)

    promoted, alloc = gaussian_selection(
        correct,
        config.target,
        remainder_topup=config.remainder_topup,
        redistribute=config.redistribute,
    )
    suppress_supply = len(incorrect)
    if suppress_supply:
        suppressed = select_extreme(
            incorrect,
            min(config.suppress_count, suppress_supply),
            config.suppress_direction,
            config.suppress_max_per_query,
        )
    else:
        suppressed = Corpus(records=())

    shared_ids = set(promoted.ids()) & set(suppressed.ids())
    if shared_ids:
        raise ValidationError(
            f"promote/suppress sets share record ids: {sorted(shared_ids)[:5]}"
        )
    promoted_pairs = {(r.query, r.response) for r in promoted}
    shared_pairs = [
        r.id for r in suppressed if (r.query, r.response) in promoted_pairs
    ]
    if shared_pairs:
        raise ValidationError(
            f"promote/suppress sets share (query, response) pairs; e.g. ids {shared_pairs[:5]}"
        )
    overlap_queries = len({r.query for r in promoted} & {r.query for r in suppressed})

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config.to_json_dict(),
        "inputs": {
            str(input_path): _sha256(input_path),
            **({str(suppress_path): _sha256(suppress_path)} if suppress_path else {}),
        },
        "counts": {
            "input_records": len(corpus),
            "verified_correct": len(correct),
            "verified_incorrect": len(incorrect),
            "promote_selected": len(promoted),
            "suppress_selected": len(suppressed),
            "suppress_supply": suppress_supply,
        },
        "overlap_queries": overlap_queries,
        "outputs": [PROMOTE_FILE, SUPPRESS_FILE, REPORT_FILE],
    }

    written: list[Path] = []
    try:
        for name, writer in (
            (PROMOTE_FILE, lambda p: save_corpus(promoted, p)),
            (SUPPRESS_FILE, lambda p: save_corpus(suppressed, p)),
            (REPORT_FILE, lambda p: write_report_csv(alloc, p)),
            (MANIFEST_FILE, lambda p: _write_json(manifest, p)),
        ):
            path = out_dir / name
            written.append(path)
            writer(path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return manifest


def _write_json(obj: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


@dataclass(frozen=True)
class IntervalResult:
    low: float
    high: float
    candidates: int
    selected: int
    mean_ppl: float | None
    output: str


def sweep_ppl_intervals(
    corpus: Corpus,
    intervals,
    out_dir: Path,
    *,
    total: int,
    max_per_query: int | None = 1,
) -> list[IntervalResult]:
    """Select up to `total` records from each [low, high) perplexity interval.

    Length-prioritized and query-capped like the promotion selector. Writes
    one JSONL per interval plus a summary CSV; an empty interval is recorded,
    not an error.
    """
    for rec in corpus:
        if rec.ppl is None or rec.length is None:
            raise ValidationError(f"stage sweep: record {rec.id!r}: ppl/length missing")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: list[IntervalResult] = []
    for low, high in intervals:
        if not 1.0 <= low <= high:
            raise ValidationError(f"bad interval [{low}, {high}]")
        pool = [r for r in corpus if low <= r.ppl < high]
        cap = math.inf if max_per_query is None else max_per_query
        counts: dict[str, int] = {}
        chosen = []
        for rec in sorted(pool, key=lambda r: (-r.length, r.id)):
            if len(chosen) >= total:
                break
            if counts.get(rec.query, 0) < cap:
                chosen.append(rec)
                counts[rec.query] = counts.get(rec.query, 0) + 1
        selected = Corpus.from_records(chosen)
        name = f"ppl_{low}_{high}.jsonl"
        save_corpus(selected, out_dir / name)
        mean_ppl = (
            math.fsum(r.ppl for r in selected) / len(selected) if len(selected) else None
        )
        results.append(
            IntervalResult(
                low=low,
                high=high,
                candidates=len(pool),
                selected=len(selected),
                mean_ppl=mean_ppl,
                output=name,
            )
        )
    with open(out_dir / "sweep_summary.csv", "w", encoding="utf-8") as fh:
        fh.write("low,high,candidates,selected,mean_ppl,output\n")
        for r in results:
            mean = "" if r.mean_ppl is None else repr(r.mean_ppl)
            fh.write(f"{r.low!r},{r.high!r},{r.candidates},{r.selected},{mean},{r.output}\n")
    return results
