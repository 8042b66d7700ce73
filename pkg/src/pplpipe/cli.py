"""Command-line interface.

Subcommands mirror the pipeline stages (verify, ppl, select-promote,
select-suppress, sweep, run) plus grad-check and train-toy. Exit codes:
0 success, 1 validation error, 2 I/O error, 3 internal invariant violation.
Configuration comes from flags or, for `run`, a JSON config file that flags
override; environment variables are deliberately never consulted so a run is
reproducible from its manifest alone.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline, sampler, toylm
from .objective import grad_check
from .records import ValidationError, load_corpus, save_corpus
from .sampler import Direction, GaussianTarget

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INTERNAL = 3


def _add_target_flags(parser: argparse.ArgumentParser, *, with_defaults: bool) -> None:
    d = (lambda v: v) if with_defaults else (lambda v: None)
    parser.add_argument("--mu", type=float, default=d(sampler.DEFAULT_MU))
    parser.add_argument("--sigma", type=float, default=d(sampler.DEFAULT_SIGMA))
    parser.add_argument("--ppl-min", type=float, default=d(sampler.DEFAULT_PPL_MIN))
    parser.add_argument("--ppl-max", type=float, default=d(sampler.DEFAULT_PPL_MAX))
    parser.add_argument("--bin-width", type=float, default=d(sampler.DEFAULT_BIN_WIDTH))
    parser.add_argument("--total", type=int, default=d(sampler.DEFAULT_TOTAL))
    parser.add_argument(
        "--max-per-query",
        type=int,
        default=d(sampler.DEFAULT_MAX_PER_QUERY),
        help="per-query selection cap; 0 means unlimited",
    )
    parser.add_argument("--no-remainder-topup", action="store_true", default=None if not with_defaults else False,
                        help="keep literal floor quotas instead of topping up to the requested total")
    parser.add_argument("--redistribute", action="store_true", default=None if not with_defaults else False,
                        help="re-offer quota from under-supplied bins to bins with spare candidates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pplpipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="fill the verified field from boxed-answer checking")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("ppl", help="fill ppl (and length) from token_logprobs")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("select-promote", help="Gaussian-guided selection over verified-correct records")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_target_flags(p, with_defaults=True)
    p.add_argument("--report", help="write a bin_center,density,target,selected CSV here")

    p = sub.add_parser("select-suppress", help="extreme-perplexity selection over verified-incorrect records")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--count", type=int, default=pipeline.DEFAULT_SUPPRESS_COUNT)
    p.add_argument("--max-per-query", type=int, default=1, help="0 means unlimited")
    p.add_argument("--direction", choices=[d.value for d in Direction], default=Direction.LOWEST.value)

    p = sub.add_parser("sweep", help="select training files from fixed perplexity intervals")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument(
        "--interval",
        nargs=2,
        type=float,
        action="append",
        metavar=("LOW", "HIGH"),
        help="may repeat; defaults to 2.0-2.5, 2.5-3.0, 2.5-3.5",
    )
    p.add_argument("--total", type=int, default=sampler.DEFAULT_TOTAL)
    p.add_argument("--max-per-query", type=int, default=1, help="0 means unlimited")

    p = sub.add_parser("grad-check", help="finite-difference check of the analytical gradients")
    p.add_argument("--loss", choices=["ce", "ul"], required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)

    p = sub.add_parser("train-toy", help="train the tabular toy model and write its trace")
    p.add_argument("--task", required=True, help="task definition JSON")
    p.add_argument("--objective", choices=[o.value for o in toylm.Objective], default="oxa")
    p.add_argument("--alpha", type=float, default=None,
                   help=f"suppression weight (default {toylm.DEFAULT_UL_WEIGHT})")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--step-size", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace-out", required=True, help="trace CSV path")

    p = sub.add_parser("run", help="full pipeline: verify, ppl, split, select, report")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--input")
    p.add_argument("--suppress-input")
    p.add_argument("--out-dir")
    _add_target_flags(p, with_defaults=False)
    p.add_argument("--suppress-count", type=int, default=None)
    p.add_argument("--suppress-direction", choices=[d.value for d in Direction], default=None)
    p.add_argument("--suppress-max-per-query", type=int, default=None, help="0 means unlimited")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)

    return parser


def _cap(value: int | None) -> int | None:
    if value is None:
        return None
    return None if value == 0 else value


def _target_from_args(args) -> GaussianTarget:
    return GaussianTarget(
        mu=args.mu,
        sigma=args.sigma,
        p_min=args.ppl_min,
        p_max=args.ppl_max,
        bin_width=args.bin_width,
        total=args.total,
        max_per_query=_cap(args.max_per_query),
    )


def _cmd_verify(args) -> int:
    save_corpus(pipeline.verify_corpus(load_corpus(args.input)), args.output)
    return EXIT_OK


def _cmd_ppl(args) -> int:
    save_corpus(pipeline.fill_ppl(load_corpus(args.input)), args.output)
    return EXIT_OK


def _cmd_select_promote(args) -> int:
    corpus = load_corpus(args.input)
    pipeline._require_verified(corpus, "select-promote")
    correct = corpus.filter(lambda r: r.verified is True)
    selected, alloc = sampler.gaussian_selection(
        correct,
        _target_from_args(args),
        remainder_topup=not args.no_remainder_topup,
        redistribute=args.redistribute,
    )
    save_corpus(selected, args.output)
    if args.report:
        pipeline.write_report_csv(alloc, Path(args.report))
    print(f"selected {len(selected)} of {len(correct)} verified-correct records")
    return EXIT_OK


def _cmd_select_suppress(args) -> int:
    corpus = load_corpus(args.input)
    pipeline._require_verified(corpus, "select-suppress")
    incorrect = corpus.filter(lambda r: r.verified is False)
    selected = sampler.select_extreme(
        incorrect,
        args.count,
        Direction(args.direction),
        _cap(args.max_per_query),
    )
    save_corpus(selected, args.output)
    print(f"selected {len(selected)} of {len(incorrect)} verified-incorrect records")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    corpus = load_corpus(args.input)
    intervals = args.interval or [list(iv) for iv in pipeline.DEFAULT_SWEEP_INTERVALS]
    results = pipeline.sweep_ppl_intervals(
        corpus,
        [(lo, hi) for lo, hi in intervals],
        Path(args.out_dir),
        total=args.total,
        max_per_query=_cap(args.max_per_query),
    )
    for r in results:
        print(f"[{r.low}, {r.high}): selected {r.selected} of {r.candidates} -> {r.output}")
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    report = grad_check(args.loss, trials=args.trials, seed=args.seed, h=args.h)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _cmd_train_toy(args) -> int:
    task = toylm.load_task(args.task)
    model = toylm.model_for_task(task)
    alpha = toylm.DEFAULT_UL_WEIGHT if args.alpha is None else args.alpha
    _, trace = toylm.train(
        model,
        task,
        toylm.Objective(args.objective),
        alpha=alpha,
        steps=args.steps,
        step_size=args.step_size,
        seed=args.seed,
    )
    toylm.write_trace_csv(trace, args.trace_out)
    last = trace[-1]
    print(
        f"trained {args.steps} steps ({args.objective}): "
        f"loss={last.loss_combined:.6f} mean_entropy={last.mean_entropy:.6f}"
    )
    return EXIT_OK


def _cmd_run(args) -> int:
    file_cfg: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValidationError("config file must hold a JSON object")

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    input_path = pick(args.input, "input", None)
    out_dir = pick(args.out_dir, "out_dir", None)
    if not input_path or not out_dir:
        raise ValidationError("run requires --input and --out-dir (flags or config file)")
    target = GaussianTarget(
        mu=pick(args.mu, "mu", sampler.DEFAULT_MU),
        sigma=pick(args.sigma, "sigma", sampler.DEFAULT_SIGMA),
        p_min=pick(args.ppl_min, "ppl_min", sampler.DEFAULT_PPL_MIN),
        p_max=pick(args.ppl_max, "ppl_max", sampler.DEFAULT_PPL_MAX),
        bin_width=pick(args.bin_width, "bin_width", sampler.DEFAULT_BIN_WIDTH),
        total=pick(args.total, "total", sampler.DEFAULT_TOTAL),
        max_per_query=_cap(pick(args.max_per_query, "max_per_query", sampler.DEFAULT_MAX_PER_QUERY)),
    )
    config = pipeline.PipelineConfig(
        input=Path(input_path),
        suppress_input=(
            Path(p) if (p := pick(args.suppress_input, "suppress_input", None)) else None
        ),
        out_dir=Path(out_dir),
        target=target,
        suppress_count=pick(args.suppress_count, "suppress_count", pipeline.DEFAULT_SUPPRESS_COUNT),
        suppress_direction=Direction(
            pick(args.suppress_direction, "suppress_direction", Direction.LOWEST.value)
        ),
        suppress_max_per_query=_cap(
            pick(args.suppress_max_per_query, "suppress_max_per_query", 1)
        ),
        alpha=pick(args.alpha, "alpha", 1e-4),
        seed=pick(args.seed, "seed", 0),
        remainder_topup=not pick(args.no_remainder_topup, "no_remainder_topup", False),
        redistribute=pick(args.redistribute, "redistribute", False),
    )
    manifest = pipeline.run_pipeline(config)
    counts = manifest["counts"]
    print(
        f"promote {counts['promote_selected']}, suppress {counts['suppress_selected']} "
        f"(from {counts['input_records']} records) -> {out_dir}"
    )
    return EXIT_OK


_COMMANDS = {
    "verify": _cmd_verify,
    "ppl": _cmd_ppl,
    "select-promote": _cmd_select_promote,
    "select-suppress": _cmd_select_suppress,
    "sweep": _cmd_sweep,
    "grad-check": _cmd_grad_check,
    "train-toy": _cmd_train_toy,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - invariant violations
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
