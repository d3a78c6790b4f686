"""Command line entry points.

Stage commands (generate, transform, chain, score) advance a checkpointed
run under --out/<run id> up to and including the named stage; score runs
everything. report renders tables and figures from a finished run, serve
starts the annotation service, export dumps collected annotations, and
agreement computes annotator and cross-run statistics.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from .agreement import (
    AgreementRow,
    StatError,
    compute_annotation_agreement,
    cross_run_kappa,
)
from .gateway import GatewayError
from .ingest import ConfigError
from .model import Dataset
from .pipeline import (
    MANIFEST_NAME,
    ModelRoles,
    RunConfig,
    Runner,
    StageFailure,
    read_jsonl,
)

STAGE_COMMANDS = ("generate", "transform", "chain", "score")


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", choices=[d.value for d in Dataset])
    parser.add_argument("--input", help="dataset file (JSON array or JSONL)")
    parser.add_argument("--setting", default="default",
                        choices=["default", "distractor", "answerable"])
    parser.add_argument("--limit", type=int, default=None,
                        help="evaluate only the first N instances")
    for role in ("generator", "transformer", "extractor", "judge", "reinfer"):
        parser.add_argument(f"--model.{role}", dest=f"model_{role}", default=None,
                            metavar="MODEL_ID")
    parser.add_argument("--out", default="runs", help="directory holding runs")
    parser.add_argument("--run-id", default=None,
                        help="explicit run id (default: derived from config)")
    parser.add_argument("--resume", default=None, metavar="RUN_ID",
                        help="continue an existing run under --out")
    parser.add_argument("--cache-dir", default=None,
                        help="completion cache (default: <out>/cache)")
    parser.add_argument("--concurrency", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--temperature", type=float, default=1.0)
    parser.add_argument("--sentence-fallback", action="store_true",
                        help="split unmarked answers into sentence statements")
    parser.add_argument("--no-shortest", action="store_true",
                        help="accept the first successful chain instead of the shortest")
    parser.add_argument("--budget", type=int, default=None,
                        help="search work budget for the chaining stage")
    parser.add_argument("--failure-threshold", type=float, default=None,
                        help="abort a stage when this fraction of instances fail")
    parser.add_argument("--mock-script", default=None,
                        help="JSONL of scripted completions instead of a live provider")


def _runner_from_args(args: argparse.Namespace) -> Runner:
    if args.resume:
        run_dir = Path(args.out) / args.resume
        if not (run_dir / MANIFEST_NAME).exists():
            raise ConfigError(f"no run named {args.resume!r} under {args.out}")
        overrides: dict = {}
        if args.cache_dir is not None:
            overrides["cache_dir"] = args.cache_dir
        if args.concurrency is not None:
            overrides["concurrency"] = args.concurrency
        if args.mock_script is not None:
            overrides["mock_script"] = args.mock_script
        if args.failure_threshold is not None:
            overrides["failure_threshold"] = args.failure_threshold
        return Runner.from_run_dir(run_dir, overrides=overrides)

    if not args.dataset or not args.input:
        raise ConfigError("--dataset and --input are required for a fresh run")
    from . import chain as chain_mod

    config = RunConfig(
        dataset=Dataset(args.dataset),
        input_path=args.input,
        out_dir=args.out,
        cache_dir=args.cache_dir or os.path.join(args.out, "cache"),
        setting=args.setting,
        limit=args.limit,
        models=ModelRoles(
            generator=args.model_generator or "gpt-4o-mini",
            transformer=args.model_transformer,
            extractor=args.model_extractor,
            judge=args.model_judge or "gpt-4o-mini",
            reinfer=args.model_reinfer,
        ),
        run_id=args.run_id,
        concurrency=args.concurrency or 1,
        seed=args.seed,
        temperature=args.temperature,
        sentence_fallback=args.sentence_fallback,
        prefer_shortest=not args.no_shortest,
        search_budget=args.budget or chain_mod.DEFAULT_WORK_BUDGET,
        failure_threshold=(
            0.2 if args.failure_threshold is None else args.failure_threshold
        ),
        mock_script=args.mock_script,
    )
    return Runner(config)


def _cmd_stage(args: argparse.Namespace) -> int:
    runner = _runner_from_args(args)
    manifest = runner.run(through=args.command)
    done = [s for s, e in manifest["stages"].items() if e.get("complete")]
    print(f"run {manifest['run_id']}: stages complete: {', '.join(done)}")
    print(f"artifacts under {runner.run_dir}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    from .report import emit_report

    run_dir = Path(args.out) / args.resume
    written = emit_report(run_dir, format=args.format)
    for path in written:
        print(path)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve_annotation_api

    run_dir = Path(args.out) / args.resume
    serve_annotation_api(
        run_dir,
        bind=args.bind,
        store_path=args.store,
        static_dir=args.static_dir,
    )
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    from .model import dump_json_line
    from .service import AnnotationStore

    run_dir = Path(args.out) / args.resume
    store_path = Path(args.store) if args.store else run_dir / "annotations.jsonl"
    if not store_path.exists():
        print(f"no annotations at {store_path}", file=sys.stderr)
        return 1
    store = AnnotationStore(store_path)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for record in store.export_latest():
            out.write(dump_json_line(record) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _format_value(value) -> str:
    if isinstance(value, Fraction):
        return f"{float(value):.6f}"
    return f"{value:.6f}"


def _rows_to_csv(rows: list[AgreementRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "statistic", "value", "n"])
    for row in rows:
        writer.writerow([row.metric, row.statistic, _format_value(row.value), row.n])
    return buf.getvalue()


def _rows_to_json(rows: list[AgreementRow]) -> str:
    return json.dumps(
        [
            {
                "metric": r.metric,
                "statistic": r.statistic,
                "value": float(r.value),
                "n": r.n,
            }
            for r in rows
        ],
        indent=2,
    )


def _cmd_agreement(args: argparse.Namespace) -> int:
    annotations = read_jsonl(Path(args.annotations))
    results = read_jsonl(Path(args.results))
    rows = compute_annotation_agreement(annotations, results)
    if args.kappa_with:
        other = read_jsonl(Path(args.kappa_with))
        rows.extend(cross_run_kappa(results, other))
    text = _rows_to_json(rows) if args.format == "json" else _rows_to_csv(rows)
    print(text, end="" if text.endswith("\n") else "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainscore",
        description="Evaluate long-form answers by proving their short answer "
        "through a chain of attributed propositions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("generate", "run through answer generation"),
        ("transform", "run through the logic transformation stage"),
        ("chain", "run through backward chaining"),
        ("score", "run the full pipeline through scoring"),
    ):
        stage = sub.add_parser(name, help=help_text)
        _add_run_arguments(stage)
        stage.set_defaults(func=_cmd_stage)

    report = sub.add_parser("report", help="render tables and figures for a run")
    report.add_argument("--out", default="runs")
    report.add_argument("--resume", required=True, metavar="RUN_ID")
    report.add_argument("--format", choices=["csv", "json"], default="csv")
    report.set_defaults(func=_cmd_report)

    serve = sub.add_parser("serve", help="start the annotation service")
    serve.add_argument("--out", default="runs")
    serve.add_argument("--resume", required=True, metavar="RUN_ID")
    serve.add_argument("--bind", default="127.0.0.1:8765")
    serve.add_argument("--store", default=None, help="annotation store path")
    serve.add_argument("--static-dir", default=None, help="UI assets to serve at /")
    serve.set_defaults(func=_cmd_serve)

    export = sub.add_parser("export", help="dump latest annotations as JSONL")
    export.add_argument("--out", default="runs")
    export.add_argument("--resume", required=True, metavar="RUN_ID")
    export.add_argument("--store", default=None)
    export.add_argument("--output", default=None, help="write here instead of stdout")
    export.set_defaults(func=_cmd_export)

    agreement = sub.add_parser(
        "agreement", help="annotator agreement and cross-run statistics"
    )
    agreement.add_argument("--annotations", required=True,
                           help="exported annotation JSONL")
    agreement.add_argument("--results", required=True,
                           help="score-stage JSONL for the same run")
    agreement.add_argument("--kappa-with", default=None,
                           help="score-stage JSONL of a second run")
    agreement.add_argument("--format", choices=["csv", "json"], default="csv")
    agreement.set_defaults(func=_cmd_agreement)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, StatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GatewayError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
