"""Report emission: delimited tables plus rendered figures.

From a scored run this writes, under <run_dir>/report/:

- summary.csv: one row per model/dataset group with the six headline
  metrics, x100 with 2 decimals (Group, Conc., Comp., Dete., Prec., Rec., F1)
- hops.csv: the same columns grouped by hop count
- aggregate.csv: long-form means with std errors and group sizes
- taxonomy.csv: chain verdict counts and shares
- per_instance.jsonl: the per-instance score records
- metrics_by_hop.png / taxonomy.png: matplotlib renderings of the above

Means are computed on exact rationals and only formatted at the edge, so
the CSV bytes are stable across reruns.
"""

from __future__ import annotations

import csv
import json
from fractions import Fraction
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import METRIC_NAMES, AggregateRow, aggregate
from .model import ChainStatus, dump_json_line, fraction_to_display
from .pipeline import MANIFEST_NAME, load_manifest, read_jsonl

SUMMARY_COLUMNS = ("Group", "Conc.", "Comp.", "Dete.", "Prec.", "Rec.", "F1")

_METRIC_TO_COLUMN = {
    "conciseness": "Conc.",
    "completeness": "Comp.",
    "determinateness": "Dete.",
    "precision": "Prec.",
    "recall": "Rec.",
    "f1": "F1",
}


class MissingCheckpoint(RuntimeError):
    pass


def load_score_records(run_dir: str | Path) -> list[dict]:
    manifest = load_manifest(run_dir)
    entry = manifest.get("stages", {}).get("score")
    if not entry or not entry.get("complete"):
        raise MissingCheckpoint("run has no completed score stage")
    rows = read_jsonl(Path(run_dir) / entry["path"])
    for row in rows:
        for metric in METRIC_NAMES:
            row[metric] = Fraction(row[metric])
    return rows


def _summary_rows(rows: list[AggregateRow]) -> list[list[str]]:
    by_group: dict[str, dict[str, Fraction]] = {}
    for row in rows:
        by_group.setdefault(row.group, {})[row.metric] = row.mean
    out = []
    for group in sorted(by_group):
        metrics = by_group[group]
        line = [group]
        for column in SUMMARY_COLUMNS[1:]:
            metric = next(m for m, c in _METRIC_TO_COLUMN.items() if c == column)
            value = metrics.get(metric, Fraction(0))
            line.append(fraction_to_display(value))
        out.append(line)
    return out


def _write_csv(path: Path, header: tuple[str, ...], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _taxonomy(records: list[dict]) -> list[tuple[str, int, Fraction]]:
    statuses = [r["status"] for r in records if r.get("status")]
    total = len(statuses)
    out = []
    for status in ChainStatus:
        count = sum(1 for s in statuses if s == status.value)
        share = Fraction(count, total) if total else Fraction(0)
        out.append((status.value, count, share))
    return out


def _hop_group(record: dict) -> str:
    hops = record.get("hop_count")
    return f"{hops}-hop" if hops else "unknown"


def _model_dataset_group(record: dict) -> str:
    return f"{record.get('model', '?')}/{record.get('dataset', '?')}"


def _render_metrics_by_hop(rows: list[AggregateRow], path: Path) -> None:
    groups = sorted({r.group for r in rows})
    fig, ax = plt.subplots(figsize=(7, 4.2))
    xs = range(len(groups))
    for metric in METRIC_NAMES:
        means = []
        errors = []
        for group in groups:
            row = next((r for r in rows if r.group == group and r.metric == metric), None)
            means.append(float(row.mean) * 100 if row else 0.0)
            errors.append(row.std_error * 100 if row else 0.0)
        ax.errorbar(xs, means, yerr=errors, marker="o", capsize=3, label=metric)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(groups)
    ax.set_ylabel("score x100")
    ax.set_xlabel("hop group")
    ax.set_title("Metrics by reasoning depth")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_taxonomy(taxonomy: list[tuple[str, int, Fraction]], path: Path) -> None:
    labels = [t[0] for t in taxonomy]
    shares = [float(t[2]) * 100 for t in taxonomy]
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    bars = ax.bar(labels, shares, color=["#2a7", "#d55", "#e90", "#778"])
    for bar, (_, count, _) in zip(bars, taxonomy):
        ax.annotate(
            str(count),
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    ax.set_ylabel("share of instances (%)")
    ax.set_title("Chain verdict taxonomy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_report(run_dir: str | Path, format: str = "csv") -> list[Path]:
    """Write all report artifacts; returns the paths written."""
    run_dir = Path(run_dir)
    records = load_score_records(run_dir)
    report_dir = run_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    summary_agg = aggregate(records, _model_dataset_group)
    hops_agg = aggregate(records, _hop_group)
    taxonomy = _taxonomy(records)

    if format == "json":
        payload = {
            "summary": [
                {
                    "group": r.group,
                    "metric": r.metric,
                    "mean": fraction_to_display(r.mean),
                    "std_error": round(r.std_error * 100, 4),
                    "n": r.n,
                }
                for r in summary_agg + hops_agg
            ],
            "taxonomy": [
                {"status": s, "count": c, "share": fraction_to_display(share, scale=1)}
                for s, c, share in taxonomy
            ],
        }
        path = report_dir / "report.json"
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    else:
        summary_path = report_dir / "summary.csv"
        _write_csv(summary_path, SUMMARY_COLUMNS, _summary_rows(summary_agg))
        written.append(summary_path)

        hops_path = report_dir / "hops.csv"
        _write_csv(hops_path, SUMMARY_COLUMNS, _summary_rows(hops_agg))
        written.append(hops_path)

        agg_path = report_dir / "aggregate.csv"
        _write_csv(
            agg_path,
            ("group", "metric", "mean_x100", "std_error_x100", "n"),
            [
                [r.group, r.metric, fraction_to_display(r.mean), f"{r.std_error * 100:.4f}", str(r.n)]
                for r in summary_agg + hops_agg
            ],
        )
        written.append(agg_path)

        tax_path = report_dir / "taxonomy.csv"
        _write_csv(
            tax_path,
            ("status", "count", "share"),
            [[s, str(c), fraction_to_display(share, scale=1)] for s, c, share in taxonomy],
        )
        written.append(tax_path)

    per_instance = report_dir / "per_instance.jsonl"
    raw_rows = read_jsonl(run_dir / load_manifest(run_dir)["stages"]["score"]["path"])
    per_instance.write_text(
        "".join(dump_json_line(r) + "\n" for r in raw_rows), encoding="utf-8"
    )
    written.append(per_instance)

    metrics_fig = report_dir / "metrics_by_hop.png"
    _render_metrics_by_hop(hops_agg, metrics_fig)
    written.append(metrics_fig)

    taxonomy_fig = report_dir / "taxonomy.png"
    _render_taxonomy(taxonomy, taxonomy_fig)
    written.append(taxonomy_fig)

    return written
