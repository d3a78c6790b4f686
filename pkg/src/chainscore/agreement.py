"""Agreement statistics between raters, runs, and model-vs-human scores.

pearson_r / jaccard_index / cohen_kappa / run_stddev are the statistical
units; compute_annotation_agreement turns an annotation export plus a run's
score records into the correlation table (continuous conciseness via Pearson,
binary completeness/determinateness via Jaccard over positive sets, plus
transformation accuracy and pairwise inter-annotator rows).

Sums are exact (Fractions); a float appears only through the final square
root. cross_run_kappa compares two runs judged by different models, using
per-proposition minimal-set membership for conciseness.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import sqrt
from typing import Iterable, Mapping, Sequence


class StatError(ValueError):
    pass


class DegenerateInput(StatError):
    pass


class BothEmpty(StatError):
    pass


class LengthMismatch(StatError):
    pass


class TooFewRuns(StatError):
    pass


def pearson_r(xs: Sequence[float | Fraction], ys: Sequence[float | Fraction]) -> float:
    """Sample correlation; exact sums, one float sqrt at the end."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise DegenerateInput("need at least two points")
    fx = [Fraction(x) for x in xs]
    fy = [Fraction(y) for y in ys]
    mean_x = Fraction(sum(fx), n)
    mean_y = Fraction(sum(fy), n)
    cov = sum((x - mean_x) * (y - mean_y) for x, y in zip(fx, fy))
    var_x = sum((x - mean_x) ** 2 for x in fx)
    var_y = sum((y - mean_y) ** 2 for y in fy)
    if var_x == 0 or var_y == 0:
        raise DegenerateInput("zero variance input")
    r = float(cov) / (sqrt(float(var_x)) * sqrt(float(var_y)))
    return max(-1.0, min(1.0, r))


def jaccard_index(a: Iterable, b: Iterable) -> Fraction:
    """|A ∩ B| / |A ∪ B| over positive sets."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        raise BothEmpty("jaccard undefined for two empty sets")
    return Fraction(len(sa & sb), len(union))


def cohen_kappa(a: Sequence, b: Sequence) -> Fraction:
    """Chance-corrected agreement with per-rater marginals.

    kappa = (p_o - p_e) / (1 - p_e); when p_e == 1 both raters are constant
    on the same label, so agreement is perfect and kappa is 1 by convention.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)}")
    n = len(a)
    if n == 0:
        raise DegenerateInput("empty label sequences")
    p_o = Fraction(sum(1 for x, y in zip(a, b) if x == y), n)
    labels = set(a) | set(b)
    p_e = Fraction(0)
    for label in labels:
        pa = Fraction(sum(1 for x in a if x == label), n)
        pb = Fraction(sum(1 for y in b if y == label), n)
        p_e += pa * pb
    if p_e == 1:
        return Fraction(1)
    return (p_o - p_e) / (1 - p_e)


def run_stddev(per_run_means: Sequence[float | Fraction]) -> float:
    """Sample standard deviation (n-1) across repeated-run means."""
    n = len(per_run_means)
    if n < 2:
        raise TooFewRuns("need at least two runs")
    values = [Fraction(v) for v in per_run_means]
    mean = Fraction(sum(values), n)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return sqrt(float(var))


@dataclass(frozen=True)
class AgreementRow:
    metric: str
    statistic: str
    value: float
    n: int


def _human_conciseness(record: Mapping) -> Fraction:
    necessity = record.get("necessity", {})
    if not necessity:
        return Fraction(0)
    kept = sum(1 for v in necessity.values() if v)
    return Fraction(kept, len(necessity))


def compute_annotation_agreement(
    annotations: Sequence[Mapping],
    results: Sequence[Mapping],
) -> list[AgreementRow]:
    """Correlate human annotations with a run's model-side scores.

    annotations: export records (one latest record per task+annotator) with
    necessity (label -> bool), connectivity, equivalence_confirmed, and
    transform_accuracy fields. results: per-instance score records keyed by
    instance_id with conciseness/completeness/determinateness.
    """
    by_instance = {r["instance_id"]: r for r in results}
    paired = [a for a in annotations if a.get("task_id") in by_instance]

    rows: list[AgreementRow] = []

    # Conciseness: model ratio vs human necessary-share, per annotation.
    xs: list[Fraction] = []
    ys: list[Fraction] = []
    for ann in paired:
        model = by_instance[ann["task_id"]]
        xs.append(Fraction(model["conciseness"]))
        ys.append(_human_conciseness(ann))
    if len(xs) >= 2:
        try:
            rows.append(AgreementRow("conciseness", "pearson_r", pearson_r(xs, ys), len(xs)))
        except DegenerateInput:
            pass

    # Binary metrics: Jaccard over positive (task, annotator) pairs.
    for metric, human_field in (
        ("completeness", "connectivity"),
        ("determinateness", "equivalence_confirmed"),
    ):
        model_pos = set()
        human_pos = set()
        judged = 0
        for ann in paired:
            value = ann.get(human_field)
            if value is None:
                continue
            judged += 1
            pair = (ann["task_id"], ann.get("annotator_id", ""))
            if Fraction(by_instance[ann["task_id"]][metric]) == 1:
                model_pos.add(pair)
            if value:
                human_pos.add(pair)
        if judged:
            try:
                rows.append(
                    AgreementRow(
                        metric, "jaccard", float(jaccard_index(model_pos, human_pos)), judged
                    )
                )
            except BothEmpty:
                pass

    accuracy = [bool(a.get("transform_accuracy")) for a in paired
                if a.get("transform_accuracy") is not None]
    if accuracy:
        rows.append(
            AgreementRow(
                "stage2_accuracy",
                "mean",
                sum(accuracy) / len(accuracy),
                len(accuracy),
            )
        )

    rows.extend(_pairwise_annotator_rows(annotations))
    return rows


def _pairwise_annotator_rows(annotations: Sequence[Mapping]) -> list[AgreementRow]:
    by_annotator: dict[str, dict[str, Mapping]] = {}
    for ann in annotations:
        by_annotator.setdefault(str(ann.get("annotator_id", "")), {})[
            str(ann["task_id"])
        ] = ann

    rows: list[AgreementRow] = []
    names = sorted(by_annotator)
    for i, first in enumerate(names):
        for second in names[i + 1:]:
            shared = sorted(set(by_annotator[first]) & set(by_annotator[second]))
            if not shared:
                continue
            for metric, human_field in (
                ("completeness", "connectivity"),
                ("determinateness", "equivalence_confirmed"),
            ):
                pos_a = {
                    t for t in shared if by_annotator[first][t].get(human_field)
                }
                pos_b = {
                    t for t in shared if by_annotator[second][t].get(human_field)
                }
                try:
                    value = float(jaccard_index(pos_a, pos_b))
                except BothEmpty:
                    continue
                rows.append(
                    AgreementRow(
                        metric, f"annotator_jaccard:{first}|{second}", value, len(shared)
                    )
                )
    return rows


def cross_run_kappa(
    results_a: Sequence[Mapping],
    results_b: Sequence[Mapping],
) -> list[AgreementRow]:
    """Judge-swap agreement between two runs over shared instances.

    completeness/determinateness compare per-instance 0/1 labels;
    conciseness compares per-proposition minimal-set membership.
    """
    index_a = {r["instance_id"]: r for r in results_a}
    index_b = {r["instance_id"]: r for r in results_b}
    shared = sorted(set(index_a) & set(index_b))
    rows: list[AgreementRow] = []
    if not shared:
        return rows

    for metric in ("completeness", "determinateness"):
        labels_a = [int(Fraction(index_a[i][metric])) for i in shared]
        labels_b = [int(Fraction(index_b[i][metric])) for i in shared]
        try:
            value = float(cohen_kappa(labels_a, labels_b))
        except StatError:
            continue
        rows.append(AgreementRow(metric, "cohen_kappa", value, len(shared)))

    member_a: list[int] = []
    member_b: list[int] = []
    for instance_id in shared:
        ra, rb = index_a[instance_id], index_b[instance_id]
        labels = sorted(
            set(ra.get("proposition_labels", [])) & set(rb.get("proposition_labels", []))
        )
        in_a, in_b = set(ra.get("minimal_set", [])), set(rb.get("minimal_set", []))
        for label in labels:
            member_a.append(1 if label in in_a else 0)
            member_b.append(1 if label in in_b else 0)
    if member_a:
        try:
            value = float(cohen_kappa(member_a, member_b))
            rows.append(AgreementRow("conciseness", "cohen_kappa", value, len(member_a)))
        except StatError:
            pass
    return rows
