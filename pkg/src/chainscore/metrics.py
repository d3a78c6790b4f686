"""Scoring: chain-level metrics, attribution quality, and aggregation.

Chain-level scores per instance:

- completeness: 1 iff the backward search produced a valid path
- conciseness: |minimal set| / |propositions| (exact Fraction; 0 without a
  valid path)
- determinateness: 1 iff a closed-world re-inference over the long-form
  answer alone reproduces an answer equivalent to the model's short answer

Attribution (judge-model backed, verdicts are binary):

- precision: mean relevance over every individual citation
- recall: mean per-statement support; uncited statements score 1 minus a
  needs-citation verdict, so harmless uncited glue does not hurt recall

All ratios are Fractions; floats never enter scoring. Judge or re-inference
output that cannot be parsed scores 0 (fail closed) at the call site.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from math import sqrt
from typing import Callable, Sequence

from .chain import minimal_sufficient_set
from .gateway import Gateway, LlmRequest
from .model import (
    AttributionScores,
    ChainResult,
    Citation,
    Document,
    EvalInstance,
    LongFormAnswer,
    PropositionSet,
    ShortAnswer,
    WHOLE_DOCUMENT,
)
from .prompts import STRICT_RETRY_SUFFIX, TemplateId
from .transform import is_token_run, text_tokens

log = logging.getLogger(__name__)


class MetricError(Exception):
    pass


class EmptyPropositionSet(MetricError):
    pass


class NoCitations(MetricError):
    pass


class ReinferParseError(MetricError):
    pass


def completeness(minimal_set: Sequence[str]) -> int:
    """1 iff some valid backward path exists (non-empty minimal set)."""
    return 1 if minimal_set else 0


def conciseness(minimal_set: Sequence[str], prop_set: PropositionSet) -> Fraction:
    """Share of propositions on the minimal path; 0 when no path exists."""
    total = len(prop_set.propositions)
    if total == 0:
        raise EmptyPropositionSet("conciseness undefined for zero propositions")
    return Fraction(len(minimal_set), total)


def answers_equivalent(
    a: str,
    b: str,
    judge: Callable[[str, str], bool] | None = None,
) -> bool:
    """Normalized equality or containment either way; optional judge hook.

    The judge callable (off by default) only runs when the cheap checks
    refuse, and may only widen equivalence, never narrow it.
    """
    ta, tb = text_tokens(a), text_tokens(b)
    if not ta or not tb:
        return False
    if ta == tb:
        return True
    if is_token_run(ta, tb) or is_token_run(tb, ta):
        return True
    if judge is not None:
        return bool(judge(a, b))
    return False


_ANSWER_LINE_RE = re.compile(r"(?i)(?:\*{1,2}|-)?\s*answer\s*\*{0,2}\s*[::]\s*\*{0,2}\s*")


def parse_reinferred_answer(raw: str) -> str:
    """Pull the final short answer out of a re-inference completion."""
    marks = list(_ANSWER_LINE_RE.finditer(raw))
    if not marks:
        raise ReinferParseError("no Answer section in re-inference output")
    tail = raw[marks[-1].end():].strip()
    line = tail.splitlines()[0].strip().strip("*_`[] ").strip() if tail else ""
    if not line:
        raise ReinferParseError("re-inferred answer is empty")
    return line


def determinateness(
    question: str,
    answer: LongFormAnswer,
    short_answer: ShortAnswer,
    gateway: Gateway,
    model_id: str,
    temperature: float = 1.0,
    seed: int | None = None,
    equivalence_judge: Callable[[str, str], bool] | None = None,
) -> tuple[int, str]:
    """Closed-world re-inference: context is the long-form answer only.

    Returns (score, reinferred_text). Raises ReinferParseError when both the
    first completion and one strict retry are unparseable; callers score 0
    and flag.
    """
    context = " ".join(s.text for s in answer.statements if s.text)
    request = LlmRequest(
        model_id=model_id,
        template_id=TemplateId.REINFER,
        bindings={"question": question, "context": context},
        temperature=temperature,
        seed=seed,
    )
    raw = gateway.complete(request).text
    try:
        reinferred = parse_reinferred_answer(raw)
    except ReinferParseError:
        strict = LlmRequest(
            model_id=model_id,
            template_id=TemplateId.REINFER,
            bindings={"question": question, "context": context + STRICT_RETRY_SUFFIX},
            temperature=temperature,
            seed=seed,
        )
        reinferred = parse_reinferred_answer(gateway.complete(strict).text)

    score = 1 if answers_equivalent(reinferred, short_answer.text, equivalence_judge) else 0
    return score, reinferred


_VERDICT_RE = re.compile(r"[01]")


def parse_binary_verdict(raw: str) -> int | None:
    """First standalone 0/1 (or yes/no) in a judge reply; None if neither."""
    stripped = raw.strip()
    match = _VERDICT_RE.search(stripped)
    if match is not None:
        return int(match.group(0))
    lowered = stripped.lower()
    if lowered.startswith("yes"):
        return 1
    if lowered.startswith("no"):
        return 0
    return None


def resolve_citation(citation: Citation, documents: Sequence[Document]) -> str | None:
    """Cited text, or None when the citation dangles."""
    doc = next((d for d in documents if d.doc_id == citation.doc_id), None)
    if doc is None:
        return None
    if WHOLE_DOCUMENT in citation.sentence_ids:
        picked = list(doc.sentences)
    else:
        picked = []
        for sid in sorted(citation.sentence_ids):
            if not 1 <= sid <= len(doc.sentences):
                return None
            picked.append(doc.sentences[sid - 1])
    body = " ".join(picked)
    return f"({doc.title}) {body}" if doc.title else body


@dataclass
class JudgeContext:
    """Shared state for one instance's attribution judging."""

    gateway: Gateway
    model_id: str
    temperature: float = 1.0
    seed: int | None = None
    flags: list[str] = field(default_factory=list)

    def verdict(self, template_id: TemplateId, bindings: dict[str, str]) -> Fraction:
        request = LlmRequest(
            model_id=self.model_id,
            template_id=template_id,
            bindings=bindings,
            temperature=self.temperature,
            seed=self.seed,
        )
        raw = self.gateway.complete(request).text
        verdict = parse_binary_verdict(raw)
        if verdict is None:
            retry_key = "statement" if "statement" in bindings else "question"
            strict = dict(bindings)
            strict[retry_key] = strict[retry_key] + STRICT_RETRY_SUFFIX
            raw = self.gateway.complete(
                LlmRequest(
                    model_id=self.model_id,
                    template_id=template_id,
                    bindings=strict,
                    temperature=self.temperature,
                    seed=self.seed,
                )
            ).text
            verdict = parse_binary_verdict(raw)
        if verdict is None:
            self.flags.append("judge_parse_error")
            return Fraction(0)
        return Fraction(verdict)


def attribution_precision(
    answer: LongFormAnswer,
    question: str,
    instance: EvalInstance,
    judge: JudgeContext,
) -> Fraction:
    """Mean per-citation relevance over all citations in the answer.

    Dangling citations count 0 without a judge call. Raises NoCitations when
    the answer carries none at all.
    """
    verdicts: list[Fraction] = []
    for statement in answer.statements:
        for citation in statement.citations:
            evidence = resolve_citation(citation, instance.documents)
            if evidence is None:
                judge.flags.append("dangling_citation")
                verdicts.append(Fraction(0))
                continue
            verdicts.append(
                judge.verdict(
                    TemplateId.JUDGE_REL,
                    {
                        "question": question,
                        "statement": statement.text,
                        "citation_text": evidence,
                    },
                )
            )
    if not verdicts:
        raise NoCitations("answer has no citations")
    return Fraction(sum(verdicts), len(verdicts))


def attribution_recall(
    answer: LongFormAnswer,
    question: str,
    instance: EvalInstance,
    judge: JudgeContext,
) -> Fraction:
    """Mean per-statement score: support when cited, 1 - need when not."""
    if not answer.statements:
        raise NoCitations("answer has no statements")
    long_text = " ".join(s.text for s in answer.statements if s.text)
    scores: list[Fraction] = []
    for statement in answer.statements:
        if statement.citations:
            pieces = []
            for citation in statement.citations:
                evidence = resolve_citation(citation, instance.documents)
                if evidence is None:
                    judge.flags.append("dangling_citation")
                    continue
                pieces.append(evidence)
            if not pieces:
                scores.append(Fraction(0))
                continue
            scores.append(
                judge.verdict(
                    TemplateId.JUDGE_SUPP,
                    {
                        "question": question,
                        "statement": statement.text,
                        "evidence_text": " ".join(pieces),
                    },
                )
            )
        else:
            need = judge.verdict(
                TemplateId.JUDGE_NEED,
                {
                    "question": question,
                    "long_answer": long_text,
                    "statement": statement.text,
                },
            )
            scores.append(1 - need)
    return Fraction(sum(scores), len(scores))


def f1_score(precision: Fraction, recall: Fraction) -> Fraction:
    if precision + recall == 0:
        return Fraction(0)
    return 2 * precision * recall / (precision + recall)


def attribution_scores(
    answer: LongFormAnswer,
    question: str,
    instance: EvalInstance,
    judge: JudgeContext,
) -> AttributionScores:
    n_citations = len(answer.all_citations())
    try:
        precision = attribution_precision(answer, question, instance, judge)
    except NoCitations:
        judge.flags.append("no_citations")
        precision = Fraction(0)
    recall = attribution_recall(answer, question, instance, judge)
    return AttributionScores(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        n_citations=n_citations,
        n_statements=len(answer.statements),
    )


def logic_scores_from_chain(
    result: ChainResult, prop_set: PropositionSet
) -> tuple[int, Fraction]:
    minimal = minimal_sufficient_set(result)
    return completeness(minimal), conciseness(minimal, prop_set)


METRIC_NAMES = (
    "completeness",
    "conciseness",
    "determinateness",
    "precision",
    "recall",
    "f1",
)


@dataclass(frozen=True)
class AggregateRow:
    group: str
    metric: str
    mean: Fraction
    std_error: float
    n: int


def aggregate(
    records: Sequence[dict],
    group_by: Callable[[dict], str],
) -> list[AggregateRow]:
    """Group score records and compute exact means with float std errors.

    Records carry Fraction-valued entries under METRIC_NAMES. The mean stays
    a Fraction; the standard error (sample stddev / sqrt(n), 0 when n == 1)
    is the one float, used only for error bars.
    """
    groups: dict[str, list[dict]] = {}
    for record in records:
        groups.setdefault(group_by(record), []).append(record)

    rows: list[AggregateRow] = []
    for group in sorted(groups):
        members = groups[group]
        for metric in METRIC_NAMES:
            values = [Fraction(m[metric]) for m in members if metric in m]
            if not values:
                continue
            n = len(values)
            mean = Fraction(sum(values), n)
            if n > 1:
                var = sum((v - mean) ** 2 for v in values) / (n - 1)
                std_error = sqrt(float(var)) / sqrt(n)
            else:
                std_error = 0.0
            rows.append(
                AggregateRow(group=group, metric=metric, mean=mean, std_error=std_error, n=n)
            )
    return rows
