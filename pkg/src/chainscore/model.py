"""Core domain types for attributed long-form QA evaluation.

Everything downstream (ingest, transformation, chain search, metrics, reports)
speaks in these types. They are frozen dataclasses: stages communicate by
passing values, never by mutating shared state, which is what makes the
thread-pooled pipeline safe. Scores that are ratios stay `fractions.Fraction`
end to end; floats only appear at the reporting boundary.

JSON round-tripping is part of the contract here because every pipeline stage
checkpoints to JSONL: for each type, `from_json_dict(to_json_dict(x)) == x`.
Fractions serialize as exact "p/q" strings.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from fractions import Fraction
from typing import Any, Iterable, Mapping

WHOLE_DOCUMENT = 0
"""Sentinel sentence id meaning a citation targets the whole document."""


class Dataset(str, enum.Enum):
    HOTPOTQA = "hotpotqa"
    MUSIQUE = "musique"
    TWOWIKI = "2wiki"


class ChainStatus(str, enum.Enum):
    """Outcome taxonomy of the backward chain search.

    CONNECTED: some anchored path reaches a question entity.
    CIRCULAR: no path succeeds and at least one branch died revisiting an
        entity already consumed on its own path.
    BROKEN: no success, no cycle, but the search extended at least one hop
        before stalling.
    DEVIATED: the candidate set never engaged (no gold-bearing proposition,
        or candidates that could not extend at all).
    """

    CONNECTED = "Connected"
    CIRCULAR = "Circular"
    BROKEN = "Broken"
    DEVIATED = "Deviated"


def encode_fraction(value: Fraction | int) -> str:
    return str(Fraction(value))


def decode_fraction(text: str | int) -> Fraction:
    return Fraction(text)


def fraction_to_display(value: Fraction | int, scale: int = 100) -> str:
    """Render a unit-interval rational as a x100 percentage with 2 decimals."""
    scaled = Fraction(value) * scale
    quant = Decimal(scaled.numerator) / Decimal(scaled.denominator)
    return str(quant.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class Violation:
    """A named breach of a structural invariant, attached to a field."""

    field: str
    rule: str
    detail: str = ""


@dataclass(frozen=True)
class Document:
    doc_id: int
    title: str
    sentences: tuple[str, ...]

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "sentences": list(self.sentences),
        }

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "Document":
        return Document(
            doc_id=int(obj["doc_id"]),
            title=str(obj["title"]),
            sentences=tuple(str(s) for s in obj["sentences"]),
        )


@dataclass(frozen=True)
class EvalInstance:
    """One question with its retrieval context and gold short answer."""

    instance_id: str
    question: str
    documents: tuple[Document, ...]
    gold_answer: str
    gold_aliases: tuple[str, ...] = ()
    hop_count: int | None = None
    dataset: Dataset | None = None
    supporting_doc_ids: frozenset[int] = frozenset()

    def document_by_id(self, doc_id: int) -> Document | None:
        for doc in self.documents:
            if doc.doc_id == doc_id:
                return doc
        return None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "question": self.question,
            "documents": [d.to_json_dict() for d in self.documents],
            "gold_answer": self.gold_answer,
            "gold_aliases": list(self.gold_aliases),
            "hop_count": self.hop_count,
            "dataset": self.dataset.value if self.dataset else None,
            "supporting_doc_ids": sorted(self.supporting_doc_ids),
        }

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "EvalInstance":
        return EvalInstance(
            instance_id=str(obj["instance_id"]),
            question=str(obj["question"]),
            documents=tuple(Document.from_json_dict(d) for d in obj["documents"]),
            gold_answer=str(obj["gold_answer"]),
            gold_aliases=tuple(str(a) for a in obj.get("gold_aliases", [])),
            hop_count=obj.get("hop_count"),
            dataset=Dataset(obj["dataset"]) if obj.get("dataset") else None,
            supporting_doc_ids=frozenset(int(i) for i in obj.get("supporting_doc_ids", [])),
        )


@dataclass(frozen=True)
class Citation:
    """A pointer from generated text into the instance's documents.

    sentence_ids never empty; the WHOLE_DOCUMENT sentinel (0) marks a bare
    document-level citation with no sentence tags.
    """

    doc_id: int
    sentence_ids: frozenset[int]

    def render(self) -> str:
        tags = "".join(
            f"<S{i}>" for i in sorted(self.sentence_ids) if i != WHOLE_DOCUMENT
        )
        return f"[{self.doc_id}]{tags}"

    def to_json_dict(self) -> dict[str, Any]:
        return {"doc_id": self.doc_id, "sentence_ids": sorted(self.sentence_ids)}

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "Citation":
        return Citation(
            doc_id=int(obj["doc_id"]),
            sentence_ids=frozenset(int(i) for i in obj["sentence_ids"]),
        )


@dataclass(frozen=True)
class Statement:
    """One reasoning step of the long-form answer, with its citations."""

    text: str
    citations: tuple[Citation, ...] = ()

    def render_with_citations(self) -> str:
        parts = [self.text]
        parts.extend(c.render() for c in self.citations)
        return " ".join(p for p in parts if p)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "citations": [c.to_json_dict() for c in self.citations],
        }

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "Statement":
        return Statement(
            text=str(obj["text"]),
            citations=tuple(Citation.from_json_dict(c) for c in obj.get("citations", [])),
        )


@dataclass(frozen=True)
class LongFormAnswer:
    statements: tuple[Statement, ...]
    raw_text: str = ""

    def all_citations(self) -> list[Citation]:
        out: list[Citation] = []
        for s in self.statements:
            out.extend(s.citations)
        return out

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "statements": [s.to_json_dict() for s in self.statements],
            "raw_text": self.raw_text,
        }

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "LongFormAnswer":
        return LongFormAnswer(
            statements=tuple(Statement.from_json_dict(s) for s in obj["statements"]),
            raw_text=str(obj.get("raw_text", "")),
        )


@dataclass(frozen=True)
class ShortAnswer:
    """Final short answer; text is trimmed and single-line."""

    text: str

    def to_json_dict(self) -> dict[str, Any]:
        return {"text": self.text}

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "ShortAnswer":
        return ShortAnswer(text=str(obj["text"]))


@dataclass(frozen=True)
class Proposition:
    """An atomic claim produced by the logic transformation stage."""

    label: str
    text: str
    citations: tuple[Citation, ...] = ()

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "text": self.text,
            "citations": [c.to_json_dict() for c in self.citations],
        }

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "Proposition":
        return Proposition(
            label=str(obj["label"]),
            text=str(obj["text"]),
            citations=tuple(Citation.from_json_dict(c) for c in obj.get("citations", [])),
        )


@dataclass(frozen=True)
class PropositionSet:
    """Dense-labelled propositions P1..Pn plus the conjunction over them.

    horn_expression holds the conjunct labels in order; it may reference a
    subset of the propositions but never an unknown label.
    """

    propositions: tuple[Proposition, ...]
    horn_expression: tuple[str, ...]

    def labels(self) -> tuple[str, ...]:
        return tuple(p.label for p in self.propositions)

    def by_label(self, label: str) -> Proposition:
        for p in self.propositions:
            if p.label == label:
                return p
        raise KeyError(label)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "propositions": [p.to_json_dict() for p in self.propositions],
            "horn_expression": list(self.horn_expression),
        }

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "PropositionSet":
        return PropositionSet(
            propositions=tuple(Proposition.from_json_dict(p) for p in obj["propositions"]),
            horn_expression=tuple(str(t) for t in obj["horn_expression"]),
        )


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str

    def to_json_dict(self) -> dict[str, Any]:
        return {"subject": self.subject, "predicate": self.predicate, "object": self.object}

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "Triple":
        return Triple(
            subject=str(obj["subject"]),
            predicate=str(obj["predicate"]),
            object=str(obj["object"]),
        )


@dataclass(frozen=True)
class EntityKey:
    """A normalized entity identity plus the surface forms that mapped to it."""

    key: str
    surface_forms: frozenset[str] = frozenset()

    def to_json_dict(self) -> dict[str, Any]:
        return {"key": self.key, "surface_forms": sorted(self.surface_forms)}

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "EntityKey":
        return EntityKey(
            key=str(obj["key"]),
            surface_forms=frozenset(str(s) for s in obj.get("surface_forms", [])),
        )


@dataclass(frozen=True)
class TraceStep:
    """One visit record of the chain search: which node, via which key."""

    label: str
    via_key: str

    def to_json_dict(self) -> list[str]:
        return [self.label, self.via_key]

    @staticmethod
    def from_json_dict(obj: Iterable[str]) -> "TraceStep":
        label, via_key = list(obj)
        return TraceStep(label=str(label), via_key=str(via_key))


@dataclass(frozen=True)
class ChainResult:
    """Outcome of backward chain construction for one instance."""

    status: ChainStatus
    path: tuple[str, ...]
    trace: tuple[TraceStep, ...]
    start_candidates: tuple[str, ...]
    budget_exhausted: bool = False

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "path": list(self.path),
            "trace": [t.to_json_dict() for t in self.trace],
            "start_candidates": list(self.start_candidates),
            "budget_exhausted": self.budget_exhausted,
        }

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "ChainResult":
        return ChainResult(
            status=ChainStatus(obj["status"]),
            path=tuple(str(p) for p in obj["path"]),
            trace=tuple(TraceStep.from_json_dict(t) for t in obj["trace"]),
            start_candidates=tuple(str(c) for c in obj["start_candidates"]),
            budget_exhausted=bool(obj.get("budget_exhausted", False)),
        )


@dataclass(frozen=True)
class LogicScores:
    """The three chain-level scores for one instance.

    completeness/determinateness are 0/1 indicators; conciseness is the exact
    ratio |minimal set| / |propositions| (0 when no valid path exists).
    """

    completeness: int
    conciseness: Fraction
    determinateness: int
    reinferred_answer: str | None = None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "completeness": self.completeness,
            "conciseness": encode_fraction(self.conciseness),
            "determinateness": self.determinateness,
            "reinferred_answer": self.reinferred_answer,
        }

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "LogicScores":
        return LogicScores(
            completeness=int(obj["completeness"]),
            conciseness=decode_fraction(obj["conciseness"]),
            determinateness=int(obj["determinateness"]),
            reinferred_answer=obj.get("reinferred_answer"),
        )


@dataclass(frozen=True)
class AttributionScores:
    precision: Fraction
    recall: Fraction
    f1: Fraction
    n_citations: int
    n_statements: int

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "precision": encode_fraction(self.precision),
            "recall": encode_fraction(self.recall),
            "f1": encode_fraction(self.f1),
            "n_citations": self.n_citations,
            "n_statements": self.n_statements,
        }

    @staticmethod
    def from_json_dict(obj: Mapping[str, Any]) -> "AttributionScores":
        return AttributionScores(
            precision=decode_fraction(obj["precision"]),
            recall=decode_fraction(obj["recall"]),
            f1=decode_fraction(obj["f1"]),
            n_citations=int(obj["n_citations"]),
            n_statements=int(obj["n_statements"]),
        )


def validate_instance(
    instance: EvalInstance,
    answer: LongFormAnswer | None = None,
    proposition_set: PropositionSet | None = None,
) -> list[Violation]:
    """Check structural invariants; returns one Violation per breach.

    When an answer or proposition set is supplied, their citations are
    resolved against the instance's documents and dangling references are
    flagged rather than raised: scoring stays fail-closed, not fail-crashed.
    """
    violations: list[Violation] = []

    if not instance.instance_id.strip():
        violations.append(Violation("instance_id", "non-empty"))
    if not instance.question.strip():
        violations.append(Violation("question", "non-empty"))
    if not instance.gold_answer.strip():
        violations.append(Violation("gold_answer", "non-empty"))

    seen_ids: set[int] = set()
    for doc in instance.documents:
        if doc.doc_id < 1:
            violations.append(
                Violation("documents.doc_id", "positive", f"doc_id={doc.doc_id}")
            )
        if doc.doc_id in seen_ids:
            violations.append(
                Violation("documents.doc_id", "uniqueness", f"duplicate doc_id={doc.doc_id}")
            )
        seen_ids.add(doc.doc_id)
        if not doc.sentences:
            violations.append(
                Violation("documents.sentences", "non-empty", f"doc_id={doc.doc_id}")
            )
        for j, sent in enumerate(doc.sentences, start=1):
            if not sent.strip():
                violations.append(
                    Violation(
                        "documents.sentences",
                        "non-empty sentence",
                        f"doc_id={doc.doc_id} sentence={j}",
                    )
                )

    for sup in sorted(instance.supporting_doc_ids):
        if sup not in seen_ids:
            violations.append(
                Violation("supporting_doc_ids", "existing document", f"doc_id={sup}")
            )

    if instance.hop_count is not None and instance.hop_count < 1:
        violations.append(Violation("hop_count", "positive", str(instance.hop_count)))

    def check_citations(owner: str, citations: Iterable[Citation]) -> None:
        for cit in citations:
            if not cit.sentence_ids:
                violations.append(Violation(owner, "sentence_ids non-empty", f"doc {cit.doc_id}"))
            doc = instance.document_by_id(cit.doc_id)
            if doc is None:
                violations.append(
                    Violation(owner, "dangling citation", f"doc {cit.doc_id} not in instance")
                )
                continue
            for sid in sorted(cit.sentence_ids):
                if sid != WHOLE_DOCUMENT and not 1 <= sid <= len(doc.sentences):
                    violations.append(
                        Violation(owner, "dangling citation", f"doc {cit.doc_id} sentence {sid}")
                    )

    if answer is not None:
        for i, stmt in enumerate(answer.statements, start=1):
            check_citations(f"statements[{i}].citations", stmt.citations)
    if proposition_set is not None:
        labels = set()
        for p in proposition_set.propositions:
            labels.add(p.label)
            check_citations(f"propositions[{p.label}].citations", p.citations)
            if not p.citations:
                violations.append(
                    Violation(f"propositions[{p.label}].citations", "zero citations", p.text[:60])
                )
        for tok in proposition_set.horn_expression:
            if tok not in labels:
                violations.append(
                    Violation("horn_expression", "known label", tok)
                )

    return violations


def dump_json_line(obj: Mapping[str, Any]) -> str:
    """Canonical single-line JSON used by every checkpoint artifact."""
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))
