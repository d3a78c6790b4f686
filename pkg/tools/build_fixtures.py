#!/usr/bin/env python3
"""Regenerate the committed pipeline fixtures under tests/fixtures/.

The generator synthesizes three small datasets in the musique JSONL shape,
plays the full pipeline against a plan-driven provider that records every
(digest, completion) pair the run requests, cross-checks the resulting score
rows against expectations computed here with plain arithmetic, and writes:

    golden_dataset.jsonl / golden_script.jsonl / golden_expected.jsonl
    case_broken_dataset.jsonl / case_broken_script.jsonl / case_broken_expected.jsonl
    case_circular_dataset.jsonl / case_circular_script.jsonl / case_circular_expected.jsonl

Judge verdicts are content-addressed through marker words (below) instead of
call order, so the scripts replay correctly no matter how a test schedules
requests. The script refuses to write anything when the self-check fails, so
a committed fixture always reflects behaviour the pipeline actually produced.

Run from the repository root: python3 tools/build_fixtures.py
"""

from __future__ import annotations

import json
import sys
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from chainscore.gateway import LlmRequest, Provider
from chainscore.ingest import split_sentences
from chainscore.model import Dataset
from chainscore.pipeline import RunConfig, Runner, read_jsonl, write_jsonl
from chainscore.prompts import TemplateId

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

# Marker words the scripted judge keys on. Evidence containing IRRELEVANT_MARK
# is judged off-topic; statements containing UNSUPPORTED_MARK are judged
# unsupported by their evidence; uncited statements containing NEEDS_MARK are
# judged to need a citation.
IRRELEVANT_MARK = "unrelated trivia"
UNSUPPORTED_MARK = "reportedly"
NEEDS_MARK = "crucially"

GENERATOR_MODEL = "gpt-4o-mini"


@dataclass
class Plan:
    """Everything one instance needs: raw inputs, scripted model behaviour,
    and the score row the pipeline is expected to produce from them."""

    instance_id: str
    question: str
    paragraphs: list[dict]  # {"title", "sentences": [str], "is_supporting": bool}
    gold_answer: str
    answer_aliases: list[str]
    question_entities: list[str]
    statements: list[dict]  # {"text", "citations": [(doc_id, [sids])]}
    short_answer: str
    propositions: list[dict]  # {"text", "citations", "triples": [(s, p, o)] | None}
    reinfer_answer: str
    expected_status: str
    expected_path: list[str]


def slots(k: int) -> dict[str, str]:
    """Entity names for instance k, fused with the index so that no two
    instances share a token and no two roles are token-run substrings."""
    s = f"{k:02d}"
    return {
        "G": f"Aldra{s} Venn",  # gold answer
        "GA": f"Elder{s} Venn",  # gold alias
        "Q": f"Brell{s} Tower",  # question entity
        "B1": f"Corvax{s} Guild",  # bridge 1
        "B2": f"Delmor{s} Route",  # bridge 2
        "B3": f"Ferin{s} Pact",  # bridge 3
        "X": f"Morwen{s} Hale",  # wrong reinferred answer
    }


# ---------------------------------------------------------------------------
# Raw completion renderers (what the scripted model replies with)
# ---------------------------------------------------------------------------


def cite_tags(citations: list) -> str:
    return "".join(
        " [%d]%s" % (doc, "".join(f"<S{s}>" for s in sids)) for doc, sids in citations
    )


def generation_raw(plan: Plan) -> str:
    spans = " ".join(
        f"<STATEMENT>{st['text']}{cite_tags(st['citations'])}</STATEMENT>"
        for st in plan.statements
    )
    return f"Reasoning: {spans}\n\nAnswer: {plan.short_answer}"


def transform_raw(plan: Plan) -> str:
    props = {
        f"P{i}": p["text"] + cite_tags(p["citations"])
        for i, p in enumerate(plan.propositions, start=1)
    }
    expr = " ∧ ".join(f"P{i}" for i in range(1, len(plan.propositions) + 1))
    return json.dumps(
        {"propositions": props, "logical_expression": expr},
        ensure_ascii=False,
        indent=2,
    )


def ner_raw(plan: Plan) -> str:
    ents = [{"text": t, "type": "Entity"} for t in plan.question_entities]
    return json.dumps({"entities": ents}, ensure_ascii=False)


def triples_raw(prop: dict) -> str:
    if prop["triples"] is None:
        return "[]"
    return json.dumps(
        [{"subject": s, "predicate": p, "object": o} for s, p, o in prop["triples"]],
        ensure_ascii=False,
    )


def reinfer_raw(plan: Plan) -> str:
    return f"Answer: {plan.reinfer_answer}"


class PlanProvider(Provider):
    """Deterministic provider that answers from the plan table and records
    every reply keyed by request digest (the mock-script format)."""

    name = "plan"

    def __init__(self, plans: list[Plan]):
        self.by_question: dict[str, Plan] = {}
        self.triples_by_sentence: dict[str, str] = {}
        for plan in plans:
            if plan.question in self.by_question:
                raise ValueError(f"duplicate question: {plan.question!r}")
            self.by_question[plan.question] = plan
            for prop in plan.propositions:
                if prop["text"] in self.triples_by_sentence:
                    raise ValueError(f"duplicate proposition text: {prop['text']!r}")
                self.triples_by_sentence[prop["text"]] = triples_raw(prop)
        self.recorded: dict[str, str] = {}

    def send(self, request: LlmRequest, prompt: str, digest: str) -> str:
        text = self._dispatch(request)
        self.recorded[digest] = text
        return text

    def _dispatch(self, request: LlmRequest) -> str:
        t, b = request.template_id, request.bindings
        if t is TemplateId.GENERATE:
            return generation_raw(self.by_question[b["question"]])
        if t is TemplateId.TRANSFORM:
            return transform_raw(self.by_question[b["question"]])
        if t is TemplateId.QUESTION_NER:
            return ner_raw(self.by_question[b["question"]])
        if t is TemplateId.REINFER:
            return reinfer_raw(self.by_question[b["question"]])
        if t is TemplateId.TRIPLE_EXTRACT:
            return self.triples_by_sentence[b["sentence"]]
        if t is TemplateId.JUDGE_REL:
            return "0" if IRRELEVANT_MARK in b["citation_text"].lower() else "1"
        if t is TemplateId.JUDGE_SUPP:
            return "0" if UNSUPPORTED_MARK in b["statement"].lower() else "1"
        if t is TemplateId.JUDGE_NEED:
            return "1" if NEEDS_MARK in b["statement"].lower() else "0"
        raise AssertionError(f"unexpected template {t}")


# ---------------------------------------------------------------------------
# Expected score rows, computed independently of the package's metric code
# ---------------------------------------------------------------------------


def evidence_text(plan: Plan, doc_id: int, sids: list[int]) -> str:
    para = plan.paragraphs[doc_id - 1]
    body = " ".join(para["sentences"][s - 1] for s in sorted(sids))
    return f"({para['title']}) {body}"


def expected_row(plan: Plan) -> dict:
    citations = [(d, sids) for st in plan.statements for d, sids in st["citations"]]
    rel = [
        0 if IRRELEVANT_MARK in evidence_text(plan, d, sids).lower() else 1
        for d, sids in citations
    ]
    precision = Fraction(sum(rel), len(rel))
    scores = []
    for st in plan.statements:
        if st["citations"]:
            scores.append(0 if UNSUPPORTED_MARK in st["text"].lower() else 1)
        else:
            scores.append(0 if NEEDS_MARK in st["text"].lower() else 1)
    recall = Fraction(sum(scores), len(scores))
    total = precision + recall
    f1 = (2 * precision * recall / total) if total else Fraction(0)
    n_props = len(plan.propositions)
    path = list(plan.expected_path)
    return {
        "instance_id": plan.instance_id,
        "dataset": "musique",
        "hop_count": int(plan.instance_id.split("hop", 1)[0]),
        "model": GENERATOR_MODEL,
        "status": plan.expected_status,
        "minimal_set": path,
        "proposition_labels": [f"P{i}" for i in range(1, n_props + 1)],
        "completeness": 1 if path else 0,
        "conciseness": str(Fraction(len(path), n_props)),
        "determinateness": int(plan.reinfer_answer == plan.short_answer),
        "reinferred_answer": plan.reinfer_answer,
        "precision": str(precision),
        "recall": str(recall),
        "f1": str(f1),
        "n_citations": len(citations),
        "n_statements": len(plan.statements),
        "flags": [],
        "error": None,
    }


# ---------------------------------------------------------------------------
# Topology builders
# ---------------------------------------------------------------------------


def connected_2hop(k: int, dete_ok: bool) -> Plan:
    e = slots(k)
    p1 = f"The {e['Q']} was raised by the {e['B1']}."
    p2 = f"The {e['B1']} answered to {e['G']}."
    return Plan(
        instance_id=f"2hop__golden_{k:04d}",
        question=f"Who commanded the builders of the {e['Q']}?",
        paragraphs=[
            {"title": e["Q"], "sentences": [p1, "Unrelated trivia about masons."], "is_supporting": True},
            {"title": e["B1"], "sentences": [p2, "Its charter is lost."], "is_supporting": True},
        ],
        gold_answer=e["G"],
        answer_aliases=[],
        question_entities=[e["Q"]],
        statements=[
            {"text": p1, "citations": [(1, [1])]},
            {"text": p2, "citations": [(2, [1])]},
        ],
        short_answer=e["G"],
        propositions=[
            {"text": p1, "citations": [(1, [1])], "triples": [(e["Q"], "was raised by", e["B1"])]},
            {"text": p2, "citations": [(2, [1])], "triples": [(e["B1"], "answered to", e["G"])]},
        ],
        reinfer_answer=e["G"] if dete_ok else e["X"],
        expected_status="Connected",
        expected_path=["P2", "P1"],
    )


def connected_0hop(k: int, dete_ok: bool) -> Plan:
    """The gold-bearing proposition itself names the question entity."""
    e = slots(k)
    p1 = f"{e['G']} overlooks the {e['Q']}."
    p2 = f"The {e['Q']} floods each spring."
    return Plan(
        instance_id=f"2hop__golden_{k:04d}",
        question=f"What overlooks the {e['Q']}?",
        paragraphs=[
            {"title": e["G"], "sentences": [p1, "Pilgrims visit in autumn."], "is_supporting": True},
            {"title": e["Q"], "sentences": [p2, "The walls were rebuilt twice."], "is_supporting": False},
        ],
        gold_answer=e["G"],
        answer_aliases=[],
        question_entities=[e["Q"]],
        statements=[
            {"text": p1, "citations": [(1, [1])]},
            {"text": p2, "citations": [(2, [1])]},
        ],
        short_answer=e["G"],
        propositions=[
            {"text": p1, "citations": [(1, [1])], "triples": [(e["G"], "overlooks", e["Q"])]},
            {"text": p2, "citations": [(2, [1])], "triples": [(e["Q"], "floods each", "spring")]},
        ],
        reinfer_answer=e["G"] if dete_ok else e["X"],
        expected_status="Connected",
        expected_path=["P1"],
    )


def connected_3hop(k: int, dete_ok: bool, trivia_cite: bool) -> Plan:
    e = slots(k)
    p1 = f"The {e['Q']} lies at the end of the {e['B2']}."
    p2 = f"The {e['B2']} was mapped by the {e['B1']}."
    p3 = f"The {e['B1']} answered to {e['G']}."
    p4 = f"The {e['B3']} runs a harbor market."
    s4_cite = (1, [2]) if trivia_cite else (2, [2])
    return Plan(
        instance_id=f"3hop__golden_{k:04d}",
        question=f"Who commanded the {e['Q']}?",
        paragraphs=[
            {"title": e["Q"], "sentences": [p1, "Unrelated trivia about tolls."], "is_supporting": True},
            {"title": e["B2"], "sentences": [p2, "It crosses two passes."], "is_supporting": True},
            {"title": e["B1"], "sentences": [p3, "Its ledgers are lost."], "is_supporting": True},
        ],
        gold_answer=e["G"],
        answer_aliases=[],
        question_entities=[e["Q"]],
        statements=[
            {"text": p1, "citations": [(1, [1]), (3, [2])]},
            {"text": p2, "citations": [(2, [1])]},
            {"text": p3, "citations": [(3, [1])]},
            {"text": p4, "citations": [s4_cite]},
        ],
        short_answer=e["G"],
        propositions=[
            {"text": p1, "citations": [(1, [1])], "triples": [(e["Q"], "lies at the end of", e["B2"])]},
            {"text": p2, "citations": [(2, [1])], "triples": [(e["B2"], "was mapped by", e["B1"])]},
            {"text": p3, "citations": [(3, [1])], "triples": [(e["B1"], "answered to", e["G"])]},
            {"text": p4, "citations": [s4_cite], "triples": [(e["B3"], "runs", "a harbor market")]},
        ],
        reinfer_answer=e["G"] if dete_ok else e["X"],
        expected_status="Connected",
        expected_path=["P3", "P2", "P1"],
    )


def connected_4hop(k: int) -> Plan:
    e = slots(k)
    p1 = f"The {e['Q']} anchors the {e['B3']}."
    p2 = f"The {e['B3']} follows the {e['B2']}."
    p3 = f"The {e['B2']} was charted by the {e['B1']}."
    p4 = f"The {e['B1']} served {e['G']}."
    p5 = "The harbor fee doubled one spring."
    return Plan(
        instance_id=f"4hop__golden_{k:04d}",
        question=f"Who ruled the road from the {e['Q']}?",
        paragraphs=[
            {"title": e["Q"], "sentences": [p1, "Pilgrims rest there."], "is_supporting": True},
            {"title": e["B3"], "sentences": [p2, "It fades in winter."], "is_supporting": True},
            {"title": e["B2"], "sentences": [p3, "Old maps survive."], "is_supporting": True},
            {"title": e["B1"], "sentences": [p4, "Unrelated trivia about dues."], "is_supporting": True},
        ],
        gold_answer=e["G"],
        answer_aliases=[],
        question_entities=[e["Q"]],
        statements=[
            {"text": p1, "citations": [(1, [1])]},
            {"text": p2, "citations": [(2, [1])]},
            {"text": p3, "citations": [(3, [1])]},
            {"text": p4, "citations": [(4, [1])]},
            {"text": "Crucially, the guild records remain sealed.", "citations": []},
        ],
        short_answer=e["G"],
        propositions=[
            {"text": p1, "citations": [(1, [1])], "triples": [(e["Q"], "anchors", e["B3"])]},
            {"text": p2, "citations": [(2, [1])], "triples": [(e["B3"], "follows", e["B2"])]},
            {"text": p3, "citations": [(3, [1])], "triples": [(e["B2"], "was charted by", e["B1"])]},
            {"text": p4, "citations": [(4, [1])], "triples": [(e["B1"], "served", e["G"])]},
            {"text": p5, "citations": [(4, [2])], "triples": [("harbor fee", "doubled", "one spring")]},
        ],
        reinfer_answer=e["G"],
        expected_status="Connected",
        expected_path=["P4", "P3", "P2", "P1"],
    )


def broken(k: int, hop: int, dete_ok: bool, unsupported: bool = False,
           second_candidate: bool = False) -> Plan:
    """Gold anchors, one hop extends, then the chain stalls short of the
    question entity. P3 yields no triples, so it stays isolated."""
    e = slots(k)
    verb = "reportedly traveled" if unsupported else "traveled"
    p1 = f"The {e['B1']} honored {e['G']}."
    p2 = f"The {e['B1']} {verb} the {e['B2']}."
    p3 = f"An archive ledger from year 11{k:02d} survives."
    statements = [
        {"text": p1, "citations": [(1, [1])]},
        {"text": p2, "citations": [(2, [1])]},
        {"text": "The town keeps one archive ledger.", "citations": []},
    ]
    propositions = [
        {"text": p1, "citations": [(1, [1])], "triples": [(e["B1"], "honored", e["G"])]},
        {"text": p2, "citations": [(2, [1])], "triples": [(e["B1"], verb, e["B2"])]},
        {"text": p3, "citations": [(2, [2])], "triples": None},
    ]
    if second_candidate:
        p4 = f"{e['G']} kept the {e['B3']}."
        statements.append({"text": p4, "citations": [(1, [2])]})
        propositions.append(
            {"text": p4, "citations": [(1, [2])], "triples": [(e["G"], "kept", e["B3"])]}
        )
    return Plan(
        instance_id=f"{hop}hop__golden_{k:04d}",
        question=f"Where did the {e['Q']} stand?",
        paragraphs=[
            {"title": e["B1"], "sentences": [p1, "Unrelated trivia about oaths."], "is_supporting": True},
            {"title": e["B2"], "sentences": [p2, "The route closed long ago."], "is_supporting": True},
            {"title": e["Q"], "sentences": [f"The {e['Q']} burned long ago.", "Few records survive."], "is_supporting": False},
        ],
        gold_answer=e["G"],
        answer_aliases=[],
        question_entities=[e["Q"]],
        statements=statements,
        short_answer=e["G"],
        propositions=propositions,
        reinfer_answer=e["G"] if dete_ok else e["X"],
        expected_status="Broken",
        expected_path=[],
    )


def circular(k: int, hop: int, dete_ok: bool, grouped_trivia: bool) -> Plan:
    """P2 and P3 cite each other through the same pair of bridges, so every
    walk from the candidate dies revisiting a consumed key."""
    e = slots(k)
    p1 = f"{e['G']} founded the {e['B1']}."
    p2 = f"The {e['B1']} merged into the {e['B2']}."
    p3 = f"The {e['B2']} absorbed the {e['B1']}."
    s1_cites = [(1, [1, 2])] if grouped_trivia else [(1, [1])]
    return Plan(
        instance_id=f"{hop}hop__golden_{k:04d}",
        question=f"What stands on the site of the {e['Q']}?",
        paragraphs=[
            {"title": e["B1"], "sentences": [p1, "Unrelated trivia about feasts."], "is_supporting": True},
            {"title": e["B2"], "sentences": [p2, p3], "is_supporting": True},
        ],
        gold_answer=e["G"],
        answer_aliases=[],
        question_entities=[e["Q"]],
        statements=[
            {"text": p1, "citations": s1_cites},
            {"text": p2, "citations": [(2, [1])]},
            {"text": p3, "citations": [(2, [2])]},
        ],
        short_answer=e["G"],
        propositions=[
            {"text": p1, "citations": [(1, [1])], "triples": [(e["G"], "founded", e["B1"])]},
            {"text": p2, "citations": [(2, [1])], "triples": [(e["B1"], "merged into", e["B2"])]},
            {"text": p3, "citations": [(2, [2])], "triples": [(e["B2"], "absorbed", e["B1"])]},
        ],
        reinfer_answer=e["G"] if dete_ok else e["X"],
        expected_status="Circular",
        expected_path=[],
    )


def deviated_anchored(k: int, hop: int, trivia_cite: bool) -> Plan:
    """The only candidate holds nothing but gold keys (answer + alias), so
    it has no bridges and the search never extends."""
    e = slots(k)
    p1 = f"{e['G']} is also recorded as {e['GA']}."
    p2 = f"The {e['B1']} crossed the {e['B2']}."
    s2_cite = (2, [2]) if trivia_cite else (2, [1])
    return Plan(
        instance_id=f"{hop}hop__golden_{k:04d}",
        question=f"What name did the {e['Q']} keep for its patron?",
        paragraphs=[
            {"title": e["G"], "sentences": [p1, "The name appears in two ledgers."], "is_supporting": True},
            {"title": e["B1"], "sentences": [p2, "Unrelated trivia about salt."], "is_supporting": False},
        ],
        gold_answer=e["G"],
        answer_aliases=[e["GA"]],
        question_entities=[e["Q"]],
        statements=[
            {"text": p1, "citations": [(1, [1])]},
            {"text": p2, "citations": [s2_cite]},
        ],
        short_answer=e["G"],
        propositions=[
            {"text": p1, "citations": [(1, [1])], "triples": [(e["G"], "is also recorded as", e["GA"])]},
            {"text": p2, "citations": [s2_cite], "triples": [(e["B1"], "crossed", e["B2"])]},
        ],
        reinfer_answer=e["X"],
        expected_status="Deviated",
        expected_path=[],
    )


def deviated_nocand(k: int, hop: int) -> Plan:
    """No proposition mentions the gold answer at all."""
    e = slots(k)
    p1 = f"The {e['B1']} guarded the {e['B2']}."
    p2 = f"The {e['B2']} reached the {e['B3']}."
    return Plan(
        instance_id=f"{hop}hop__golden_{k:04d}",
        question=f"Which road left the {e['Q']}?",
        paragraphs=[
            {"title": e["B1"], "sentences": [p1, "Watchfires burned there."], "is_supporting": False},
            {"title": e["B2"], "sentences": [p2, "The pact dissolved."], "is_supporting": False},
        ],
        gold_answer=e["G"],
        answer_aliases=[],
        question_entities=[e["Q"]],
        statements=[
            {"text": p1, "citations": [(1, [1])]},
            {"text": p2, "citations": [(2, [1])]},
        ],
        short_answer=e["G"],
        propositions=[
            {"text": p1, "citations": [(1, [1])], "triples": [(e["B1"], "guarded", e["B2"])]},
            {"text": p2, "citations": [(2, [1])], "triples": [(e["B2"], "reached", e["B3"])]},
        ],
        reinfer_answer=e["X"],
        expected_status="Deviated",
        expected_path=[],
    )


def golden_plans() -> list[Plan]:
    return [
        connected_2hop(1, dete_ok=True),
        connected_2hop(2, dete_ok=False),
        connected_2hop(3, dete_ok=True),
        connected_0hop(4, dete_ok=True),
        connected_0hop(5, dete_ok=False),
        connected_3hop(6, dete_ok=True, trivia_cite=True),
        connected_3hop(7, dete_ok=True, trivia_cite=False),
        connected_4hop(8),
        broken(9, hop=3, dete_ok=False),
        broken(10, hop=3, dete_ok=True, unsupported=True),
        broken(11, hop=3, dete_ok=False, second_candidate=True),
        broken(12, hop=4, dete_ok=False, unsupported=True),
        broken(13, hop=4, dete_ok=False),
        circular(14, hop=2, dete_ok=True, grouped_trivia=False),
        circular(15, hop=2, dete_ok=False, grouped_trivia=True),
        circular(16, hop=3, dete_ok=False, grouped_trivia=False),
        circular(17, hop=3, dete_ok=False, grouped_trivia=False),
        deviated_anchored(18, hop=2, trivia_cite=False),
        deviated_anchored(19, hop=4, trivia_cite=True),
        deviated_nocand(20, hop=4),
    ]


def warner_plan() -> Plan:
    """Showcase of a broken chain: the label's owner anchors the search, one
    hop lands on the Burbank fact, and the walk stalls with the Top Gun side
    of the story unreachable. The reinferred answer picks the founder, not
    the owner, so determinateness fails too."""
    return Plan(
        instance_id="4hop__case_warner_0001",
        question=(
            "Who is the owner of the record label of the guitarist who "
            "performed on the Top Gun theme?"
        ),
        paragraphs=[
            {
                "title": "Top Gun Anthem",
                "sentences": [
                    "The Top Gun theme was performed by guitarist Steve Stevens.",
                    "Harold Faltermeyer composed the film score.",
                ],
                "is_supporting": True,
            },
            {
                "title": "Steve Stevens",
                "sentences": [
                    "Steve Stevens released the album Atomic Playboys.",
                    "He toured with Billy Idol.",
                ],
                "is_supporting": True,
            },
            {
                "title": "Warner Bros Records",
                "sentences": [
                    "Warner Bros Records is an American record label located in Burbank, California.",
                    "Warner Bros Records is a subsidiary of Warner Music Group, which was founded by James Conkling.",
                ],
                "is_supporting": True,
            },
        ],
        gold_answer="Warner Music Group",
        answer_aliases=[],
        question_entities=["Top Gun theme"],
        statements=[
            {
                "text": "The Top Gun theme was performed by Steve Stevens.",
                "citations": [(1, [1])],
            },
            {
                "text": "Steve Stevens released the album Atomic Playboys.",
                "citations": [(2, [1])],
            },
            {
                "text": "Warner Bros Records is located in Burbank, California.",
                "citations": [(3, [1])],
            },
            {
                "text": "Warner Bros Records is a subsidiary of Warner Music Group, founded by James Conkling.",
                "citations": [(3, [2])],
            },
        ],
        short_answer="Warner Music Group",
        propositions=[
            {
                "text": "The Top Gun theme was performed by Steve Stevens.",
                "citations": [(1, [1])],
                "triples": [("Top Gun theme", "was performed by", "Steve Stevens")],
            },
            {
                "text": "Steve Stevens released the album Atomic Playboys.",
                "citations": [(2, [1])],
                "triples": [("Steve Stevens", "released", "Atomic Playboys")],
            },
            {
                "text": "Warner Bros Records is located in Burbank, California.",
                "citations": [(3, [1])],
                "triples": [("Warner Bros Records", "is located in", "Burbank California")],
            },
            {
                "text": "Warner Bros Records is a subsidiary of Warner Music Group, founded by James Conkling.",
                "citations": [(3, [2])],
                "triples": [
                    ("Warner Bros Records", "is a subsidiary of", "Warner Music Group"),
                    ("Warner Music Group", "was founded by", "James Conkling"),
                ],
            },
        ],
        reinfer_answer="James Conkling",
        expected_status="Broken",
        expected_path=[],
    )


def milwaukee_plan() -> Plan:
    """Showcase of a circular chain: the depth facts cite each other through
    the trench, and the walk never touches Main Street Station. The answer
    itself is right, so determinateness still passes."""
    return Plan(
        instance_id="3hop__case_milwaukee_0001",
        question=(
            "What is the deepest part of the ocean by the state where "
            "Main Street Station is located?"
        ),
        paragraphs=[
            {
                "title": "Main Street Station",
                "sentences": [
                    "Main Street Station is a historic train station in Richmond, Virginia.",
                    "It reopened to rail service in 2003.",
                ],
                "is_supporting": True,
            },
            {
                "title": "Milwaukee Deep",
                "sentences": [
                    "The Milwaukee Deep is the deepest part of the Atlantic Ocean.",
                    "It lies within the Puerto Rico Trench.",
                ],
                "is_supporting": True,
            },
            {
                "title": "Puerto Rico Trench",
                "sentences": [
                    "The Puerto Rico Trench is an oceanic trench in the Atlantic Ocean.",
                    "Its deepest section lies near Puerto Rico.",
                ],
                "is_supporting": True,
            },
        ],
        gold_answer="Milwaukee Deep",
        answer_aliases=["The Milwaukee Deep"],
        question_entities=["Main Street Station"],
        statements=[
            {
                "text": "The Milwaukee Deep lies within the Puerto Rico Trench.",
                "citations": [(2, [2])],
            },
            {
                "text": "The Puerto Rico Trench is located in the Atlantic Ocean.",
                "citations": [(3, [1])],
            },
            {
                "text": "The Atlantic Ocean reaches its greatest depth inside the Puerto Rico Trench.",
                "citations": [(3, [1])],
            },
        ],
        short_answer="The Milwaukee Deep",
        propositions=[
            {
                "text": "The Milwaukee Deep lies within the Puerto Rico Trench.",
                "citations": [(2, [2])],
                "triples": [("Milwaukee Deep", "lies within", "Puerto Rico Trench")],
            },
            {
                "text": "The Puerto Rico Trench is located in the Atlantic Ocean.",
                "citations": [(3, [1])],
                "triples": [("Puerto Rico Trench", "is located in", "Atlantic Ocean")],
            },
            {
                "text": "The Atlantic Ocean reaches its greatest depth inside the Puerto Rico Trench.",
                "citations": [(3, [1])],
                "triples": [("Atlantic Ocean", "reaches its greatest depth inside", "Puerto Rico Trench")],
            },
        ],
        reinfer_answer="The Milwaukee Deep",
        expected_status="Circular",
        expected_path=[],
    )


# ---------------------------------------------------------------------------
# Dataset serialization and the self-checking build
# ---------------------------------------------------------------------------


def dataset_row(plan: Plan) -> dict:
    for para in plan.paragraphs:
        joined = " ".join(para["sentences"])
        resplit = split_sentences(joined)
        if resplit != para["sentences"]:
            raise AssertionError(
                f"{plan.instance_id}: paragraph does not round-trip the "
                f"sentence splitter: {para['sentences']!r} -> {resplit!r}"
            )
    return {
        "id": plan.instance_id,
        "question": plan.question,
        "answer": plan.gold_answer,
        "answer_aliases": plan.answer_aliases,
        "answerable": True,
        "paragraphs": [
            {
                "idx": i,
                "title": p["title"],
                "paragraph_text": " ".join(p["sentences"]),
                "is_supporting": p["is_supporting"],
            }
            for i, p in enumerate(plan.paragraphs)
        ],
    }


def diff_rows(got: dict, want: dict) -> str:
    lines = []
    for key in sorted(set(got) | set(want)):
        g, w = got.get(key, "<missing>"), want.get(key, "<missing>")
        if g != w:
            lines.append(f"  {key}: got {g!r}, want {w!r}")
    return "\n".join(lines)


def build_one(name: str, plans: list[Plan]) -> None:
    dataset_rows = [dataset_row(p) for p in plans]
    expected_rows = [expected_row(p) for p in plans]
    provider = PlanProvider(plans)

    with tempfile.TemporaryDirectory() as td:
        data_path = Path(td) / "dataset.jsonl"
        write_jsonl(data_path, dataset_rows)
        config = RunConfig(
            dataset=Dataset.MUSIQUE,
            input_path=str(data_path),
            out_dir=str(Path(td) / "runs"),
            cache_dir=str(Path(td) / "cache"),
            run_id=f"fixture-{name}",
        )
        runner = Runner(config, provider=provider)
        runner.run(through="score")
        scores = read_jsonl(runner.stage_path("score"))

    if len(scores) != len(expected_rows):
        raise AssertionError(f"{name}: {len(scores)} rows, want {len(expected_rows)}")
    bad = []
    for got, want in zip(scores, expected_rows):
        if got != want:
            bad.append(f"{want['instance_id']}:\n{diff_rows(got, want)}")
    if bad:
        raise AssertionError(f"{name}: score rows diverge from plan\n" + "\n".join(bad))

    FIXTURES_DIR.mkdir(parents=True, exist_ok=True)
    write_jsonl(FIXTURES_DIR / f"{name}_dataset.jsonl", dataset_rows)
    write_jsonl(
        FIXTURES_DIR / f"{name}_script.jsonl",
        [{"digest": d, "text": t} for d, t in provider.recorded.items()],
    )
    write_jsonl(FIXTURES_DIR / f"{name}_expected.jsonl", expected_rows)
    print(
        f"{name}: {len(dataset_rows)} instances, "
        f"{len(provider.recorded)} scripted completions"
    )


def main() -> int:
    build_one("golden", golden_plans())
    build_one("case_broken", [warner_plan()])
    build_one("case_circular", [milwaukee_plan()])
    return 0


if __name__ == "__main__":
    sys.exit(main())
