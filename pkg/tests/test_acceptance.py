"""End-to-end acceptance checks with pinned values and tolerances.

Each test here corresponds to one entry in conftest.ACCEPTANCE_CRITERIA and
gets a PASS/SKIP/FAIL line in the terminal summary. Values asserted exactly
are exact by design (Fraction arithmetic); float comparisons and wall-clock
limits carry their tolerance inline.
"""

import os
import random
import time
from fractions import Fraction
from pathlib import Path

import pytest

from chainscore.agreement import cohen_kappa, jaccard_index, pearson_r
from chainscore.chain import (
    GraphNode,
    PropositionGraph,
    build_backward_chain,
)
from chainscore.gateway import Gateway, parse_generation
from chainscore.metrics import (
    JudgeContext,
    attribution_precision,
    attribution_recall,
    logic_scores_from_chain,
)
from chainscore.model import (
    ChainResult,
    ChainStatus,
    Citation,
    Dataset,
    Document,
    EvalInstance,
    Proposition,
    PropositionSet,
    Triple,
)
from chainscore.pipeline import Runner, RunConfig, read_jsonl
from chainscore.prompts import (
    GENERATE_TEMPLATE,
    QUESTION_NER_TEMPLATE,
    TRANSFORM_TEMPLATE,
    TRIPLE_EXTRACT_TEMPLATE,
    TemplateId,
)
from chainscore.report import emit_report
from chainscore.transform import (
    parse_horn_output,
    parse_question_entities,
    parse_triples,
)

from chain_oracle import oracle_chain
from conftest import RuleProvider, expected_rows, fixture_config


# --- criterion 1: search engine agrees with an exhaustive oracle ------------

_TOKENS = ("arden", "belmor", "corway", "druse", "elvik",
           "farrow", "gilda", "harlan", "ives", "jorun")


def _random_key(rng: random.Random) -> str:
    width = rng.choice((1, 1, 1, 2, 2, 3))
    return " ".join(rng.sample(_TOKENS, width))


def _random_graph(rng: random.Random) -> PropositionGraph:
    """Scatter and chained regimes, half each.

    Scatter draws keys independently and mostly yields short or failed
    walks; chained builds a key backbone through several nodes so deep
    paths, mid-chain exits, and competing path lengths come up often.
    """
    if rng.random() < 0.5:
        return _scatter_graph(rng)
    return _chained_graph(rng)


def _scatter_graph(rng: random.Random) -> PropositionGraph:
    n_nodes = rng.randint(1, 8)
    pool = [_random_key(rng) for _ in range(rng.randint(3, 9))]

    numbers = sorted(rng.sample(range(1, 15), n_nodes))
    labels = [f"P{num}" for num in numbers]
    if n_nodes > 1 and rng.random() < 0.15:
        labels[rng.randrange(n_nodes)] = "aux_claim"

    nodes = []
    for label in labels:
        keys = tuple(dict.fromkeys(rng.choice(pool) for _ in range(rng.randint(1, 3))))
        tokens = []
        for key in keys:
            tokens.extend(key.split())
        if rng.random() < 0.3:
            tokens.append(rng.choice(_TOKENS))
        nodes.append(GraphNode(label=label, keys=keys, tokens=tuple(tokens)))
    rng.shuffle(nodes)

    def pick_key() -> str:
        roll = rng.random()
        if roll < 0.55:
            return rng.choice(rng.choice(nodes).keys)
        if roll < 0.75:
            return rng.choice(_TOKENS)
        return _random_key(rng)

    gold = tuple(dict.fromkeys(pick_key() for _ in range(rng.randint(1, 2))))
    question = tuple(dict.fromkeys(pick_key() for _ in range(rng.randint(1, 2))))
    return PropositionGraph(nodes=tuple(nodes), gold_keys=gold, question_keys=question)


def _chained_graph(rng: random.Random) -> PropositionGraph:
    n_nodes = rng.randint(2, 7)
    backbone = [_random_key(rng) for _ in range(n_nodes + 1)]

    labels = [f"P{num}" for num in sorted(rng.sample(range(1, 15), n_nodes))]
    rng.shuffle(labels)

    nodes = []
    for i, label in enumerate(labels):
        keys = [backbone[i], backbone[i + 1]]
        if rng.random() < 0.3:
            keys.append(_random_key(rng))
        nodes.append(GraphNode(
            label=label,
            keys=tuple(dict.fromkeys(keys)),
            tokens=tuple(token for key in keys for token in key.split()),
        ))
    if n_nodes >= 3 and rng.random() < 0.35:
        # A shortcut node competes with the backbone on path length.
        keys = tuple(dict.fromkeys((backbone[0], backbone[rng.randint(2, n_nodes)])))
        nodes.append(GraphNode(
            label="P99",
            keys=keys,
            tokens=tuple(token for key in keys for token in key.split()),
        ))
    rng.shuffle(nodes)

    roll = rng.random()
    if roll < 0.7:
        gold = (backbone[0],)
    elif roll < 0.85:
        gold = (rng.choice(backbone[0].split()),)
    else:
        gold = tuple(dict.fromkeys((backbone[0], backbone[rng.randint(1, n_nodes)])))

    roll = rng.random()
    if roll < 0.55:
        question = (backbone[-1],)
    elif roll < 0.7:
        question = (rng.choice(backbone[-1].split()),)
    elif roll < 0.85:
        question = (backbone[rng.randint(1, n_nodes)],)
    else:
        question = (_random_key(rng),)
    return PropositionGraph(nodes=tuple(nodes), gold_keys=gold, question_keys=question)


def test_criterion_01_chain_oracle_equivalence():
    started = time.monotonic()
    n_graphs = 520
    for index in range(n_graphs):
        graph = _random_graph(random.Random(900_000 + index))
        for prefer_shortest in (True, False):
            got = build_backward_chain(graph, prefer_shortest=prefer_shortest)
            want = oracle_chain(graph, prefer_shortest=prefer_shortest)
            context = (index, prefer_shortest)
            assert got.status.value == want.status, context
            assert got.path == want.path, context
            assert got.start_candidates == want.start_candidates, context
            assert not got.budget_exhausted, context
    elapsed = time.monotonic() - started
    assert n_graphs >= 500
    assert elapsed < 10.0, f"oracle sweep took {elapsed:.1f}s"


# --- criterion 2: broken-chain showcase ends with all-zero logic scores -----

def test_criterion_02_broken_fixture(tmp_path):
    runner = Runner(fixture_config(tmp_path, "case_broken"))
    runner.run()
    rows = read_jsonl(runner.stage_path("score"))
    assert rows == expected_rows("case_broken")
    row = rows[0]
    assert row["status"] == "Broken"
    assert row["completeness"] == 0
    assert Fraction(row["conciseness"]) == 0
    assert row["determinateness"] == 0


# --- criterion 3: circular showcase terminates; adversarial hub stays fast --

def _hub_graph(reachable: bool) -> PropositionGraph:
    nodes = [GraphNode(label="P1", keys=("gold", "hub", "u1"),
                       tokens=("gold", "hub", "u1"))]
    for i in range(2, 1001):
        keys = ["hub", f"u{i}"]
        if reachable and i == 1000:
            keys.append("ques")
        nodes.append(GraphNode(label=f"P{i}", keys=tuple(keys), tokens=tuple(keys)))
    return PropositionGraph(nodes=tuple(nodes), gold_keys=("gold",), question_keys=("ques",))


def test_criterion_03_circular_fixture_and_adversarial_graph(tmp_path):
    runner = Runner(fixture_config(tmp_path, "case_circular"))
    runner.run()
    rows = read_jsonl(runner.stage_path("score"))
    assert rows == expected_rows("case_circular")
    row = rows[0]
    assert row["status"] == "Circular"
    assert row["completeness"] == 0
    assert Fraction(row["conciseness"]) == 0
    assert row["determinateness"] == 1

    # A hub key fans out to 999 context nodes; every walk must terminate
    # quickly whether or not the question is reachable.
    for reachable, status, path in (
        (False, ChainStatus.BROKEN, ()),
        (True, ChainStatus.CONNECTED, ("P1", "P1000")),
    ):
        graph = _hub_graph(reachable)
        started = time.monotonic()
        result = build_backward_chain(graph)
        elapsed = time.monotonic() - started
        assert result.status is status
        assert result.path == path
        assert not result.budget_exhausted
        assert elapsed < 1.0, f"hub search took {elapsed:.2f}s"


# --- criterion 4: logic-metric laws hold on random inputs -------------------

def _props(n: int) -> PropositionSet:
    props = tuple(
        Proposition(f"P{i}", f"claim {i}", (Citation(1, frozenset({1})),))
        for i in range(1, n + 1)
    )
    return PropositionSet(propositions=props, horn_expression=tuple(p.label for p in props))


def test_criterion_04_metric_laws():
    rng = random.Random(41)
    for _ in range(1000):
        n = rng.randint(1, 12)
        labels = [f"P{i}" for i in range(1, n + 1)]
        if rng.random() < 0.5:
            status = ChainStatus.CONNECTED
            path = tuple(rng.sample(labels, rng.randint(1, n)))
        else:
            status = rng.choice(
                (ChainStatus.BROKEN, ChainStatus.CIRCULAR, ChainStatus.DEVIATED)
            )
            path = ()
        result = ChainResult(status=status, path=path, trace=(), start_candidates=())
        comp, conc = logic_scores_from_chain(result, _props(n))
        assert comp in (0, 1)
        assert isinstance(conc, Fraction)
        assert 0 <= conc <= 1
        assert (conc > 0) == (comp == 1)
        if status is ChainStatus.CONNECTED:
            assert conc == Fraction(len(path), n)


# --- criterion 5: agreed formula values on fixed inputs ---------------------

def _judge(tmp_path, fn) -> JudgeContext:
    return JudgeContext(gateway=Gateway(RuleProvider(fn), tmp_path / "cache"), model_id="judge-m")


def _unit_instance() -> EvalInstance:
    return EvalInstance(
        instance_id="2hop__unit_0001",
        question="Who led the guild?",
        documents=(
            Document(doc_id=1, title="Guild", sentences=("The guild thrived.", "It faded.")),
        ),
        gold_answer="Ana Reyes",
        gold_aliases=(),
        hop_count=2,
        dataset=Dataset.MUSIQUE,
        supporting_doc_ids=frozenset({1}),
    )


def test_criterion_05_formula_units(tmp_path):
    assert abs(pearson_r([1, 2, 3, 4], [1, 3, 2, 4]) - 0.8) <= 1e-9
    assert jaccard_index({1, 2, 3}, {2, 3, 4}) == Fraction(1, 2)
    assert cohen_kappa([1, 1, 0, 0], [1, 0, 0, 1]) == Fraction(0)

    from chainscore.model import LongFormAnswer, Statement

    instance = _unit_instance()
    cite = (Citation(1, frozenset({1})),)

    # Three relevance verdicts 1, 1, 0 over three distinct citations.
    verdicts = iter(("1", "1", "0"))
    cited = LongFormAnswer(statements=tuple(
        Statement(text=f"claim {word}", citations=cite)
        for word in ("alpha", "beta", "gamma")
    ))
    precision = attribution_precision(
        cited, instance.question, instance, _judge(tmp_path / "p", lambda req: next(verdicts))
    )
    assert precision == Fraction(2, 3)

    # One cited statement judged supported, one uncited judged needed.
    replies = {TemplateId.JUDGE_SUPP: "1", TemplateId.JUDGE_NEED: "1"}
    mixed = LongFormAnswer(statements=(
        Statement(text="the guild thrived for years", citations=cite),
        Statement(text="its leader is remembered", citations=()),
    ))
    recall = attribution_recall(
        mixed, instance.question, instance,
        _judge(tmp_path / "r", lambda req: replies[req.template_id]),
    )
    assert recall == Fraction(1, 2)


# --- criterion 6: golden pipeline is deterministic and resumable ------------

def _golden_runner(tmp_path, tag: str) -> Runner:
    config = fixture_config(
        tmp_path,
        "golden",
        out_dir=str(tmp_path / tag / "runs"),
        cache_dir=str(tmp_path / tag / "cache"),
    )
    return Runner(config)


def _report_bytes(run_dir: Path) -> dict[str, bytes]:
    return {
        path.name: path.read_bytes()
        for path in emit_report(run_dir)
        if path.suffix != ".png"
    }


def test_criterion_06_golden_pipeline(tmp_path):
    started = time.monotonic()

    reference = _golden_runner(tmp_path, "ref")
    reference.run()
    want = _report_bytes(reference.run_dir)
    assert {"summary.csv", "per_instance.jsonl"} <= set(want)

    repeat = _golden_runner(tmp_path, "again")
    repeat.run()
    assert _report_bytes(repeat.run_dir) == want

    # Interrupt after each checkpoint, then resume with a fresh runner.
    for stage in ("instances", "generate", "transform", "chain"):
        interrupted = _golden_runner(tmp_path, f"cut-{stage}")
        interrupted.run(through=stage)
        resumed = _golden_runner(tmp_path, f"cut-{stage}")
        resumed.run()
        assert _report_bytes(resumed.run_dir) == want, stage

    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"determinism sweep took {elapsed:.1f}s"


# --- criterion 7: documented prompt examples parse to their stated results --

FLEMING_OUTPUT = (
    "Reasoning: <STATEMENT> Alexander Fleming made a discovery [1]<S1> </STATEMENT>. "
    "<STATEMENT> He noticed that mold could kill bacteria in cultures, which directly "
    "led to the development of penicillin [1]<S2><S3>.</STATEMENT>\n"
    "    Answer: Alexander Fleming."
)

UMBRELLA_OUTPUT = """\
    {
      "propositions": {
        "P1": "It rains[1]<S1>",
        "P2": "The ground is wet[1]<S1>",
        "P3": "The forecast says there will be rain tomorrow[2]<S4>",
      },
      "logical_expression": "P1 ∧ P2"
    }"""

OBAMA_OUTPUT = """\
    {
      "entities": [
        { "text": "Barack Obama", "type": "Person" },
        { "text": "Nobel Prize", "type": "Event" },
      ]
    }"""

CURIE_OUTPUT = """\
    [
      {
        "subject": "Marie Curie",
        "predicate": "place of birth",
        "object": "Warsaw"
      }
    ]"""


def test_criterion_07_parser_suite():
    # Each literal is the example completion shown in its template; asserting
    # containment keeps the test and the documentation from drifting apart.
    assert FLEMING_OUTPUT in GENERATE_TEMPLATE
    answer, short = parse_generation(FLEMING_OUTPUT)
    assert [s.text for s in answer.statements] == [
        "Alexander Fleming made a discovery",
        "He noticed that mold could kill bacteria in cultures, "
        "which directly led to the development of penicillin.",
    ]
    assert answer.statements[0].citations == (Citation(1, frozenset({1})),)
    assert answer.statements[1].citations == (Citation(1, frozenset({2, 3})),)
    assert short.text == "Alexander Fleming."

    assert UMBRELLA_OUTPUT in TRANSFORM_TEMPLATE
    parsed = parse_horn_output(UMBRELLA_OUTPUT)
    assert [(p.label, p.text) for p in parsed.propositions] == [
        ("P1", "It rains"),
        ("P2", "The ground is wet"),
        ("P3", "The forecast says there will be rain tomorrow"),
    ]
    assert parsed.propositions[0].citations == (Citation(1, frozenset({1})),)
    assert parsed.propositions[2].citations == (Citation(2, frozenset({4})),)
    assert parsed.horn_expression == ("P1", "P2")

    assert OBAMA_OUTPUT in QUESTION_NER_TEMPLATE
    entities = parse_question_entities(OBAMA_OUTPUT)
    assert [entity.key for entity in entities] == ["barack obama", "nobel prize"]

    assert CURIE_OUTPUT in TRIPLE_EXTRACT_TEMPLATE
    assert parse_triples(CURIE_OUTPUT) == [Triple("Marie Curie", "place of birth", "Warsaw")]


# --- criterion 8: optional live smoke against real credentials --------------

@pytest.mark.skipif(
    not (os.environ.get("OPENAI_API_KEY") and os.environ.get("CHAINSCORE_SMOKE_DATA")),
    reason="live smoke needs OPENAI_API_KEY and CHAINSCORE_SMOKE_DATA",
)
def test_criterion_08_live_smoke(tmp_path):
    config = RunConfig(
        dataset=Dataset.HOTPOTQA,
        input_path=Path(os.environ["CHAINSCORE_SMOKE_DATA"]),
        out_dir=str(tmp_path / "runs"),
        cache_dir=str(tmp_path / "cache"),
        run_id="live-smoke",
        setting="distractor",
        limit=10,
    )
    runner = Runner(config)
    runner.run()
    rows = read_jsonl(runner.stage_path("score"))
    assert len(rows) == 10
    for row in rows:
        if row.get("error"):
            continue
        assert row["status"] in {"Connected", "Circular", "Broken", "Deviated"}
        assert row["completeness"] in (0, 1)
        assert 0 <= Fraction(row["conciseness"]) <= 1
        assert 0 <= Fraction(row["precision"]) <= 1
        assert 0 <= Fraction(row["recall"]) <= 1
