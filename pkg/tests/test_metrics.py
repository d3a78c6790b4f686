"""Scoring rules: logic metrics, re-inference, judges, attribution, rollups."""

from fractions import Fraction

import pytest

from chainscore.gateway import Gateway
from chainscore.metrics import (
    AggregateRow,
    EmptyPropositionSet,
    JudgeContext,
    NoCitations,
    ReinferParseError,
    aggregate,
    answers_equivalent,
    attribution_precision,
    attribution_recall,
    attribution_scores,
    completeness,
    conciseness,
    determinateness,
    f1_score,
    logic_scores_from_chain,
    parse_binary_verdict,
    parse_reinferred_answer,
    resolve_citation,
)
from chainscore.model import (
    ChainResult,
    ChainStatus,
    Citation,
    Dataset,
    Document,
    EvalInstance,
    LongFormAnswer,
    Proposition,
    PropositionSet,
    ShortAnswer,
    Statement,
    WHOLE_DOCUMENT,
)
from chainscore.prompts import STRICT_RETRY_SUFFIX, TemplateId

from conftest import RuleProvider


def make_instance(**overrides) -> EvalInstance:
    fields = dict(
        instance_id="2hop__t_0001",
        question="Who led the guild?",
        documents=(
            Document(doc_id=1, title="Guild", sentences=("The guild thrived.", "It faded.")),
            Document(doc_id=2, title="Leader", sentences=("A leader rose.",)),
        ),
        gold_answer="Ana Reyes",
        gold_aliases=(),
        hop_count=2,
        dataset=Dataset.MUSIQUE,
        supporting_doc_ids=frozenset({1, 2}),
    )
    fields.update(overrides)
    return EvalInstance(**fields)


def prop_set(n: int) -> PropositionSet:
    props = tuple(
        Proposition(f"P{i}", f"claim {i}", (Citation(1, frozenset({1})),))
        for i in range(1, n + 1)
    )
    return PropositionSet(propositions=props, horn_expression=tuple(p.label for p in props))


def judge(tmp_path, fn) -> tuple[JudgeContext, RuleProvider]:
    provider = RuleProvider(fn)
    ctx = JudgeContext(gateway=Gateway(provider, tmp_path / "cache"), model_id="judge-m")
    return ctx, provider


def by_template(rel="1", supp="1", need="0"):
    """Provider rule answering each judge template with a fixed or callable reply."""
    replies = {TemplateId.JUDGE_REL: rel, TemplateId.JUDGE_SUPP: supp, TemplateId.JUDGE_NEED: need}
    def fn(request):
        reply = replies[request.template_id]
        return reply(request) if callable(reply) else reply
    return fn


class TestLogicMetrics:
    def test_completeness_is_binary(self):
        assert completeness([]) == 0
        assert completeness(["P2", "P1"]) == 1

    def test_conciseness_exact_fraction(self):
        value = conciseness(["P2", "P1"], prop_set(4))
        assert value == Fraction(1, 2)
        assert isinstance(value, Fraction)

    def test_conciseness_zero_without_path(self):
        assert conciseness([], prop_set(3)) == 0

    def test_conciseness_rejects_empty_proposition_set(self):
        with pytest.raises(EmptyPropositionSet):
            conciseness([], PropositionSet(propositions=(), horn_expression=()))

    def test_chain_result_wrapper(self):
        connected = ChainResult(
            status=ChainStatus.CONNECTED, path=("P2", "P1"), trace=(), start_candidates=("P2",)
        )
        assert logic_scores_from_chain(connected, prop_set(4)) == (1, Fraction(1, 2))
        broken = ChainResult(status=ChainStatus.BROKEN, path=(), trace=(), start_candidates=("P2",))
        assert logic_scores_from_chain(broken, prop_set(4)) == (0, Fraction(0))


class TestAnswersEquivalent:
    def test_exact_and_case_insensitive(self):
        assert answers_equivalent("Milwaukee Deep", "milwaukee deep")

    def test_article_normalization(self):
        assert answers_equivalent("The Milwaukee Deep", "Milwaukee Deep")

    def test_containment_either_direction(self):
        assert answers_equivalent("Paris", "Paris, France")
        assert answers_equivalent("Paris, France", "Paris")

    def test_token_run_must_be_contiguous(self):
        assert not answers_equivalent("Warner Group", "Warner Music Group")

    def test_empty_never_matches(self):
        assert not answers_equivalent("", "Paris")
        assert not answers_equivalent("Paris", "   ")

    def test_judge_only_consulted_on_cheap_miss(self):
        calls = []
        def widen(a, b):
            calls.append((a, b))
            return True
        assert answers_equivalent("Paris", "Paris, France", judge=widen)
        assert calls == []
        assert answers_equivalent("NYC", "New York City", judge=widen)
        assert calls == [("NYC", "New York City")]

    def test_judge_may_refuse(self):
        assert not answers_equivalent("NYC", "London", judge=lambda a, b: False)


class TestParseReinferredAnswer:
    def test_plain_marker(self):
        assert parse_reinferred_answer("Reasoning...\nAnswer: Ana Reyes") == "Ana Reyes"

    def test_markdown_decoration(self):
        assert parse_reinferred_answer("**Answer:** **Ana Reyes**") == "Ana Reyes"

    def test_last_marker_wins(self):
        raw = "Answer: draft\nMore text.\nAnswer: final"
        assert parse_reinferred_answer(raw) == "final"

    def test_first_line_after_marker(self):
        assert parse_reinferred_answer("Answer: Ana Reyes\nBecause...") == "Ana Reyes"

    def test_fullwidth_colon(self):
        assert parse_reinferred_answer("Answer: Ana Reyes") == "Ana Reyes"

    def test_missing_marker_raises(self):
        with pytest.raises(ReinferParseError):
            parse_reinferred_answer("I cannot tell.")

    def test_empty_tail_raises(self):
        with pytest.raises(ReinferParseError):
            parse_reinferred_answer("Answer:   \n")


class TestParseBinaryVerdict:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("1", 1),
            ("0", 0),
            ("Verdict: 1", 1),
            ("  0\nbecause...", 0),
            ("yes", 1),
            ("Yes, it is relevant.", 1),
            ("No.", 0),
            ("maybe", None),
            ("", None),
            ("the score is 1", 1),
        ],
    )
    def test_values(self, raw, expected):
        assert parse_binary_verdict(raw) == expected


class TestResolveCitation:
    def test_single_sentence_with_title(self):
        instance = make_instance()
        text = resolve_citation(Citation(1, frozenset({2})), instance.documents)
        assert text == "(Guild) It faded."

    def test_multiple_sentences_sorted(self):
        instance = make_instance()
        text = resolve_citation(Citation(1, frozenset({2, 1})), instance.documents)
        assert text == "(Guild) The guild thrived. It faded."

    def test_whole_document_sentinel(self):
        instance = make_instance()
        text = resolve_citation(Citation(1, frozenset({WHOLE_DOCUMENT})), instance.documents)
        assert text == "(Guild) The guild thrived. It faded."

    def test_untitled_document_has_bare_body(self):
        docs = (Document(doc_id=1, title="", sentences=("Alpha.",)),)
        assert resolve_citation(Citation(1, frozenset({1})), docs) == "Alpha."

    def test_unknown_document_dangles(self):
        assert resolve_citation(Citation(9, frozenset({1})), make_instance().documents) is None

    def test_out_of_range_sentence_dangles(self):
        assert resolve_citation(Citation(2, frozenset({5})), make_instance().documents) is None


class TestDeterminateness:
    def _answer(self):
        return LongFormAnswer(
            statements=(
                Statement("The guild thrived.", (Citation(1, frozenset({1})),)),
                Statement("Ana Reyes led it.", (Citation(2, frozenset({1})),)),
            ),
            raw_text="",
        )

    def test_equivalent_reinference_scores_one(self, tmp_path):
        provider = RuleProvider(lambda req: "Answer: Ana Reyes")
        gateway = Gateway(provider, tmp_path / "c")
        score, reinferred = determinateness(
            "Who led the guild?", self._answer(), ShortAnswer("Ana Reyes"), gateway, "m"
        )
        assert (score, reinferred) == (1, "Ana Reyes")

    def test_divergent_reinference_scores_zero(self, tmp_path):
        provider = RuleProvider(lambda req: "Answer: Someone Else")
        gateway = Gateway(provider, tmp_path / "c")
        score, reinferred = determinateness(
            "Who led the guild?", self._answer(), ShortAnswer("Ana Reyes"), gateway, "m"
        )
        assert (score, reinferred) == (0, "Someone Else")

    def test_context_is_joined_statement_text(self, tmp_path):
        provider = RuleProvider(lambda req: "Answer: x")
        gateway = Gateway(provider, tmp_path / "c")
        determinateness("q?", self._answer(), ShortAnswer("x"), gateway, "m")
        request = provider.requests[0][0]
        assert request.template_id is TemplateId.REINFER
        assert request.bindings["context"] == "The guild thrived. Ana Reyes led it."

    def test_strict_retry_on_unparseable_output(self, tmp_path):
        def fn(request):
            if request.bindings["context"].endswith(STRICT_RETRY_SUFFIX):
                return "Answer: Ana Reyes"
            return "no marker here"
        provider = RuleProvider(fn)
        gateway = Gateway(provider, tmp_path / "c")
        score, reinferred = determinateness(
            "q?", self._answer(), ShortAnswer("Ana Reyes"), gateway, "m"
        )
        assert (score, reinferred) == (1, "Ana Reyes")
        digests = {d for _, d in provider.requests}
        assert len(provider.requests) == 2 and len(digests) == 2

    def test_retry_also_unparseable_raises(self, tmp_path):
        provider = RuleProvider(lambda req: "still nothing")
        gateway = Gateway(provider, tmp_path / "c")
        with pytest.raises(ReinferParseError):
            determinateness("q?", self._answer(), ShortAnswer("x"), gateway, "m")
        assert len(provider.requests) == 2


class TestJudgeContextVerdict:
    BINDINGS = {"question": "q?", "statement": "s", "citation_text": "e"}

    def test_parses_fractions(self, tmp_path):
        ctx, _ = judge(tmp_path, lambda req: "1")
        value = ctx.verdict(TemplateId.JUDGE_REL, dict(self.BINDINGS))
        assert value == Fraction(1) and isinstance(value, Fraction)

    def test_strict_retry_appends_to_statement(self, tmp_path):
        def fn(request):
            if request.bindings["statement"].endswith(STRICT_RETRY_SUFFIX):
                return "0"
            return "inconclusive"
        ctx, provider = judge(tmp_path, fn)
        assert ctx.verdict(TemplateId.JUDGE_REL, dict(self.BINDINGS)) == Fraction(0)
        assert len(provider.requests) == 2
        assert ctx.flags == []

    def test_double_failure_flags_and_scores_zero(self, tmp_path):
        ctx, provider = judge(tmp_path, lambda req: "inconclusive")
        assert ctx.verdict(TemplateId.JUDGE_REL, dict(self.BINDINGS)) == Fraction(0)
        assert ctx.flags == ["judge_parse_error"]
        assert len(provider.requests) == 2


class TestAttributionPrecision:
    def _answer_three_citations(self):
        return LongFormAnswer(
            statements=(
                Statement("The guild thrived.", (Citation(1, frozenset({1})), Citation(1, frozenset({2})))),
                Statement("Ana Reyes led it.", (Citation(2, frozenset({1})),)),
            ),
        )

    def test_mean_of_verdicts(self, tmp_path):
        verdicts = iter(["1", "1", "0"])
        ctx, _ = judge(tmp_path, lambda req: next(verdicts))
        value = attribution_precision(self._answer_three_citations(), "q?", make_instance(), ctx)
        assert value == Fraction(2, 3)

    def test_dangling_citation_scores_zero_without_judge_call(self, tmp_path):
        answer = LongFormAnswer(
            statements=(
                Statement("A claim.", (Citation(9, frozenset({1})), Citation(1, frozenset({1})))),
            ),
        )
        ctx, provider = judge(tmp_path, by_template(rel="1"))
        value = attribution_precision(answer, "q?", make_instance(), ctx)
        assert value == Fraction(1, 2)
        assert ctx.flags == ["dangling_citation"]
        assert len(provider.requests) == 1

    def test_no_citations_raises(self, tmp_path):
        ctx, _ = judge(tmp_path, by_template())
        answer = LongFormAnswer(statements=(Statement("Uncited claim."),))
        with pytest.raises(NoCitations):
            attribution_precision(answer, "q?", make_instance(), ctx)


class TestAttributionRecall:
    def test_supported_plus_needed_uncited(self, tmp_path):
        # cited statement judged supported (1); uncited one judged needed,
        # contributing 1 - 1 = 0; mean is 1/2
        answer = LongFormAnswer(
            statements=(
                Statement("Cited claim.", (Citation(1, frozenset({1})),)),
                Statement("Uncited claim."),
            ),
        )
        ctx, _ = judge(tmp_path, by_template(supp="1", need="1"))
        assert attribution_recall(answer, "q?", make_instance(), ctx) == Fraction(1, 2)

    def test_unneeded_uncited_statement_is_fine(self, tmp_path):
        answer = LongFormAnswer(statements=(Statement("Filler remark."),))
        ctx, _ = judge(tmp_path, by_template(need="0"))
        assert attribution_recall(answer, "q?", make_instance(), ctx) == Fraction(1)

    def test_fully_dangling_statement_scores_zero(self, tmp_path):
        answer = LongFormAnswer(
            statements=(Statement("A claim.", (Citation(9, frozenset({1})),)),),
        )
        ctx, provider = judge(tmp_path, by_template())
        assert attribution_recall(answer, "q?", make_instance(), ctx) == Fraction(0)
        assert ctx.flags == ["dangling_citation"]
        assert provider.requests == []

    def test_partially_dangling_keeps_resolvable_evidence(self, tmp_path):
        seen = {}
        def supp(request):
            seen["evidence"] = request.bindings["evidence_text"]
            return "1"
        answer = LongFormAnswer(
            statements=(
                Statement("A claim.", (Citation(9, frozenset({1})), Citation(2, frozenset({1})))),
            ),
        )
        ctx, _ = judge(tmp_path, by_template(supp=supp))
        assert attribution_recall(answer, "q?", make_instance(), ctx) == Fraction(1)
        assert seen["evidence"] == "(Leader) A leader rose."
        assert ctx.flags == ["dangling_citation"]

    def test_multi_citation_evidence_joined(self, tmp_path):
        seen = {}
        def supp(request):
            seen["evidence"] = request.bindings["evidence_text"]
            return "1"
        answer = LongFormAnswer(
            statements=(
                Statement("A claim.", (Citation(1, frozenset({1})), Citation(2, frozenset({1})))),
            ),
        )
        ctx, _ = judge(tmp_path, by_template(supp=supp))
        attribution_recall(answer, "q?", make_instance(), ctx)
        assert seen["evidence"] == "(Guild) The guild thrived. (Leader) A leader rose."

    def test_no_statements_raises(self, tmp_path):
        ctx, _ = judge(tmp_path, by_template())
        with pytest.raises(NoCitations):
            attribution_recall(LongFormAnswer(statements=()), "q?", make_instance(), ctx)


class TestF1:
    def test_zero_sum_guard(self):
        assert f1_score(Fraction(0), Fraction(0)) == Fraction(0)

    def test_harmonic_mean(self):
        value = f1_score(Fraction(1), Fraction(1, 2))
        assert value == Fraction(2, 3)
        assert isinstance(value, Fraction)


class TestAttributionScores:
    def test_healthy_bundle(self, tmp_path):
        answer = LongFormAnswer(
            statements=(
                Statement("Cited claim.", (Citation(1, frozenset({1})),)),
                Statement("Uncited filler."),
            ),
        )
        ctx, _ = judge(tmp_path, by_template(rel="1", supp="1", need="0"))
        scores = attribution_scores(answer, "q?", make_instance(), ctx)
        assert scores.precision == Fraction(1)
        assert scores.recall == Fraction(1)
        assert scores.f1 == Fraction(1)
        assert scores.n_citations == 1
        assert scores.n_statements == 2
        assert ctx.flags == []

    def test_citation_free_answer_flags_and_zeroes_precision(self, tmp_path):
        answer = LongFormAnswer(statements=(Statement("Uncited claim."),))
        ctx, _ = judge(tmp_path, by_template(need="0"))
        scores = attribution_scores(answer, "q?", make_instance(), ctx)
        assert "no_citations" in ctx.flags
        assert scores.precision == Fraction(0)
        assert scores.recall == Fraction(1)
        assert scores.f1 == Fraction(0)
        assert scores.n_citations == 0

    def test_statement_free_answer_propagates(self, tmp_path):
        ctx, _ = judge(tmp_path, by_template())
        with pytest.raises(NoCitations):
            attribution_scores(LongFormAnswer(statements=()), "q?", make_instance(), ctx)


class TestAggregate:
    def _records(self):
        return [
            {"hop": "2", "completeness": Fraction(1), "conciseness": Fraction(1, 2)},
            {"hop": "2", "completeness": Fraction(0), "conciseness": Fraction(0)},
            {"hop": "3", "completeness": Fraction(1)},
        ]

    def test_exact_means_and_counts(self):
        rows = aggregate(self._records(), lambda r: r["hop"])
        by_key = {(r.group, r.metric): r for r in rows}
        comp2 = by_key[("2", "completeness")]
        assert comp2.mean == Fraction(1, 2) and comp2.n == 2
        assert isinstance(comp2.mean, Fraction)
        conc2 = by_key[("2", "conciseness")]
        assert conc2.mean == Fraction(1, 4)
        comp3 = by_key[("3", "completeness")]
        assert comp3.mean == Fraction(1) and comp3.n == 1 and comp3.std_error == 0.0

    def test_std_error_known_value(self):
        # values {0, 1}: sample stddev sqrt(1/2), std error sqrt(1/2)/sqrt(2) = 1/2
        rows = aggregate(self._records(), lambda r: r["hop"])
        comp2 = next(r for r in rows if (r.group, r.metric) == ("2", "completeness"))
        assert abs(comp2.std_error - 0.5) < 1e-12

    def test_missing_metrics_skipped(self):
        rows = aggregate(self._records(), lambda r: r["hop"])
        assert ("3", "conciseness") not in {(r.group, r.metric) for r in rows}

    def test_permutation_invariance(self):
        records = self._records()
        assert aggregate(records, lambda r: r["hop"]) == aggregate(
            list(reversed(records)), lambda r: r["hop"]
        )

    def test_groups_sorted(self):
        rows = aggregate(self._records(), lambda r: r["hop"])
        assert [r.group for r in rows] == sorted(r.group for r in rows)

    def test_single_group_all_metric(self):
        rows = aggregate(self._records(), lambda r: "all")
        comp = next(r for r in rows if r.metric == "completeness")
        assert comp.mean == Fraction(2, 3) and comp.n == 3
        assert isinstance(rows[0], AggregateRow)
