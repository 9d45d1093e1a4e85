import json
import random
from fractions import Fraction

import pytest

from conftest import rule, scripted_runner, write_corpus
from ragdag.costmodel import (
    CostParams,
    compare_with_trace,
    infer_params_from_trace,
    ircot_cost,
    ircot_explicit_sum,
    ragdag_cost,
    rqrag_cost,
    sweep,
)
from ragdag.errors import MissingTelemetryError
from ragdag.gateway import Role
from ragdag.pipeline import PipelineConfig, run_pipeline
from ragdag.retrieval import LocalRetriever

WORKED = CostParams(
    sub_queries=2, query_tokens=20, answer_tokens=10, passages_per_query=5, passage_tokens=100
)


def random_params(rng):
    return CostParams(
        sub_queries=rng.randint(0, 12),
        query_tokens=rng.randint(0, 60),
        answer_tokens=rng.randint(0, 40),
        passages_per_query=rng.randint(0, 8),
        passage_tokens=rng.randint(0, 200),
    )


class TestWorkedExample:
    def test_graph_pipeline(self):
        breakdown = ragdag_cost(WORKED)
        assert breakdown.total_input == 2620
        assert breakdown.total_output == 292

    def test_ircot(self):
        breakdown = ircot_cost(WORKED)
        assert breakdown.total_input == 2550
        assert breakdown.total_output == 70

    def test_rqrag(self):
        breakdown = rqrag_cost(WORKED)
        assert breakdown.total_input == 1080
        assert breakdown.total_output == 60


class TestDegenerates:
    def test_graph_pipeline_empty(self):
        params = CostParams(0, 7, 3, 5, 100)
        breakdown = ragdag_cost(params)
        assert breakdown.total_input == 7  # just the builder read
        assert breakdown.total_output == 7 + 3

    def test_ircot_empty_flagged(self):
        breakdown = ircot_cost(CostParams(0, 7, 3, 5, 100))
        assert breakdown.total_input == 0
        assert any("degenerate" in note for note in breakdown.notes)

    def test_rqrag_empty(self):
        breakdown = rqrag_cost(CostParams(0, 7, 3, 5, 100))
        assert breakdown.total_input == 7
        assert breakdown.total_output == 0

    def test_rqrag_no_retrieval_limit(self):
        params = CostParams(3, 7, 5, 0, 100)
        breakdown = rqrag_cost(params)
        assert breakdown.total_input == 3 * (7 + 5) + 7

    def test_ircot_single_step(self):
        # Substituting n=1: input m + 2kl, output m + 2t.
        params = CostParams(1, 9, 4, 3, 50)
        breakdown = ircot_cost(params)
        assert breakdown.total_input == 9 + 2 * 3 * 50
        assert breakdown.total_output == 9 + 2 * 4


class TestStageIdentity:
    def test_totals_equal_independent_stage_sums(self):
        rng = random.Random(1234)
        for _ in range(100):
            p = random_params(rng)
            n, m, t, k, l = (
                Fraction(p.sub_queries),
                Fraction(p.query_tokens),
                Fraction(p.answer_tokens),
                Fraction(p.passages_per_query),
                Fraction(p.passage_tokens),
            )
            # Independent oracle: sum the six stage reads/writes longhand.
            ours_in = m + n * m + (n * m + n * k * l) + n * k * l + n * (m + t + l) * 2
            ours_out = n * m + n + n * t + n * l + m + t
            breakdown = ragdag_cost(p)
            assert breakdown.total_input == ours_in
            assert breakdown.total_output == ours_out

            # Iterative oracle: explicit per-iteration loop.
            it_in = sum(
                (m + j * k * l + (j - 1) * t for j in range(1, int(n) + 1)), Fraction(0)
            ) + n * k * l
            it_out = n * (m + t) + t
            assert ircot_cost(p).total_input == it_in
            assert ircot_cost(p).total_output == it_out

            rq_in = m + (n * m + n * k * l + n * t)
            assert rqrag_cost(p).total_input == rq_in
            assert rqrag_cost(p).total_output == n * t + n * m

    def test_explicit_sum_exceeds_closed_form_by_m(self):
        rng = random.Random(77)
        for _ in range(30):
            p = random_params(rng)
            explicit, closed = ircot_explicit_sum(p)
            assert explicit - closed == p.query_tokens


class TestMonotonicity:
    def test_non_decreasing_in_every_parameter(self):
        rng = random.Random(5)
        fields = (
            "sub_queries",
            "query_tokens",
            "answer_tokens",
            "passages_per_query",
            "passage_tokens",
        )
        for _ in range(50):
            p = random_params(rng)
            for name in fields:
                bumped = CostParams(**{**p.__dict__, name: getattr(p, name) + 1})
                for fn in (ragdag_cost, ircot_cost, rqrag_cost):
                    assert fn(bumped).total_input >= fn(p).total_input
                    assert fn(bumped).total_output >= fn(p).total_output

    def test_ircot_dominates_for_large_n(self):
        # Quadratic vs linear growth in the sub-query count.
        for n in (8, 16, 32):
            params = CostParams(n, 20, 10, 5, 100)
            assert ircot_cost(params).total_input >= ragdag_cost(params).total_input


class TestRetrieveFraction:
    def test_zero_fraction_drops_retrieval_terms(self):
        p = WORKED
        breakdown = ragdag_cost(p, retrieve_fraction=0)
        n, m, t = 2, 20, 10
        assert breakdown.total_input == n * (4 * m + 2 * t) + m
        summarizer = next(s for s in breakdown.stages if s.name == "summarizer")
        assert summarizer.input_tokens == 0 and summarizer.output_tokens == 0

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            ragdag_cost(WORKED, retrieve_fraction=2)


def exact_length_trace(tmp_path):
    """A run whose every text is sized exactly to (n=1, m=1, t=4, k=2, l=6)."""
    origin = "origintoken"
    payload = json.dumps([{"id": "Q1", "question": "origintoken", "dependencies": []}])
    rules = [
        rule(Role.GRAPH_BUILDER, "", payload),
        rule(Role.RETRIEVAL_JUDGE, "", "No"),
        rule(Role.SUB_ANSWER, "", "w1 w2 w3 w4"),
        rule(Role.SUMMARIZER, "", "s1 s2 s3 s4 s5 s6"),
        rule(Role.NEW_QUERY, "", "None"),
        rule(Role.REASONER, "", "f1 f2 f3 f4"),
    ]
    corpus = write_corpus(
        tmp_path / "c.jsonl",
        [
            {"id": "c1", "title": "T1", "text": "origintoken alpha beta gamma delta"},
            {"id": "c2", "title": "T2", "text": "origintoken epsilon zeta eta theta"},
        ],
    )
    result = run_pipeline(
        origin,
        runner=scripted_runner(rules),
        retriever=LocalRetriever(corpus),
        config=PipelineConfig(top_k=2),
    )
    return result.to_trace()


class TestCompareWithTrace:
    def test_exact_lengths_give_zero_deviation(self, tmp_path):
        trace = exact_length_trace(tmp_path)
        params, fraction = infer_params_from_trace(trace)
        assert (params.sub_queries, params.query_tokens) == (1, 1)
        assert params.answer_tokens == 4
        assert params.passages_per_query == 2
        assert params.passage_tokens == 6
        assert fraction == 1
        rows = compare_with_trace(trace)
        for row in rows:
            assert row.rel_in == 0.0, row
            assert row.rel_out == 0.0, row

    def test_mixed_lengths_report_deviations(self, golden_corpus, tmp_path):
        from conftest import GOLDEN_ORIGIN, golden_rules

        result = run_pipeline(
            GOLDEN_ORIGIN,
            runner=scripted_runner(golden_rules()),
            retriever=LocalRetriever(golden_corpus),
            config=PipelineConfig(top_k=2),
        )
        rows = compare_with_trace(result.to_trace())
        assert len(rows) == 6
        assert any(row.rel_in not in (0.0, None) for row in rows)

    def test_missing_telemetry(self):
        with pytest.raises(MissingTelemetryError):
            compare_with_trace({"origin": "x", "telemetry": {}})


class TestSweepAndValidation:
    def test_sweep_rows(self):
        rows = sweep(WORKED, range(1, 9))
        assert len(rows) == 8
        assert rows[0]["sub_queries"] == 1
        assert rows[-1]["ragdag_in"] == ragdag_cost(
            CostParams(8, 20, 10, 5, 100)
        ).total_input

    def test_negative_params_rejected(self):
        with pytest.raises(ValueError):
            CostParams(-1, 2, 3, 4, 5)
