import json

import pytest

from conftest import (
    GOLDEN_ORIGIN,
    batch_items,
    batch_rules,
    golden_rules,
    rule,
    scripted_runner,
    write_corpus,
)
from ragdag.errors import PipelineError
from ragdag.evalkit import QAItem
from ragdag.gateway import Role
from ragdag.pipeline import PipelineConfig, run_batch, run_pipeline
from ragdag.retrieval import LocalRetriever


def golden_run(golden_corpus, config=None, extra_rules=()):
    runner = scripted_runner(list(extra_rules) + golden_rules())
    retriever = LocalRetriever(golden_corpus)
    config = config or PipelineConfig(top_k=2)
    return run_pipeline(GOLDEN_ORIGIN, runner=runner, retriever=retriever, config=config)


class TestGoldenScenario:
    def test_structure_and_answer(self, golden_corpus):
        result = golden_run(golden_corpus)
        assert len(result.graph.nodes) == 3
        assert result.final_answer == "Yes"
        assert [e.node_id for e in result.memory] == ["Q1", "Q2", "Q3"]
        assert result.memory.lookup_answer("Q1") == "Vienna"
        assert result.memory.lookup_answer("Q2") == "Graz"

    def test_retrieval_telemetry(self, golden_corpus):
        telemetry = golden_run(golden_corpus).telemetry
        assert telemetry.sub_query_count == 3
        assert telemetry.judged_sub_queries == 3
        assert telemetry.retrieval_calls == 2
        assert telemetry.retrievals_skipped == 1
        assert telemetry.passages_fetched == 4  # 2 calls x top_k=2
        assert telemetry.new_queries_added == 0
        assert telemetry.retrievals_skipped + telemetry.retrieval_calls == (
            telemetry.judged_sub_queries
        )

    def test_summaries_only_for_retrieved(self, golden_corpus):
        result = golden_run(golden_corpus)
        entries = {e.node_id: e for e in result.memory}
        assert entries["Q1"].summary == "Adler was born in Vienna."
        assert entries["Q2"].retrieved is True
        assert entries["Q3"].summary is None and entries["Q3"].retrieved is False

    def test_substitution_happened(self, golden_corpus):
        result = golden_run(golden_corpus)
        q3 = next(e for e in result.memory if e.node_id == "Q3")
        assert q3.question == "Are Vienna and Graz in the same country?"

    def test_trace_byte_stable(self, golden_corpus):
        traces = {golden_run(golden_corpus).to_json() for _ in range(3)}
        assert len(traces) == 1

    def test_concurrent_tier_matches_sequential(self, golden_corpus):
        sequential = golden_run(golden_corpus, PipelineConfig(top_k=2, width=1)).to_trace()
        concurrent = golden_run(golden_corpus, PipelineConfig(top_k=2, width=4)).to_trace()
        sequential.pop("config")
        concurrent.pop("config")
        assert json.dumps(concurrent) == json.dumps(sequential)


class TestAblations:
    def test_no_judge_accounting(self, tmp_path):
        payload = json.dumps(
            [
                {"id": "Q1", "question": "first planet fact", "dependencies": []},
                {"id": "Q2", "question": "second planet fact", "dependencies": ["Q1"]},
            ]
        )
        rules = [
            rule(Role.GRAPH_BUILDER, "", payload),
            rule(Role.SUB_ANSWER, "", "a"),
            rule(Role.SUMMARIZER, "", "s"),
            rule(Role.NEW_QUERY, "", "None"),
            rule(Role.REASONER, "", "f"),
        ]
        corpus = write_corpus(
            tmp_path / "c.jsonl",
            [{"id": f"p{i}", "title": "planet", "text": f"planet fact {i}"} for i in range(3)],
        )
        result = run_pipeline(
            "about planets",
            runner=scripted_runner(rules),
            retriever=LocalRetriever(corpus),
            config=PipelineConfig(top_k=1, no_judge=True),
        )
        telemetry = result.telemetry
        assert telemetry.retrievals_skipped == 0
        assert telemetry.retrieval_calls == 2
        assert telemetry.passages_fetched == 2  # k=1 each
        assert telemetry.role_tokens["retrieval_judge"]["prompt"] == 0  # judge never ran

    def test_no_graph_single_node(self, golden_corpus):
        rules = [
            rule(Role.RETRIEVAL_JUDGE, "", "Yes"),
            rule(Role.SUB_ANSWER, "", "direct answer"),
            rule(Role.NEW_QUERY, "", "None"),
            rule(Role.REASONER, "", "final"),
        ]
        result = run_pipeline(
            "plain question",
            runner=scripted_runner(rules),
            retriever=LocalRetriever(golden_corpus),
            config=PipelineConfig(no_graph=True),
        )
        assert result.telemetry.sub_query_count == 1
        assert result.graph.node_ids() == ["Q1"]
        assert result.telemetry.role_tokens["graph_builder"]["prompt"] == 0

    def test_no_summarizer_stores_first_passage(self, golden_corpus):
        result = golden_run(golden_corpus, PipelineConfig(top_k=2, no_summarizer=True))
        entry = next(e for e in result.memory if e.node_id == "Q1")
        retriever = LocalRetriever(golden_corpus)
        expected = retriever.search("In which city was composer Adler born?", 2)[0].text
        assert entry.summary == expected
        assert result.telemetry.role_tokens["summarizer"]["prompt"] == 0

    def test_no_new_query_skips_role(self, golden_corpus):
        result = golden_run(golden_corpus, PipelineConfig(top_k=2, no_new_query=True))
        assert result.telemetry.new_queries_added == 0
        assert result.telemetry.role_tokens["new_query"]["prompt"] == 0


class TestRefinementLoop:
    def refinement_rules(self):
        follow_up = "what country is Graz in?"
        rules = golden_rules()
        # Strip the golden terminate rule; replace with a two-step script:
        # terminate only once the follow-up's entry shows up in memory.
        rules = [r for r in rules if r.role != Role.NEW_QUERY]
        rules.insert(0, rule(Role.NEW_QUERY, follow_up, "None"))
        rules.append(rule(Role.NEW_QUERY, "", follow_up))
        rules.append(rule(Role.RETRIEVAL_JUDGE, "Question: " + follow_up, "Yes"))
        rules.append(rule(Role.SUB_ANSWER, "Question: " + follow_up, "Austria"))
        return rules

    def test_new_node_resolved_and_counted(self, golden_corpus):
        result = golden_run(golden_corpus, extra_rules=[])
        assert result.telemetry.new_queries_added == 0

        runner = scripted_runner(self.refinement_rules())
        result = run_pipeline(
            GOLDEN_ORIGIN,
            runner=runner,
            retriever=LocalRetriever(golden_corpus),
            config=PipelineConfig(top_k=2),
        )
        assert result.telemetry.new_queries_added == 1
        assert len(result.memory) == 4
        entry = next(e for e in result.memory if e.node_id == "Q4")
        assert entry.added_by_refinement is True
        assert entry.answer == "Austria"
        assert result.graph.final_id == "Q4"
        # memory count identity
        assert len(result.memory) == (
            result.telemetry.sub_query_count + result.telemetry.new_queries_added
        )

    def test_cap_respected(self, golden_corpus):
        # Generator never terminates; cap bounds the loop.
        rules = [r for r in golden_rules() if r.role != Role.NEW_QUERY]
        rules.append(rule(Role.NEW_QUERY, "", "another question about Vienna?"))
        rules.append(rule(Role.RETRIEVAL_JUDGE, "another question", "Yes"))
        rules.append(rule(Role.SUB_ANSWER, "another question", "some answer"))
        result = run_pipeline(
            GOLDEN_ORIGIN,
            runner=scripted_runner(rules),
            retriever=LocalRetriever(golden_corpus),
            config=PipelineConfig(top_k=2, max_new_queries=3),
        )
        assert result.telemetry.new_queries_added == 3
        assert len(result.memory) == 6


class TestSkippedFraction:
    @pytest.mark.parametrize("yes_nodes", [0, 1, 2, 3])
    def test_scripted_fraction_exact(self, tmp_path, yes_nodes):
        payload = json.dumps(
            [
                {"id": f"Q{i}", "question": f"fact number{i} planet", "dependencies": []}
                for i in range(1, 4)
            ]
            + [
                {
                    "id": "Q4",
                    "question": "combine planet facts",
                    "dependencies": ["Q1", "Q2", "Q3"],
                }
            ]
        )
        rules = [rule(Role.GRAPH_BUILDER, "", payload)]
        for i in range(1, 4):
            verdict = "Yes" if i <= yes_nodes else "No"
            rules.append(rule(Role.RETRIEVAL_JUDGE, f"Question: fact number{i}", verdict))
        rules += [
            rule(Role.RETRIEVAL_JUDGE, "", "Yes"),  # final node
            rule(Role.SUB_ANSWER, "", "a"),
            rule(Role.SUMMARIZER, "", "s"),
            rule(Role.NEW_QUERY, "", "None"),
            rule(Role.REASONER, "", "f"),
        ]
        corpus = write_corpus(
            tmp_path / "c.jsonl",
            [{"id": f"p{i}", "title": "planet", "text": f"planet fact {i}"} for i in range(5)],
        )
        result = run_pipeline(
            "about planets",
            runner=scripted_runner(rules),
            retriever=LocalRetriever(corpus),
            config=PipelineConfig(top_k=1),
        )
        telemetry = result.telemetry
        expected_fraction = (yes_nodes + 1) / 4  # the final node is always Yes
        assert telemetry.retrievals_skipped / telemetry.judged_sub_queries == (
            expected_fraction
        )


class TestErrors:
    def test_stage_and_node_attached(self, golden_corpus):
        # Judge rules only; sub_answer has no match -> gateway error mid-stage-2.
        rules = [r for r in golden_rules() if r.role != Role.SUB_ANSWER]
        with pytest.raises(PipelineError) as excinfo:
            run_pipeline(
                GOLDEN_ORIGIN,
                runner=scripted_runner(rules),
                retriever=LocalRetriever(golden_corpus),
                config=PipelineConfig(top_k=2),
            )
        assert excinfo.value.stage == "sub_query_execution"
        assert excinfo.value.node_id is not None

    def test_empty_retrieval_proceeds_with_flag(self, tmp_path):
        payload = json.dumps([{"id": "Q1", "question": "zzz unknownterm", "dependencies": []}])
        rules = [
            rule(Role.GRAPH_BUILDER, "", payload),
            rule(Role.RETRIEVAL_JUDGE, "", "No"),
            rule(Role.SUB_ANSWER, "", "best guess"),
            rule(Role.NEW_QUERY, "", "None"),
            rule(Role.REASONER, "", "guess"),
        ]
        corpus = write_corpus(
            tmp_path / "c.jsonl", [{"id": "p0", "title": "other", "text": "different words"}]
        )
        result = run_pipeline(
            "about zzz",
            runner=scripted_runner(rules),
            retriever=LocalRetriever(corpus),
            config=PipelineConfig(top_k=2),
        )
        assert result.telemetry.empty_retrievals == 1
        assert result.telemetry.retrieval_calls == 1
        assert result.telemetry.passages_fetched == 0
        entry = result.memory.entries()[0]
        assert entry.retrieved is False and entry.summary is None


class TestBatch:
    def make_batch_fixtures(self, with_failure=False):
        items = [QAItem(id=f"item{i:03d}", question=f"tell me about planet item{i:03d}",
                        golden_answers=("final answer",)) for i in range(4)]
        rules = batch_rules()
        if with_failure:
            # Remove item003's builder rule and let it emit garbage instead:
            # garbage parses fine? No: make its builder response unmatched so the
            # gateway raises for this item only.
            rules = [r for r in rules if not (r.role == Role.GRAPH_BUILDER and "item003" in r.pattern)]
        return items, rules

    def test_fail_soft_counts(self, batch_corpus):
        items, rules = self.make_batch_fixtures(with_failure=True)
        batch = run_batch(
            items,
            runner=scripted_runner(rules),
            retriever=LocalRetriever(batch_corpus),
            config=PipelineConfig(top_k=1, no_judge=True),
        )
        assert batch.aggregates["succeeded"] == 3
        assert batch.aggregates["failed"] == 1
        failed = [r for r in batch.items if not r["ok"]]
        assert failed[0]["id"] == "item003"

    def test_strict_raises(self, batch_corpus):
        items, rules = self.make_batch_fixtures(with_failure=True)
        with pytest.raises(PipelineError):
            run_batch(
                items,
                runner=scripted_runner(rules),
                retriever=LocalRetriever(batch_corpus),
                config=PipelineConfig(top_k=1, no_judge=True),
                strict=True,
            )

    def test_mean_passages_per_query_scales_with_k(self, batch_corpus):
        items = [QAItem(id=i["id"], question=i["question"], golden_answers=tuple(i["golden_answers"]))
                 for i in batch_items()]
        runner = scripted_runner(batch_rules())
        retriever = LocalRetriever(batch_corpus)
        base = None
        for k in (1, 2):
            batch = run_batch(
                items,
                runner=runner,
                retriever=retriever,
                config=PipelineConfig(top_k=k, no_judge=True),
            )
            mean = batch.aggregates["mean_passages_per_query"]
            if k == 1:
                base = mean
                assert mean == pytest.approx(2.27, abs=1e-12)
            else:
                assert mean == pytest.approx(k * base, abs=1e-9)

    def test_item_parallelism_same_aggregates(self, batch_corpus):
        items = [QAItem(id=i["id"], question=i["question"], golden_answers=tuple(i["golden_answers"]))
                 for i in batch_items()[:10]]
        runner = scripted_runner(batch_rules())
        retriever = LocalRetriever(batch_corpus)
        seq = run_batch(items, runner=runner, retriever=retriever,
                        config=PipelineConfig(top_k=1, no_judge=True), parallel=1)
        par = run_batch(items, runner=runner, retriever=retriever,
                        config=PipelineConfig(top_k=1, no_judge=True), parallel=4)
        assert seq.aggregates == par.aggregates
        assert [r["id"] for r in seq.items] == [r["id"] for r in par.items]
