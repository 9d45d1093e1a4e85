import pytest

from ragdag.errors import DuplicateKeyError, MissingKeyError
from ragdag.memory import EMPTY_MEMORY_SENTINEL, AnswerMemory, MemoryEntry


def entry(node_id, answer="ans", **kw):
    return MemoryEntry(node_id=node_id, question=f"question {node_id}", answer=answer, **kw)


class TestPut:
    def test_append(self):
        memory = AnswerMemory()
        memory.put(entry("Q1"))
        assert len(memory) == 1

    def test_duplicate_key(self):
        memory = AnswerMemory([entry("Q1")])
        with pytest.raises(DuplicateKeyError):
            memory.put(entry("Q1"))

    def test_order_preserved(self):
        memory = AnswerMemory([entry("Q1"), entry("Q2")])
        assert [e.node_id for e in memory] == ["Q1", "Q2"]


class TestRender:
    def test_empty_sentinel(self):
        assert AnswerMemory().render_for_prompt() == EMPTY_MEMORY_SENTINEL

    def test_single_entry_fields(self):
        memory = AnswerMemory(
            [entry("Q1", answer="Paris", summary="Paris is in France.", retrieved=True)]
        )
        text = memory.render_for_prompt()
        assert text.count("[Q1]") == 1
        assert "question Q1" in text
        assert "Answer: Paris" in text
        assert "Summary: Paris is in France." in text

    def test_summaries_excluded_on_flag(self):
        memory = AnswerMemory([entry("Q1", summary="s", retrieved=True)])
        assert "Summary" not in memory.render_for_prompt(include_summaries=False)

    def test_deterministic(self):
        memory = AnswerMemory([entry("Q1"), entry("Q2", retrieved=True, summary="s")])
        assert memory.render_for_prompt() == memory.render_for_prompt()
        assert memory.render_for_prompt() == memory.snapshot().render_for_prompt()


class TestLookup:
    def test_present(self):
        assert AnswerMemory([entry("Q1", answer="42")]).lookup_answer("Q1") == "42"

    def test_absent(self):
        with pytest.raises(MissingKeyError):
            AnswerMemory().lookup_answer("Q9")

    def test_round_trip_exact_bytes(self):
        stored = "  spaced\tanswer  "
        memory = AnswerMemory([entry("Q1", answer=stored)])
        assert memory.lookup_answer("Q1") == stored


class TestEntryInvariants:
    def test_empty_answer_rejected(self):
        with pytest.raises(ValueError):
            MemoryEntry(node_id="Q1", question="q", answer="")

    def test_summary_requires_retrieval(self):
        with pytest.raises(ValueError):
            MemoryEntry(node_id="Q1", question="q", answer="a", summary="s", retrieved=False)

    def test_snapshot_is_independent(self):
        memory = AnswerMemory([entry("Q1")])
        snap = memory.snapshot()
        memory.put(entry("Q2"))
        assert len(snap) == 1 and len(memory) == 2
