"""Ordered record of resolved sub-queries (question, answer, summary).

The memory is written by exactly one pipeline run; concurrent readers get
immutable snapshots. Insertion order is resolution order and drives the
deterministic prompt rendering.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DuplicateKeyError, MissingKeyError

EMPTY_MEMORY_SENTINEL = "(no prior sub-answers)"


@dataclass(frozen=True)
class MemoryEntry:
    node_id: str
    question: str
    answer: str
    summary: str | None = None
    retrieved: bool = False
    added_by_refinement: bool = False

    def __post_init__(self):
        if not self.answer:
            raise ValueError(f"entry {self.node_id} finalized with empty answer")
        if self.summary is not None and not self.retrieved:
            raise ValueError(f"entry {self.node_id} carries a summary without retrieval")


class AnswerMemory:
    """Insertion-ordered mapping node id -> MemoryEntry."""

    def __init__(self, entries: list[MemoryEntry] | None = None):
        self._entries: dict[str, MemoryEntry] = {}
        for e in entries or []:
            self.put(e)

    def put(self, entry: MemoryEntry) -> "AnswerMemory":
        if entry.node_id in self._entries:
            raise DuplicateKeyError(f"entry for {entry.node_id} already present")
        self._entries[entry.node_id] = entry
        return self

    def lookup_answer(self, node_id: str) -> str:
        try:
            return self._entries[node_id].answer
        except KeyError:
            raise MissingKeyError(f"no entry for {node_id}") from None

    def entries(self) -> list[MemoryEntry]:
        return list(self._entries.values())

    def snapshot(self) -> "AnswerMemory":
        """Immutable-by-convention copy handed to concurrent readers."""
        return AnswerMemory(self.entries())

    def render_for_prompt(self, include_summaries: bool = True) -> str:
        """Deterministic text block, one record per entry in insertion order."""
        if not self._entries:
            return EMPTY_MEMORY_SENTINEL
        blocks = []
        for e in self._entries.values():
            lines = [f"[{e.node_id}] {e.question}", f"Answer: {e.answer}"]
            if include_summaries and e.summary is not None:
                lines.append(f"Summary: {e.summary}")
            blocks.append("\n".join(lines))
        return "\n".join(blocks)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._entries

    def __iter__(self):
        return iter(self._entries.values())
