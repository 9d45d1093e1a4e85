"""Dependency DAG of sub-queries.

A query graph holds the decomposition of one user query: each node is a
sub-query whose template may reference parent answers through placeholders
of the canonical form ``{Qk.answer}``. Graphs are immutable once validated;
mutating operations return new graphs.
"""

from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field

from .errors import (
    CycleDetectedError,
    DanglingPlaceholderError,
    DuplicateIdError,
    MalformedPayloadError,
    MultipleSinksError,
    UnknownParentError,
    UnresolvedDependencyError,
)

NODE_ID_RE = re.compile(r"^Q([1-9][0-9]*)$")
PLACEHOLDER_RE = re.compile(r"\{(Q[1-9][0-9]*)\.answer\}")
# Bare "Qk.answer" mentions (no braces) get normalized to the braced form.
_BARE_PLACEHOLDER_RE = re.compile(r"(?<![{\w])(Q[1-9][0-9]*)\.answer\b(?!\})")
_CODE_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*|\s*```$")


def numeric_id(node_id: str) -> int:
    """Return the integer part of a Qk id, validating the surface form."""
    m = NODE_ID_RE.match(node_id)
    if m is None:
        raise MalformedPayloadError(f"node id {node_id!r} does not match Q<k>")
    return int(m.group(1))


def normalize_placeholders(text: str) -> str:
    """Rewrite bare ``Qk.answer`` mentions into the canonical braced form."""
    return _BARE_PLACEHOLDER_RE.sub(lambda m: "{%s.answer}" % m.group(1), text)


def placeholder_ids(template: str) -> list[str]:
    """Node ids referenced by braced placeholders, in order of appearance."""
    return PLACEHOLDER_RE.findall(template)


@dataclass(frozen=True)
class Placeholder:
    """A reference to a parent node's answer inside a template."""

    node_id: str
    field: str = "answer"  # the only supported field in v1

    def surface(self) -> str:
        return "{%s.%s}" % (self.node_id, self.field)


def placeholders(template: str) -> list[Placeholder]:
    return [Placeholder(node_id=ref) for ref in placeholder_ids(template)]


@dataclass(frozen=True)
class QueryNode:
    """One sub-query: an id, a template, and the parent ids it depends on."""

    id: str
    template: str
    parents: tuple[str, ...] = ()


@dataclass(frozen=True)
class QueryGraph:
    """Validated DAG of sub-queries with a designated final node."""

    nodes: tuple[QueryNode, ...]
    final_id: str
    origin: str
    # Set for nodes appended by the refinement loop rather than the builder.
    refinement_ids: frozenset[str] = field(default_factory=frozenset)

    def node(self, node_id: str) -> QueryNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def to_payload(self) -> list[dict]:
        """Node array in the wire format (keys id, question, dependencies)."""
        return [
            {"id": n.id, "question": n.template, "dependencies": list(n.parents)}
            for n in self.nodes
        ]


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        text = _CODE_FENCE_RE.sub("", text).strip()
    return text


def parse_graph(text: str, origin: str, *, strict: bool = False) -> QueryGraph:
    """Parse builder output (a JSON array of node objects) into a QueryGraph.

    Each object must carry ``id`` and ``question``; ``dependencies`` defaults
    to the empty list. Bare placeholder mentions are normalized to the braced
    form. In strict mode a graph with more than one sink is rejected; in
    lenient mode a synthetic final node depending on every sink is appended,
    its template being the original query.
    """
    body = _strip_fences(text)
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedPayloadError(f"not valid JSON: {exc}") from exc
    if not isinstance(payload, list) or not payload:
        raise MalformedPayloadError("payload must be a non-empty array of node objects")

    nodes: list[QueryNode] = []
    for obj in payload:
        if not isinstance(obj, dict):
            raise MalformedPayloadError(f"node entry is not an object: {obj!r}")
        try:
            raw_id = obj["id"]
            question = obj["question"]
        except KeyError as exc:
            raise MalformedPayloadError(f"node entry missing key {exc}") from exc
        deps = obj.get("dependencies", [])
        if not isinstance(raw_id, str) or not isinstance(question, str):
            raise MalformedPayloadError("id and question must be strings")
        if not isinstance(deps, list) or not all(isinstance(d, str) for d in deps):
            raise MalformedPayloadError("dependencies must be an array of ids")
        numeric_id(raw_id)
        nodes.append(
            QueryNode(id=raw_id, template=normalize_placeholders(question), parents=tuple(deps))
        )

    return _validate(nodes, origin, strict=strict)


def _validate(nodes: list[QueryNode], origin: str, *, strict: bool) -> QueryGraph:
    ids = [n.id for n in nodes]
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            raise DuplicateIdError(f"duplicate node id {i}")
        seen.add(i)

    for n in nodes:
        for p in n.parents:
            if p not in seen:
                raise UnknownParentError(f"{n.id} depends on unknown node {p}")
        for ref in placeholder_ids(n.template):
            if ref not in n.parents:
                raise DanglingPlaceholderError(
                    f"{n.id} references {ref}.answer but does not list {ref} as a dependency"
                )

    _check_acyclic(nodes)

    referenced_as_parent = {p for n in nodes for p in n.parents}
    sinks = [n.id for n in nodes if n.id not in referenced_as_parent]
    if len(sinks) == 1:
        final_id = sinks[0]
    else:
        if strict:
            raise MultipleSinksError(f"expected a single final node, found sinks {sinks}")
        # Lenient repair: add a final node that depends on every sink.
        final_id = f"Q{max(numeric_id(i) for i in ids) + 1}"
        nodes = nodes + [QueryNode(id=final_id, template=origin, parents=tuple(sinks))]

    return QueryGraph(nodes=tuple(nodes), final_id=final_id, origin=origin)


def _check_acyclic(nodes: list[QueryNode]) -> None:
    indegree = {n.id: len(n.parents) for n in nodes}
    children: dict[str, list[str]] = {n.id: [] for n in nodes}
    for n in nodes:
        for p in n.parents:
            children[p].append(n.id)
    ready = [i for i, d in indegree.items() if d == 0]
    visited = 0
    while ready:
        visited += 1
        current = ready.pop()
        for child in children[current]:
            indegree[child] -= 1
            if indegree[child] == 0:
                ready.append(child)
    if visited != len(nodes):
        cyclic = sorted(i for i, d in indegree.items() if d > 0)
        raise CycleDetectedError(f"dependency cycle among {cyclic}")


def topological_order(graph: QueryGraph) -> list[str]:
    """Node ids ordered so every node follows all of its parents.

    Ties are broken by ascending numeric id so the order is deterministic.
    """
    indegree = {n.id: len(n.parents) for n in graph.nodes}
    children: dict[str, list[str]] = {n.id: [] for n in graph.nodes}
    for n in graph.nodes:
        for p in n.parents:
            children[p].append(n.id)
    heap = [numeric_id(i) for i, d in indegree.items() if d == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        node_id = f"Q{heapq.heappop(heap)}"
        order.append(node_id)
        for child in children[node_id]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(heap, numeric_id(child))
    if len(order) != len(graph.nodes):
        raise CycleDetectedError("graph contains a cycle")  # defensive re-check
    return order


def substitute(node: QueryNode, memory) -> str:
    """Replace every placeholder in the template with the stored answer.

    ``memory`` is an AnswerMemory (anything with ``lookup_answer``). Text
    outside placeholders is preserved byte for byte.
    """

    def repl(match: re.Match) -> str:
        ref = match.group(1)
        try:
            return memory.lookup_answer(ref)
        except Exception:
            raise UnresolvedDependencyError(ref) from None

    return PLACEHOLDER_RE.sub(repl, node.template)


def attach_new_node(graph: QueryGraph, question: str) -> QueryGraph:
    """Append a refinement node depending on the current final node.

    The new node takes the next unused numeric id, becomes the new final
    node, and is tagged as refinement-added. Acyclicity is preserved by
    construction (the new node has no children).
    """
    next_id = f"Q{max(numeric_id(i) for i in graph.node_ids()) + 1}"
    node = QueryNode(
        id=next_id,
        template=normalize_placeholders(question),
        parents=(graph.final_id,),
    )
    return QueryGraph(
        nodes=graph.nodes + (node,),
        final_id=next_id,
        origin=graph.origin,
        refinement_ids=graph.refinement_ids | {next_id},
    )


def single_node_graph(origin: str) -> QueryGraph:
    """Degenerate graph used when decomposition is disabled or failed."""
    return QueryGraph(nodes=(QueryNode(id="Q1", template=origin),), final_id="Q1", origin=origin)


def serialize_graph(graph: QueryGraph) -> str:
    """Serialize to the wire payload; parse_graph(serialize_graph(g)) == g."""
    return json.dumps(graph.to_payload(), ensure_ascii=False)
