"""Three-stage pipeline driver: build the graph, resolve every sub-query,
then reason out the final answer, with ablation switches and telemetry.

One run owns its memory. Sibling nodes in the same dependency tier may
resolve concurrently, but memory writes and telemetry aggregation happen
on the coordinating thread in topological order, so equal inputs always
produce byte-identical traces.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import PipelineError, RagdagError
from .graph import QueryGraph, attach_new_node, single_node_graph, substitute, topological_order
from .memory import AnswerMemory, MemoryEntry
from .roles import InvocationLog, RoleRunner
from .gateway import ALL_ROLES


@dataclass(frozen=True)
class PipelineConfig:
    top_k: int = 5
    max_new_queries: int = 3
    no_graph: bool = False
    no_judge: bool = False
    no_summarizer: bool = False
    no_new_query: bool = False
    width: int = 1
    strict_graph: bool = False

    def __post_init__(self):
        if self.max_new_queries < 0:
            raise ValueError("max_new_queries must be >= 0")
        if self.width < 1:
            raise ValueError("width must be >= 1")

    def to_dict(self) -> dict:
        return {
            "top_k": self.top_k,
            "max_new_queries": self.max_new_queries,
            "no_graph": self.no_graph,
            "no_judge": self.no_judge,
            "no_summarizer": self.no_summarizer,
            "no_new_query": self.no_new_query,
            "width": self.width,
            "strict_graph": self.strict_graph,
        }


@dataclass
class RunTelemetry:
    sub_query_count: int = 0
    new_queries_added: int = 0
    judged_sub_queries: int = 0
    retrieval_calls: int = 0
    retrievals_skipped: int = 0
    passages_fetched: int = 0
    empty_retrievals: int = 0
    unparsed_judgements: int = 0
    builder_fallback: bool = False
    # role value -> {"prompt", "completion", "model_in", "model_out"}
    role_tokens: dict[str, dict[str, int]] = field(
        default_factory=lambda: {
            r.value: {"prompt": 0, "completion": 0, "model_in": 0, "model_out": 0}
            for r in ALL_ROLES
        }
    )

    def absorb(self, log: InvocationLog) -> None:
        self.unparsed_judgements += log.unparsed_judgements
        self.builder_fallback = self.builder_fallback or log.builder_fallback
        for inv in log.invocations:
            tally = self.role_tokens[inv.role.value]
            tally["prompt"] += inv.prompt_tokens
            tally["completion"] += inv.completion_tokens
            tally["model_in"] += inv.model_in
            tally["model_out"] += inv.model_out

    def to_dict(self) -> dict:
        return {
            "sub_query_count": self.sub_query_count,
            "new_queries_added": self.new_queries_added,
            "judged_sub_queries": self.judged_sub_queries,
            "retrieval_calls": self.retrieval_calls,
            "retrievals_skipped": self.retrievals_skipped,
            "passages_fetched": self.passages_fetched,
            "empty_retrievals": self.empty_retrievals,
            "unparsed_judgements": self.unparsed_judgements,
            "builder_fallback": self.builder_fallback,
            "role_tokens": {r.value: dict(self.role_tokens[r.value]) for r in ALL_ROLES},
        }


@dataclass
class NodeEvent:
    node_id: str
    question: str
    judged: str  # "yes" | "no" | "forced"
    retrieved: bool
    passage_ids: list[str]
    answer: str
    summary: str | None

    def to_dict(self) -> dict:
        return {
            "node": self.node_id,
            "question": self.question,
            "judged": self.judged,
            "retrieved": self.retrieved,
            "passages": self.passage_ids,
            "answer": self.answer,
            "summary": self.summary,
        }


@dataclass
class RunResult:
    origin: str
    config: PipelineConfig
    graph: QueryGraph
    memory: AnswerMemory
    final_answer: str
    telemetry: RunTelemetry
    log: InvocationLog
    events: list[NodeEvent]

    def to_trace(self) -> dict:
        return {
            "origin": self.origin,
            "config": self.config.to_dict(),
            "graph": self.graph.to_payload(),
            "final_id": self.graph.final_id,
            "events": [e.to_dict() for e in self.events],
            "memory": [
                {
                    "node": e.node_id,
                    "question": e.question,
                    "answer": e.answer,
                    "summary": e.summary,
                    "retrieved": e.retrieved,
                    "added_by_refinement": e.added_by_refinement,
                }
                for e in self.memory.entries()
            ],
            "invocations": [
                {"role": inv.role.value, "input": inv.input, "output": inv.output}
                for inv in self.log.invocations
            ],
            "final_answer": self.final_answer,
            "telemetry": self.telemetry.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_trace(), ensure_ascii=False, indent=2)


@dataclass
class _NodeOutcome:
    entry: MemoryEntry
    event: NodeEvent
    log: InvocationLog
    judged: str
    retrieved: bool
    fetched: int
    empty_retrieval: bool


def _resolve_node(
    node_id: str,
    graph: QueryGraph,
    memory: AnswerMemory,
    runner: RoleRunner,
    retriever,
    config: PipelineConfig,
) -> _NodeOutcome:
    """Resolve one sub-query against a read-only memory snapshot."""
    node = graph.node(node_id)
    log = InvocationLog()
    question = substitute(node, memory)

    if config.no_judge:
        judged = "forced"
        retrieve = True
    else:
        decision = runner.run_judge(question, memory, log)
        retrieve = not decision.answerable_directly
        judged = "no" if retrieve else "yes"

    passages = []
    empty_retrieval = False
    if retrieve:
        passages = retriever.search(question, config.top_k)
        if not passages:
            empty_retrieval = True  # proceed without knowledge rather than fail

    answer = runner.run_sub_answer(question, passages or None, log)
    summary = None
    if retrieve and passages:
        summary = runner.run_summarizer(
            question, passages, log, ablated=config.no_summarizer
        )

    entry = MemoryEntry(
        node_id=node_id,
        question=question,
        answer=answer,
        summary=summary,
        retrieved=bool(retrieve and passages),
        added_by_refinement=node_id in graph.refinement_ids,
    )
    event = NodeEvent(
        node_id=node_id,
        question=question,
        judged=judged,
        retrieved=bool(retrieve and passages),
        passage_ids=[p.id for p in passages],
        answer=answer,
        summary=summary,
    )
    return _NodeOutcome(
        entry=entry,
        event=event,
        log=log,
        judged=judged,
        retrieved=retrieve,
        fetched=len(passages),
        empty_retrieval=empty_retrieval,
    )


def _tiers(graph: QueryGraph) -> list[list[str]]:
    """Topological order grouped by dependency depth."""
    order = topological_order(graph)
    depth: dict[str, int] = {}
    for node_id in order:
        parents = graph.node(node_id).parents
        depth[node_id] = 1 + max((depth[p] for p in parents), default=-1)
    tiers: dict[int, list[str]] = {}
    for node_id in order:
        tiers.setdefault(depth[node_id], []).append(node_id)
    return [tiers[d] for d in sorted(tiers)]


def _commit(outcome: _NodeOutcome, memory, telemetry, events, log) -> None:
    memory.put(outcome.entry)
    events.append(outcome.event)
    log.extend(outcome.log)
    telemetry.absorb(outcome.log)
    telemetry.judged_sub_queries += 1
    if outcome.retrieved:
        telemetry.retrieval_calls += 1
        telemetry.passages_fetched += outcome.fetched
    else:
        telemetry.retrievals_skipped += 1
    if outcome.empty_retrieval:
        telemetry.empty_retrievals += 1


def run_pipeline(
    origin: str,
    *,
    runner: RoleRunner,
    retriever,
    config: PipelineConfig | None = None,
) -> RunResult:
    config = config or PipelineConfig()
    telemetry = RunTelemetry()
    log = InvocationLog()
    events: list[NodeEvent] = []
    memory = AnswerMemory()
    graph: QueryGraph | None = None

    # Stage 1: query graph building.
    try:
        if config.no_graph:
            graph = single_node_graph(origin)
        else:
            builder_log = InvocationLog()
            graph = runner.run_graph_builder(origin, builder_log, strict=config.strict_graph)
            log.extend(builder_log)
            telemetry.absorb(builder_log)
    except RagdagError as exc:
        raise PipelineError("graph_building", None, exc) from exc
    telemetry.sub_query_count = len(graph.nodes)

    # Stage 2: sub-query execution, tier by tier.
    for tier in _tiers(graph):
        try:
            if config.width > 1 and len(tier) > 1:
                snapshot = memory.snapshot()
                with ThreadPoolExecutor(max_workers=config.width) as pool:
                    outcomes = list(
                        pool.map(
                            lambda nid: _resolve_node(
                                nid, graph, snapshot, runner, retriever, config
                            ),
                            tier,
                        )
                    )
            else:
                outcomes = [
                    _resolve_node(nid, graph, memory, runner, retriever, config)
                    for nid in tier
                ]
        except RagdagError as exc:
            raise PipelineError("sub_query_execution", ",".join(tier), exc, memory) from exc
        for outcome in outcomes:  # commit in tier order, not completion order
            _commit(outcome, memory, telemetry, events, log)

    # Stage 3: refinement loop, then the reasoner.
    current = graph
    if not config.no_new_query:
        for _ in range(config.max_new_queries):
            try:
                stage_log = InvocationLog()
                outcome = runner.run_new_query(origin, memory, stage_log)
                log.extend(stage_log)
                telemetry.absorb(stage_log)
                if outcome.terminate:
                    break
                current = attach_new_node(current, outcome.text)
                node_outcome = _resolve_node(
                    current.final_id, current, memory, runner, retriever, config
                )
            except RagdagError as exc:
                raise PipelineError("reasoning", current.final_id, exc, memory) from exc
            _commit(node_outcome, memory, telemetry, events, log)
            telemetry.new_queries_added += 1

    try:
        stage_log = InvocationLog()
        final_answer = runner.run_reasoner(origin, memory, stage_log)
        log.extend(stage_log)
        telemetry.absorb(stage_log)
    except RagdagError as exc:
        raise PipelineError("reasoning", None, exc, memory) from exc

    return RunResult(
        origin=origin,
        config=config,
        graph=current,
        memory=memory,
        final_answer=final_answer,
        telemetry=telemetry,
        log=log,
        events=events,
    )


@dataclass
class BatchResult:
    items: list[dict]  # {"id", "ok", "result"|"error"}
    aggregates: dict

    def result_for(self, item_id: str) -> RunResult | None:
        for rec in self.items:
            if rec["id"] == item_id and rec["ok"]:
                return rec["result"]
        return None


def run_batch(
    items,
    *,
    runner: RoleRunner,
    retriever,
    config: PipelineConfig | None = None,
    parallel: int = 1,
    strict: bool = False,
) -> BatchResult:
    """Run the pipeline over QA items; per-item failures are recorded and
    the batch continues unless strict is set."""
    config = config or PipelineConfig()

    def one(item) -> dict:
        try:
            result = run_pipeline(
                item.question, runner=runner, retriever=retriever, config=config
            )
            return {"id": item.id, "ok": True, "result": result}
        except RagdagError as exc:
            if strict:
                raise
            return {"id": item.id, "ok": False, "error": str(exc)}

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            records = list(pool.map(one, items))
    else:
        records = [one(item) for item in items]

    ok = [r["result"] for r in records if r["ok"]]
    judged = sum(r.telemetry.judged_sub_queries for r in ok)
    aggregates = {
        "items": len(records),
        "succeeded": len(ok),
        "failed": len(records) - len(ok),
        "mean_sub_queries": (
            sum(r.telemetry.sub_query_count for r in ok) / len(ok) if ok else 0.0
        ),
        "mean_passages_per_query": (
            sum(r.telemetry.passages_fetched for r in ok) / len(ok) if ok else 0.0
        ),
        "saved_retrieval_fraction": (
            sum(r.telemetry.retrievals_skipped for r in ok) / judged if judged else 0.0
        ),
        "new_query_item_fraction": (
            sum(1 for r in ok if r.telemetry.new_queries_added > 0) / len(ok) if ok else 0.0
        ),
    }
    return BatchResult(items=records, aggregates=aggregates)
