"""The six role adapters and the prompt registry.

Each role assembles its prompt from a five-part template (task description,
output requirements, guidelines, demonstrations, task input), invokes the
gateway, and parses the completion into its typed result. In role_tokens
mode the instruction parts are dropped: the filled input section alone is
transmitted and the appended tokens carry the task identity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import GraphError
from .gateway import ALL_ROLES, GenerationRequest, Gateway, Role
from .graph import QueryGraph, parse_graph, single_node_graph
from .memory import AnswerMemory
from .retrieval import Passage, first_passage

# Slot names each role's input section may reference.
ROLE_INPUTS: dict[Role, tuple[str, ...]] = {
    Role.GRAPH_BUILDER: ("question",),
    Role.RETRIEVAL_JUDGE: ("question", "memory"),
    Role.SUB_ANSWER: ("question", "passages"),
    Role.SUMMARIZER: ("question", "passages"),
    Role.NEW_QUERY: ("question", "memory"),
    Role.REASONER: ("question", "memory"),
}

# Stop sequences per role. The judge and the follow-up generator emit a
# single line; the rest may legitimately span lines.
ROLE_STOPS: dict[Role, tuple[str, ...]] = {
    Role.GRAPH_BUILDER: (),
    Role.RETRIEVAL_JUDGE: ("\n",),
    Role.SUB_ANSWER: (),
    Role.SUMMARIZER: (),
    Role.NEW_QUERY: ("\n",),
    Role.REASONER: (),
}

PART_HEADERS = ("## Task", "## Output requirements", "## Guidelines", "## Examples", "## Input")

_SLOT_RE = re.compile(r"\{\{input:([a-z_]+)\}\}")
_SECTION_RE = re.compile(r"^\[(task|output|guidelines|demo|input)\]$", re.M)
TERMINATION_SENTINEL = "none"


@dataclass(frozen=True)
class PromptTemplate:
    role: Role
    task_description: str
    output_requirements: str
    guidelines: str
    demonstrations: tuple[str, ...]
    input_template: str

    def __post_init__(self):
        for name, value in (
            ("task", self.task_description),
            ("output", self.output_requirements),
            ("guidelines", self.guidelines),
            ("input", self.input_template),
        ):
            if not value.strip():
                raise ValueError(f"template for {self.role.value} has empty [{name}] section")
        if not self.demonstrations:
            raise ValueError(f"template for {self.role.value} has no demonstrations")
        declared = set(ROLE_INPUTS[self.role])
        used = set(_SLOT_RE.findall(self.input_template))
        if not used <= declared:
            raise ValueError(
                f"template for {self.role.value} uses undeclared slots {sorted(used - declared)}"
            )


def _parse_template(role: Role, text: str) -> PromptTemplate:
    chunks: list[tuple[str, list[str]]] = []
    for line in text.splitlines():
        m = _SECTION_RE.match(line)
        if m:
            chunks.append((m.group(1), []))
        elif chunks:
            chunks[-1][1].append(line)
    sections = {name: "\n".join(lines).strip() for name, lines in chunks if name != "demo"}
    demos = tuple("\n".join(lines).strip() for name, lines in chunks if name == "demo")
    return PromptTemplate(
        role=role,
        task_description=sections.get("task", ""),
        output_requirements=sections.get("output", ""),
        guidelines=sections.get("guidelines", ""),
        demonstrations=demos,
        input_template=sections.get("input", ""),
    )


class PromptRegistry:
    """Loads and assembles the per-role templates."""

    def __init__(self, templates: dict[Role, PromptTemplate], demo_count: int = 2):
        missing = [r.value for r in ALL_ROLES if r not in templates]
        if missing:
            raise ValueError(f"registry missing templates for {missing}")
        self.templates = templates
        self.demo_count = demo_count

    @classmethod
    def builtin(cls) -> "PromptRegistry":
        templates = {}
        for role in ALL_ROLES:
            text = resources.files("ragdag.prompts").joinpath(f"{role.value}.txt").read_text(
                encoding="utf-8"
            )
            templates[role] = _parse_template(role, text)
        return cls(templates)

    @classmethod
    def from_dir(cls, path: str | Path) -> "PromptRegistry":
        templates = {}
        for role in ALL_ROLES:
            text = Path(path, f"{role.value}.txt").read_text(encoding="utf-8")
            templates[role] = _parse_template(role, text)
        return cls(templates)

    def fill_input(self, role: Role, slots: dict[str, str]) -> str:
        """Fill the input section's slot markers; collapse blank runs."""
        tpl = self.templates[role]

        def repl(m: re.Match) -> str:
            return slots.get(m.group(1), "")

        filled = _SLOT_RE.sub(repl, tpl.input_template)
        filled = re.sub(r"\n{3,}", "\n\n", filled)
        return filled.strip()

    def assemble(self, role: Role, slots: dict[str, str], mode: str) -> str:
        """Full prompt. Instruction mode carries the five parts in fixed
        order; role_tokens mode transmits the filled input alone."""
        payload = self.fill_input(role, slots)
        if mode == "role_tokens":
            return payload
        tpl = self.templates[role]
        demos = "\n\n".join(tpl.demonstrations[: self.demo_count])
        parts = [
            f"{PART_HEADERS[0]}\n{tpl.task_description}",
            f"{PART_HEADERS[1]}\n{tpl.output_requirements}",
            f"{PART_HEADERS[2]}\n{tpl.guidelines}",
            f"{PART_HEADERS[3]}\n{demos}",
            f"{PART_HEADERS[4]}\n{payload}",
        ]
        return "\n\n".join(parts)


@dataclass(frozen=True)
class JudgeDecision:
    answerable_directly: bool
    raw: str
    unparsed: bool = False


@dataclass(frozen=True)
class NewQueryOutcome:
    kind: str  # "new_query" | "terminate"
    text: str = ""

    @property
    def terminate(self) -> bool:
        return self.kind == "terminate"


def parse_judge(raw: str) -> JudgeDecision:
    """Total parse: leading yes/no token decides; anything else means
    retrieve (answerable_directly=False) with the unparsed flag set."""
    first = raw.strip().split()[0].lower() if raw.strip() else ""
    word = re.sub(r"[^a-z]", "", first)
    if word == "yes":
        return JudgeDecision(answerable_directly=True, raw=raw)
    if word == "no":
        return JudgeDecision(answerable_directly=False, raw=raw)
    return JudgeDecision(answerable_directly=False, raw=raw, unparsed=True)


def parse_new_query(raw: str) -> NewQueryOutcome:
    text = raw.strip()
    if text.strip(".,!:;\"' ").lower() == TERMINATION_SENTINEL:
        return NewQueryOutcome(kind="terminate")
    return NewQueryOutcome(kind="new_query", text=text)


def render_passages(passages: list[Passage]) -> str:
    """Rank-ordered passage blocks: ``[i] title`` then the text."""
    return "\n".join(f"[{i}] {p.title}\n{p.text}" for i, p in enumerate(passages, start=1))


@dataclass
class RoleInvocation:
    """One gateway call, recorded for telemetry and data collection."""

    role: Role
    input: str  # semantic payload (no instruction prologue)
    output: str  # raw completion, post stop-sequence trim
    prompt_tokens: int
    completion_tokens: int
    # Token counts of exactly the components the analytic cost model
    # attributes to this stage (see costmodel.compare_with_trace).
    model_in: int
    model_out: int


@dataclass
class InvocationLog:
    invocations: list[RoleInvocation] = field(default_factory=list)
    unparsed_judgements: int = 0
    builder_fallback: bool = False

    def extend(self, other: "InvocationLog") -> None:
        self.invocations.extend(other.invocations)
        self.unparsed_judgements += other.unparsed_judgements
        self.builder_fallback = self.builder_fallback or other.builder_fallback


_REPAIR_INSTRUCTION = (
    "The previous output could not be parsed ({error}). "
    "Emit only a valid JSON array of objects with keys id, question, dependencies."
)


class RoleRunner:
    """Stateless adapter layer between the pipeline and the gateway."""

    def __init__(
        self,
        gateway: Gateway,
        registry: PromptRegistry | None = None,
        include_memory_summaries: bool = True,
    ):
        self.gateway = gateway
        self.registry = registry or PromptRegistry.builtin()
        self.include_memory_summaries = include_memory_summaries

    def _generate(self, role: Role, slots: dict[str, str]) -> tuple[str, str]:
        prompt = self.registry.assemble(role, slots, self.gateway.mode)
        request = GenerationRequest(role=role, prompt=prompt, stop=ROLE_STOPS[role])
        completion = self.gateway.generate(request)
        return prompt, completion

    def _record(
        self,
        log: InvocationLog,
        role: Role,
        slots: dict[str, str],
        prompt: str,
        completion: str,
        model_in: int,
        model_out: int,
    ) -> None:
        count = self.gateway.count_tokens
        log.invocations.append(
            RoleInvocation(
                role=role,
                input=self.registry.fill_input(role, slots),
                output=completion.strip(),
                prompt_tokens=count(prompt),
                completion_tokens=count(completion),
                model_in=model_in,
                model_out=model_out,
            )
        )

    # --- the six roles -----------------------------------------------------

    def run_graph_builder(
        self, origin: str, log: InvocationLog, *, strict: bool = False
    ) -> QueryGraph:
        """Decompose the query; one repair retry, then single-node fallback."""
        count = self.gateway.count_tokens
        slots = {"question": origin}
        prompt, completion = self._generate(Role.GRAPH_BUILDER, slots)
        try:
            graph = parse_graph(completion, origin, strict=strict)
        except GraphError as first_error:
            repair = self.registry.assemble(Role.GRAPH_BUILDER, slots, self.gateway.mode)
            repair += "\n\n" + _REPAIR_INSTRUCTION.format(error=first_error)
            request = GenerationRequest(
                role=Role.GRAPH_BUILDER, prompt=repair, stop=ROLE_STOPS[Role.GRAPH_BUILDER]
            )
            completion = self.gateway.generate(request)
            prompt = repair
            try:
                graph = parse_graph(completion, origin, strict=strict)
            except GraphError:
                log.builder_fallback = True
                return single_node_graph(origin)
        model_out = sum(count(n.template) for n in graph.nodes)
        self._record(
            log, Role.GRAPH_BUILDER, slots, prompt, completion,
            model_in=count(origin), model_out=model_out,
        )
        return graph

    def run_judge(self, sub_query: str, memory: AnswerMemory, log: InvocationLog) -> JudgeDecision:
        slots = {
            "question": sub_query,
            "memory": memory.render_for_prompt(self.include_memory_summaries),
        }
        prompt, completion = self._generate(Role.RETRIEVAL_JUDGE, slots)
        decision = parse_judge(completion)
        if decision.unparsed:
            log.unparsed_judgements += 1
        count = self.gateway.count_tokens
        self._record(
            log, Role.RETRIEVAL_JUDGE, slots, prompt, completion,
            model_in=count(sub_query), model_out=count(completion),
        )
        return decision

    def run_sub_answer(
        self, sub_query: str, passages: list[Passage] | None, log: InvocationLog
    ) -> str:
        slots = {
            "question": sub_query,
            "passages": render_passages(passages) if passages else "",
        }
        prompt, completion = self._generate(Role.SUB_ANSWER, slots)
        count = self.gateway.count_tokens
        passage_tokens = sum(count(p.title) + count(p.text) for p in passages or [])
        self._record(
            log, Role.SUB_ANSWER, slots, prompt, completion,
            model_in=count(sub_query) + passage_tokens, model_out=count(completion),
        )
        return completion.strip()

    def run_summarizer(
        self,
        sub_query: str,
        passages: list[Passage],
        log: InvocationLog,
        *,
        ablated: bool = False,
    ) -> str:
        """Condense the passages; the ablation returns the first passage
        text verbatim without a gateway call."""
        if ablated:
            return first_passage(passages).text
        slots = {"question": sub_query, "passages": render_passages(passages)}
        prompt, completion = self._generate(Role.SUMMARIZER, slots)
        count = self.gateway.count_tokens
        passage_tokens = sum(count(p.title) + count(p.text) for p in passages)
        self._record(
            log, Role.SUMMARIZER, slots, prompt, completion,
            model_in=passage_tokens, model_out=count(completion),
        )
        return completion.strip()

    def _memory_component_tokens(self, memory: AnswerMemory) -> int:
        count = self.gateway.count_tokens
        return sum(
            count(e.question) + count(e.answer) + (count(e.summary) if e.summary else 0)
            for e in memory
        )

    def run_new_query(
        self, origin: str, memory: AnswerMemory, log: InvocationLog
    ) -> NewQueryOutcome:
        slots = {
            "question": origin,
            "memory": memory.render_for_prompt(self.include_memory_summaries),
        }
        prompt, completion = self._generate(Role.NEW_QUERY, slots)
        outcome = parse_new_query(completion)
        count = self.gateway.count_tokens
        self._record(
            log, Role.NEW_QUERY, slots, prompt, completion,
            model_in=self._memory_component_tokens(memory), model_out=count(completion),
        )
        return outcome

    def run_reasoner(self, origin: str, memory: AnswerMemory, log: InvocationLog) -> str:
        slots = {
            "question": origin,
            "memory": memory.render_for_prompt(self.include_memory_summaries),
        }
        prompt, completion = self._generate(Role.REASONER, slots)
        count = self.gateway.count_tokens
        self._record(
            log, Role.REASONER, slots, prompt, completion,
            model_in=self._memory_component_tokens(memory), model_out=count(completion),
        )
        return completion.strip()
