"""Retrieval-augmented generation over a dependency DAG of sub-queries."""

from .evalkit import QAItem, exact_match, f1, load_dataset, normalize
from .gateway import Gateway, GenerationRequest, Role, RoleTokenConfig, ScriptedBackend
from .graph import QueryGraph, QueryNode, parse_graph, single_node_graph, topological_order
from .memory import AnswerMemory, MemoryEntry
from .pipeline import PipelineConfig, RunResult, run_batch, run_pipeline
from .retrieval import LocalRetriever, Passage, build_index
from .roles import PromptRegistry, RoleRunner

__version__ = "0.1.0"

__all__ = [
    "AnswerMemory",
    "Gateway",
    "GenerationRequest",
    "LocalRetriever",
    "MemoryEntry",
    "Passage",
    "PipelineConfig",
    "PromptRegistry",
    "QAItem",
    "QueryGraph",
    "QueryNode",
    "Role",
    "RoleRunner",
    "RoleTokenConfig",
    "RunResult",
    "ScriptedBackend",
    "build_index",
    "exact_match",
    "f1",
    "load_dataset",
    "normalize",
    "parse_graph",
    "run_batch",
    "run_pipeline",
    "single_node_graph",
    "topological_order",
]
