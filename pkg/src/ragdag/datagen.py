"""Training-data collection with outcome filtering.

Runs the pipeline over a dataset with an expert backend, scores each final
answer against the golden answers, and keeps every role invocation of a run
only when the run's outcome score clears the threshold. Samples land in six
per-task line-delimited files plus a manifest.

Filtering is per-run: the outcome score is a property of the whole run, so
all of a run's samples share it. Runs that fell back to a single-node graph
are never retained; their builder output was unparseable and would poison
the builder task file (and break the per-task count relations).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import evalkit
from .errors import (
    CountInconsistencyError,
    SchemaViolationError,
    ThresholdViolationError,
)
from .gateway import ALL_ROLES, Role
from .pipeline import PipelineConfig, run_batch
from .roles import RoleRunner

SAMPLE_FIELDS = ("task", "input", "output", "source_item_id", "score")
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class FilterPolicy:
    metric: str = "f1"  # or "em"
    alpha: float = 0.7

    def __post_init__(self):
        if self.metric not in ("em", "f1"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    def score(self, prediction: str, golden_answers: Sequence[str]) -> float:
        if self.metric == "em":
            return float(evalkit.exact_match(prediction, golden_answers))
        return evalkit.f1(prediction, golden_answers)


def task_file(out_dir: str | Path, role: Role) -> Path:
    return Path(out_dir) / f"{role.value}.jsonl"


def collect(
    items: Sequence[evalkit.QAItem],
    out_dir: str | Path,
    *,
    runner: RoleRunner,
    retriever,
    config: PipelineConfig | None = None,
    policy: FilterPolicy | None = None,
    parallel: int = 1,
) -> dict:
    """Run, score, filter, and write the per-task sample files.

    Returns the manifest (also written to out_dir/manifest.json).
    """
    config = config or PipelineConfig()
    policy = policy or FilterPolicy()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    batch = run_batch(
        items, runner=runner, retriever=retriever, config=config, parallel=parallel
    )
    items_by_id = {item.id: item for item in items}

    samples: dict[Role, list[dict]] = {role: [] for role in ALL_ROLES}
    retained_runs = 0
    failed = 0
    for rec in batch.items:
        if not rec["ok"]:
            failed += 1
            continue
        result = rec["result"]
        item = items_by_id[rec["id"]]
        score = policy.score(result.final_answer, item.golden_answers)
        if score < policy.alpha or result.telemetry.builder_fallback:
            continue
        retained_runs += 1
        for inv in result.log.invocations:
            samples[inv.role].append(
                {
                    "task": inv.role.value,
                    "input": inv.input,
                    "output": inv.output,
                    "source_item_id": item.id,
                    "score": score,
                }
            )

    for role in ALL_ROLES:
        with open(task_file(out, role), "w", encoding="utf-8") as fh:
            for sample in samples[role]:
                fh.write(json.dumps(sample, ensure_ascii=False) + "\n")

    succeeded = len(items) - failed
    manifest = {
        "policy": {"metric": policy.metric, "alpha": policy.alpha},
        "config": config.to_dict(),
        "items_total": len(items),
        "runs_succeeded": succeeded,
        "runs_failed": failed,
        "retained_runs": retained_runs,
        "retention_rate": retained_runs / succeeded if succeeded else 0.0,
        "per_task_counts": {role.value: len(samples[role]) for role in ALL_ROLES},
    }
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, indent=2)
    return manifest


def validate_corpus(out_dir: str | Path) -> dict:
    """Check schema, threshold soundness, and the structural count
    relations of a collected corpus; returns per-task totals."""
    out = Path(out_dir)
    with open(out / MANIFEST_NAME, encoding="utf-8") as fh:
        manifest = json.load(fh)
    alpha = manifest["policy"]["alpha"]

    counts: dict[str, int] = {}
    for role in ALL_ROLES:
        n = 0
        path = task_file(out, role)
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    sample = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaViolationError(f"{path.name}:{line_no}: invalid JSON: {exc}")
                for name in SAMPLE_FIELDS:
                    if name not in sample:
                        raise SchemaViolationError(f"{path.name}:{line_no}: missing {name!r}")
                if sample["task"] != role.value:
                    raise SchemaViolationError(
                        f"{path.name}:{line_no}: task {sample['task']!r} in wrong file"
                    )
                score = sample["score"]
                if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
                    raise SchemaViolationError(f"{path.name}:{line_no}: score out of [0,1]")
                if score < alpha:
                    raise ThresholdViolationError(
                        f"{path.name}:{line_no}: score {score} below alpha {alpha}"
                    )
                n += 1
        counts[role.value] = n

    if counts["retrieval_judge"] != counts["sub_answer"]:
        raise CountInconsistencyError(
            f"judge samples ({counts['retrieval_judge']}) != "
            f"sub-answer samples ({counts['sub_answer']})"
        )
    if counts["graph_builder"] != counts["reasoner"]:
        raise CountInconsistencyError(
            f"builder samples ({counts['graph_builder']}) != "
            f"reasoner samples ({counts['reasoner']})"
        )
    if counts["summarizer"] > counts["sub_answer"]:
        raise CountInconsistencyError(
            f"summarizer samples ({counts['summarizer']}) exceed "
            f"sub-answer samples ({counts['sub_answer']})"
        )
    if counts["graph_builder"] != manifest["retained_runs"]:
        raise CountInconsistencyError(
            f"builder samples ({counts['graph_builder']}) != "
            f"retained runs ({manifest['retained_runs']})"
        )
    return {"per_task_counts": counts, "alpha": alpha, "retained_runs": manifest["retained_runs"]}
