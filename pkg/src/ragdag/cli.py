"""Operator entry points: run, graph, eval, collect, cost.

Settings come from defaults, then an optional JSON config file, then flags
(flags win). Exit codes: 0 success, 1 configuration error, 2 generation
backend error, 3 data error.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import costmodel, datagen, evalkit, report
from .errors import (
    ConfigError,
    DatasetError,
    GatewayError,
    GraphError,
    PipelineError,
    RagdagError,
    RetrievalError,
    SampleCorpusError,
)
from .gateway import (
    Gateway,
    GenerationRequest,
    RemoteBackend,
    Role,
    ScriptedBackend,
    load_role_adapter,
)
from .graph import parse_graph, serialize_graph
from .pipeline import PipelineConfig, run_batch, run_pipeline
from .retrieval import LocalRetriever, RemoteRetriever, build_index, index_path_for
from .roles import ROLE_STOPS, InvocationLog, RoleRunner

_DEFAULTS = {
    "backend": "scripted",
    "rules": None,
    "retriever": "local",
    "corpus": None,
    "search_endpoint": None,
    "adapter": None,
    "top_k": 5,
    "max_new_queries": 3,
    "no_graph": False,
    "no_judge": False,
    "no_summarizer": False,
    "no_new_query": False,
    "parallel": 1,
    "strict": False,
    "trace_dir": None,
    "gateway_url": None,
    "gateway_model": None,
    "gateway_token": None,
    "gateway_timeout": None,
}


def _load_settings(config_path: str | None, overrides: dict) -> dict:
    settings = dict(_DEFAULTS)
    if config_path:
        try:
            file_values = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in file_values.items():
            if key not in settings:
                raise ConfigError(f"unknown config key {key!r}")
            settings[key] = value
    for key, value in overrides.items():
        if value is not None and value is not False:
            settings[key] = value
    return settings


def _build_gateway(settings: dict) -> Gateway:
    if settings["backend"] == "scripted":
        if not settings["rules"]:
            raise ConfigError("scripted backend requires --rules")
        backend = ScriptedBackend.from_file(settings["rules"])
    elif settings["backend"] == "remote":
        url = settings["gateway_url"] or os.environ.get("RAGDAG_GATEWAY_URL")
        if not url:
            raise ConfigError(
                "remote backend requires a gateway URL "
                "(config key gateway_url or RAGDAG_GATEWAY_URL)"
            )
        backend = RemoteBackend(
            url=url,
            model=settings["gateway_model"],
            token=settings["gateway_token"],
            timeout=settings["gateway_timeout"],
        )
    else:
        raise ConfigError(f"unknown backend {settings['backend']!r}")
    token_config = None
    if settings["adapter"]:
        token_config = load_role_adapter(settings["adapter"])
    return Gateway(backend, token_config)


def _build_retriever(settings: dict):
    if settings["retriever"] == "local":
        if not settings["corpus"]:
            raise ConfigError("local retriever requires --corpus")
        if not index_path_for(settings["corpus"]).exists():
            build_index(settings["corpus"])
        return LocalRetriever(settings["corpus"])
    if settings["retriever"] == "remote":
        if not settings["search_endpoint"]:
            raise ConfigError("remote retriever requires --search-endpoint")
        return RemoteRetriever(settings["search_endpoint"])
    raise ConfigError(f"unknown retriever {settings['retriever']!r}")


def _pipeline_config(settings: dict) -> PipelineConfig:
    return PipelineConfig(
        top_k=int(settings["top_k"]),
        max_new_queries=int(settings["max_new_queries"]),
        no_graph=bool(settings["no_graph"]),
        no_judge=bool(settings["no_judge"]),
        no_summarizer=bool(settings["no_summarizer"]),
        no_new_query=bool(settings["no_new_query"]),
        width=int(settings["parallel"]),
        strict_graph=bool(settings["strict"]),
    )


def _common_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="JSON config file; flags override it."),
        click.option("--backend", type=click.Choice(["scripted", "remote"]), default=None),
        click.option("--rules", type=click.Path(), default=None,
                     help="Scripted-backend rules file (JSONL)."),
        click.option("--retriever", type=click.Choice(["local", "remote"]), default=None),
        click.option("--corpus", type=click.Path(), default=None,
                     help="Local corpus (line-delimited id/title/text records)."),
        click.option("--search-endpoint", default=None),
        click.option("--adapter", type=click.Path(), default=None,
                     help="Role adapter file; switches activation to role tokens."),
        click.option("--top-k", type=int, default=None),
        click.option("--max-new-queries", type=int, default=None),
        click.option("--no-graph", is_flag=True, default=False),
        click.option("--no-judge", is_flag=True, default=False),
        click.option("--no-summarizer", is_flag=True, default=False),
        click.option("--no-newquery", "no_new_query", is_flag=True, default=False),
        click.option("--parallel", type=int, default=None),
        click.option("--strict", is_flag=True, default=False),
        click.option("--trace-dir", type=click.Path(), default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
def cli():
    """Graph-decomposed retrieval-augmented question answering."""


def _telemetry_lines(telemetry: dict) -> list[str]:
    keys = (
        "sub_query_count",
        "new_queries_added",
        "judged_sub_queries",
        "retrieval_calls",
        "retrievals_skipped",
        "passages_fetched",
        "empty_retrievals",
        "unparsed_judgements",
        "builder_fallback",
    )
    return [f"  {k}: {telemetry[k]}" for k in keys]


@cli.command("run")
@_common_options
@click.option("--query", default=None, help="Answer a single question.")
@click.option("--dataset", type=click.Path(), default=None, help="Run a whole dataset.")
@click.option("--out", type=click.Path(), default=None,
              help="Results file for dataset mode (JSONL of id/prediction).")
def cmd_run(config_path, query, dataset, out, **overrides):
    """Resolve a query (or every dataset item) through the full pipeline."""
    settings = _load_settings(config_path, overrides)
    runner = RoleRunner(_build_gateway(settings))
    retriever = _build_retriever(settings)
    config = _pipeline_config(settings)
    trace_dir = Path(settings["trace_dir"]) if settings["trace_dir"] else None
    if trace_dir:
        trace_dir.mkdir(parents=True, exist_ok=True)

    if (query is None) == (dataset is None):
        raise ConfigError("provide exactly one of --query or --dataset")

    if query is not None:
        if not query.strip():
            raise ConfigError("query is empty")
        result = run_pipeline(query, runner=runner, retriever=retriever, config=config)
        click.echo(f"Final answer: {result.final_answer}")
        click.echo("Graph:")
        for node in result.graph.nodes:
            deps = ",".join(node.parents) or "-"
            click.echo(f"  {node.id} <- [{deps}] {node.template}")
        click.echo("Telemetry:")
        for line in _telemetry_lines(result.telemetry.to_dict()):
            click.echo(line)
        if trace_dir:
            (trace_dir / "run.trace.json").write_text(result.to_json(), encoding="utf-8")
        return

    items = evalkit.load_dataset(dataset)
    if not items:
        raise DatasetError("dataset is empty")
    batch = run_batch(
        items,
        runner=runner,
        retriever=retriever,
        config=config,
        parallel=int(settings["parallel"]),
        strict=bool(settings["strict"]),
    )
    agg = batch.aggregates
    click.echo(
        f"items: {agg['items']}  succeeded: {agg['succeeded']}  failed: {agg['failed']}"
    )
    click.echo(f"mean sub-queries/item: {agg['mean_sub_queries']:.4f}")
    click.echo(f"mean passages/item: {agg['mean_passages_per_query']:.4f}")
    click.echo(f"retrieval saved: {agg['saved_retrieval_fraction']:.1%}")
    click.echo(f"items with follow-ups: {agg['new_query_item_fraction']:.1%}")
    if trace_dir:
        for rec in batch.items:
            if rec["ok"]:
                path = trace_dir / f"{rec['id']}.trace.json"
                path.write_text(rec["result"].to_json(), encoding="utf-8")
    if out:
        out_path = Path(out)
        with open(out_path, "w", encoding="utf-8") as fh:
            for rec in batch.items:
                if rec["ok"]:
                    line = {
                        "id": rec["id"],
                        "prediction": rec["result"].final_answer,
                        "sub_queries": rec["result"].telemetry.sub_query_count,
                        "passages_fetched": rec["result"].telemetry.passages_fetched,
                    }
                else:
                    line = {"id": rec["id"], "error": rec["error"]}
                fh.write(json.dumps(line, ensure_ascii=False) + "\n")
        report.write_json(out_path.with_suffix(".aggregates.json"), agg)
        report.render_telemetry_figure(agg, out_path.with_suffix(".png"))


@cli.command("graph")
@_common_options
@click.option("--query", required=True)
def cmd_graph(config_path, query, **overrides):
    """Build and validate the query graph for one question."""
    settings = _load_settings(config_path, overrides)
    if not query.strip():
        raise ConfigError("query is empty")
    gateway = _build_gateway(settings)
    runner = RoleRunner(gateway)
    if settings["strict"]:
        # Surface validation errors instead of falling back.
        prompt = runner.registry.assemble(Role.GRAPH_BUILDER, {"question": query}, gateway.mode)
        completion = gateway.generate(
            GenerationRequest(role=Role.GRAPH_BUILDER, prompt=prompt,
                              stop=ROLE_STOPS[Role.GRAPH_BUILDER])
        )
        graph = parse_graph(completion, query, strict=True)
        fallback = False
    else:
        log = InvocationLog()
        graph = runner.run_graph_builder(query, log)
        fallback = log.builder_fallback
    click.echo(serialize_graph(graph))
    if fallback:
        click.echo("note: builder output malformed twice; fell back to a single-node graph")
    click.echo(f"valid DAG: {len(graph.nodes)} node(s), final {graph.final_id}")


@cli.command("eval")
@click.option("--results", "results_path", type=click.Path(), required=True,
              help="JSONL of {id, prediction} records.")
@click.option("--dataset", type=click.Path(), required=True)
@click.option("--by-hops", is_flag=True, default=False)
@click.option("--out-dir", type=click.Path(), default=None,
              help="Where report artifacts go (default: beside the results).")
def cmd_eval(results_path, dataset, by_hops, out_dir):
    """Score predictions with exact match and token F1."""
    items = evalkit.load_dataset(dataset)
    predictions: dict[str, str] = {}
    with open(results_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"results line {line_no}: invalid JSON: {exc}") from exc
            if "prediction" not in obj:
                raise DatasetError(f"results line {line_no}: missing prediction")
            predictions[str(obj["id"])] = obj["prediction"]
    score = evalkit.report(predictions, items)

    headers = ["bucket", "items", "em", "f1"]
    rows = score.to_rows() if by_hops else score.to_rows()[:1]
    click.echo(report.aligned_table(headers, rows))

    out = Path(out_dir) if out_dir else Path(results_path).parent
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "report.json", score.to_dict())
    report.write_delimited(out / "report.tsv", headers, score.to_rows())
    (out / "report.txt").write_text(
        report.aligned_table(headers, score.to_rows()) + "\n", encoding="utf-8"
    )
    report.render_score_figure(score, out / "report.png")


@cli.command("collect")
@_common_options
@click.option("--dataset", type=click.Path(), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--alpha", type=float, default=None, help="Outcome-score threshold.")
@click.option("--metric", type=click.Choice(["em", "f1"]), default=None)
def cmd_collect(config_path, dataset, out_dir, alpha, metric, **overrides):
    """Collect per-role training samples, keeping runs above the threshold."""
    settings = _load_settings(config_path, overrides)
    items = evalkit.load_dataset(dataset)
    if not items:
        raise DatasetError("dataset is empty")
    policy = datagen.FilterPolicy(
        metric=metric or "f1",
        alpha=alpha if alpha is not None else 0.7,
    )
    manifest = datagen.collect(
        items,
        out_dir,
        runner=RoleRunner(_build_gateway(settings)),
        retriever=_build_retriever(settings),
        config=_pipeline_config(settings),
        policy=policy,
        parallel=int(settings["parallel"]),
    )
    click.echo(
        f"retained {manifest['retained_runs']}/{manifest['runs_succeeded']} runs "
        f"(alpha={policy.alpha}, metric={policy.metric})"
    )
    for task, count in manifest["per_task_counts"].items():
        click.echo(f"  {task}: {count}")


@cli.command("cost")
@click.option("--sub-queries", "-n", type=int, default=2)
@click.option("--query-tokens", "-m", type=int, default=20)
@click.option("--answer-tokens", "-t", type=int, default=10)
@click.option("--passages", "-k", type=int, default=5)
@click.option("--passage-tokens", "-l", type=int, default=100)
@click.option("--sweep", "sweep_spec", default=None,
              help="Range of sub-query counts, e.g. 1..8.")
@click.option("--stages", is_flag=True, default=False, help="Show per-stage rows.")
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Compare the model against a run trace.")
@click.option("--out-dir", type=click.Path(), default=None)
def cmd_cost(sub_queries, query_tokens, answer_tokens, passages, passage_tokens,
             sweep_spec, stages, trace_path, out_dir):
    """Closed-form token costs for the three modeled pipelines."""
    params = costmodel.CostParams(
        sub_queries=sub_queries,
        query_tokens=query_tokens,
        answer_tokens=answer_tokens,
        passages_per_query=passages,
        passage_tokens=passage_tokens,
    )

    if trace_path:
        trace = json.loads(Path(trace_path).read_text(encoding="utf-8"))
        rows = costmodel.compare_with_trace(trace)
        headers = ["stage", "analytic_in", "empirical_in", "rel_in",
                   "analytic_out", "empirical_out", "rel_out"]
        table = [
            [
                r.stage,
                f"{float(r.analytic_in):g}",
                str(r.empirical_in),
                "n/a" if r.rel_in is None else f"{r.rel_in:+.2%}",
                f"{float(r.analytic_out):g}",
                str(r.empirical_out),
                "n/a" if r.rel_out is None else f"{r.rel_out:+.2%}",
            ]
            for r in rows
        ]
        click.echo(report.aligned_table(headers, table))
        if out_dir:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            report.write_json(out / "deviation.json", [r.to_dict() for r in rows])
            report.write_delimited(out / "deviation.tsv", headers, table)
        return

    def fmt(value) -> str:
        return str(int(value)) if value == int(value) else f"{float(value):.2f}"

    if sweep_spec:
        try:
            lo, hi = (int(part) for part in sweep_spec.split(".."))
        except ValueError as exc:
            raise ConfigError(f"bad sweep spec {sweep_spec!r}; expected LO..HI") from exc
        rows = costmodel.sweep(params, range(lo, hi + 1))
        headers = ["n", "ragdag_in", "ragdag_out", "ircot_in", "ircot_out",
                   "rqrag_in", "rqrag_out"]
        table = [
            [str(row["sub_queries"])] + [
                fmt(row[key]) for key in
                ("ragdag_in", "ragdag_out", "ircot_in", "ircot_out", "rqrag_in", "rqrag_out")
            ]
            for row in rows
        ]
        click.echo(report.aligned_table(headers, table))
        if out_dir:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            payload = [
                {k: (float(v) if k != "sub_queries" else v) for k, v in row.items()}
                for row in rows
            ]
            report.write_json(out / "cost_sweep.json", payload)
            report.write_delimited(out / "cost_sweep.tsv", headers, table)
            report.render_cost_figure(rows, out / "cost_sweep.png")
        return

    breakdowns = [fn(params) for fn in costmodel.PIPELINES.values()]
    headers = ["pipeline", "input_tokens", "output_tokens"]
    table = [[b.pipeline, fmt(b.total_input), fmt(b.total_output)] for b in breakdowns]
    click.echo(report.aligned_table(headers, table))
    if stages:
        for b in breakdowns:
            click.echo(f"\n{b.pipeline} stages:")
            stage_rows = [
                [s.name, fmt(s.input_tokens), fmt(s.output_tokens)] for s in b.stages
            ]
            click.echo(report.aligned_table(["stage", "input", "output"], stage_rows))
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write_json(out / "cost.json", [b.to_dict() for b in breakdowns])
        report.write_delimited(out / "cost.tsv", headers, table)
        sweep_rows = costmodel.sweep(params, range(1, max(2, int(sub_queries)) + 1))
        report.render_cost_figure(sweep_rows, out / "cost.png")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 1
    except PipelineError as exc:
        code = 2 if isinstance(exc.cause, GatewayError) else 3
        click.echo(f"pipeline error: {exc}", err=True)
        return code
    except GatewayError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return 2
    except (DatasetError, RetrievalError, GraphError, SampleCorpusError, RagdagError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
