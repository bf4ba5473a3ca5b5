"""Operator entry points: chat REPL, document summarization, evaluation
runs, and the HTTP server.

Config precedence everywhere: flags > environment variables > defaults.
The effective configuration is echoed at startup. Exit codes: 0 ok,
1 usage error, 2 runtime error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .agent import Ablation, EngineConfig, TurnTrace
from .backends import GenerationBackend, HttpBackend, ScriptedBackend
from .embedding import EmbeddingProvider, HashEmbedder, RemoteEmbedder
from .errors import InputError, ScmError
from .evalharness import load_probe_set, run_eval, write_report
from .memory import RetrievalConfig
from .service import BIND_ADDR_VAR, DATA_DIR_VAR, create_app
from .suite import build_synthetic_suite
from .summarize import SummarizeConfig, hierarchical_summarize, write_tree


def _make_backend(kind: str, fixture: str | None, base_url: str | None, model: str) -> GenerationBackend:
    if kind == "scripted":
        if fixture:
            return ScriptedBackend.from_file(fixture)
        return ScriptedBackend(default="Understood.")
    if kind == "http":
        if not base_url:
            raise InputError("--base-url is required with --backend http")
        return HttpBackend(base_url=base_url, model=model)
    raise InputError(f"unknown backend {kind!r}")


def _make_embedder(kind: str, base_url: str | None, model: str) -> EmbeddingProvider:
    if kind == "hash":
        return HashEmbedder()
    if kind == "remote":
        if not base_url:
            raise InputError("--embed-url is required with --embedder remote")
        return RemoteEmbedder(base_url=base_url, model=model)
    raise InputError(f"unknown embedder {kind!r}")


def _echo_config(**settings) -> None:
    rendered = " ".join(f"{key}={value}" for key, value in settings.items())
    click.echo(f"config: {rendered}")


@click.group()
def cli() -> None:
    """Self-controlled memory engine."""


@cli.command("chat")
@click.option("--backend", "backend_kind", default="scripted", show_default=True,
              type=click.Choice(["scripted", "http"]))
@click.option("--fixture", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Rules file for the scripted backend.")
@click.option("--base-url", default=None, help="HTTP backend base URL.")
@click.option("--model", default="default", show_default=True)
@click.option("--embedder", "embedder_kind", default="hash", show_default=True,
              type=click.Choice(["hash", "remote"]))
@click.option("--embed-url", default=None, help="Remote embedder base URL.")
@click.option("--embed-model", default="default", show_default=True)
@click.option("--session", "session_id", default="default", show_default=True)
@click.option("--data-dir", envvar=DATA_DIR_VAR, default="./scm_data", show_default=True)
@click.option("--k", default=5, show_default=True, help="Memories retrieved per query.")
@click.option("--show-trace", is_flag=True, help="Print retrieval and controller details.")
def cmd_chat(backend_kind, fixture, base_url, model, embedder_kind, embed_url,
             embed_model, session_id, data_dir, k, show_trace) -> None:
    """Interactive REPL over the full turn workflow."""
    backend = _make_backend(backend_kind, fixture, base_url, model)
    embedder = _make_embedder(embedder_kind, embed_url, embed_model)
    persist_path = Path(data_dir) / "sessions" / session_id / "memory.jsonl"
    engine = EngineConfig(
        backend=backend, embedder=embedder, retrieval=RetrievalConfig(k=k)
    )
    session = engine.new_session(session_id=session_id, persist_path=persist_path)
    _echo_config(
        backend=backend.name, embedder=embedder.name, k=k,
        session=session_id, data_dir=data_dir, turn=session.current_turn,
    )
    while True:
        try:
            line = input("you> ")
        except EOFError:
            break
        stripped = line.strip()
        if stripped in {"/quit", "/exit"}:
            break
        if not stripped:
            continue
        response, trace = session.run_turn(line)
        click.echo(response)
        if show_trace:
            _echo_trace(trace)


def _echo_trace(trace: TurnTrace) -> None:
    activated = [r.item_index for r in trace.retrieved]
    click.echo(f"  [trace] turn={trace.turn} activated={activated} flash={trace.flash_used}")
    if trace.activation_decision is not None:
        decision = trace.activation_decision
        click.echo(
            f"  [trace] activation verdict={decision.parsed} raw={decision.raw_model_output!r}"
        )
    for decision in trace.summary_decisions:
        click.echo(
            f"  [trace] summary verdict={decision.parsed} raw={decision.raw_model_output!r}"
        )


@cli.command("summarize")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--block-budget", default=2500, show_default=True)
@click.option("--fanout", default=4, show_default=True)
@click.option("--memory-k", default=3, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--backend", "backend_kind", default="scripted", show_default=True,
              type=click.Choice(["scripted", "http"]))
@click.option("--fixture", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--base-url", default=None)
@click.option("--model", default="default", show_default=True)
def cmd_summarize(input_path, block_budget, fanout, memory_k, out_dir,
                  backend_kind, fixture, base_url, model) -> None:
    """Hierarchically summarize a document; resumes from OUT/checkpoint."""
    backend = _make_backend(backend_kind, fixture, base_url, model)
    config = SummarizeConfig(
        block_token_budget=block_budget, merge_fanout=fanout, memory_k=memory_k
    )
    _echo_config(
        backend=backend.name, block_budget=block_budget, fanout=fanout,
        memory_k=memory_k, out=out_dir,
    )
    document = Path(input_path).read_text(encoding="utf-8")
    out = Path(out_dir)
    root, nodes = hierarchical_summarize(
        document, backend, config=config, checkpoint_dir=out / "checkpoint"
    )
    write_tree(nodes, out / "tree.jsonl")
    (out / "final_summary.txt").write_text(root.text + "\n", encoding="utf-8")
    with (out / "blocks_vs_summaries.txt").open("w", encoding="utf-8") as fh:
        for node in nodes:
            if node.level != 1 or node.source_char_span is None:
                continue
            start, end = node.source_char_span
            fh.write(f"=== {node.node_id} chars [{start}, {end}) ===\n")
            fh.write(document[start:end].strip() + "\n")
            fh.write(f"--- summary ---\n{node.text}\n\n")
    levels: dict[int, int] = {}
    for node in nodes:
        levels[node.level] = levels.get(node.level, 0) + 1
    shape = " -> ".join(str(levels[level]) for level in sorted(levels))
    click.echo(f"tree levels: {shape}")
    click.echo(f"final summary: {out / 'final_summary.txt'}")


@cli.command("eval")
@click.option("--probes", required=True,
              help='Probe set file (JSONL) or "bundled" for the synthetic suite.')
@click.option("--fixture", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Scripted backend rules for a file-based probe set.")
@click.option("--ablation", default="none", show_default=True,
              type=click.Choice([mode.value for mode in Ablation]))
@click.option("--report", "report_path", default=None, type=click.Path(dir_okay=False))
@click.option("--trace-dir", default=None, type=click.Path(file_okay=False))
@click.option("--workers", default=1, show_default=True)
def cmd_eval(probes, fixture, ablation, report_path, trace_dir, workers) -> None:
    """Replay probe sessions and print the four headline metrics."""
    if probes == "bundled":
        cases, backend = build_synthetic_suite()
    else:
        cases = load_probe_set(probes)
        if fixture is None:
            raise InputError("--fixture is required with a file-based probe set")
        backend = ScriptedBackend.from_file(fixture)
    engine = EngineConfig(backend=backend, embedder=HashEmbedder())
    _echo_config(probes=probes, ablation=ablation, cases=len(cases), workers=workers)
    report = run_eval(cases, engine, ablation=ablation, workers=workers, trace_dir=trace_dir)
    click.echo(f"answer_accuracy          {report.answer_accuracy:.4f}")
    click.echo(f"memory_retrieval_recall  {report.memory_retrieval_recall:.4f}")
    click.echo(f"single_turn_accuracy     {report.single_turn_accuracy:.4f}")
    click.echo(f"multi_turn_accuracy      {report.multi_turn_accuracy:.4f}")
    if report_path:
        write_report(report, report_path)
        click.echo(f"report written to {report_path}")


@cli.command("serve")
@click.option("--bind", envvar=BIND_ADDR_VAR, default="127.0.0.1:8000", show_default=True)
@click.option("--data-dir", envvar=DATA_DIR_VAR, default="./scm_data", show_default=True)
@click.option("--backend", "backend_kind", default="scripted", show_default=True,
              type=click.Choice(["scripted", "http"]))
@click.option("--fixture", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--base-url", default=None)
@click.option("--model", default="default", show_default=True)
@click.option("--ui-dir", type=click.Path(file_okay=False, exists=True), default=None,
              help="Serve a built web UI at /ui (e.g. frontend/dist).")
def cmd_serve(bind, data_dir, backend_kind, fixture, base_url, model, ui_dir) -> None:
    """Start the HTTP service."""
    import uvicorn

    backend = _make_backend(backend_kind, fixture, base_url, model)
    host, _, port = bind.partition(":")
    _echo_config(bind=bind, data_dir=data_dir, backend=backend.name, ui=ui_dir or "off")
    app = create_app(data_dir, default_backend=backend, ui_dir=ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="warning")


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as err:
        sys.exit(err.exit_code)
    except (click.UsageError, click.BadParameter) as err:
        click.echo(f"usage error: {err.format_message()}", err=True)
        sys.exit(1)
    except click.ClickException as err:
        err.show()
        sys.exit(1)
    except ScmError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    except KeyboardInterrupt:
        sys.exit(2)


if __name__ == "__main__":
    main()
