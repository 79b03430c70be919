"""Command line driver: one verb per pipeline stage plus serve and monitor.

Exit codes: 0 success; parse 2, validation 3, deduction 4, matching 5,
reconciliation 6, compile 7, run/agility 8, project/config 9.
"""

from __future__ import annotations

import json
import shutil
import sys
from importlib import resources
from pathlib import Path

import click
import yaml

from .errors import MediateError
from .events import load_event_log
from .pipeline import (
    STAGES,
    AdaptationRunner,
    PipelineContext,
    run_pipeline,
    stage_compile,
    stage_deduce,
    stage_match,
    stage_model,
    stage_reconcile,
    stage_run,
)
from .project import Project


def _context(project_path: str, model_path: str | None = None,
             ontology_path: str | None = None) -> PipelineContext:
    project = Project.load(project_path)
    if model_path:
        project.model_path = Path(model_path).resolve()
    if ontology_path:
        project.ontology_path = Path(ontology_path).resolve()
    return PipelineContext(project)


def _echo_report(report) -> None:
    click.echo(yaml.safe_dump(report.to_raw(), sort_keys=True), nl=False)


def _run(fn):
    try:
        fn()
    except MediateError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)


project_option = click.option("--project", "-p", "project_path", required=True,
                              type=click.Path(exists=True), help="Project file.")
model_option = click.option("--model", "model_path", default=None,
                            type=click.Path(exists=True),
                            help="Model file overriding the project's.")
ontology_option = click.option("--ontology", "ontology_path", default=None,
                               type=click.Path(exists=True),
                               help="Ontology file overriding the project's.")


@click.group()
def main():
    """Collaborative-network mediation engine."""


@main.command()
@project_option
@model_option
@ontology_option
def model(project_path, model_path, ontology_path):
    """Load and validate the collaboration model."""

    def body():
        report = stage_model(_context(project_path, model_path, ontology_path))
        _echo_report(report)
        if report.status != "ok":
            sys.exit(3)

    _run(body)


@main.command()
@project_option
@model_option
@ontology_option
def deduce(project_path, model_path, ontology_path):
    """Deduce mediation instances and the process cartography."""
    _run(lambda: _echo_report(stage_deduce(_context(project_path, model_path, ontology_path))))


@main.command()
@project_option
@click.option("--yes", "auto_accept", is_flag=True,
              help="Accept the top candidate for every pending match.")
@click.option("--answer", "answers", multiple=True, metavar="ACTIVITY=INDEX",
              help="Pick a candidate for one activity without prompting.")
def match(project_path, auto_accept, answers):
    """Match business activities to technical services."""

    def body():
        picked = {}
        for a in answers:
            activity, _, index = a.partition("=")
            picked[activity] = int(index)

        def decide(fid, result):
            if fid in picked:
                return picked[fid]
            if auto_accept and result.candidates:
                return 0
            if not sys.stdin.isatty():
                return None
            click.echo(f"activity {fid} needs validation ({result.status}):")
            for i, b in enumerate(result.candidates):
                click.echo(f"  [{i}] score={b.score:.3f} services={[str(s) for s in b.services]}")
            choice = click.prompt("candidate index (or -1 to skip)", type=int, default=0)
            return None if choice < 0 else choice

        report = stage_match(_context(project_path), decide=decide)
        _echo_report(report)
        if report.status == "pending":
            sys.exit(5)

    _run(body)


@main.command()
@project_option
def reconcile(project_path):
    """Build data maps for every bound service."""
    _run(lambda: _echo_report(stage_reconcile(_context(project_path))))


@main.command()
@project_option
def compile(project_path):
    """Compile the cartography and bindings into executable workflows."""
    _run(lambda: _echo_report(stage_compile(_context(project_path))))


@main.command()
@project_option
@click.option("--input", "input_path", type=click.Path(exists=True),
              help="YAML/JSON file with the start payload.")
def run(project_path, input_path):
    """Run the compiled workflows over the service bus."""

    def body():
        payload = {}
        if input_path:
            payload = yaml.safe_load(Path(input_path).read_text(encoding="utf-8")) or {}
        report = stage_run(_context(project_path), payload)
        _echo_report(report)
        if report.status != "ok":
            sys.exit(8)

    _run(body)


@main.command()
@project_option
@click.option("--stages", default=",".join(STAGES), show_default=True,
              help="Comma-separated stage subset.")
@click.option("--input", "input_path", type=click.Path(exists=True))
@click.option("--yes", "auto_accept", is_flag=True)
def pipeline(project_path, stages, input_path, auto_accept):
    """Run several stages in order."""

    def body():
        payload = {}
        if input_path:
            payload = yaml.safe_load(Path(input_path).read_text(encoding="utf-8")) or {}
        decide = (lambda fid, r: 0 if r.candidates else None) if auto_accept else None
        ctx = run_pipeline(Project.load(project_path),
                           tuple(s.strip() for s in stages.split(",") if s.strip()),
                           decide=decide, input_payload=payload)
        for name, report in ctx.reports.items():
            click.echo(f"{name}: {report.status}")

    _run(body)


@main.command()
@project_option
@click.option("--events", "events_path", required=True, type=click.Path(exists=True),
              help="Event log to replay (YAML).")
@click.option("--dispatch/--no-dispatch", "do_dispatch", default=False,
              help="Dispatch the selected adaptation automatically.")
def monitor(project_path, events_path, do_dispatch):
    """Replay an event log into the twin models and stream distance reports."""

    def body():
        ctx = _context(project_path)
        ctx.require_linked_model()
        ctx.ensure_runtime()
        for event in load_event_log(events_path):
            entry = ctx.ingest_event(event)
            report = entry["report"]
            click.echo(json.dumps({
                "event": entry["event"],
                "total": report["total"],
                "dominant": report["dominant"],
                "verdict": report["verdict"],
            }, sort_keys=True))
        runner = AdaptationRunner(ctx)
        proposal = runner.proposal()
        click.echo(json.dumps({"proposal": proposal["re_entry"]}, sort_keys=True))
        if do_dispatch and proposal["re_entry"] != "none":
            record = runner.dispatch(proposal["re_entry"])
            click.echo(yaml.safe_dump(record.to_raw(), sort_keys=True), nl=False)

    _run(body)


@main.group()
def task():
    """Human task operations."""


@task.command("complete")
@project_option
@click.option("--instance", "instance_id", required=True)
@click.option("--node", "node_id", required=True)
@click.option("--payload", "payload_path", required=True, type=click.Path(exists=True))
def task_complete(project_path, instance_id, node_id, payload_path):
    """Complete a paused human task with the given payload."""

    def body():
        ctx = _context(project_path)
        ctx.require_linked_model()
        payload = yaml.safe_load(Path(payload_path).read_text(encoding="utf-8")) or {}
        inst = ctx.complete_human_task(instance_id, node_id, payload)
        click.echo(f"instance {inst.id}: {inst.state}")

    _run(body)


@main.command()
@project_option
@click.option("--bind", default=None, envvar="MEDIATE_BIND",
              help="host:port [default: 127.0.0.1:8747, env MEDIATE_BIND]")
def serve(project_path, bind):
    """Serve the HTTP API the console consumes."""
    bind = bind or "127.0.0.1:8747"

    def body():
        import uvicorn

        from .api import create_app

        host, _, port = bind.partition(":")
        app = create_app(Project.load(project_path))
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8747), log_level="warning")

    _run(body)


@main.command()
@click.argument("directory", type=click.Path())
def init(directory):
    """Scaffold a working directory from the shipped demo scenario."""

    def body():
        target = Path(directory)
        target.mkdir(parents=True, exist_ok=True)
        src = resources.files("mediate.data").joinpath("scenario")
        for name in ("project.yaml", "model.yaml", "services.yaml", "events-fault.yaml",
                     "events-withdrawal.yaml", "events-objective.yaml"):
            with resources.as_file(src.joinpath(name)) as p:
                shutil.copy(p, target / name)
        click.echo(f"scenario scaffolded in {target}")

    _run(body)


@main.command()
@project_option
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Directory for the exported files (default: artifacts dir).")
def export(project_path, out_dir):
    """Export compiled workflows to the interchange XML subset."""

    def body():
        from .orchestrate import export_bpel

        ctx = _context(project_path)
        bundle = ctx.require_bundle()
        target = Path(out_dir) if out_dir else ctx.project.artifacts_dir
        target.mkdir(parents=True, exist_ok=True)
        for wf in bundle.workflows:
            (target / f"{wf.id}.bpel.xml").write_bytes(export_bpel(wf))
            click.echo(f"wrote {target / (wf.id + '.bpel.xml')}")

    _run(body)


if __name__ == "__main__":
    main()
