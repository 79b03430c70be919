"""HTTP API consumed by the console.

Every response is a JSON document with a schema_version field. The API is a
thin transport over the same pipeline operations the CLI drives; all engine
mutations funnel through one lock.
"""

from __future__ import annotations

import hashlib
import threading
from typing import Any

import yaml
from fastapi import Body, FastAPI, HTTPException

from . import __version__
from .errors import MediateError, ModelValidationError
from .events import Event
from .matching import resolve_uncovered
from .model import CollaborationModel, dumps_model, validate_model
from .pipeline import (
    AdaptationRunner,
    PipelineContext,
    stage_compile,
    stage_deduce,
    stage_match,
    stage_model,
    stage_reconcile,
    stage_run,
)
from .process import cartography_to_raw
from .project import Project

SCHEMA_VERSION = 1


def _ok(payload: dict[str, Any]) -> dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, **payload}


def _model_version(m: CollaborationModel) -> str:
    return hashlib.sha256(dumps_model(m).encode("utf-8")).hexdigest()[:16]


def create_app(project: Project) -> FastAPI:
    app = FastAPI(title="mediation engine", version=__version__)
    ctx = PipelineContext(project)
    runner = AdaptationRunner(ctx)
    lock = threading.Lock()

    def guarded(fn):
        with lock:
            try:
                return fn()
            except HTTPException:
                raise
            except ModelValidationError as exc:
                raise HTTPException(status_code=422, detail=[
                    {"path": f.path, "rule": f.rule, "message": f.message}
                    for f in exc.findings
                ]) from exc
            except MediateError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.get("/health")
    def health():
        return _ok({"status": "up"})

    # -- model -----------------------------------------------------------------

    @app.get("/model")
    def get_model():
        def body():
            from .model import load_model

            m = ctx.model or load_model(project.model_path)
            ctx.model = m
            return _ok({"model": m.to_raw(), "version": _model_version(m)})

        return guarded(body)

    @app.put("/model")
    def put_model(payload: dict = Body(...)):
        def body():
            raw = payload.get("model")
            if raw is None:
                raise HTTPException(status_code=422, detail="body must carry a 'model' object")
            m = CollaborationModel.from_raw(raw)
            report = validate_model(m, ctx.ontology)
            if not report.ok:
                raise HTTPException(status_code=422, detail=report.to_raw()["findings"])
            expected = payload.get("version")
            if expected and ctx.model is not None and expected != _model_version(ctx.model):
                raise HTTPException(status_code=409, detail="model version conflict; reload first")
            project.model_path.write_text(dumps_model(m), encoding="utf-8")
            ctx.model = m
            ctx.linked_model = None
            ctx.awaiting_model_edit = False
            return _ok({"version": _model_version(m), "validation": report.to_raw()})

        return guarded(body)

    @app.get("/model/validation")
    def get_validation():
        def body():
            report = stage_model(ctx)
            return _ok({"report": report.to_raw()})

        return guarded(body)

    # -- ontology link proposals ---------------------------------------------------

    def _current_model() -> CollaborationModel:
        from .model import load_model

        if ctx.model is None:
            ctx.model = load_model(project.model_path)
        return ctx.model

    @app.get("/links/proposals")
    def get_link_proposals():
        def body():
            from .ontology import link_references

            _, report = link_references(
                _current_model(), ctx.ontology,
                near_by_threshold=project.config.near_by_threshold)
            return _ok({"links": report.to_raw()})

        return guarded(body)

    @app.post("/links/confirm")
    def confirm_link(payload: dict = Body(...)):
        def body():
            from .model import ConceptRef, iter_concept_refs, with_resolved_ref

            path = str(payload.get("path", ""))
            concept = str(payload.get("concept", ""))
            kind = str(payload.get("kind", "near_by"))
            m = _current_model()
            refs = dict(iter_concept_refs(m))
            ref = refs.get(path)
            if ref is None:
                raise HTTPException(status_code=404, detail=f"no concept ref at {path!r}")
            if not ctx.ontology.has(concept):
                raise HTTPException(status_code=422, detail=f"unknown concept {concept!r}")
            linked = with_resolved_ref(
                m, path, ConceptRef(ref.concept_id, kind, resolved=concept))
            project.model_path.write_text(dumps_model(linked), encoding="utf-8")
            ctx.model = linked
            ctx.linked_model = None
            return _ok({"path": path, "resolved": concept, "kind": kind,
                        "version": _model_version(linked)})

        return guarded(body)

    # -- pipeline stages ----------------------------------------------------------

    @app.post("/pipeline/{stage}")
    def post_stage(stage: str, payload: dict = Body(default={})):
        def body():
            if stage == "model":
                report = stage_model(ctx)
            elif stage == "deduce":
                report = stage_deduce(ctx)
            elif stage == "match":
                report = stage_match(ctx)
            elif stage == "reconcile":
                report = stage_reconcile(ctx)
            elif stage == "compile":
                report = stage_compile(ctx)
            elif stage == "run":
                report = stage_run(ctx, payload.get("input") or {})
            else:
                raise HTTPException(status_code=404, detail=f"unknown stage {stage!r}")
            return _ok({"report": report.to_raw()})

        return guarded(body)

    @app.get("/reports/{stage}")
    def get_report(stage: str):
        def body():
            report = ctx.reports.get(stage)
            if report is not None:
                return _ok({"report": report.to_raw()})
            path = project.artifact(f"{stage}.report.yaml")
            if not path.exists():
                raise HTTPException(status_code=404, detail=f"no report for stage {stage!r}")
            return _ok({"report": yaml.safe_load(path.read_text(encoding="utf-8"))})

        return guarded(body)

    # -- cartography ---------------------------------------------------------------

    @app.get("/cartography")
    def get_cartography():
        def body():
            return _ok({"cartography": cartography_to_raw(ctx.require_cartography())})

        return guarded(body)

    # -- match queue ------------------------------------------------------------------

    @app.get("/match/queue")
    def get_queue():
        def body():
            results = ctx.require_match_results()
            return _ok({"queue": [
                r.to_raw() for _, r in sorted(results.items()) if r.chosen is None
            ], "all": [r.to_raw() for _, r in sorted(results.items())]})

        return guarded(body)

    @app.post("/match/{activity}/validate")
    def validate_match(activity: str, payload: dict = Body(default={})):
        def body():
            results = ctx.require_match_results()
            result = results.get(activity)
            if result is None:
                raise HTTPException(status_code=404, detail=f"unknown activity {activity!r}")
            if result.chosen is not None:
                return _ok({"result": result.to_raw(), "stale": True})
            result.validate_candidate(int(payload.get("candidate", 0)))
            from .pipeline import _dump

            _dump(project.artifact("matches.yaml"),
                  {"results": {fid: r.to_raw() for fid, r in sorted(results.items())}})
            return _ok({"result": result.to_raw(), "stale": False})

        return guarded(body)

    @app.post("/match/{activity}/resolve")
    def resolve_match(activity: str, payload: dict = Body(...)):
        def body():
            choice = payload.get("choice")
            activities = ctx.activities()
            if activity not in activities:
                raise HTTPException(status_code=404, detail=f"unknown activity {activity!r}")
            outcome = resolve_uncovered(activities[activity], str(choice))
            from .matching import ServiceDescriptor

            if isinstance(outcome, ServiceDescriptor):
                ctx.add_service(outcome)
                return _ok({"service": {"id": outcome.id, "endpoint": outcome.endpoint.kind}})
            return _ok({"deferred": {"activity": outcome.activity_id, "reason": outcome.reason}})

        return guarded(body)

    # -- workflows and instances ---------------------------------------------------------

    @app.get("/workflows")
    def get_workflows():
        def body():
            bundle = ctx.require_bundle()
            return _ok({"workflows": bundle.to_raw()})

        return guarded(body)

    @app.post("/workflows/run")
    def run_workflows(payload: dict = Body(default={})):
        def body():
            report = stage_run(ctx, payload.get("input") or {})
            return _ok({"report": report.to_raw()})

        return guarded(body)

    @app.get("/instances")
    def get_instances():
        def body():
            if ctx.orchestrator is None:
                return _ok({"instances": []})
            return _ok({"instances": [
                {"id": iid, "workflow": inst.workflow.id, "state": inst.state,
                 "waiting_node": inst.waiting_node}
                for iid, inst in sorted(ctx.orchestrator.instances.items())
            ]})

        return guarded(body)

    @app.get("/instances/{instance_id}")
    def get_instance(instance_id: str):
        def body():
            if ctx.orchestrator is None:
                raise HTTPException(status_code=404, detail="no instances yet")
            inst = ctx.orchestrator.instances.get(instance_id)
            if inst is None:
                raise HTTPException(status_code=404, detail=f"unknown instance {instance_id!r}")
            return _ok({"instance": {
                "id": inst.id, "workflow": inst.workflow.id, "state": inst.state,
                "waiting_node": inst.waiting_node, "history": list(inst.history),
                "env": {k: dict(v) for k, v in inst.env.items()},
            }})

        return guarded(body)

    @app.post("/instances/{instance_id}/interrupt")
    def interrupt_instance(instance_id: str):
        def body():
            ctx.ensure_runtime()
            inst = ctx.orchestrator.interrupt(instance_id)
            return _ok({"instance": {"id": inst.id, "state": inst.state}})

        return guarded(body)

    @app.post("/instances/{instance_id}/resume")
    def resume_instance(instance_id: str):
        def body():
            ctx.ensure_runtime()
            inst = ctx.orchestrator.resume(instance_id)
            return _ok({"instance": {"id": inst.id, "state": inst.state}})

        return guarded(body)

    @app.post("/instances/{instance_id}/human-task")
    def human_task(instance_id: str, payload: dict = Body(...)):
        def body():
            inst = ctx.complete_human_task(
                instance_id, str(payload.get("node")), dict(payload.get("payload") or {}))
            return _ok({"instance": {"id": inst.id, "state": inst.state}})

        return guarded(body)

    # -- events and twin --------------------------------------------------------------

    @app.post("/events")
    def ingest_events(payload: dict = Body(...)):
        def body():
            ctx.require_linked_model()
            ctx.ensure_runtime()
            raw_events = payload.get("events")
            if raw_events is None and payload.get("event"):
                raw_events = [payload["event"]]
            if not isinstance(raw_events, list):
                raise HTTPException(status_code=422, detail="body must carry 'events' (list)")
            # malformed events are dropped and counted, never fail the batch
            entries = []
            malformed = 0
            for raw in raw_events:
                try:
                    event = Event.from_raw(raw)
                except (MediateError, TypeError, ValueError):
                    malformed += 1
                    continue
                entries.append(ctx.ingest_event(event))
            return _ok({"ingested": len(entries), "dropped_malformed": malformed,
                        "entries": entries, "watermarks": dict(ctx.twin.watermarks)})

        return guarded(body)

    @app.get("/twin")
    def get_twin():
        def body():
            ctx.require_linked_model()
            ctx.ensure_runtime()

            def dump(store):
                return [
                    {"id": i.id, "concept": i.concept, "attributes": dict(i.attributes)}
                    for i in store.instances()
                ]

            return _ok({"twin": {
                "expected": dump(ctx.twin.expected),
                "field": dump(ctx.twin.field),
                "watermarks": dict(ctx.twin.watermarks),
            }})

        return guarded(body)

    @app.get("/twin/report")
    def get_twin_report():
        def body():
            return _ok({"report": ctx.measure_twin().to_raw()})

        return guarded(body)

    @app.get("/twin/history")
    def get_twin_history(since: int = 0):
        def body():
            return _ok({"history": ctx.twin_history[since:], "next": len(ctx.twin_history)})

        return guarded(body)

    # -- adaptation ---------------------------------------------------------------------

    @app.get("/adaptation/proposal")
    def get_proposal():
        def body():
            ctx.require_linked_model()
            ctx.ensure_runtime()
            return _ok(runner.proposal())

        return guarded(body)

    @app.post("/adaptation/dispatch")
    def post_dispatch(payload: dict = Body(default={})):
        def body():
            ctx.require_linked_model()
            ctx.ensure_runtime()
            re_entry = payload.get("re_entry") or runner.proposal()["re_entry"]
            if re_entry == "none":
                raise HTTPException(status_code=409, detail="no adaptation proposed")
            record = runner.dispatch(str(re_entry))
            return _ok({"record": record.to_raw()})

        return guarded(body)

    @app.get("/adaptation/records")
    def get_records():
        def body():
            return _ok({"records": [r.to_raw() for r in ctx.adaptation_records]})

        return guarded(body)

    return app
