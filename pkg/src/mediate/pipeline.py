"""Pipeline driver shared by the CLI and the HTTP API.

Stages: model -> deduce -> match -> reconcile -> compile -> run. Each stage
reads its prerequisites from the artifacts directory (or from the in-memory
context when stages run in one process), writes its own artifact plus a
machine-readable report, and is byte-reproducible on unchanged inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml

from . import agility, sabpmn
from .agility import CepEngine, SituationTwin, build_twin, load_cep_rules, measure
from .bus import ServiceBus
from .deduction import (
    DeductionEngine,
    assign_functions,
    extract_cartography,
    load_rule_groups,
    seed_store,
    select_functions,
)
from .errors import (
    DeductionError,
    MatchingError,
    MediateError,
    ProjectError,
    ReconciliationError,
)
from .matching import (
    STATUS_AUTO,
    ActivityRequirement,
    MatchResult,
    PatternStore,
    ServiceDescriptor,
    build_activity,
    load_registry,
    match_activity,
    record_success,
)
from .model import CollaborationModel, load_model, validate_model
from .ontology import Ontology, auto_confirm, link_references, load_ontology
from .orchestrate import CompiledBundle, Orchestrator, compile_workflows
from .process import (
    NODE_TASK,
    ProcessCartography,
    cartography_from_raw,
    cartography_to_raw,
)
from .project import Project
from .reconcile import DataMap, RuleBase, UpstreamField, build_data_map, load_rule_base

STAGES = ("model", "deduce", "match", "reconcile", "compile", "run")

_CROSS_PROCESS_HOP = 10_000
_START_DATA_HOP = 1_000_000


def _dump(path: Path, raw: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(raw, sort_keys=True, allow_unicode=True), encoding="utf-8")


def _load(path: Path) -> Any:
    if not path.exists():
        raise ProjectError(f"prerequisite artifact missing: {path} (run the earlier stage first)")
    return yaml.safe_load(path.read_text(encoding="utf-8"))


@dataclass
class StageReport:
    stage: str
    status: str
    details: dict[str, Any] = field(default_factory=dict)

    def to_raw(self) -> dict[str, Any]:
        return {"schema_version": 1, "stage": self.stage, "status": self.status,
                "details": self.details}


class PipelineContext:
    """Holds loaded inputs and stage outputs; lazily reloads from artifacts."""

    def __init__(self, project: Project):
        self.project = project
        self._ontology: Ontology | None = None
        self._rules: RuleBase | None = None
        self._registry: tuple[ServiceDescriptor, ...] | None = None
        self._extra_services: list[ServiceDescriptor] = []
        self.model: CollaborationModel | None = None
        self.linked_model: CollaborationModel | None = None
        self.assignment: dict[str, list[str]] | None = None
        self.cartography: ProcessCartography | None = None
        self.match_results: dict[str, MatchResult] | None = None
        self.data_maps: dict[str, tuple[DataMap, ...]] | None = None
        self.bundle: CompiledBundle | None = None
        self.bus: ServiceBus | None = None
        self.orchestrator: Orchestrator | None = None
        self.coordinator = None
        self.twin: SituationTwin | None = None
        self.cep: CepEngine | None = None
        self.twin_history: list[dict[str, Any]] = []
        self.reports: dict[str, StageReport] = {}
        self.adaptation_records: list[agility.AdaptationRecord] = []
        self.awaiting_model_edit = False

    # -- shared inputs ---------------------------------------------------------

    @property
    def ontology(self) -> Ontology:
        if self._ontology is None:
            self.project.check_files(self.project.ontology_path)
            self._ontology = load_ontology(self.project.ontology_path)
        return self._ontology

    @property
    def rules(self) -> RuleBase:
        if self._rules is None:
            self._rules = load_rule_base(self.project.transform_rules_path)
            self._rules.validate_concepts(self.ontology)
        return self._rules

    @property
    def registry(self) -> tuple[ServiceDescriptor, ...]:
        if self._registry is None:
            self.project.check_files(self.project.registry_path)
            self._registry = load_registry(self.project.registry_path)
        return self._registry + tuple(self._extra_services)

    def add_service(self, svc: ServiceDescriptor) -> None:
        self._extra_services.append(svc)

    def patterns(self) -> PatternStore:
        return PatternStore(self.project.patterns_dir)

    # -- persisted stage state ----------------------------------------------------

    def require_linked_model(self) -> CollaborationModel:
        if self.linked_model is None:
            raw = _load(self.project.artifact("deduce-state.yaml"))
            self.linked_model = CollaborationModel.from_raw(raw["model"])
            self.assignment = {k: list(v) for k, v in raw["assignment"].items()}
        return self.linked_model

    def require_assignment(self) -> dict[str, list[str]]:
        if self.assignment is None:
            self.require_linked_model()
        return self.assignment

    def require_cartography(self) -> ProcessCartography:
        if self.cartography is None:
            self.cartography = cartography_from_raw(_load(self.project.artifact("cartography.yaml")))
        return self.cartography

    def require_match_results(self) -> dict[str, MatchResult]:
        if self.match_results is None:
            raw = _load(self.project.artifact("matches.yaml"))
            self.match_results = {
                k: MatchResult.from_raw(v) for k, v in raw["results"].items()
            }
        return self.match_results

    def require_data_maps(self) -> dict[str, tuple[DataMap, ...]]:
        if self.data_maps is None:
            raw = _load(self.project.artifact("datamaps.yaml"))
            self.data_maps = {
                node: tuple(DataMap.from_raw(m) for m in maps)
                for node, maps in raw["maps"].items()
            }
        return self.data_maps

    def require_bundle(self) -> CompiledBundle:
        if self.bundle is None:
            self.bundle = CompiledBundle.from_raw(_load(self.project.artifact("workflows.yaml")))
        return self.bundle

    def activities(self) -> dict[str, ActivityRequirement]:
        model = self.require_linked_model()
        assignment = self.require_assignment()
        fmap = model.function_map()
        out = {}
        for fids in assignment.values():
            for fid in fids:
                out[fid] = build_activity(fmap[fid], model, self.ontology)
        return out

    # -- runtime ----------------------------------------------------------------

    def ensure_runtime(self) -> None:
        """Build bus, twin, CEP engine and orchestrator (idempotent)."""
        if self.orchestrator is not None:
            return
        model = self.require_linked_model()
        self.bus = ServiceBus()
        for svc in self.registry:
            self.bus.register_service(svc)
        self.twin = build_twin(model, self.registry)
        cep_rules = load_cep_rules(self.project.cep_rules_path)
        self.cep = CepEngine(cep_rules)
        self.orchestrator = Orchestrator(
            self.bus, self.rules, event_sink=self.ingest_event,
            seed=self.project.config.seed,
            store_dir=self.project.artifact("instances"),
        )
        if self.project.artifact("workflows.yaml").exists():
            self.orchestrator.load_instances(self.require_bundle())

    def complete_human_task(self, instance_id: str, node_id: str, payload: dict[str, Any]):
        self.ensure_runtime()
        inst = self.orchestrator.complete_human_task(instance_id, node_id, payload)
        if self.coordinator is not None:
            self.coordinator.pump()
        return inst

    def ingest_event(self, event) -> dict[str, Any]:
        """Single consumer for both monitoring and field events."""
        trace = self.cep.ingest(event, self.twin)
        report = measure(self.twin, self.project.config.distance_weights,
                         self.project.config.distance_threshold)
        entry = {
            "event": event.id,
            "applied": [a.rule_id for a in trace.applied],
            "report": report.to_raw(),
        }
        self.twin_history.append(entry)
        return entry

    def measure_twin(self) -> agility.DistanceReport:
        if self.twin is None:
            self.ensure_runtime()
        return measure(self.twin, self.project.config.distance_weights,
                       self.project.config.distance_threshold)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_model(ctx: PipelineContext) -> StageReport:
    project = ctx.project
    project.check_files(project.model_path)
    ctx.model = load_model(project.model_path)
    report_data = validate_model(ctx.model, ctx.ontology)
    report = StageReport("model", "ok" if report_data.ok else "invalid",
                         {"validation": report_data.to_raw(),
                          "partners": len(ctx.model.partners),
                          "objectives": len(ctx.model.objectives)})
    _dump(project.artifact("model.report.yaml"), report.to_raw())
    ctx.reports["model"] = report
    return report


def stage_deduce(ctx: PipelineContext) -> StageReport:
    project = ctx.project
    if ctx.model is None:
        project.check_files(project.model_path)
        ctx.model = load_model(project.model_path)
    linked, completion = link_references(
        ctx.model, ctx.ontology, near_by_threshold=project.config.near_by_threshold)
    if completion.proposals and project.config.auto_confirm_links:
        linked = auto_confirm(linked, completion)
        linked, completion = link_references(
            linked, ctx.ontology, near_by_threshold=project.config.near_by_threshold)
    if completion.proposals:
        open_refs = [p.path for p in completion.proposals]
        raise DeductionError(
            f"unconfirmed concept links: {open_refs}; confirm them in the console "
            "or set config.auto_confirm_links")
    selection = select_functions(linked, ctx.ontology,
                                 near_by_threshold=project.config.near_by_threshold)
    waived = set(project.config.waived_objectives)
    hard_unmatched = [oid for oid in selection.unmatched if oid not in waived]
    if hard_unmatched:
        raise DeductionError(f"objectives without matching functions: {hard_unmatched}")
    assignment = assign_functions(selection, linked)
    store = seed_store(linked, assignment)
    engine = DeductionEngine(load_rule_groups(project.deduction_rules_path))
    view = engine.apply_all(store)
    cartography = extract_cartography(store, assignment, linked)
    doc = sabpmn.build_document(cartography, linked)
    xml = sabpmn.export_sa_bpmn(doc)

    ctx.linked_model = linked
    ctx.assignment = assignment
    ctx.cartography = cartography

    _dump(project.artifact("deduce-state.yaml"),
          {"model": linked.to_raw(), "assignment": {k: list(v) for k, v in assignment.items()},
           "selection": selection.to_raw()})
    _dump(project.artifact("cartography.yaml"), cartography_to_raw(cartography))
    project.artifact("cartography.bpmn.xml").write_bytes(xml)
    report = StageReport("deduce", "ok", {
        "mediators": len(view.mediators),
        "orders": len(view.orders),
        "generated_functions": len(view.generated_functions),
        "inter_mediator_functions": len(view.inter_mediator_functions),
        "sub_processes": [s.graph.id for s in cartography.subs],
        "selection": selection.to_raw(),
        "links": completion.to_raw(),
    })
    _dump(project.artifact("deduce.report.yaml"), report.to_raw())
    ctx.reports["deduce"] = report
    return report


def stage_match(ctx: PipelineContext,
                decide: Callable[[str, MatchResult], int | None] | None = None) -> StageReport:
    """Match every selected activity; ``decide`` resolves pending results.

    ``decide`` gets (activity id, result) and returns the index of the
    accepted candidate, or None to leave the result pending.
    """
    project = ctx.project
    activities = ctx.activities()
    patterns = ctx.patterns()
    cfg = project.config.match_config()
    results: dict[str, MatchResult] = {}
    for fid in sorted(activities):
        result = match_activity(activities[fid], ctx.registry, patterns, ctx.ontology, cfg)
        if result.status != STATUS_AUTO and decide is not None:
            choice = decide(fid, result)
            if choice is not None:
                result.validate_candidate(choice)
        results[fid] = result
    ctx.match_results = results
    pending = sorted(fid for fid, r in results.items() if r.chosen is None)
    _dump(project.artifact("matches.yaml"),
          {"results": {fid: r.to_raw() for fid, r in sorted(results.items())}})
    report = StageReport("match", "ok" if not pending else "pending", {
        "auto": sorted(fid for fid, r in results.items()
                       if r.status == STATUS_AUTO and r.chosen is not None),
        "pending": pending,
        "uncovered": sorted(fid for fid, r in results.items() if r.status == "uncovered"),
    })
    _dump(project.artifact("match.report.yaml"), report.to_raw())
    ctx.reports["match"] = report
    return report


def _task_predecessors(cartography: ProcessCartography) -> dict[str, dict[str, int]]:
    """For each task node: predecessor task nodes and their hop distance.

    Intra-process predecessors come from graph paths; tasks of publisher
    workflows (via cross-process message flows) count as far predecessors.
    """
    preds: dict[str, dict[str, int]] = {}
    proc_tasks: dict[str, list[str]] = {}
    for sub in cartography.subs:
        g = sub.graph
        proc_tasks[g.id] = [n.id for n in g.tasks()]
        succ: dict[str, list[str]] = {n.id: [] for n in g.nodes}
        for e in g.sequence_edges():
            succ[e.source].append(e.target)
        node_map = g.node_map()
        for task in g.tasks():
            preds[task.id] = {}
        # BFS forward from each task; record reachable tasks with distance
        for task in g.tasks():
            frontier = [task.id]
            dist = 0
            seen = {task.id}
            while frontier:
                dist += 1
                nxt: list[str] = []
                for cur in frontier:
                    for t in succ[cur]:
                        if t in seen:
                            continue
                        seen.add(t)
                        if node_map[t].kind == NODE_TASK:
                            cur_d = preds[t].get(task.id)
                            if cur_d is None or dist < cur_d:
                                preds[t][task.id] = dist
                        nxt.append(t)
                frontier = nxt
    # cross-process: follow main-graph message edges transitively
    calls = {n.id: n.calls for n in cartography.main.nodes if n.calls}
    feeds: dict[str, set[str]] = {}
    for e in cartography.main.edges:
        if e.kind != "message":
            continue
        source_proc, target_proc = calls.get(e.source), calls.get(e.target)
        if source_proc and target_proc:
            feeds.setdefault(target_proc, set()).add(source_proc)
    def publishers(proc: str, seen: set[str]) -> set[str]:
        out = set()
        for p in feeds.get(proc, ()):  # noqa: E741
            if p in seen:
                continue
            seen.add(p)
            out.add(p)
            out |= publishers(p, seen)
        return out
    for sub in cartography.subs:
        pubs = publishers(sub.graph.id, set())
        for proc in pubs:
            for task in proc_tasks.get(proc, []):
                for local_task in proc_tasks[sub.graph.id]:
                    preds[local_task].setdefault(task, _CROSS_PROCESS_HOP)
    return preds


def _external_input_fields(ctx: PipelineContext) -> list[UpstreamField]:
    """Fields of messages no selected function produces: the process start data."""
    model = ctx.require_linked_model()
    assignment = ctx.require_assignment()
    fmap = model.function_map()
    produced: set[str] = set()
    consumed: set[str] = set()
    for fids in assignment.values():
        for fid in fids:
            produced.update(fmap[fid].outputs)
            consumed.update(fmap[fid].inputs)
    fields: list[UpstreamField] = []
    for msg in model.messages:
        if msg.id in consumed and msg.id not in produced:
            for fs in msg.fields:
                fields.append(UpstreamField(
                    path=f"input.{fs.name}", concept=fs.concept, unit=fs.unit,
                    hop=_START_DATA_HOP))
    return fields


def stage_reconcile(ctx: PipelineContext) -> StageReport:
    project = ctx.project
    cartography = ctx.require_cartography()
    results = ctx.require_match_results()
    services = {s.id: s for s in ctx.registry}
    pending = sorted(fid for fid, r in results.items() if r.chosen is None)
    if pending:
        raise ReconciliationError(f"activities still pending validation: {pending}")
    preds = _task_predecessors(cartography)
    start_fields = _external_input_fields(ctx)
    cfg = project.config

    def upstream_for(node_id: str) -> list[UpstreamField]:
        fields = list(start_fields)
        for pred_node, hop in sorted(preds.get(node_id, {}).items()):
            pred_result = results.get(pred_node.removeprefix("t-"))
            if pred_result is None or pred_result.chosen is None:
                continue
            for ref in pred_result.chosen.services:
                svc = services.get(ref.service_id)
                if svc is None:
                    continue
                for fs in svc.operation(ref.operation_id).outputs:
                    fields.append(UpstreamField(
                        path=f"{pred_node}.{fs.name}", concept=fs.concept,
                        unit=fs.unit, hop=hop))
        return fields

    maps: dict[str, list[DataMap]] = {}
    infeasible: list[str] = []
    for sub in cartography.subs:
        for task in sub.graph.tasks():
            fid = task.function_id or ""
            result = results[fid]
            candidate_order = [result.chosen] + [
                b for b in result.candidates if b != result.chosen]
            bound = None
            for binding in candidate_order:
                if binding is None:
                    continue
                member_maps: list[DataMap] = []
                feasible = True
                member_fields: list[UpstreamField] = []
                for ref in binding.services:
                    svc = services.get(ref.service_id)
                    if svc is None:
                        feasible = False
                        break
                    op = svc.operation(ref.operation_id)
                    upstream = upstream_for(task.id) + member_fields
                    data_map = build_data_map(
                        ref, op.inputs, upstream, ctx.rules, ctx.ontology,
                        chain_bound=cfg.chain_bound, pair_threshold=cfg.pair_threshold)
                    member_maps.append(data_map)
                    if not data_map.feasible:
                        feasible = False
                        break
                    for fs in op.outputs:
                        member_fields.append(UpstreamField(
                            path=f"{task.id}@{ref.service_id}.{fs.name}",
                            concept=fs.concept, unit=fs.unit, hop=0))
                if feasible:
                    bound = (binding, member_maps)
                    break
            if bound is None:
                infeasible.append(task.id)
                maps[task.id] = member_maps
                continue
            binding, member_maps = bound
            if binding != result.chosen:
                # step-1 re-entry: the next feasible candidate replaces the choice
                result.chosen = binding
                result.status = STATUS_AUTO
            maps[task.id] = member_maps
    if infeasible:
        raise ReconciliationError(
            f"no feasible data maps for tasks: {infeasible}; "
            "match alternative services first")
    ctx.data_maps = {node: tuple(ms) for node, ms in maps.items()}
    _dump(project.artifact("datamaps.yaml"),
          {"maps": {node: [m.to_raw() for m in ms] for node, ms in sorted(maps.items())}})
    _dump(project.artifact("matches.yaml"),
          {"results": {fid: r.to_raw() for fid, r in sorted(results.items())}})
    report = StageReport("reconcile", "ok", {
        "tasks": sorted(maps),
        "assignments": sum(len(m.assignments) for ms in maps.values() for m in ms),
    })
    _dump(project.artifact("reconcile.report.yaml"), report.to_raw())
    ctx.reports["reconcile"] = report
    return report


def stage_compile(ctx: PipelineContext) -> StageReport:
    project = ctx.project
    cartography = ctx.require_cartography()
    results = ctx.require_match_results()
    data_maps = ctx.require_data_maps()
    assignment = ctx.require_assignment()
    bundle = compile_workflows(cartography, results, data_maps, assignment, ctx.registry)
    ctx.bundle = bundle
    _dump(project.artifact("workflows.yaml"), bundle.to_raw())
    report = StageReport("compile", "ok", {
        "workflows": [wf.id for wf in bundle.workflows],
        "subscriptions": {
            wf.id: [s.publisher for s in wf.subscriptions] for wf in bundle.workflows
        },
        "launch_order": list(bundle.launch_order),
    })
    _dump(project.artifact("compile.report.yaml"), report.to_raw())
    ctx.reports["compile"] = report
    return report


def stage_run(ctx: PipelineContext, input_payload: dict[str, Any] | None = None) -> StageReport:
    project = ctx.project
    bundle = ctx.require_bundle()
    ctx.ensure_runtime()
    coordinator = ctx.orchestrator.run_cartography(bundle, input_payload or {})
    ctx.coordinator = coordinator
    patterns = ctx.patterns()
    results = ctx.require_match_results()
    activities = ctx.activities()
    if coordinator.all_completed:
        # only bindings that actually ran count as successful tries; chosen
        # alternatives on untaken branches stay out of the pattern store
        executed: set[str] = set()
        for inst in coordinator.instances.values():
            for node_id in inst.completed_nodes():
                binding = inst.workflow.bindings.get(node_id)
                if binding is not None:
                    executed.add(binding.function_id)
        for fid in sorted(executed):
            result = results.get(fid)
            if result is not None and result.chosen is not None and fid in activities:
                record_success(result, activities[fid].profile, patterns)
    report = StageReport("run", "ok" if coordinator.all_completed else "incomplete", {
        "states": coordinator.states(),
        "invocations": dict(sorted(ctx.bus.invocation_multiset().items())),
        "event_log": [list(e) for e in coordinator.event_log],
        "twin": ctx.measure_twin().to_raw(),
    })
    _dump(project.artifact("run.report.yaml"), report.to_raw())
    ctx.reports["run"] = report
    return report


def run_pipeline(project: Project, stages: tuple[str, ...] = STAGES,
                 decide=None, input_payload: dict[str, Any] | None = None,
                 ctx: PipelineContext | None = None) -> PipelineContext:
    ctx = ctx or PipelineContext(project)
    for stage in stages:
        if stage not in STAGES:
            raise ProjectError(f"unknown stage {stage!r}; valid: {STAGES}")
        if stage == "model":
            report = stage_model(ctx)
            if report.status != "ok":
                raise MediateError(f"model stage failed: {report.details}")
        elif stage == "deduce":
            stage_deduce(ctx)
        elif stage == "match":
            report = stage_match(ctx, decide=decide)
            if report.status == "pending":
                raise MatchingError(
                    f"matches awaiting validation: {report.details['pending']}")
        elif stage == "reconcile":
            stage_reconcile(ctx)
        elif stage == "compile":
            stage_compile(ctx)
        elif stage == "run":
            stage_run(ctx, input_payload)
    return ctx


# ---------------------------------------------------------------------------
# Adaptation wiring
# ---------------------------------------------------------------------------


def apply_field_model(model: CollaborationModel, twin: SituationTwin) -> CollaborationModel:
    """Project the field model back onto the collaboration model.

    Partners deleted in the field model are dropped (with their functions and
    sub-network memberships); functions marked withdrawn are dropped.
    """
    from dataclasses import replace

    live_partners = {
        inst.id.removeprefix("partner-") for inst in twin.field.instances("Partner")
    }
    withdrawn_functions = {
        inst.id.removeprefix("function-")
        for inst in twin.field.instances("Function")
        if inst.attributes.get("availability") == "withdrawn"
    }
    partners = []
    for p in model.partners:
        if p.id not in live_partners:
            continue
        functions = tuple(f for f in p.functions if f.id not in withdrawn_functions)
        partners.append(replace(p, functions=functions))
    sub_networks = tuple(
        replace(sn, partners=tuple(pid for pid in sn.partners if pid in live_partners))
        for sn in model.sub_networks
    )
    return replace(model, partners=tuple(partners), sub_networks=sub_networks)


def unavailable_services(twin: SituationTwin) -> set[str]:
    return {
        inst.id.removeprefix("service-")
        for inst in twin.field.instances("Service")
        if inst.attributes.get("status") not in (None, "available")
    }


class AdaptationRunner:
    """Binds the agility dispatch to concrete pipeline re-entries."""

    def __init__(self, ctx: PipelineContext):
        self.ctx = ctx

    def running_instances(self) -> list[str]:
        orch = self.ctx.orchestrator
        if orch is None:
            return []
        return sorted(
            iid for iid, inst in orch.instances.items()
            if inst.state in ("running", "paused_on_human_task")
        )

    def proposal(self) -> dict[str, Any]:
        report = self.ctx.measure_twin()
        re_entry = agility.select_adaptation(report)
        return {"report": report.to_raw(), "re_entry": re_entry}

    def dispatch(self, re_entry: str) -> agility.AdaptationRecord:
        ctx = self.ctx
        old = tuple(wf.id for wf in ctx.bundle.workflows) if ctx.bundle else ()

        def interrupt(iid: str) -> None:
            ctx.orchestrator.interrupt(iid)

        def gather() -> None:
            ctx.awaiting_model_edit = True

        def rediscover() -> tuple[str, ...]:
            down = unavailable_services(ctx.twin)
            kept = tuple(s for s in ctx.registry if s.id not in down)
            results = {}
            cfg = ctx.project.config.match_config()
            patterns = ctx.patterns()
            for fid, activity in sorted(ctx.activities().items()):
                result = match_activity(activity, kept, patterns, ctx.ontology, cfg)
                if result.chosen is None and result.candidates:
                    result.validate_candidate(0)
                results[fid] = result
            ctx.match_results = results
            _dump(ctx.project.artifact("matches.yaml"),
                  {"results": {fid: r.to_raw() for fid, r in sorted(results.items())}})
            saved_registry = ctx._registry
            ctx._registry = kept
            try:
                stage_reconcile(ctx)
                stage_compile(ctx)
            finally:
                ctx._registry = saved_registry
            return tuple(wf.id for wf in ctx.bundle.workflows)

        def rededuce() -> tuple[str, ...]:
            adjusted = apply_field_model(ctx.require_linked_model(), ctx.twin)
            report = validate_model(adjusted, ctx.ontology)
            if not report.ok:
                raise DeductionError(
                    f"field-adjusted model is invalid: {[f.message for f in report.findings]}")
            ctx.model = adjusted
            stage_deduce(ctx)
            stage_match(ctx, decide=lambda fid, r: 0 if r.candidates else None)
            stage_reconcile(ctx)
            stage_compile(ctx)
            return tuple(wf.id for wf in ctx.bundle.workflows)

        record = agility.dispatch(
            re_entry,
            running_instances=self.running_instances(),
            interrupt=interrupt,
            gather_knowledge=gather,
            rededuce_processes=rededuce,
            rediscover_services=rediscover,
            old_workflows=old,
        )
        ctx.adaptation_records.append(record)
        return record
