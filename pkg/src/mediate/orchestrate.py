"""Workflow compilation and token-game execution over the service bus.

Each sub-process compiles to one executable workflow whose tasks carry a
service binding and one data map per bound operation. Cross-process message
flows become event subscriptions: a workflow subscribes to the completion
event of the workflow that produces its input, which is how the cartography
is coordinated (choreography) while each workflow is orchestrated centrally.

Execution is a token game. The scheduler picks one fireable node at a time
using a per-instance seeded RNG, which exercises arbitrary parallel
interleavings while keeping every run replayable. Instance history is an
append-only event log; interrupting freezes the marking so a resume (or a
regenerated workflow) continues from the same point.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .bus import ServiceBus
from .errors import CompileError, EndpointFault, MapExecutionError, OrchestrationError
from .events import Event, LogicalClock, SOURCE_MONITORING
from .matching import MatchResult, OperationRef, ServiceDescriptor
from .process import (
    EDGE_MESSAGE,
    GW_EXCLUSIVE,
    GW_PARALLEL,
    NODE_CALL,
    NODE_END,
    NODE_GATEWAY,
    NODE_START,
    NODE_TASK,
    ROLE_JOIN,
    ROLE_SPLIT,
    Edge,
    Node,
    ProcessCartography,
    ProcessGraph,
)
from .reconcile import DataMap, RuleBase, execute_map

STATE_RUNNING = "running"
STATE_PAUSED = "paused_on_human_task"
STATE_COMPLETED = "completed"
STATE_FAULTED = "faulted"
STATE_INTERRUPTED = "interrupted"

INPUT_SCOPE = "input"


@dataclass(frozen=True)
class TaskBinding:
    node_id: str
    function_id: str
    objective_id: str
    services: tuple[OperationRef, ...]
    maps: tuple[DataMap, ...]  # aligned with services
    output_fields: tuple[str, ...] = ()  # human-task completion schema


@dataclass(frozen=True)
class Subscription:
    workflow_id: str
    event_type: str
    publisher: str  # workflow id whose completion is awaited


@dataclass(frozen=True)
class ExecutableWorkflow:
    id: str
    name: str
    kind: str
    graph: ProcessGraph
    bindings: dict[str, TaskBinding]
    subscriptions: tuple[Subscription, ...] = ()
    correlation_key: str | None = None


@dataclass(frozen=True)
class CompiledBundle:
    workflows: tuple[ExecutableWorkflow, ...]
    launch_order: tuple[str, ...]

    def workflow(self, wf_id: str) -> ExecutableWorkflow:
        for wf in self.workflows:
            if wf.id == wf_id:
                return wf
        raise OrchestrationError(f"unknown workflow {wf_id!r}")

    def to_raw(self) -> dict[str, Any]:
        from .process import graph_to_raw

        return {
            "launch_order": list(self.launch_order),
            "workflows": [
                {
                    "id": wf.id,
                    "name": wf.name,
                    "kind": wf.kind,
                    "graph": graph_to_raw(wf.graph),
                    "bindings": {
                        nid: {
                            "function": b.function_id,
                            "objective": b.objective_id,
                            "services": [str(s) for s in b.services],
                            "maps": [m.to_raw() for m in b.maps],
                            "output_fields": list(b.output_fields),
                        }
                        for nid, b in sorted(wf.bindings.items())
                    },
                    "subscriptions": [
                        {"event": s.event_type, "publisher": s.publisher}
                        for s in wf.subscriptions
                    ],
                }
                for wf in self.workflows
            ],
        }

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "CompiledBundle":
        from .process import graph_from_raw

        workflows = []
        for w in raw.get("workflows", []):
            bindings = {
                nid: TaskBinding(
                    node_id=nid,
                    function_id=str(b.get("function", "")),
                    objective_id=str(b.get("objective", "")),
                    services=tuple(OperationRef.parse(s) for s in b.get("services", [])),
                    maps=tuple(DataMap.from_raw(m) for m in b.get("maps", [])),
                    output_fields=tuple(b.get("output_fields", [])),
                )
                for nid, b in w.get("bindings", {}).items()
            }
            workflows.append(ExecutableWorkflow(
                id=str(w["id"]), name=str(w.get("name", "")), kind=str(w.get("kind", "")),
                graph=graph_from_raw(w["graph"]), bindings=bindings,
                subscriptions=tuple(
                    Subscription(workflow_id=str(w["id"]), event_type=str(s["event"]),
                                 publisher=str(s["publisher"]))
                    for s in w.get("subscriptions", [])
                ),
            ))
        return cls(workflows=tuple(workflows), launch_order=tuple(raw.get("launch_order", [])))


def compile_workflows(cartography: ProcessCartography,
                      match_results: dict[str, MatchResult],
                      data_maps: dict[str, tuple[DataMap, ...]],
                      assignment: dict[str, list[str]],
                      registry: tuple[ServiceDescriptor, ...] = ()) -> CompiledBundle:
    """Compile the cartography into executable workflows plus subscriptions.

    ``match_results`` is keyed by function id, ``data_maps`` by task node id
    (one map per bound service, in binding order). Unresolved tasks and
    infeasible maps fail compilation naming the offending node.
    """
    objective_of: dict[str, str] = {}
    for oid, fids in assignment.items():
        for fid in fids:
            objective_of[fid] = oid
    services_by_id = {s.id: s for s in registry}

    for sub in cartography.subs:
        for n in sub.graph.tasks():
            fid = n.function_id or ""
            result = match_results.get(fid)
            if result is None or result.chosen is None:
                status = result.status if result is not None else "unmatched"
                raise CompileError(f"task {n.id!r} ({fid}) is not resolved: status {status}")

    workflows: list[ExecutableWorkflow] = []
    proc_to_wf: dict[str, str] = {}
    for sub in cartography.subs:
        bindings: dict[str, TaskBinding] = {}
        for n in sub.graph.tasks():
            fid = n.function_id or ""
            result = match_results[fid]
            maps = data_maps.get(n.id)
            if maps is None or len(maps) != len(result.chosen.services):
                raise CompileError(f"task {n.id!r} has no data maps for its binding")
            for dm in maps:
                if not dm.feasible:
                    raise CompileError(
                        f"task {n.id!r} has an infeasible data map "
                        f"(unmapped: {list(dm.unmapped)})")
            output_fields: list[str] = []
            for ref in result.chosen.services:
                svc = services_by_id.get(ref.service_id)
                if svc is not None:
                    if svc.endpoint.kind == "http" and not svc.endpoint.url:
                        raise CompileError(
                            f"task {n.id!r}: service {svc.id!r} needs an endpoint url")
                    output_fields.extend(fs.name for fs in svc.operation(ref.operation_id).outputs)
            bindings[n.id] = TaskBinding(
                node_id=n.id, function_id=fid,
                objective_id=objective_of.get(fid, ""),
                services=result.chosen.services, maps=tuple(maps),
                output_fields=tuple(output_fields),
            )
        wf_id = f"wf-{sub.graph.id}"
        proc_to_wf[sub.graph.id] = wf_id
        workflows.append(ExecutableWorkflow(
            id=wf_id, name=sub.graph.name, kind=sub.kind,
            graph=sub.graph, bindings=bindings,
        ))

    # choreography: cross-process message flows become completion subscriptions
    calls = {n.id: n.calls for n in cartography.main.nodes if n.kind == NODE_CALL}
    subs_by_wf: dict[str, list[Subscription]] = {wf.id: [] for wf in workflows}
    for e in cartography.main.edges:
        if e.kind != EDGE_MESSAGE:
            continue
        source_proc, target_proc = calls.get(e.source), calls.get(e.target)
        if not source_proc or not target_proc:
            continue
        publisher, subscriber = proc_to_wf[source_proc], proc_to_wf[target_proc]
        sub = Subscription(workflow_id=subscriber, event_type="workflow.completed",
                           publisher=publisher)
        if sub not in subs_by_wf[subscriber]:
            subs_by_wf[subscriber].append(sub)
    workflows = [replace(wf, subscriptions=tuple(subs_by_wf[wf.id])) for wf in workflows]

    launch_order = tuple(
        proc_to_wf[n.calls] for n in cartography.main.nodes
        if n.kind == NODE_CALL and n.calls in proc_to_wf
    )
    return CompiledBundle(workflows=tuple(workflows), launch_order=launch_order)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


@dataclass
class WorkflowInstance:
    id: str
    workflow: ExecutableWorkflow
    state: str = STATE_RUNNING
    marking: set[str] = field(default_factory=set)
    env: dict[str, dict[str, Any]] = field(default_factory=dict)
    history: list[dict[str, Any]] = field(default_factory=list)
    waiting_node: str | None = None
    fault: str | None = None
    seq: int = 0
    rng: random.Random = field(default_factory=lambda: random.Random(0))

    def record(self, kind: str, node: str = "", detail: str = "") -> dict[str, Any]:
        self.seq += 1
        entry = {"seq": self.seq, "kind": kind, "node": node, "detail": detail}
        self.history.append(entry)
        return entry

    def completed_nodes(self) -> list[str]:
        return [h["node"] for h in self.history if h["kind"] == "node.completed"]


class Orchestrator:
    """Runs workflow instances over a bus; emits monitoring events."""

    def __init__(self, bus: ServiceBus, rules: RuleBase, *, event_sink=None,
                 seed: int = 0, store_dir: str | Path | None = None):
        self.bus = bus
        self.rules = rules
        self.event_sink = event_sink
        self.seed = seed
        self.store_dir = Path(store_dir) if store_dir else None
        self.instances: dict[str, WorkflowInstance] = {}
        self._clock = LogicalClock()
        self._counter = 0

    # -- events -----------------------------------------------------------------

    def _emit(self, type_: str, subject: str, attributes: dict[str, Any]) -> None:
        ts = self._clock.tick("orchestrator")
        event = Event(
            id=f"mon-{int(ts)}", source=SOURCE_MONITORING, type=type_,
            subject=subject, attributes=attributes, timestamp=ts,
        )
        if self.event_sink is not None:
            self.event_sink(event)

    def _persist(self, inst: WorkflowInstance, entry: dict[str, Any]) -> None:
        if self.store_dir is None:
            return
        self.store_dir.mkdir(parents=True, exist_ok=True)
        with open(self.store_dir / f"{inst.id}.log", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        snapshot = {
            "id": inst.id,
            "workflow": inst.workflow.id,
            "state": inst.state,
            "marking": sorted(inst.marking),
            "env": {k: dict(v) for k, v in inst.env.items()},
            "waiting_node": inst.waiting_node,
            "fault": inst.fault,
            "seq": inst.seq,
            "history": list(inst.history),
        }
        (self.store_dir / f"{inst.id}.yaml").write_text(
            json.dumps(snapshot, sort_keys=True), encoding="utf-8")

    def load_instances(self, bundle: CompiledBundle) -> int:
        """Rehydrate persisted instances so a fresh process can act on them."""
        if self.store_dir is None or not self.store_dir.exists():
            return 0
        loaded = 0
        workflows = {wf.id: wf for wf in bundle.workflows}
        for path in sorted(self.store_dir.glob("*.yaml")):
            raw = json.loads(path.read_text(encoding="utf-8"))
            wf = workflows.get(raw.get("workflow"))
            if wf is None or raw["id"] in self.instances:
                continue
            inst = WorkflowInstance(
                id=raw["id"], workflow=wf, state=raw["state"],
                marking=set(raw.get("marking", [])),
                env={k: dict(v) for k, v in raw.get("env", {}).items()},
                history=list(raw.get("history", [])),
                waiting_node=raw.get("waiting_node"), fault=raw.get("fault"),
                seq=int(raw.get("seq", 0)),
                rng=random.Random((self.seed, raw["id"]).__hash__()),
            )
            self.instances[inst.id] = inst
            self._counter += 1
            loaded += 1
        return loaded

    def _note(self, inst: WorkflowInstance, kind: str, node: str = "", detail: str = "") -> None:
        self._persist(inst, inst.record(kind, node, detail))

    # -- lifecycle ----------------------------------------------------------------

    def start(self, wf: ExecutableWorkflow, input_payload: dict[str, Any],
              env_seed: dict[str, dict[str, Any]] | None = None,
              instance_id: str | None = None) -> WorkflowInstance:
        for binding in wf.bindings.values():
            for ref in binding.services:
                if not self.bus.is_registered(ref.service_id):
                    raise OrchestrationError(
                        f"endpoint {ref.service_id!r} not registered before instance start")
        self._counter += 1
        iid = instance_id or f"{wf.id}-{self._counter}"
        inst = WorkflowInstance(id=iid, workflow=wf, rng=random.Random((self.seed, iid).__hash__()))
        inst.env[INPUT_SCOPE] = dict(input_payload)
        for scope, payload in (env_seed or {}).items():
            inst.env.setdefault(scope, {}).update(payload)
        start = wf.graph.start_node()
        inst.marking = {e.id for e in wf.graph.outgoing(start.id)}
        self.instances[iid] = inst
        self._note(inst, "workflow.started")
        self._emit("workflow.started", iid, {"workflow": wf.id})
        self._run_loop(inst)
        return inst

    def _run_loop(self, inst: WorkflowInstance) -> None:
        g = inst.workflow.graph
        while inst.state == STATE_RUNNING:
            fireable = self._fireable(inst)
            if not fireable:
                if inst.marking:
                    inst.state = STATE_FAULTED
                    inst.fault = "deadlock: no fireable node with tokens remaining"
                    self._note(inst, "workflow.faulted", detail=inst.fault)
                    self._emit("workflow.faulted", inst.id, {"workflow": inst.workflow.id})
                    return
                inst.state = STATE_COMPLETED
                self._note(inst, "workflow.completed")
                self._emit("workflow.completed", inst.id, {
                    "workflow": inst.workflow.id,
                    "env": {k: dict(v) for k, v in inst.env.items()},
                })
                return
            node_id = fireable[inst.rng.randrange(len(fireable))]
            self._fire(inst, g.node_map()[node_id])

    def _fireable(self, inst: WorkflowInstance) -> list[str]:
        g = inst.workflow.graph
        out: list[str] = []
        for n in g.nodes:
            if n.kind == NODE_START:
                continue
            ins = g.incoming(n.id)
            if not ins:
                continue
            if n.kind == NODE_GATEWAY and n.gateway_kind == GW_PARALLEL and n.role == ROLE_JOIN:
                if all(e.id in inst.marking for e in ins):
                    out.append(n.id)
            elif any(e.id in inst.marking for e in ins):
                out.append(n.id)
        return sorted(out)

    def _consume(self, inst: WorkflowInstance, node: Node) -> None:
        g = inst.workflow.graph
        ins = g.incoming(node.id)
        if node.kind == NODE_GATEWAY and node.gateway_kind == GW_PARALLEL and node.role == ROLE_JOIN:
            for e in ins:
                inst.marking.discard(e.id)
            return
        for e in ins:
            if e.id in inst.marking:
                inst.marking.discard(e.id)
                return

    def _produce_all(self, inst: WorkflowInstance, node_id: str) -> None:
        for e in inst.workflow.graph.outgoing(node_id):
            inst.marking.add(e.id)

    def _fire(self, inst: WorkflowInstance, node: Node) -> None:
        g = inst.workflow.graph
        if node.kind == NODE_END:
            self._consume(inst, node)
            self._note(inst, "node.completed", node.id)
            return
        if node.kind == NODE_GATEWAY:
            self._consume(inst, node)
            if node.role == ROLE_SPLIT and node.gateway_kind == GW_EXCLUSIVE:
                chosen = self._route_exclusive(inst, node)
                inst.marking.add(chosen.id)
            else:
                self._produce_all(inst, node.id)
            self._note(inst, "node.completed", node.id)
            return
        if node.kind in (NODE_TASK, NODE_CALL):
            binding = inst.workflow.bindings.get(node.id)
            if binding is None:
                # pass-through node (e.g. a call in a stand-alone graph)
                self._consume(inst, node)
                self._produce_all(inst, node.id)
                self._note(inst, "node.completed", node.id)
                return
            self._consume(inst, node)
            self._invoke_task(inst, node, binding)
            return
        raise OrchestrationError(f"cannot fire node kind {node.kind!r}")

    def _route_exclusive(self, inst: WorkflowInstance, node: Node) -> Edge:
        g = inst.workflow.graph
        default_edge: Edge | None = None
        for e in g.outgoing(node.id):
            if e.default:
                default_edge = e
            elif e.condition and _eval_condition(e.condition, inst.env):
                return e
        if default_edge is None:
            raise OrchestrationError(f"exclusive split {node.id!r}: no condition true and no default edge")
        return default_edge

    def _invoke_task(self, inst: WorkflowInstance, node: Node, binding: TaskBinding) -> None:
        self._note(inst, "node.started", node.id)
        self._emit("task.started", node.id, {
            "instance": inst.id, "workflow": inst.workflow.id,
            "function": binding.function_id, "objective": binding.objective_id,
        })
        for ref, data_map in zip(binding.services, binding.maps):
            if self.bus.is_human(ref.service_id):
                inst.state = STATE_PAUSED
                inst.waiting_node = node.id
                self._note(inst, "node.waiting", node.id, detail=str(ref))
                self._emit("task.waiting", node.id, {
                    "instance": inst.id, "workflow": inst.workflow.id,
                    "function": binding.function_id, "service": ref.service_id,
                })
                return
            try:
                payload = execute_map(data_map, inst.env, self.rules)
                result = self.bus.invoke(ref, payload)
            except (EndpointFault, MapExecutionError) as exc:
                inst.state = STATE_FAULTED
                inst.fault = f"{node.id}: {exc}"
                self._note(inst, "node.faulted", node.id, detail=str(exc))
                self._emit("task.faulted", node.id, {
                    "instance": inst.id, "workflow": inst.workflow.id,
                    "function": binding.function_id, "service": ref.service_id,
                    "error": str(exc),
                })
                self._emit("workflow.faulted", inst.id, {"workflow": inst.workflow.id})
                return
            member_scope = f"{node.id}@{ref.service_id}"
            inst.env[member_scope] = dict(result)
            inst.env.setdefault(node.id, {}).update(result)
        self._complete_node(inst, node, binding)

    def _complete_node(self, inst: WorkflowInstance, node: Node, binding: TaskBinding) -> None:
        self._produce_all(inst, node.id)
        self._note(inst, "node.completed", node.id)
        self._emit("task.completed", node.id, {
            "instance": inst.id, "workflow": inst.workflow.id,
            "function": binding.function_id, "objective": binding.objective_id,
            "services": [str(s) for s in binding.services],
        })

    # -- control -------------------------------------------------------------------

    def get(self, instance_id: str) -> WorkflowInstance:
        inst = self.instances.get(instance_id)
        if inst is None:
            raise OrchestrationError(f"unknown instance {instance_id!r}")
        return inst

    def interrupt(self, instance_id: str) -> WorkflowInstance:
        inst = self.get(instance_id)
        if inst.state not in (STATE_RUNNING, STATE_PAUSED):
            raise OrchestrationError(
                f"instance {instance_id!r} is {inst.state}; only running or paused instances "
                "can be interrupted")
        inst.state = STATE_INTERRUPTED
        self._note(inst, "workflow.interrupted")
        self._emit("workflow.interrupted", inst.id, {"workflow": inst.workflow.id})
        return inst

    def resume(self, instance_id: str) -> WorkflowInstance:
        inst = self.get(instance_id)
        if inst.state != STATE_INTERRUPTED:
            raise OrchestrationError(f"instance {instance_id!r} is {inst.state}, not interrupted")
        inst.state = STATE_PAUSED if inst.waiting_node else STATE_RUNNING
        self._note(inst, "workflow.resumed")
        if inst.state == STATE_RUNNING:
            self._run_loop(inst)
        return inst

    def complete_human_task(self, instance_id: str, node_id: str,
                            payload: dict[str, Any]) -> WorkflowInstance:
        inst = self.get(instance_id)
        if inst.state != STATE_PAUSED or inst.waiting_node != node_id:
            raise OrchestrationError(
                f"instance {instance_id!r} is not paused on node {node_id!r}")
        binding = inst.workflow.bindings[node_id]
        missing = [f for f in binding.output_fields if f not in payload]
        if missing:
            raise OrchestrationError(
                f"payload for {node_id!r} is missing required fields: {missing}")
        inst.env[node_id] = dict(payload)
        inst.waiting_node = None
        inst.state = STATE_RUNNING
        node = inst.workflow.graph.node_map()[node_id]
        self._complete_node(inst, node, binding)
        self._run_loop(inst)
        return inst

    # -- choreography -----------------------------------------------------------------

    def run_cartography(self, bundle: CompiledBundle,
                        input_payload: dict[str, Any]) -> "CartographyCoordinator":
        """Launch workflows respecting their completion subscriptions."""
        coordinator = CartographyCoordinator(self, bundle, input_payload)
        coordinator.pump()
        return coordinator


class CartographyCoordinator:
    """Starts each workflow once every publisher it subscribes to completed.

    ``pump`` is re-entrant: after a paused instance finishes (human task
    completed later), calling it again starts the now-unblocked subscribers.
    """

    def __init__(self, orchestrator: Orchestrator, bundle: CompiledBundle,
                 input_payload: dict[str, Any]):
        self.orchestrator = orchestrator
        self.bundle = bundle
        self.input_payload = dict(input_payload)
        self.instances: dict[str, WorkflowInstance] = {}
        self.event_log: list[tuple[str, str]] = []
        self._completed_envs: dict[str, dict[str, dict[str, Any]]] = {}

    def pump(self) -> None:
        # pick up instances that completed since the last pump
        for wf_id, inst in self.instances.items():
            if inst.state == STATE_COMPLETED and wf_id not in self._completed_envs:
                self._completed_envs[wf_id] = {k: dict(v) for k, v in inst.env.items()}
                self.event_log.append(("workflow.completed", wf_id))
        progress = True
        while progress:
            progress = False
            for wf_id in self.bundle.launch_order:
                if wf_id in self.instances:
                    continue
                wf = self.bundle.workflow(wf_id)
                if any(s.publisher not in self._completed_envs for s in wf.subscriptions):
                    continue
                env_seed: dict[str, dict[str, Any]] = {}
                for s in wf.subscriptions:
                    for scope, payload in self._completed_envs[s.publisher].items():
                        env_seed.setdefault(scope, {}).update(payload)
                    self.event_log.append(("workflow.start-on-subscription", wf_id))
                self.event_log.append(("workflow.started", wf_id))
                inst = self.orchestrator.start(wf, self.input_payload, env_seed=env_seed)
                self.instances[wf_id] = inst
                if inst.state == STATE_COMPLETED:
                    self._completed_envs[wf_id] = {k: dict(v) for k, v in inst.env.items()}
                    self.event_log.append(("workflow.completed", wf_id))
                progress = True

    @property
    def all_completed(self) -> bool:
        started_all = set(self.bundle.launch_order) <= set(self.instances)
        return started_all and all(
            i.state == STATE_COMPLETED for i in self.instances.values())

    def states(self) -> dict[str, str]:
        return {wf_id: inst.state for wf_id, inst in self.instances.items()}


_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
}


def _eval_condition(expr: str, env: dict[str, dict[str, Any]]) -> bool:
    """Evaluate a comparison of the form ``scope.field OP literal``.

    Empty or unparsable expressions are condition stubs and evaluate false.
    """
    text = expr.strip()
    if not text:
        return False
    for op in ("==", "!=", ">=", "<=", ">", "<"):
        if op in text:
            left, _, right = text.partition(op)
            scope, _, name = left.strip().rpartition(".")
            payload = env.get(scope.strip(), {})
            if name not in payload:
                return False
            actual = payload[name]
            literal: Any = right.strip().strip("'\"")
            try:
                literal = float(literal) if "." in literal else int(literal)
                actual = float(actual)
            except (TypeError, ValueError):
                actual = str(actual)
                literal = str(literal)
            try:
                return bool(_OPS[op](actual, literal))
            except TypeError:
                return False
    return False


# ---------------------------------------------------------------------------
# Optional interchange export (executable-process XML subset)
# ---------------------------------------------------------------------------


def export_bpel(wf: ExecutableWorkflow) -> bytes:
    """Best-effort export of a compiled workflow to a BPEL-like subset."""
    from xml.sax.saxutils import quoteattr

    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    lines.append(f'<process name={quoteattr(wf.id)} xmlns="urn:mediate:bpel-subset:1">')
    lines.append("  <sequence>")
    order = _topological_tasks(wf.graph)
    for node_id in order:
        binding = wf.bindings.get(node_id)
        if binding is None:
            continue
        for ref in binding.services:
            lines.append(
                f"    <invoke name={quoteattr(node_id)} partnerLink={quoteattr(ref.service_id)}"
                f" operation={quoteattr(ref.operation_id)}/>")
    lines.append("  </sequence>")
    lines.append("</process>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _topological_tasks(g: ProcessGraph) -> list[str]:
    indeg: dict[str, int] = {n.id: 0 for n in g.nodes}
    for e in g.sequence_edges():
        indeg[e.target] += 1
    ready = sorted(nid for nid, d in indeg.items() if d == 0)
    out: list[str] = []
    node_map = g.node_map()
    while ready:
        cur = ready.pop(0)
        if node_map[cur].kind == NODE_TASK:
            out.append(cur)
        for e in g.outgoing(cur):
            indeg[e.target] -= 1
            if indeg[e.target] == 0:
                ready.append(e.target)
        ready.sort()
    return out
