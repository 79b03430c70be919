import pytest

from mediate.bus import ServiceBus
from mediate.errors import CompileError, OrchestrationError
from mediate.matching import Binding, MatchResult, OperationRef
from mediate.orchestrate import (
    CompiledBundle,
    ExecutableWorkflow,
    Orchestrator,
    TaskBinding,
    compile_workflows,
    export_bpel,
)
from mediate.process import (
    Edge,
    Node,
    ProcessGraph,
)
from mediate.reconcile import DataMap, RuleBase

_EMPTY_RULES = RuleBase([])


def _graph_chain(proc_id: str, tasks: list[str]) -> ProcessGraph:
    nodes = [Node(id=f"{proc_id}-start", kind="start")]
    edges = []
    prev = f"{proc_id}-start"
    for t in tasks:
        nodes.append(Node(id=t, kind="task", name=t, function_id=t.removeprefix("t-")))
        edges.append(Edge(prev, t))
        prev = t
    nodes.append(Node(id=f"{proc_id}-end", kind="end"))
    edges.append(Edge(prev, f"{proc_id}-end"))
    return ProcessGraph(id=proc_id, name=proc_id, nodes=tuple(nodes), edges=tuple(edges))


def _graph_parallel(proc_id: str) -> ProcessGraph:
    n = [
        Node(id="s", kind="start"),
        Node(id="fork", kind="gateway", gateway_kind="parallel", role="split", pair="join"),
        Node(id="t-a", kind="task", function_id="a"),
        Node(id="t-b", kind="task", function_id="b"),
        Node(id="join", kind="gateway", gateway_kind="parallel", role="join", pair="fork"),
        Node(id="t-c", kind="task", function_id="c"),
        Node(id="e", kind="end"),
    ]
    e = [Edge("s", "fork"), Edge("fork", "t-a"), Edge("fork", "t-b"),
         Edge("t-a", "join"), Edge("t-b", "join"), Edge("join", "t-c"), Edge("t-c", "e")]
    return ProcessGraph(id=proc_id, name=proc_id, nodes=tuple(n), edges=tuple(e))


def _binding(node_id: str, service: str, output_fields=()) -> TaskBinding:
    ref = OperationRef(service, "main")
    return TaskBinding(
        node_id=node_id, function_id=node_id.removeprefix("t-"), objective_id="o-1",
        services=(ref,), maps=(DataMap(target=ref, assignments=()),),
        output_fields=tuple(output_fields),
    )


def _wf(graph: ProcessGraph, bindings: dict) -> ExecutableWorkflow:
    return ExecutableWorkflow(id=f"wf-{graph.id}", name=graph.id, kind="operation",
                              graph=graph, bindings=bindings)


def _bus(*services, fault=(), human=()):
    bus = ServiceBus()
    for s in services:
        if s in human:
            bus.register_human(s)
        else:
            bus.register_mock(s, {"tag": s}, fault=s in fault)
    return bus


def test_mock_chain_completes_in_order():
    g = _graph_chain("p", ["t-1", "t-2", "t-3"])
    wf = _wf(g, {t: _binding(t, f"svc-{t}") for t in ("t-1", "t-2", "t-3")})
    bus = _bus("svc-t-1", "svc-t-2", "svc-t-3")
    orch = Orchestrator(bus, _EMPTY_RULES)
    inst = orch.start(wf, {})
    assert inst.state == "completed"
    assert [i.service_id for i in bus.invocations] == ["svc-t-1", "svc-t-2", "svc-t-3"]
    # soundness: no tokens left, env carries every task's output
    assert inst.marking == set()
    assert inst.env["t-2"] == {"tag": "svc-t-2"}


def test_unregistered_endpoint_blocks_start():
    g = _graph_chain("p", ["t-1"])
    wf = _wf(g, {"t-1": _binding("t-1", "svc-ghost")})
    orch = Orchestrator(ServiceBus(), _EMPTY_RULES)
    with pytest.raises(OrchestrationError):
        orch.start(wf, {})


def test_parallel_join_waits_for_both_branches():
    g = _graph_parallel("p")
    wf = _wf(g, {t: _binding(t, f"svc-{t}") for t in ("t-a", "t-b", "t-c")})
    for seed in range(100):
        bus = _bus("svc-t-a", "svc-t-b", "svc-t-c")
        orch = Orchestrator(bus, _EMPTY_RULES, seed=seed)
        inst = orch.start(wf, {})
        assert inst.state == "completed"
        order = [i.service_id for i in bus.invocations]
        assert sorted(order[:2]) == ["svc-t-a", "svc-t-b"]
        assert order[2] == "svc-t-c"


def test_both_parallel_interleavings_occur_across_seeds():
    g = _graph_parallel("p")
    wf = _wf(g, {t: _binding(t, f"svc-{t}") for t in ("t-a", "t-b", "t-c")})
    firsts = set()
    for seed in range(20):
        bus = _bus("svc-t-a", "svc-t-b", "svc-t-c")
        Orchestrator(bus, _EMPTY_RULES, seed=seed).start(wf, {})
        firsts.add(bus.invocations[0].service_id)
    assert firsts == {"svc-t-a", "svc-t-b"}


def test_faulting_mock_faults_instance_and_isolates_branches():
    g = _graph_parallel("p")
    wf = _wf(g, {t: _binding(t, f"svc-{t}") for t in ("t-a", "t-b", "t-c")})
    events = []
    bus = _bus("svc-t-a", "svc-t-b", "svc-t-c", fault={"svc-t-b"})
    orch = Orchestrator(bus, _EMPTY_RULES, event_sink=events.append, seed=3)
    inst = orch.start(wf, {})
    assert inst.state == "faulted"
    fault_events = [e for e in events if e.type == "task.faulted"]
    assert fault_events and fault_events[0].subject == "t-b"
    # the other branch's variable slice is untouched by the fault
    if "t-a" in inst.env:
        assert inst.env["t-a"] == {"tag": "svc-t-a"}
    assert "t-b" not in inst.env


def test_human_task_pauses_then_completes():
    g = _graph_chain("p", ["t-1", "t-2"])
    wf = _wf(g, {
        "t-1": _binding("t-1", "svc-human", output_fields=("approved",)),
        "t-2": _binding("t-2", "svc-t-2"),
    })
    bus = _bus("svc-human", "svc-t-2", human={"svc-human"})
    orch = Orchestrator(bus, _EMPTY_RULES)
    inst = orch.start(wf, {})
    assert inst.state == "paused_on_human_task"
    assert inst.waiting_node == "t-1"
    # wrong node rejected
    with pytest.raises(OrchestrationError):
        orch.complete_human_task(inst.id, "t-2", {"approved": True})
    # missing required field rejected, still paused
    with pytest.raises(OrchestrationError):
        orch.complete_human_task(inst.id, "t-1", {})
    assert inst.state == "paused_on_human_task"
    orch.complete_human_task(inst.id, "t-1", {"approved": True})
    assert inst.state == "completed"
    assert inst.env["t-1"] == {"approved": True}


def test_interrupt_freezes_and_resume_matches_uninterrupted_run():
    g = _graph_chain("p", ["t-1", "t-2", "t-3"])
    make_wf = lambda human: _wf(g, {
        "t-1": _binding("t-1", "svc-t-1"),
        "t-2": _binding("t-2", "svc-human" if human else "svc-t-2",
                        output_fields=("tag",)),
        "t-3": _binding("t-3", "svc-t-3"),
    })
    # baseline: no interruption, human task completed immediately
    bus1 = _bus("svc-t-1", "svc-t-3", "svc-human", human={"svc-human"})
    orch1 = Orchestrator(bus1, _EMPTY_RULES, seed=5)
    inst1 = orch1.start(make_wf(True), {})
    orch1.complete_human_task(inst1.id, "t-2", {"tag": "human"})
    # interrupted run: pause, interrupt, resume, then complete
    bus2 = _bus("svc-t-1", "svc-t-3", "svc-human", human={"svc-human"})
    orch2 = Orchestrator(bus2, _EMPTY_RULES, seed=5)
    inst2 = orch2.start(make_wf(True), {})
    invocations_at_pause = len(bus2.invocations)
    orch2.interrupt(inst2.id)
    assert inst2.state == "interrupted"
    assert len(bus2.invocations) == invocations_at_pause  # frozen: nothing ran
    orch2.resume(inst2.id)
    assert inst2.state == "paused_on_human_task"  # still waiting on the human
    orch2.complete_human_task(inst2.id, "t-2", {"tag": "human"})
    assert inst2.state == "completed"
    assert [i.service_id for i in bus2.invocations] == [i.service_id for i in bus1.invocations]
    assert [h["kind"] for h in inst2.history if h["kind"].startswith("node")] == \
           [h["kind"] for h in inst1.history if h["kind"].startswith("node")]


def test_interrupt_completed_instance_is_an_error():
    g = _graph_chain("p", ["t-1"])
    wf = _wf(g, {"t-1": _binding("t-1", "svc-t-1")})
    orch = Orchestrator(_bus("svc-t-1"), _EMPTY_RULES)
    inst = orch.start(wf, {})
    with pytest.raises(OrchestrationError):
        orch.interrupt(inst.id)
    with pytest.raises(OrchestrationError):
        orch.interrupt("no-such-instance")


def test_exclusive_route_by_condition_then_default():
    n = [
        Node(id="s", kind="start"),
        Node(id="x", kind="gateway", gateway_kind="exclusive", role="split", pair="xj"),
        Node(id="t-hi", kind="task", function_id="hi"),
        Node(id="t-lo", kind="task", function_id="lo"),
        Node(id="xj", kind="gateway", gateway_kind="exclusive", role="join", pair="x"),
        Node(id="e", kind="end"),
    ]
    e = [
        Edge("s", "x"),
        Edge("x", "t-lo", default=True),
        Edge("x", "t-hi", condition="input.quantity > 5"),
        Edge("t-hi", "xj"), Edge("t-lo", "xj"), Edge("xj", "e"),
    ]
    g = ProcessGraph(id="p", name="p", nodes=tuple(n), edges=tuple(e))
    wf = _wf(g, {"t-hi": _binding("t-hi", "svc-hi"), "t-lo": _binding("t-lo", "svc-lo")})
    bus = _bus("svc-hi", "svc-lo")
    orch = Orchestrator(bus, _EMPTY_RULES)
    orch.start(wf, {"quantity": 9})
    assert [i.service_id for i in bus.invocations] == ["svc-hi"]
    bus2 = _bus("svc-hi", "svc-lo")
    Orchestrator(bus2, _EMPTY_RULES).start(wf, {"quantity": 2})
    assert [i.service_id for i in bus2.invocations] == ["svc-lo"]


# -- compile -----------------------------------------------------------------------


def _match_result(fid: str, service: str, status="auto") -> MatchResult:
    binding = Binding(services=(OperationRef(service, "main"),), score=1.0)
    return MatchResult(activity_id=fid, candidates=(binding,),
                       chosen=binding if status == "auto" else None, status=status)


def test_compile_requires_resolved_tasks(scenario_dir):
    from mediate.pipeline import PipelineContext, stage_deduce
    from mediate.project import Project

    ctx = PipelineContext(Project.load(scenario_dir / "project.yaml"))
    stage_deduce(ctx)
    carto = ctx.cartography
    results = {n.function_id: _match_result(n.function_id, f"svc-{n.function_id}")
               for s in carto.subs for n in s.graph.tasks()}
    results["f-ship"].chosen = None
    results["f-ship"].status = "awaiting_validation"
    with pytest.raises(CompileError) as err:
        compile_workflows(carto, results, {}, ctx.assignment)
    assert "t-f-ship" in str(err.value)


def test_compiled_subscriptions_follow_cross_kind_orders(scenario_dir):
    from mediate.pipeline import PipelineContext, run_pipeline
    from mediate.project import Project

    ctx = run_pipeline(Project.load(scenario_dir / "project.yaml"),
                       stages=("model", "deduce", "match", "reconcile", "compile"))
    bundle = ctx.bundle
    by_id = {wf.id: wf for wf in bundle.workflows}
    operation = by_id["wf-proc-sn-delivery-operation"]
    assert [s.publisher for s in operation.subscriptions] == ["wf-proc-sn-delivery-strategy"]
    support = by_id["wf-proc-sn-delivery-support"]
    assert [s.publisher for s in support.subscriptions] == ["wf-proc-sn-delivery-operation"]
    # round-trips through its artifact form
    assert CompiledBundle.from_raw(bundle.to_raw()).to_raw() == bundle.to_raw()


def test_choreography_subscriber_never_starts_early(scenario_dir):
    from mediate.pipeline import PipelineContext, run_pipeline
    from mediate.project import Project

    ctx = run_pipeline(Project.load(scenario_dir / "project.yaml"),
                       input_payload={"order_id": "ORD-1", "quantity": 2})
    log = ctx.reports["run"].details["event_log"]
    position = {tuple(entry): i for i, entry in enumerate(log)}
    completed_strategy = position[("workflow.completed", "wf-proc-sn-delivery-strategy")]
    started_operation = position[("workflow.started", "wf-proc-sn-delivery-operation")]
    assert completed_strategy < started_operation


def test_bpel_export_is_deterministic_and_well_formed():
    import xml.etree.ElementTree as ET

    g = _graph_chain("p", ["t-1", "t-2"])
    wf = _wf(g, {t: _binding(t, f"svc-{t}") for t in ("t-1", "t-2")})
    data = export_bpel(wf)
    assert data == export_bpel(wf)
    root = ET.fromstring(data)
    assert root.tag.endswith("process")
    invokes = [el for el in root.iter() if el.tag.endswith("invoke")]
    assert [i.get("partnerLink") for i in invokes] == ["svc-t-1", "svc-t-2"]
