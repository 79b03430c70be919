"""Process cartography extraction.

Sequences come from message dependencies between selected functions:
whenever one function produces a message another consumes, the producer
precedes the consumer. Order-free tasks are bracketed by parallel gateways;
functions selected for the same objective that yield the same outputs are
interchangeable and become exclusive branches with condition stubs. One
sub-process is emitted per (sub-network, objective kind); the main process
calls them in strategy, operation, support order with cross-process message
flows taken from the deduced orders.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import CyclicDependencyError, DeductionError
from ..model import KIND_OPERATION, KIND_STRATEGY, KIND_SUPPORT, CollaborationModel
from ..ontology import InstanceStore
from ..process import (
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
    SubProcess,
    check_graph,
)

_KIND_RANK = {KIND_STRATEGY: 0, KIND_OPERATION: 1, KIND_SUPPORT: 2}


@dataclass(frozen=True)
class _Unit:
    """One slot in the dependency graph: a task or a group of alternatives."""

    id: str
    objective_id: str
    functions: tuple[str, ...]  # >1 means exclusive alternatives

    @property
    def exclusive(self) -> bool:
        return len(self.functions) > 1


def _build_units(assignment: dict[str, list[str]], m: CollaborationModel) -> list[_Unit]:
    fmap = m.function_map()
    units: list[_Unit] = []
    for objective in m.objectives:
        fids = assignment.get(objective.id, [])
        if not fids:
            continue
        by_signature: dict[tuple[str, ...], list[str]] = {}
        for fid in fids:
            sig = tuple(sorted(fmap[fid].outputs))
            by_signature.setdefault(sig, []).append(fid)
        for sig in sorted(by_signature):
            group = by_signature[sig]
            units.append(_Unit(
                id=f"u-{group[0]}",
                objective_id=objective.id,
                functions=tuple(group),
            ))
    return units


def _unit_dependencies(units: list[_Unit], m: CollaborationModel) -> dict[str, set[str]]:
    fmap = m.function_map()
    produces: dict[str, set[str]] = {}
    consumes: dict[str, set[str]] = {}
    for u in units:
        produces[u.id] = {mid for fid in u.functions for mid in fmap[fid].outputs}
        consumes[u.id] = {mid for fid in u.functions for mid in fmap[fid].inputs}
    deps: dict[str, set[str]] = {u.id: set() for u in units}
    for a in units:
        for b in units:
            if a.id == b.id:
                continue
            if produces[a.id] & consumes[b.id]:
                deps[b.id].add(a.id)
    return deps


def _check_acyclic(deps: dict[str, set[str]], units: list[_Unit]) -> list[str]:
    """Topological order of unit ids; raises with the cycle when one exists."""
    indeg = {uid: len(ps) for uid, ps in deps.items()}
    order: list[str] = []
    ready = sorted(uid for uid, d in indeg.items() if d == 0)
    succ: dict[str, list[str]] = {uid: [] for uid in deps}
    for uid, ps in deps.items():
        for p in ps:
            succ[p].append(uid)
    while ready:
        cur = ready.pop(0)
        order.append(cur)
        for nxt in sorted(succ[cur]):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
        ready.sort()
    if len(order) != len(units):
        remaining = sorted(uid for uid in deps if uid not in order)
        cycle = _find_cycle(deps, remaining)
        raise CyclicDependencyError(cycle)
    return order


def _find_cycle(deps: dict[str, set[str]], remaining: list[str]) -> list[str]:
    node = remaining[0]
    path = [node]
    seen = {node}
    while True:
        preds = sorted(p for p in deps[path[-1]] if p in remaining)
        nxt = preds[0]
        if nxt in seen:
            return path[path.index(nxt):] + [nxt] if nxt in path else path + [nxt]
        path.append(nxt)
        seen.add(nxt)


def _transitive_reduction(deps: dict[str, set[str]], order: list[str]) -> dict[str, set[str]]:
    ancestors: dict[str, set[str]] = {}
    reduced: dict[str, set[str]] = {uid: set() for uid in deps}
    for uid in order:
        direct = deps[uid]
        indirect: set[str] = set()
        for d in direct:
            indirect |= ancestors.get(d, set())
        reduced[uid] = {d for d in direct if d not in indirect}
        ancestors[uid] = set(direct)
        for d in direct:
            ancestors[uid] |= ancestors.get(d, set())
    return reduced


def _message_trace(unit_a: _Unit, unit_b: _Unit, m: CollaborationModel) -> str:
    fmap = m.function_map()
    out = {mid for fid in unit_a.functions for mid in fmap[fid].outputs}
    inn = {mid for fid in unit_b.functions for mid in fmap[fid].inputs}
    return "message:" + "+".join(sorted(out & inn))


def _build_sub_process(proc_id: str, name: str, units: list[_Unit],
                       m: CollaborationModel) -> ProcessGraph:
    deps = _unit_dependencies(units, m)
    order = _check_acyclic(deps, units)
    reduced = _transitive_reduction(deps, order)
    unit_by_id = {u.id: u for u in units}
    owner = {fid: m.owner_of(fid) for _, f in m.functions() for fid in [f.id]}
    fmap = m.function_map()

    nodes: list[Node] = [Node(id=f"{proc_id}-start", kind=NODE_START)]
    edges: list[Edge] = []
    entry: dict[str, str] = {}
    exit_: dict[str, str] = {}

    for uid in order:
        unit = unit_by_id[uid]
        if not unit.exclusive:
            fid = unit.functions[0]
            node_id = f"t-{fid}"
            nodes.append(Node(id=node_id, kind=NODE_TASK, name=fmap[fid].name,
                              function_id=fid, lane=owner.get(fid)))
            entry[uid] = exit_[uid] = node_id
        else:
            split_id, join_id = f"x-{uid}-s", f"x-{uid}-j"
            nodes.append(Node(id=split_id, kind=NODE_GATEWAY, gateway_kind=GW_EXCLUSIVE,
                              role=ROLE_SPLIT, pair=join_id))
            branch_ids = []
            for fid in unit.functions:
                node_id = f"t-{fid}"
                nodes.append(Node(id=node_id, kind=NODE_TASK, name=fmap[fid].name,
                                  function_id=fid, lane=owner.get(fid)))
                branch_ids.append(node_id)
            nodes.append(Node(id=join_id, kind=NODE_GATEWAY, gateway_kind=GW_EXCLUSIVE,
                              role=ROLE_JOIN, pair=split_id))
            trace = f"bracket:exclusive:{unit.objective_id}"
            for i, node_id in enumerate(branch_ids):
                edges.append(Edge(split_id, node_id, condition=None if i == 0 else "",
                                  default=i == 0, trace=trace))
                edges.append(Edge(node_id, join_id, trace=trace))
            entry[uid], exit_[uid] = split_id, join_id

    # fan-in / fan-out gateways around units
    successors: dict[str, list[str]] = {uid: [] for uid in reduced}
    for uid, ps in reduced.items():
        for p in ps:
            successors[p].append(uid)
    source_point: dict[str, str] = {}
    for uid in order:
        outs = sorted(successors[uid])
        if len(outs) > 1:
            split_id = f"p-{uid}-out"
            nodes.append(Node(id=split_id, kind=NODE_GATEWAY, gateway_kind=GW_PARALLEL,
                              role=ROLE_SPLIT))
            edges.append(Edge(exit_[uid], split_id, trace="bracket:parallel"))
            source_point[uid] = split_id
        else:
            source_point[uid] = exit_[uid]
    target_point: dict[str, str] = {}
    for uid in order:
        ins = sorted(reduced[uid])
        if len(ins) > 1:
            join_id = f"p-{uid}-in"
            nodes.append(Node(id=join_id, kind=NODE_GATEWAY, gateway_kind=GW_PARALLEL,
                              role=ROLE_JOIN))
            edges.append(Edge(join_id, entry[uid], trace="bracket:parallel"))
            target_point[uid] = join_id
        else:
            target_point[uid] = entry[uid]

    for uid in order:
        for dep in sorted(reduced[uid]):
            edges.append(Edge(source_point[dep], target_point[uid],
                              trace=_message_trace(unit_by_id[dep], unit_by_id[uid], m)))

    minimal = [uid for uid in order if not reduced[uid]]
    maximal = [uid for uid in order if not successors[uid]]
    start_id = f"{proc_id}-start"
    end_id = f"{proc_id}-end"
    if len(minimal) > 1:
        fork = f"{proc_id}-fork"
        joinable = len(maximal) > 1
        nodes.append(Node(id=fork, kind=NODE_GATEWAY, gateway_kind=GW_PARALLEL,
                          role=ROLE_SPLIT, pair=f"{proc_id}-merge" if joinable else None))
        edges.append(Edge(start_id, fork, trace="bracket:parallel"))
        for uid in minimal:
            edges.append(Edge(fork, target_point[uid], trace="bracket:parallel"))
    elif minimal:
        edges.append(Edge(start_id, target_point[minimal[0]], trace="flow"))
    if len(maximal) > 1:
        merge = f"{proc_id}-merge"
        nodes.append(Node(id=merge, kind=NODE_GATEWAY, gateway_kind=GW_PARALLEL,
                          role=ROLE_JOIN, pair=f"{proc_id}-fork" if len(minimal) > 1 else None))
        for uid in maximal:
            edges.append(Edge(source_point[uid], merge, trace="bracket:parallel"))
        nodes.append(Node(id=end_id, kind=NODE_END))
        edges.append(Edge(merge, end_id, trace="flow"))
    else:
        nodes.append(Node(id=end_id, kind=NODE_END))
        if maximal:
            edges.append(Edge(source_point[maximal[0]], end_id, trace="flow"))
        else:
            edges.append(Edge(start_id, end_id, trace="flow"))

    graph = ProcessGraph(id=proc_id, name=name, nodes=tuple(nodes), edges=tuple(edges))
    check_graph(graph)
    return graph


def extract_cartography(store: InstanceStore, assignment: dict[str, list[str]],
                        m: CollaborationModel) -> ProcessCartography:
    """Build the cartography from the deduced store and the function assignment."""
    objectives = {o.id: o for o in m.objectives}
    for oid in assignment:
        if oid not in objectives:
            raise DeductionError(f"assignment references unknown objective {oid!r}")

    groups: dict[tuple[str, str], list[str]] = {}
    for o in m.objectives:
        if assignment.get(o.id):
            groups.setdefault((o.sub_network, o.kind), []).append(o.id)

    sub_names = {sn.id: sn.name for sn in m.sub_networks}
    subs: list[SubProcess] = []
    proc_of_function: dict[str, str] = {}
    for (sn_id, kind) in sorted(groups, key=lambda k: (_KIND_RANK.get(k[1], 9), k[0])):
        oids = groups[(sn_id, kind)]
        sub_assignment = {oid: assignment[oid] for oid in oids}
        units = _build_units(sub_assignment, m)
        proc_id = f"proc-{sn_id}-{kind}"
        if len(oids) == 1:
            name = objectives[oids[0]].description or oids[0]
        else:
            name = f"{kind} processes ({sub_names.get(sn_id, sn_id)})"
        graph = _build_sub_process(proc_id, name, units, m)
        for u in units:
            for fid in u.functions:
                if fid in proc_of_function:
                    raise DeductionError(f"function {fid!r} selected into two sub-processes")
                proc_of_function[fid] = proc_id
        subs.append(SubProcess(kind=kind, sub_network=sn_id, objectives=tuple(oids), graph=graph))

    # main process: one call node per sub-process in kind order
    main_nodes: list[Node] = [Node(id="main-start", kind=NODE_START)]
    main_edges: list[Edge] = []
    prev = "main-start"
    for s in subs:
        call_id = f"call-{s.graph.id}"
        main_nodes.append(Node(id=call_id, kind=NODE_CALL, name=s.graph.name, calls=s.graph.id))
        main_edges.append(Edge(prev, call_id, trace="objective-ordering"))
        prev = call_id
    main_nodes.append(Node(id="main-end", kind=NODE_END))
    main_edges.append(Edge(prev, "main-end", trace="objective-ordering"))

    seen_flows: set[tuple[str, str]] = set()
    for order in store.instances("Order"):
        producer = order.attributes.get("producer", "")
        consumer = order.attributes.get("consumer", "")
        p_proc, c_proc = proc_of_function.get(producer), proc_of_function.get(consumer)
        if not p_proc or not c_proc or p_proc == c_proc:
            continue
        key = (p_proc, c_proc)
        if key in seen_flows:
            continue
        seen_flows.add(key)
        main_edges.append(Edge(f"call-{p_proc}", f"call-{c_proc}", kind=EDGE_MESSAGE,
                               trace=f"order:{order.id}"))

    main = ProcessGraph(id=f"main-{m.network_id}", name=m.name,
                        nodes=tuple(main_nodes), edges=tuple(main_edges))
    check_graph(main, allow_tasks=False)
    return ProcessCartography(main=main, subs=tuple(subs))
