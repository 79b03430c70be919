"""Process graph IR shared by deduction, XML interchange and orchestration.

A graph is a single-start acyclic node/edge structure in a deliberately small
vocabulary: tasks bound to shared-function ids, parallel/exclusive gateways,
start/end events, call nodes referencing sub-processes, and sequence or
message edges. Execution semantics are the usual token game: a task consumes
its single incoming edge token, parallel joins wait for all incoming tokens,
exclusive splits route one token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .errors import InvalidGraphError

NODE_TASK = "task"
NODE_START = "start"
NODE_END = "end"
NODE_GATEWAY = "gateway"
NODE_CALL = "call"

GW_PARALLEL = "parallel"
GW_EXCLUSIVE = "exclusive"

ROLE_SPLIT = "split"
ROLE_JOIN = "join"

EDGE_SEQUENCE = "sequence"
EDGE_MESSAGE = "message"


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    name: str = ""
    function_id: str | None = None
    lane: str | None = None
    gateway_kind: str | None = None
    role: str | None = None
    pair: str | None = None
    calls: str | None = None


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    kind: str = EDGE_SEQUENCE
    condition: str | None = None
    default: bool = False
    trace: str | None = None

    @property
    def id(self) -> str:
        return f"{self.source}->{self.target}"


@dataclass(frozen=True)
class ProcessGraph:
    id: str
    name: str
    nodes: tuple[Node, ...] = ()
    edges: tuple[Edge, ...] = ()

    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def sequence_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.kind == EDGE_SEQUENCE)

    def outgoing(self, node_id: str) -> list[Edge]:
        return [e for e in self.sequence_edges() if e.source == node_id]

    def incoming(self, node_id: str) -> list[Edge]:
        return [e for e in self.sequence_edges() if e.target == node_id]

    def tasks(self) -> list[Node]:
        return [n for n in self.nodes if n.kind == NODE_TASK]

    def lanes(self) -> dict[str, str]:
        return {n.id: n.lane for n in self.tasks() if n.lane}

    def start_node(self) -> Node:
        starts = [n for n in self.nodes if n.kind == NODE_START]
        if len(starts) != 1:
            raise InvalidGraphError([f"process {self.id!r} has {len(starts)} start nodes"])
        return starts[0]


def validate_graph(g: ProcessGraph, *, allow_tasks: bool = True) -> list[str]:
    """Structural invariant check; returns human-readable findings.

    ``allow_tasks=False`` validates a top-level graph, where only call nodes
    may appear between the start and end events.
    """
    findings: list[str] = []
    nodes = g.node_map()
    if len(nodes) != len(g.nodes):
        findings.append("duplicate node ids")

    starts = [n for n in g.nodes if n.kind == NODE_START]
    ends = [n for n in g.nodes if n.kind == NODE_END]
    if len(starts) != 1:
        findings.append(f"expected exactly one start node, found {len(starts)}")
    if not ends:
        findings.append("expected at least one end node")

    for e in g.edges:
        if e.source not in nodes or e.target not in nodes:
            findings.append(f"edge {e.id} references unknown node")

    if findings:
        return findings

    succ: dict[str, list[str]] = {n.id: [] for n in g.nodes}
    pred: dict[str, list[str]] = {n.id: [] for n in g.nodes}
    for e in g.sequence_edges():
        succ[e.source].append(e.target)
        pred[e.target].append(e.source)

    # degree discipline per node kind
    for n in g.nodes:
        ins, outs = len(pred[n.id]), len(succ[n.id])
        if n.kind == NODE_START and (ins != 0 or outs != 1):
            findings.append(f"start {n.id} must have 0 in / 1 out, has {ins}/{outs}")
        elif n.kind == NODE_END and (ins != 1 or outs != 0):
            findings.append(f"end {n.id} must have 1 in / 0 out, has {ins}/{outs}")
        elif n.kind in (NODE_TASK, NODE_CALL):
            if not allow_tasks and n.kind == NODE_TASK:
                findings.append(f"task {n.id} not allowed in a top-level graph")
            if ins != 1 or outs != 1:
                findings.append(f"{n.kind} {n.id} must have 1 in / 1 out, has {ins}/{outs}")
        elif n.kind == NODE_GATEWAY:
            if n.gateway_kind not in (GW_PARALLEL, GW_EXCLUSIVE):
                findings.append(f"gateway {n.id} has unknown kind {n.gateway_kind!r}")
            if n.role == ROLE_SPLIT and not (ins == 1 and outs >= 2):
                findings.append(f"split {n.id} must have 1 in / >=2 out, has {ins}/{outs}")
            elif n.role == ROLE_JOIN and not (ins >= 2 and outs == 1):
                findings.append(f"join {n.id} must have >=2 in / 1 out, has {ins}/{outs}")
            elif n.role not in (ROLE_SPLIT, ROLE_JOIN):
                findings.append(f"gateway {n.id} has unknown role {n.role!r}")
        elif n.kind not in (NODE_START, NODE_END):
            findings.append(f"unknown node kind {n.kind!r} on {n.id}")

    # acyclicity via Kahn's algorithm
    indeg = {nid: len(ps) for nid, ps in pred.items()}
    queue = sorted(nid for nid, d in indeg.items() if d == 0)
    seen = 0
    while queue:
        cur = queue.pop()
        seen += 1
        for nxt in succ[cur]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                queue.append(nxt)
    if seen != len(g.nodes):
        findings.append("graph contains a cycle")
        return findings

    # every node on a start -> end path
    start_id = starts[0].id
    reach: set[str] = set()
    stack = [start_id]
    while stack:
        cur = stack.pop()
        if cur in reach:
            continue
        reach.add(cur)
        stack.extend(succ[cur])
    coreach: set[str] = set()
    stack = [n.id for n in ends]
    while stack:
        cur = stack.pop()
        if cur in coreach:
            continue
        coreach.add(cur)
        stack.extend(pred[cur])
    for n in g.nodes:
        if n.id not in reach or n.id not in coreach:
            findings.append(f"node {n.id} is not on a start->end path")

    # paired gateways: split and join reference each other and agree on kind
    for n in g.nodes:
        if n.kind != NODE_GATEWAY or not n.pair:
            continue
        other = nodes.get(n.pair)
        if other is None or other.kind != NODE_GATEWAY:
            findings.append(f"gateway {n.id} pairs with non-gateway {n.pair!r}")
        elif other.gateway_kind != n.gateway_kind or other.pair != n.id:
            findings.append(f"gateway pair {n.id}/{n.pair} mismatched")

    # exclusive brackets must not leak: interior nodes between a paired
    # exclusive split and its join only connect within the bracket
    for n in g.nodes:
        if n.kind == NODE_GATEWAY and n.gateway_kind == GW_EXCLUSIVE and n.role == ROLE_SPLIT and n.pair:
            interior = _between(succ, n.id, n.pair)
            for inner in interior:
                for p in pred[inner]:
                    if p != n.id and p not in interior:
                        findings.append(f"edge from {p} enters exclusive bracket {n.id} at {inner}")
                for s in succ[inner]:
                    if s != n.pair and s not in interior:
                        findings.append(f"edge from {inner} leaves exclusive bracket {n.id}")
            outs = g.outgoing(n.id)
            if sum(1 for e in outs if e.default) > 1:
                findings.append(f"exclusive split {n.id} has multiple default edges")

    return findings


def _between(succ: dict[str, list[str]], split_id: str, join_id: str) -> set[str]:
    interior: set[str] = set()
    stack = list(succ[split_id])
    while stack:
        cur = stack.pop()
        if cur == join_id or cur in interior:
            continue
        interior.add(cur)
        stack.extend(succ[cur])
    interior.discard(join_id)
    return interior


def check_graph(g: ProcessGraph, *, allow_tasks: bool = True) -> None:
    findings = validate_graph(g, allow_tasks=allow_tasks)
    if findings:
        raise InvalidGraphError(findings)


# ---------------------------------------------------------------------------
# Language of a graph (used by tests and by the deduction soundness checks)
# ---------------------------------------------------------------------------


def admissible_sequences(g: ProcessGraph, *, label: str = "function") -> frozenset[tuple[str, ...]]:
    """All task orderings the token game admits.

    Exclusive splits are treated as free choice, so the language covers every
    branch. Labels are function ids by default, node ids otherwise.
    """
    nodes = g.node_map()
    out_edges: dict[str, list[Edge]] = {n.id: [] for n in g.nodes}
    in_edges: dict[str, list[Edge]] = {n.id: [] for n in g.nodes}
    for e in g.sequence_edges():
        out_edges[e.source].append(e)
        in_edges[e.target].append(e)

    start = g.start_node()

    def label_of(n: Node) -> str:
        return (n.function_id or n.id) if label == "function" else n.id

    results: set[tuple[str, ...]] = set()
    seen_states: set[tuple[frozenset[str], tuple[str, ...]]] = set()

    def fire(marking: frozenset[str], seq: tuple[str, ...]) -> None:
        key = (marking, seq)
        if key in seen_states:
            return
        seen_states.add(key)
        moves: list[tuple[frozenset[str], tuple[str, ...]]] = []
        for n in g.nodes:
            nid = n.id
            if n.kind == NODE_START:
                continue
            ins = in_edges[nid]
            if n.kind == NODE_GATEWAY and n.gateway_kind == GW_PARALLEL and n.role == ROLE_JOIN:
                if not all(e.id in marking for e in ins):
                    continue
                consumed = {e.id for e in ins}
            else:
                marked = [e for e in ins if e.id in marking]
                if not marked:
                    continue
                consumed = {marked[0].id}
            produced: set[str] = set()
            if n.kind == NODE_GATEWAY and n.role == ROLE_SPLIT and n.gateway_kind == GW_EXCLUSIVE:
                for branch in out_edges[nid]:
                    moves.append((
                        frozenset((marking - consumed) | {branch.id}),
                        seq,
                    ))
                continue
            produced = {e.id for e in out_edges[nid]}
            new_seq = seq + (label_of(n),) if n.kind in (NODE_TASK, NODE_CALL) else seq
            moves.append((frozenset((marking - consumed) | produced), new_seq))
        if not moves:
            results.add(seq)
            return
        for marking2, seq2 in moves:
            fire(marking2, seq2)

    initial = frozenset(e.id for e in out_edges[start.id])
    fire(initial, ())
    return frozenset(results)


@dataclass(frozen=True)
class SubProcess:
    kind: str
    sub_network: str
    objectives: tuple[str, ...]
    graph: ProcessGraph


@dataclass(frozen=True)
class ProcessCartography:
    main: ProcessGraph
    subs: tuple[SubProcess, ...] = ()

    def sub_by_id(self, proc_id: str) -> SubProcess | None:
        for s in self.subs:
            if s.graph.id == proc_id:
                return s
        return None

    def all_graphs(self) -> list[ProcessGraph]:
        return [self.main] + [s.graph for s in self.subs]


def graph_to_raw(g: ProcessGraph) -> dict[str, Any]:
    return {
        "id": g.id,
        "name": g.name,
        "nodes": [
            {k: v for k, v in {
                "id": n.id, "kind": n.kind, "name": n.name,
                "function": n.function_id, "lane": n.lane,
                "gateway": n.gateway_kind, "role": n.role,
                "pair": n.pair, "calls": n.calls,
            }.items() if v not in (None, "")}
            for n in g.nodes
        ],
        "edges": [
            {k: v for k, v in {
                "source": e.source, "target": e.target, "kind": e.kind,
                "condition": e.condition, "default": e.default or None,
                "trace": e.trace,
            }.items() if v not in (None, "")}
            for e in g.edges
        ],
    }


def graph_from_raw(d: dict[str, Any]) -> ProcessGraph:
    nodes = tuple(
        Node(
            id=n["id"], kind=n["kind"], name=n.get("name", ""),
            function_id=n.get("function"), lane=n.get("lane"),
            gateway_kind=n.get("gateway"), role=n.get("role"),
            pair=n.get("pair"), calls=n.get("calls"),
        )
        for n in d.get("nodes", [])
    )
    edges = tuple(
        Edge(
            source=e["source"], target=e["target"], kind=e.get("kind", EDGE_SEQUENCE),
            condition=e.get("condition"), default=bool(e.get("default", False)),
            trace=e.get("trace"),
        )
        for e in d.get("edges", [])
    )
    return ProcessGraph(id=d["id"], name=d.get("name", ""), nodes=nodes, edges=edges)


def cartography_to_raw(c: ProcessCartography) -> dict[str, Any]:
    return {
        "main": graph_to_raw(c.main),
        "sub_processes": [
            {"kind": s.kind, "sub_network": s.sub_network,
             "objectives": list(s.objectives), "graph": graph_to_raw(s.graph)}
            for s in c.subs
        ],
    }


def cartography_from_raw(raw: dict[str, Any]) -> ProcessCartography:
    return ProcessCartography(
        main=graph_from_raw(raw["main"]),
        subs=tuple(
            SubProcess(
                kind=s["kind"], sub_network=s["sub_network"],
                objectives=tuple(s.get("objectives", [])), graph=graph_from_raw(s["graph"]),
            )
            for s in raw.get("sub_processes", [])
        ),
    )
