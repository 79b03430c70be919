"""Semantically annotated BPMN-subset XML interchange.

The supported subset is exactly what deduction produces and orchestration
consumes: process, task, exclusive/parallel gateway, start/end event,
sequence flow, message flow, lane and call activity. Activities carry two
extension elements, SemanticDetails (functional requirement concepts) and
SemanticElements (per-message concepts), in the artifact-owned namespace
below. Export is byte-deterministic and import(export(d)) == d.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from xml.sax.saxutils import escape, quoteattr

from .errors import BpmnFormatError
from .model import CollaborationModel
from .process import (
    EDGE_MESSAGE,
    EDGE_SEQUENCE,
    GW_EXCLUSIVE,
    GW_PARALLEL,
    NODE_CALL,
    NODE_END,
    NODE_GATEWAY,
    NODE_START,
    NODE_TASK,
    Edge,
    Node,
    ProcessCartography,
    ProcessGraph,
)

BPMN_NS = "http://www.omg.org/spec/BPMN/20100524/MODEL"
SA_NS = "urn:mediate:sa-bpmn:1"

CONCEPT_URI_PREFIX = "concept:"


@dataclass(frozen=True)
class AnnotationConcept:
    uri: str
    kind: str = "exact"


@dataclass(frozen=True)
class MessageElement:
    direction: str  # "in" | "out"
    message: str
    uri: str


@dataclass(frozen=True)
class SemanticAnnotation:
    details: tuple[AnnotationConcept, ...] = ()
    elements: tuple[MessageElement, ...] = ()


@dataclass(frozen=True)
class SaBpmnDocument:
    processes: tuple[ProcessGraph, ...] = ()
    annotations: dict[str, SemanticAnnotation] = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SaBpmnDocument):
            return NotImplemented
        return self.processes == other.processes and self.annotations == other.annotations

    def validate(self) -> list[str]:
        findings = []
        task_ids = {n.id for g in self.processes for n in g.nodes if n.kind == NODE_TASK}
        for node_id, ann in self.annotations.items():
            if node_id not in task_ids:
                findings.append(f"annotation on {node_id!r} does not resolve to a task")
            if not ann.details:
                findings.append(f"annotation on {node_id!r} has empty SemanticDetails")
        return findings


def strip_annotations(doc: SaBpmnDocument) -> SaBpmnDocument:
    return SaBpmnDocument(processes=doc.processes, annotations={})


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

_GATEWAY_TAGS = {GW_PARALLEL: "parallelGateway", GW_EXCLUSIVE: "exclusiveGateway"}


class _Writer:
    def __init__(self):
        self.lines: list[str] = ['<?xml version="1.0" encoding="UTF-8"?>']
        self.depth = 0

    def open(self, tag: str, attrs: list[tuple[str, str]], *, close: bool = False) -> None:
        rendered = "".join(f" {k}={quoteattr(v)}" for k, v in attrs)
        suffix = "/>" if close else ">"
        self.lines.append(f"{'  ' * self.depth}<{tag}{rendered}{suffix}")
        if not close:
            self.depth += 1

    def text_element(self, tag: str, text: str, attrs: list[tuple[str, str]] = ()) -> None:
        rendered = "".join(f" {k}={quoteattr(v)}" for k, v in attrs)
        self.lines.append(f"{'  ' * self.depth}<{tag}{rendered}>{escape(text)}</{tag}>")

    def close(self, tag: str) -> None:
        self.depth -= 1
        self.lines.append(f"{'  ' * self.depth}</{tag}>")

    def bytes(self) -> bytes:
        return ("\n".join(self.lines) + "\n").encode("utf-8")


def export_sa_bpmn(doc: SaBpmnDocument) -> bytes:
    findings = doc.validate()
    if findings:
        raise BpmnFormatError("; ".join(findings))
    w = _Writer()
    w.open("definitions", [
        ("xmlns", BPMN_NS),
        ("xmlns:sa", SA_NS),
        ("id", "definitions-1"),
        ("targetNamespace", SA_NS),
    ])
    for g in doc.processes:
        _write_process(w, g, doc.annotations)
    w.close("definitions")
    return w.bytes()


def _write_process(w: _Writer, g: ProcessGraph, annotations: dict[str, SemanticAnnotation]) -> None:
    w.open("process", [("id", g.id), ("name", g.name)])
    lanes: dict[str, list[str]] = {}
    for n in g.nodes:
        if n.kind == NODE_TASK and n.lane:
            lanes.setdefault(n.lane, []).append(n.id)
    if lanes:
        w.open("laneSet", [("id", f"{g.id}-lanes")])
        for lane_id in sorted(lanes):
            w.open("lane", [("id", f"lane-{g.id}-{lane_id}"), ("name", lane_id)])
            for node_id in lanes[lane_id]:
                w.text_element("flowNodeRef", node_id)
            w.close("lane")
        w.close("laneSet")
    for n in g.nodes:
        _write_node(w, n, annotations.get(n.id))
    flow_no = 0
    for e in g.edges:
        flow_no += 1
        _write_edge(w, e, f"flow-{g.id}-{flow_no}")
    w.close("process")


def _write_node(w: _Writer, n: Node, ann: SemanticAnnotation | None) -> None:
    if n.kind == NODE_START:
        w.open("startEvent", _named(n), close=True)
    elif n.kind == NODE_END:
        w.open("endEvent", _named(n), close=True)
    elif n.kind == NODE_GATEWAY:
        tag = _GATEWAY_TAGS.get(n.gateway_kind)
        if tag is None:
            raise BpmnFormatError(f"gateway {n.id!r} has unsupported kind {n.gateway_kind!r}")
        attrs = _named(n) + [("sa:role", n.role or "")]
        if n.pair:
            attrs.append(("sa:pair", n.pair))
        w.open(tag, attrs, close=True)
    elif n.kind == NODE_CALL:
        w.open("callActivity", _named(n) + [("calledElement", n.calls or "")], close=True)
    elif n.kind == NODE_TASK:
        attrs = _named(n)
        if n.function_id:
            attrs.append(("sa:function", n.function_id))
        if ann is None:
            w.open("task", attrs, close=True)
            return
        w.open("task", attrs)
        w.open("extensionElements", [])
        w.open("sa:SemanticDetails", [])
        for c in ann.details:
            w.open("sa:concept", [("ref", c.uri), ("kind", c.kind)], close=True)
        w.close("sa:SemanticDetails")
        w.open("sa:SemanticElements", [])
        for el in ann.elements:
            w.open("sa:element", [
                ("direction", el.direction), ("message", el.message), ("ref", el.uri),
            ], close=True)
        w.close("sa:SemanticElements")
        w.close("extensionElements")
        w.close("task")
    else:
        raise BpmnFormatError(f"node {n.id!r} has unsupported kind {n.kind!r}")


def _named(n: Node) -> list[tuple[str, str]]:
    attrs = [("id", n.id)]
    if n.name:
        attrs.append(("name", n.name))
    return attrs


def _write_edge(w: _Writer, e: Edge, flow_id: str) -> None:
    tag = "sequenceFlow" if e.kind == EDGE_SEQUENCE else "messageFlow"
    attrs = [("id", flow_id), ("sourceRef", e.source), ("targetRef", e.target)]
    if e.default:
        attrs.append(("sa:default", "true"))
    if e.trace:
        attrs.append(("sa:trace", e.trace))
    if e.condition is None:
        w.open(tag, attrs, close=True)
    else:
        w.open(tag, attrs)
        w.text_element("conditionExpression", e.condition)
        w.close(tag)


# ---------------------------------------------------------------------------
# Import
# ---------------------------------------------------------------------------


def _tag(el: ET.Element) -> tuple[str, str]:
    """Split an ElementTree tag into (namespace, local name)."""
    if el.tag.startswith("{"):
        ns, _, local = el.tag[1:].partition("}")
        return ns, local
    return "", el.tag


def import_sa_bpmn(data: bytes) -> SaBpmnDocument:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise BpmnFormatError(f"not well-formed XML: {exc}") from exc
    ns, local = _tag(root)
    if local != "definitions" or ns != BPMN_NS:
        raise BpmnFormatError(f"unsupported root element {root.tag!r}")
    processes: list[ProcessGraph] = []
    annotations: dict[str, SemanticAnnotation] = {}
    for child in root:
        cns, clocal = _tag(child)
        if clocal != "process":
            raise BpmnFormatError(f"unsupported construct under definitions: {clocal!r}")
        processes.append(_read_process(child, annotations))
    return SaBpmnDocument(processes=tuple(processes), annotations=annotations)


_NODE_TAGS = {
    "startEvent": NODE_START,
    "endEvent": NODE_END,
    "task": NODE_TASK,
    "callActivity": NODE_CALL,
    "parallelGateway": NODE_GATEWAY,
    "exclusiveGateway": NODE_GATEWAY,
}


def _read_process(el: ET.Element, annotations: dict[str, SemanticAnnotation]) -> ProcessGraph:
    proc_id = el.get("id", "")
    nodes: list[Node] = []
    edges: list[Edge] = []
    lanes: dict[str, str] = {}
    for child in el:
        _, local = _tag(child)
        if local == "laneSet":
            for lane in child:
                lane_name = lane.get("name", "")
                for ref in lane:
                    if ref.text:
                        lanes[ref.text] = lane_name
            continue
        if local in ("sequenceFlow", "messageFlow"):
            condition = None
            for sub in child:
                _, sublocal = _tag(sub)
                if sublocal != "conditionExpression":
                    raise BpmnFormatError(f"unsupported element in flow: {sublocal!r}")
                condition = sub.text or ""
            edges.append(Edge(
                source=child.get("sourceRef", ""),
                target=child.get("targetRef", ""),
                kind=EDGE_SEQUENCE if local == "sequenceFlow" else EDGE_MESSAGE,
                condition=condition,
                default=child.get(f"{{{SA_NS}}}default") == "true",
                trace=child.get(f"{{{SA_NS}}}trace"),
            ))
            continue
        kind = _NODE_TAGS.get(local)
        if kind is None:
            raise BpmnFormatError(f"unsupported construct in process {proc_id!r}: {local!r}")
        node_id = child.get("id", "")
        if kind == NODE_TASK:
            ann = _read_annotation(child)
            if ann is not None:
                annotations[node_id] = ann
        nodes.append(Node(
            id=node_id,
            kind=kind,
            name=child.get("name", ""),
            function_id=child.get(f"{{{SA_NS}}}function"),
            gateway_kind={"parallelGateway": GW_PARALLEL,
                          "exclusiveGateway": GW_EXCLUSIVE}.get(local),
            role=child.get(f"{{{SA_NS}}}role"),
            pair=child.get(f"{{{SA_NS}}}pair"),
            calls=child.get("calledElement"),
        ))
    nodes = [
        replace(n, lane=lanes.get(n.id)) if n.kind == NODE_TASK and n.id in lanes else n
        for n in nodes
    ]
    return ProcessGraph(id=proc_id, name=el.get("name", ""), nodes=tuple(nodes), edges=tuple(edges))


def _read_annotation(task_el: ET.Element) -> SemanticAnnotation | None:
    details: list[AnnotationConcept] = []
    elements: list[MessageElement] = []
    found = False
    for child in task_el:
        _, local = _tag(child)
        if local != "extensionElements":
            raise BpmnFormatError(f"unsupported element in task: {local!r}")
        for ext in child:
            _, elocal = _tag(ext)
            if elocal == "SemanticDetails":
                found = True
                for c in ext:
                    _, clocal = _tag(c)
                    if clocal != "concept":
                        raise BpmnFormatError(f"malformed annotation element: {clocal!r}")
                    details.append(AnnotationConcept(
                        uri=c.get("ref", ""), kind=c.get("kind", "exact"),
                    ))
            elif elocal == "SemanticElements":
                found = True
                for c in ext:
                    _, clocal = _tag(c)
                    if clocal != "element":
                        raise BpmnFormatError(f"malformed annotation element: {clocal!r}")
                    elements.append(MessageElement(
                        direction=c.get("direction", ""),
                        message=c.get("message", ""),
                        uri=c.get("ref", ""),
                    ))
            else:
                raise BpmnFormatError(f"unsupported extension element: {elocal!r}")
    if not found:
        return None
    return SemanticAnnotation(details=tuple(details), elements=tuple(elements))


# ---------------------------------------------------------------------------
# Building annotated documents from a cartography
# ---------------------------------------------------------------------------


def concept_uri(concept_id: str) -> str:
    return CONCEPT_URI_PREFIX + concept_id


def parse_concept_uri(uri: str) -> str:
    if not uri.startswith(CONCEPT_URI_PREFIX):
        raise BpmnFormatError(f"not a concept uri: {uri!r}")
    return uri[len(CONCEPT_URI_PREFIX):]


def build_document(cartography: ProcessCartography, m: CollaborationModel) -> SaBpmnDocument:
    """Annotate every task in the cartography from its function's semantics."""
    fmap = m.function_map()
    messages = m.message_map()
    annotations: dict[str, SemanticAnnotation] = {}
    for g in [s.graph for s in cartography.subs]:
        for n in g.tasks():
            f = fmap.get(n.function_id or "")
            if f is None:
                continue
            details = tuple(
                AnnotationConcept(uri=concept_uri(r.resolved or r.concept_id), kind=r.link_kind)
                for r in f.annotation.capability
            )
            elements = []
            for direction, mids in (("in", f.inputs), ("out", f.outputs)):
                for mid in mids:
                    msg = messages.get(mid)
                    ref = msg.concept.resolved or msg.concept.concept_id if msg else mid
                    elements.append(MessageElement(direction=direction, message=mid,
                                                   uri=concept_uri(ref)))
            annotations[n.id] = SemanticAnnotation(details=details, elements=tuple(elements))
    return SaBpmnDocument(
        processes=tuple([cartography.main] + [s.graph for s in cartography.subs]),
        annotations=annotations,
    )
