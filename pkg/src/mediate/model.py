"""Collaborative network model: partners, shared functions, objectives, messages.

The model file is a single YAML document (schema_version 1) holding the whole
collaboration. Values are immutable after load; mutation helpers return new
objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import yaml

from .errors import ModelParseError, ModelValidationError

SCHEMA_VERSION = 1

LINK_EXACT = "exact"
LINK_SAME_AS = "same_as"
LINK_NEAR_BY = "near_by"
LINK_KINDS = frozenset({LINK_EXACT, LINK_SAME_AS, LINK_NEAR_BY})

KIND_STRATEGY = "strategy"
KIND_OPERATION = "operation"
KIND_SUPPORT = "support"
OBJECTIVE_KINDS = (KIND_STRATEGY, KIND_OPERATION, KIND_SUPPORT)

# legacy vocabulary accepted on load
_KIND_SYNONYMS = {"decisional": KIND_STRATEGY, "operational": KIND_OPERATION}


@dataclass(frozen=True)
class ConceptRef:
    """Reference from a model element to an ontology concept.

    ``resolved`` is filled once the reference has been linked; for an exact
    link it equals ``concept_id``.
    """

    concept_id: str
    link_kind: str = LINK_EXACT
    resolved: str | None = None

    def to_raw(self) -> Any:
        if self.link_kind == LINK_EXACT and self.resolved is None:
            return self.concept_id
        raw: dict[str, Any] = {"concept": self.concept_id, "kind": self.link_kind}
        if self.resolved is not None:
            raw["resolved"] = self.resolved
        return raw

    @classmethod
    def from_raw(cls, raw: Any) -> "ConceptRef":
        if isinstance(raw, str):
            return cls(concept_id=raw)
        if isinstance(raw, dict):
            return cls(
                concept_id=_req_str(raw, "concept", "concept ref"),
                link_kind=str(raw.get("kind", LINK_EXACT)),
                resolved=raw.get("resolved"),
            )
        raise ModelParseError(f"concept ref must be string or mapping, got {type(raw).__name__}")


@dataclass(frozen=True)
class FieldSpec:
    """One field of a message schema: name, semantic concept, optional unit."""

    name: str
    concept: str
    unit: str | None = None

    def to_raw(self) -> dict[str, Any]:
        raw: dict[str, Any] = {"name": self.name, "concept": self.concept}
        if self.unit is not None:
            raw["unit"] = self.unit
        return raw

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "FieldSpec":
        return cls(
            name=_req_str(raw, "name", "field"),
            concept=_req_str(raw, "concept", "field"),
            unit=raw.get("unit"),
        )


@dataclass(frozen=True)
class FunctionAnnotation:
    """Semantic annotation of a shared function: capability plus optional I/O concepts."""

    capability: tuple[ConceptRef, ...] = ()
    inputs: tuple[ConceptRef, ...] = ()
    outputs: tuple[ConceptRef, ...] = ()

    def all_refs(self) -> tuple[ConceptRef, ...]:
        return self.capability + self.inputs + self.outputs

    def to_raw(self) -> dict[str, Any]:
        raw: dict[str, Any] = {"capability": [r.to_raw() for r in self.capability]}
        if self.inputs:
            raw["inputs"] = [r.to_raw() for r in self.inputs]
        if self.outputs:
            raw["outputs"] = [r.to_raw() for r in self.outputs]
        return raw

    @classmethod
    def from_raw(cls, raw: Any) -> "FunctionAnnotation":
        if raw is None:
            return cls()
        if isinstance(raw, list):
            return cls(capability=tuple(ConceptRef.from_raw(r) for r in raw))
        if not isinstance(raw, dict):
            raise ModelParseError("annotation must be a list or mapping")
        return cls(
            capability=tuple(ConceptRef.from_raw(r) for r in raw.get("capability", [])),
            inputs=tuple(ConceptRef.from_raw(r) for r in raw.get("inputs", [])),
            outputs=tuple(ConceptRef.from_raw(r) for r in raw.get("outputs", [])),
        )


@dataclass(frozen=True)
class SharedFunction:
    id: str
    name: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    annotation: FunctionAnnotation = field(default_factory=FunctionAnnotation)

    def to_raw(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "annotation": self.annotation.to_raw(),
        }

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "SharedFunction":
        return cls(
            id=_req_str(raw, "id", "function"),
            name=str(raw.get("name", raw["id"])),
            inputs=tuple(str(m) for m in raw.get("inputs", [])),
            outputs=tuple(str(m) for m in raw.get("outputs", [])),
            annotation=FunctionAnnotation.from_raw(raw.get("annotation")),
        )


@dataclass(frozen=True)
class Partner:
    id: str
    name: str
    functions: tuple[SharedFunction, ...] = ()

    def to_raw(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "functions": [f.to_raw() for f in self.functions],
        }

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "Partner":
        return cls(
            id=_req_str(raw, "id", "partner"),
            name=str(raw.get("name", raw["id"])),
            functions=tuple(SharedFunction.from_raw(f) for f in raw.get("functions", [])),
        )


@dataclass(frozen=True)
class SubNetwork:
    id: str
    name: str
    partners: tuple[str, ...] = ()

    def to_raw(self) -> dict[str, Any]:
        return {"id": self.id, "name": self.name, "partners": list(self.partners)}

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "SubNetwork":
        return cls(
            id=_req_str(raw, "id", "sub-network"),
            name=str(raw.get("name", raw["id"])),
            partners=tuple(str(p) for p in raw.get("partners", [])),
        )


@dataclass(frozen=True)
class Objective:
    id: str
    kind: str
    description: str
    sub_network: str
    annotation: tuple[ConceptRef, ...] = ()

    def to_raw(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "description": self.description,
            "sub_network": self.sub_network,
            "annotation": [r.to_raw() for r in self.annotation],
        }

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "Objective":
        kind = str(raw.get("kind", ""))
        kind = _KIND_SYNONYMS.get(kind, kind)
        return cls(
            id=_req_str(raw, "id", "objective"),
            kind=kind,
            description=str(raw.get("description", "")),
            sub_network=str(raw.get("sub_network", "")),
            annotation=tuple(ConceptRef.from_raw(r) for r in raw.get("annotation", [])),
        )


@dataclass(frozen=True)
class MessageDef:
    id: str
    name: str
    concept: ConceptRef
    fields: tuple[FieldSpec, ...] = ()

    def to_raw(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "concept": self.concept.to_raw(),
            "fields": [f.to_raw() for f in self.fields],
        }

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "MessageDef":
        return cls(
            id=_req_str(raw, "id", "message"),
            name=str(raw.get("name", raw["id"])),
            concept=ConceptRef.from_raw(raw.get("concept", raw.get("name", raw["id"]))),
            fields=tuple(FieldSpec.from_raw(f) for f in raw.get("fields", [])),
        )


@dataclass(frozen=True)
class CollaborationModel:
    network_id: str
    name: str
    sub_networks: tuple[SubNetwork, ...] = ()
    partners: tuple[Partner, ...] = ()
    objectives: tuple[Objective, ...] = ()
    messages: tuple[MessageDef, ...] = ()

    def partner_map(self) -> dict[str, Partner]:
        return {p.id: p for p in self.partners}

    def message_map(self) -> dict[str, MessageDef]:
        return {m.id: m for m in self.messages}

    def functions(self) -> list[tuple[Partner, SharedFunction]]:
        return [(p, f) for p in self.partners for f in p.functions]

    def function_map(self) -> dict[str, SharedFunction]:
        return {f.id: f for _, f in self.functions()}

    def owner_of(self, function_id: str) -> str | None:
        for p, f in self.functions():
            if f.id == function_id:
                return p.id
        return None

    def to_raw(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "network_id": self.network_id,
            "name": self.name,
            "sub_networks": [s.to_raw() for s in self.sub_networks],
            "partners": [p.to_raw() for p in self.partners],
            "objectives": [o.to_raw() for o in self.objectives],
            "messages": [m.to_raw() for m in self.messages],
        }

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "CollaborationModel":
        if not isinstance(raw, dict):
            raise ModelParseError("model document must be a mapping")
        version = raw.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ModelParseError(f"unsupported model schema_version: {version!r}")
        try:
            return cls(
                network_id=_req_str(raw, "network_id", "model"),
                name=str(raw.get("name", raw["network_id"])),
                sub_networks=tuple(SubNetwork.from_raw(s) for s in raw.get("sub_networks", [])),
                partners=tuple(Partner.from_raw(p) for p in raw.get("partners", [])),
                objectives=tuple(Objective.from_raw(o) for o in raw.get("objectives", [])),
                messages=tuple(MessageDef.from_raw(m) for m in raw.get("messages", [])),
            )
        except (TypeError, AttributeError) as exc:
            raise ModelParseError(f"malformed model document: {exc}") from exc


@dataclass(frozen=True)
class Finding:
    path: str
    rule: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def to_raw(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "findings": [
                {"path": f.path, "rule": f.rule, "message": f.message} for f in self.findings
            ],
        }


def _req_str(raw: dict[str, Any], key: str, what: str) -> str:
    try:
        value = raw[key]
    except (KeyError, TypeError) as exc:
        raise ModelParseError(f"{what} is missing required field {key!r}") from exc
    if not isinstance(value, (str, int)):
        raise ModelParseError(f"{what}.{key} must be a string, got {type(value).__name__}")
    return str(value)


def validate_model(m: CollaborationModel, ontology=None) -> ValidationReport:
    """Check every structural invariant; pure, report-only.

    When an ontology is given, message concepts are additionally checked for
    resolvability.
    """
    findings: list[Finding] = []

    def bad(path: str, rule: str, message: str) -> None:
        findings.append(Finding(path=path, rule=rule, message=message))

    seen: dict[str, str] = {}

    def claim(ident: str, path: str) -> None:
        if ident in seen:
            bad(path, "unique-ids", f"duplicate identifier {ident!r} (also at {seen[ident]})")
        else:
            seen[ident] = path

    claim(m.network_id, "network")
    for sn in m.sub_networks:
        claim(sn.id, f"sub_networks[{sn.id}]")
    for p in m.partners:
        claim(p.id, f"partners[{p.id}]")
        for f in p.functions:
            claim(f.id, f"partners[{p.id}].functions[{f.id}]")
    for o in m.objectives:
        claim(o.id, f"objectives[{o.id}]")
    for msg in m.messages:
        claim(msg.id, f"messages[{msg.id}]")

    if not m.sub_networks:
        bad("sub_networks", "non-empty-scopes", "at least one sub-network is required")

    partner_ids = {p.id for p in m.partners}
    message_ids = {msg.id for msg in m.messages}
    sub_network_ids = {sn.id for sn in m.sub_networks}

    for sn in m.sub_networks:
        path = f"sub_networks[{sn.id}]"
        distinct = set(sn.partners)
        if len(distinct) < 2:
            bad(path, "sub-network-size", "a sub-network must reference at least 2 distinct partners")
        for pid in sn.partners:
            if pid not in partner_ids:
                bad(path, "dangling-partner", f"references missing partner {pid!r}")

    for p in m.partners:
        for f in p.functions:
            path = f"partners[{p.id}].functions[{f.id}]"
            for mid in f.inputs + f.outputs:
                if mid not in message_ids:
                    bad(path, "dangling-message", f"references missing message {mid!r}")
            if not f.annotation.capability:
                bad(path, "annotated-function", "every shared function requires a semantic annotation")
            for ref in f.annotation.all_refs():
                if ref.link_kind not in LINK_KINDS:
                    bad(path, "link-kind", f"unknown link kind {ref.link_kind!r}")

    for o in m.objectives:
        path = f"objectives[{o.id}]"
        if o.kind not in OBJECTIVE_KINDS:
            bad(path, "objective-kind", f"kind must be one of {sorted(OBJECTIVE_KINDS)}, got {o.kind!r}")
        if o.sub_network not in sub_network_ids:
            bad(path, "dangling-sub-network", f"references missing sub-network {o.sub_network!r}")
        for ref in o.annotation:
            if ref.link_kind not in LINK_KINDS:
                bad(path, "link-kind", f"unknown link kind {ref.link_kind!r}")

    if ontology is not None:
        for msg in m.messages:
            if not ontology.resolve(msg.concept.resolved or msg.concept.concept_id):
                bad(
                    f"messages[{msg.id}]",
                    "message-concept",
                    f"concept {msg.concept.concept_id!r} not found in ontology",
                )

    return ValidationReport(findings=tuple(findings))


def loads_model(text: str) -> CollaborationModel:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ModelParseError(f"model file is not valid YAML: {exc}") from exc
    m = CollaborationModel.from_raw(raw)
    report = validate_model(m)
    if not report.ok:
        raise ModelValidationError(report.findings)
    return m


def load_model(path) -> CollaborationModel:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_model(fh.read())


def dumps_model(m: CollaborationModel) -> str:
    return yaml.safe_dump(m.to_raw(), sort_keys=True, allow_unicode=True)


def save_model(m: CollaborationModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(m))


def with_resolved_ref(m: CollaborationModel, path: str, ref: ConceptRef) -> CollaborationModel:
    """Return a copy of the model with one concept ref replaced.

    ``path`` uses the same addressing produced by the linker, e.g.
    ``function:f-ship/capability:0`` or ``objective:o-plan/annotation:0`` or
    ``message:msg-order/concept``.
    """
    head, _, tail = path.partition("/")
    kind, _, ident = head.partition(":")
    if kind == "message":
        messages = tuple(
            replace(msg, concept=ref) if msg.id == ident else msg for msg in m.messages
        )
        return replace(m, messages=messages)
    if kind == "objective":
        _, _, idx = tail.partition(":")
        objectives = []
        for o in m.objectives:
            if o.id == ident:
                ann = list(o.annotation)
                ann[int(idx)] = ref
                o = replace(o, annotation=tuple(ann))
            objectives.append(o)
        return replace(m, objectives=tuple(objectives))
    if kind == "function":
        group, _, idx = tail.partition(":")
        partners = []
        for p in m.partners:
            funcs = []
            for f in p.functions:
                if f.id == ident:
                    ann = f.annotation
                    refs = list(getattr(ann, group))
                    refs[int(idx)] = ref
                    ann = replace(ann, **{group: tuple(refs)})
                    f = replace(f, annotation=ann)
                funcs.append(f)
            partners.append(replace(p, functions=tuple(funcs)))
        return replace(m, partners=tuple(partners))
    raise ValueError(f"unknown ref path {path!r}")


def iter_concept_refs(m: CollaborationModel):
    """Yield (path, ref) for every concept ref in the model, in document order."""
    for p in m.partners:
        for f in p.functions:
            for group in ("capability", "inputs", "outputs"):
                for i, ref in enumerate(getattr(f.annotation, group)):
                    yield f"function:{f.id}/{group}:{i}", ref
    for o in m.objectives:
        for i, ref in enumerate(o.annotation):
            yield f"objective:{o.id}/annotation:{i}", ref
    for msg in m.messages:
        yield f"message:{msg.id}/concept", msg.concept
