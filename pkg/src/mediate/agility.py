"""Detection and adaptation loop.

Two instance models of the collaboration are maintained side by side: the
expected model, updated only by workflow monitoring events, and the field
model, updated only by events reported from the field. CEP rules (shipped as
data) turn raw events into inserts, deletes and attribute updates on one of
the two models, optionally after a count-within-window pattern completes per
correlation key.

Divergence is measured per category as the size of the symmetric difference
of the two models' element sets over their union, weighted into a total.
When the total crosses the threshold, the dominant category picks the
pipeline re-entry: situation change restarts knowledge gathering, network
change restarts process deduction, execution dysfunction restarts service
discovery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import yaml

from .errors import AgilityError
from .events import Event, SOURCE_FIELD, SOURCE_MONITORING
from .model import CollaborationModel
from .ontology import Instance, InstanceStore, PROV_EVENT, PROV_USER

SCHEMA_VERSION = 1

CAT_SITUATION = "situation"
CAT_NETWORK = "network"
CAT_EXECUTION = "execution"
CATEGORIES = (CAT_SITUATION, CAT_NETWORK, CAT_EXECUTION)

MODEL_EXPECTED = "expected"
MODEL_FIELD = "field"

REENTRY_NONE = "none"
REENTRY_GATHER = "gather_knowledge"
REENTRY_REDEDUCE = "rededuce_processes"
REENTRY_REDISCOVER = "rediscover_services"

_REENTRY_BY_CATEGORY = {
    CAT_SITUATION: REENTRY_GATHER,
    CAT_NETWORK: REENTRY_REDEDUCE,
    CAT_EXECUTION: REENTRY_REDISCOVER,
}

# which twin model a source may touch; the segregation invariant
_MODEL_BY_SOURCE = {SOURCE_MONITORING: MODEL_EXPECTED, SOURCE_FIELD: MODEL_FIELD}

DEFAULT_WEIGHTS = {CAT_SITUATION: 0.4, CAT_NETWORK: 0.3, CAT_EXECUTION: 0.3}
DEFAULT_THRESHOLD = 0.2

# twin instance concepts per category
CATEGORY_OF_CONCEPT = {
    "Context": CAT_SITUATION,
    "Objective": CAT_SITUATION,
    "Partner": CAT_NETWORK,
    "Function": CAT_NETWORK,
    "Service": CAT_EXECUTION,
    "Task": CAT_EXECUTION,
}


@dataclass
class SituationTwin:
    expected: InstanceStore
    field: InstanceStore
    watermarks: dict[str, str] = None  # last applied event id per model

    def __post_init__(self):
        if self.watermarks is None:
            self.watermarks = {MODEL_EXPECTED: "", MODEL_FIELD: ""}

    def store(self, which: str) -> InstanceStore:
        if which == MODEL_EXPECTED:
            return self.expected
        if which == MODEL_FIELD:
            return self.field
        raise AgilityError(f"unknown twin model {which!r}")

    def snapshot(self) -> "SituationTwin":
        return SituationTwin(self.expected.snapshot(), self.field.snapshot(),
                             dict(self.watermarks))


def build_twin(m: CollaborationModel, services: Iterable = ()) -> SituationTwin:
    """Seed both twin models identically from the model and the registry."""

    def seed() -> InstanceStore:
        store = InstanceStore()
        store.upsert(Instance(f"context-{m.network_id}", "Context", {"name": m.name}, PROV_USER))
        for o in m.objectives:
            store.upsert(Instance(f"objective-{o.id}", "Objective",
                                  {"kind": o.kind, "description": o.description}, PROV_USER))
        for p in m.partners:
            store.upsert(Instance(f"partner-{p.id}", "Partner",
                                  {"availability": "available"}, PROV_USER))
            for f in p.functions:
                store.upsert(Instance(f"function-{f.id}", "Function",
                                      {"availability": "available", "partner": p.id}, PROV_USER))
        for s in services:
            store.upsert(Instance(f"service-{s.id}", "Service",
                                  {"status": "available"}, PROV_USER))
        return store

    return SituationTwin(expected=seed(), field=seed())


# ---------------------------------------------------------------------------
# CEP rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CepAction:
    op: str  # insert | delete | set_attribute
    instance: str  # template over {subject} and event attributes
    concept: str | None = None
    attribute: str | None = None
    value: str | None = None  # template; "{name}" pulls the raw typed value


@dataclass(frozen=True)
class CepRule:
    id: str
    source: str
    event_type: str  # exact type or prefix ending with '*'
    model: str
    action: CepAction
    correlate: str = "subject"
    count: int = 1
    window: float | None = None  # seconds over event timestamps

    def check(self) -> None:
        if self.source not in _MODEL_BY_SOURCE:
            raise AgilityError(f"rule {self.id!r}: unknown source {self.source!r}")
        if self.model != _MODEL_BY_SOURCE[self.source]:
            raise AgilityError(
                f"rule {self.id!r}: source {self.source!r} may only update the "
                f"{_MODEL_BY_SOURCE[self.source]!r} model")
        if self.count < 1:
            raise AgilityError(f"rule {self.id!r}: count must be >= 1")

    def matches(self, e: Event) -> bool:
        if e.source != self.source:
            return False
        if self.event_type.endswith("*"):
            return e.type.startswith(self.event_type[:-1])
        return e.type == self.event_type


def load_cep_rules(path) -> tuple[CepRule, ...]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh.read())
    if not isinstance(raw, dict) or raw.get("schema_version") != SCHEMA_VERSION:
        raise AgilityError(f"unsupported CEP rule schema in {path}")
    rules = []
    for r in raw.get("rules", []):
        a = r["action"]
        rule = CepRule(
            id=str(r["id"]),
            source=str(r["source"]),
            event_type=str(r["event_type"]),
            model=str(r["model"]),
            action=CepAction(
                op=str(a["op"]), instance=str(a["instance"]),
                concept=a.get("concept"), attribute=a.get("attribute"),
                value=a.get("value"),
            ),
            correlate=str(r.get("correlate", "subject")),
            count=int(r.get("count", 1)),
            window=float(r["window"]) if "window" in r else None,
        )
        rule.check()
        rules.append(rule)
    return tuple(rules)


def _template(text: str, e: Event) -> Any:
    """Substitute {subject} and event attributes; a bare {name} template keeps
    the attribute's typed value."""
    values: dict[str, Any] = {"subject": e.subject, **e.attributes}
    if text.startswith("{") and text.endswith("}") and text.count("{") == 1:
        key = text[1:-1]
        if key not in values:
            raise AgilityError(f"event {e.id!r} is missing attribute {key!r}")
        return values[key]
    try:
        return text.format(**values)
    except KeyError as exc:
        raise AgilityError(f"event {e.id!r} is missing attribute {exc}") from exc


@dataclass(frozen=True)
class AppliedRule:
    rule_id: str
    event_ids: tuple[str, ...]
    model: str
    delta: str


@dataclass
class IngestTrace:
    applied: tuple[AppliedRule, ...] = ()
    buffered: int = 0
    dropped: int = 0


class CepEngine:
    """Applies CEP rules to a twin; buffers partial matches per correlation key."""

    def __init__(self, rules: Iterable[CepRule]):
        self.rules = tuple(rules)
        self._buffers: dict[tuple[str, str], list[Event]] = {}
        self.unmatched_count = 0

    def ingest(self, e: Event, twin: SituationTwin) -> IngestTrace:
        applied: list[AppliedRule] = []
        matched_any = False
        buffered = 0
        for rule in self.rules:
            if not rule.matches(e):
                continue
            matched_any = True
            key = (rule.id, _correlation_key(rule, e))
            window_events = self._buffers.setdefault(key, [])
            window_events.append(e)
            if rule.window is not None:
                horizon = e.timestamp - rule.window
                window_events[:] = [w for w in window_events if w.timestamp >= horizon]
            if len(window_events) >= rule.count:
                batch = tuple(window_events[-rule.count:])
                self._buffers[key] = []
                delta = self._apply(rule, e, twin)
                applied.append(AppliedRule(
                    rule_id=rule.id, event_ids=tuple(w.id for w in batch),
                    model=rule.model, delta=delta,
                ))
                twin.watermarks[rule.model] = e.id
            else:
                buffered += 1
        if not matched_any:
            self.unmatched_count += 1
        return IngestTrace(applied=tuple(applied), buffered=buffered,
                           dropped=0 if matched_any else 1)

    def _apply(self, rule: CepRule, e: Event, twin: SituationTwin) -> str:
        store = twin.store(rule.model)
        action = rule.action
        instance_id = str(_template(action.instance, e))
        if action.op == "insert":
            concept = action.concept or "Context"
            attrs: dict[str, Any] = {}
            if action.attribute is not None and action.value is not None:
                attrs[action.attribute] = _template(action.value, e)
            existing = store.get(instance_id)
            if existing is not None:
                merged = dict(existing.attributes)
                merged.update(attrs)
                store.upsert(Instance(instance_id, existing.concept, merged, existing.provenance))
            else:
                store.upsert(Instance(instance_id, concept, attrs, PROV_EVENT))
            return f"insert:{instance_id}"
        if action.op == "delete":
            store.delete(instance_id)
            return f"delete:{instance_id}"
        if action.op == "set_attribute":
            if action.attribute is None or action.value is None:
                raise AgilityError(f"rule {rule.id!r}: set_attribute needs attribute and value")
            value = _template(action.value, e)
            if store.get(instance_id) is None:
                concept = action.concept or "Context"
                store.upsert(Instance(instance_id, concept, {}, PROV_EVENT))
            store.set_attribute(instance_id, action.attribute, value)
            return f"set:{instance_id}.{action.attribute}"
        raise AgilityError(f"rule {rule.id!r}: unknown action op {action.op!r}")


def _correlation_key(rule: CepRule, e: Event) -> str:
    if rule.correlate == "subject":
        return e.subject
    return str(e.attributes.get(rule.correlate, ""))


def replay_events(events: Iterable[Event], rules: Iterable[CepRule],
                  twin: SituationTwin) -> list[IngestTrace]:
    engine = CepEngine(rules)
    return [engine.ingest(e, twin) for e in events]


# ---------------------------------------------------------------------------
# Distance measurement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistanceReport:
    per_category: dict[str, float]
    total: float
    dominant: str | None
    threshold: float
    verdict: bool

    def to_raw(self) -> dict[str, Any]:
        return {
            "per_category": {k: round(v, 9) for k, v in sorted(self.per_category.items())},
            "total": round(self.total, 9),
            "dominant": self.dominant,
            "threshold": self.threshold,
            "verdict": self.verdict,
        }

    def to_bytes(self) -> bytes:
        return yaml.safe_dump(self.to_raw(), sort_keys=True).encode("utf-8")


def _categorize(store: InstanceStore) -> dict[str, set[tuple]]:
    cats: dict[str, set[tuple]] = {c: set() for c in CATEGORIES}
    for inst in store.instances():
        category = CATEGORY_OF_CONCEPT.get(inst.concept)
        if category is None:
            continue
        cats[category].add(("inst", inst.id, inst.concept))
        for name, value in inst.attributes.items():
            cats[category].add(("attr", inst.id, name, repr(value)))
    return cats


def measure(twin: SituationTwin, weights: dict[str, float] | None = None,
            threshold: float = DEFAULT_THRESHOLD) -> DistanceReport:
    """Weighted symmetric-difference divergence between the twin models."""
    weights = dict(weights or DEFAULT_WEIGHTS)
    total_weight = sum(weights.get(c, 0.0) for c in CATEGORIES)
    if abs(total_weight - 1.0) > 1e-9:
        raise AgilityError(f"category weights must sum to 1, got {total_weight}")
    expected, observed = _categorize(twin.expected), _categorize(twin.field)
    per_category: dict[str, float] = {}
    for c in CATEGORIES:
        union = expected[c] | observed[c]
        if not union:
            per_category[c] = 0.0
        else:
            per_category[c] = len(expected[c] ^ observed[c]) / len(union)
    total = sum(weights.get(c, 0.0) * per_category[c] for c in CATEGORIES)
    dominant = None
    if total > 0.0:
        dominant = max(CATEGORIES, key=lambda c: (per_category[c], -CATEGORIES.index(c)))
    return DistanceReport(per_category=per_category, total=total, dominant=dominant,
                          threshold=threshold, verdict=total > threshold)


def select_adaptation(report: DistanceReport) -> str:
    """Map the dominant divergence category to the pipeline re-entry point."""
    if not report.verdict or report.dominant is None:
        return REENTRY_NONE
    return _REENTRY_BY_CATEGORY[report.dominant]


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


@dataclass
class AdaptationRecord:
    re_entry: str
    interrupted: tuple[str, ...] = ()
    old_workflows: tuple[str, ...] = ()
    new_workflows: tuple[str, ...] = ()
    state: str = "done"  # done | awaiting_model_edit | failed
    error: str | None = None

    def to_raw(self) -> dict[str, Any]:
        return {
            "re_entry": self.re_entry,
            "interrupted": list(self.interrupted),
            "old_workflows": list(self.old_workflows),
            "new_workflows": list(self.new_workflows),
            "state": self.state,
            "error": self.error,
        }


def dispatch(re_entry: str, *, running_instances: Iterable[str] = (),
             interrupt: Callable[[str], Any] | None = None,
             gather_knowledge: Callable[[], Any] | None = None,
             rededuce_processes: Callable[[], tuple[str, ...]] | None = None,
             rediscover_services: Callable[[], tuple[str, ...]] | None = None,
             old_workflows: Iterable[str] = ()) -> AdaptationRecord:
    """Interrupt the affected instances, then re-enter the pipeline.

    The stage callables are injected by the pipeline driver; gather_knowledge
    pauses for a model edit, the other two run automatically and return the
    ids of the regenerated workflows.
    """
    if re_entry == REENTRY_NONE:
        raise AgilityError("dispatch called with no adaptation selected")
    record = AdaptationRecord(re_entry=re_entry, old_workflows=tuple(old_workflows))
    interrupted = []
    for iid in running_instances:
        if interrupt is not None:
            interrupt(iid)
        interrupted.append(iid)
    record.interrupted = tuple(interrupted)
    try:
        if re_entry == REENTRY_GATHER:
            if gather_knowledge is not None:
                gather_knowledge()
            record.state = "awaiting_model_edit"
        elif re_entry == REENTRY_REDEDUCE:
            if rededuce_processes is None:
                raise AgilityError("no rededuce_processes stage wired")
            record.new_workflows = tuple(rededuce_processes())
        elif re_entry == REENTRY_REDISCOVER:
            if rediscover_services is None:
                raise AgilityError("no rediscover_services stage wired")
            record.new_workflows = tuple(rediscover_services())
        else:
            raise AgilityError(f"unknown re-entry {re_entry!r}")
    except AgilityError:
        raise
    except Exception as exc:  # stage failure: surface it, instances stay interrupted
        record.state = "failed"
        record.error = str(exc)
    return record
