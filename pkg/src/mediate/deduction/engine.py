"""Mediation deduction: seed the instance store from a model, run the five
transformation rule groups, and select functions for objectives.

Store vocabulary. Instances: SubNetwork, Partner, Function, Message,
Objective, then the deduced Mediator, Order, MediatorFunction and
InterMediatorFunction. Relations: hasPartner, ownsFunction, consumes,
produces, belongsTo, generates, then the deduced hasMediator,
hasMediatorRelationship, wraps, hasMediatorFunction, orderProducer,
orderConsumer, orderMessage, connects.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Iterable

from ..errors import DeductionError
from ..model import (
    LINK_EXACT,
    LINK_NEAR_BY,
    LINK_SAME_AS,
    CollaborationModel,
)
from ..ontology import Instance, InstanceStore, Ontology, PROV_USER, concept_distance
from .rules import RuleGroup, TraceEntry, apply_group, load_rule_groups

_KIND_PRIORITY = {LINK_EXACT: 0, LINK_SAME_AS: 1, LINK_NEAR_BY: 2}


def default_rule_groups() -> tuple[RuleGroup, ...]:
    path = resources.files("mediate.data").joinpath("deduction-rules.yaml")
    with resources.as_file(path) as p:
        return load_rule_groups(p)


def seed_store(m: CollaborationModel, generates: dict[str, list[str]] | None = None) -> InstanceStore:
    """Materialize a collaboration model as user-provenance instances.

    ``generates`` maps objective ids to the function ids selected for them;
    when omitted, no generates relations are seeded yet.
    """
    store = InstanceStore()
    for sn in m.sub_networks:
        store.upsert(Instance(sn.id, "SubNetwork", {"name": sn.name}, PROV_USER))
    for p in m.partners:
        store.upsert(Instance(p.id, "Partner", {"name": p.name}, PROV_USER))
        for f in p.functions:
            store.upsert(Instance(f.id, "Function", {"name": f.name}, PROV_USER))
            store.add_relation(p.id, "ownsFunction", f.id)
    for msg in m.messages:
        store.upsert(Instance(msg.id, "Message", {"name": msg.name}, PROV_USER))
    for sn in m.sub_networks:
        for pid in sn.partners:
            store.add_relation(sn.id, "hasPartner", pid)
    for p in m.partners:
        for f in p.functions:
            for mid in f.inputs:
                store.add_relation(f.id, "consumes", mid)
            for mid in f.outputs:
                store.add_relation(f.id, "produces", mid)
    for o in m.objectives:
        store.upsert(Instance(o.id, "Objective", {"kind": o.kind, "description": o.description},
                              PROV_USER))
        store.add_relation(o.id, "belongsTo", o.sub_network)
    for oid, fids in (generates or {}).items():
        for fid in fids:
            store.add_relation(oid, "generates", fid)
    return store


@dataclass(frozen=True)
class MediationInstances:
    """Read-only view over the deduced portion of a store."""

    mediators: tuple[Instance, ...]
    orders: tuple[Instance, ...]
    generated_functions: tuple[Instance, ...]
    inter_mediator_functions: tuple[Instance, ...]

    @classmethod
    def from_store(cls, store: InstanceStore) -> "MediationInstances":
        return cls(
            mediators=tuple(store.instances("Mediator")),
            orders=tuple(store.instances("Order")),
            generated_functions=tuple(store.instances("MediatorFunction")),
            inter_mediator_functions=tuple(store.instances("InterMediatorFunction")),
        )

    def check(self, store: InstanceStore) -> None:
        sub_networks = store.instances("SubNetwork")
        for sn in sub_networks:
            count = len(store.relations(predicate="hasMediator", subject=sn.id))
            if count != 1:
                raise DeductionError(f"sub-network {sn.id!r} has {count} mediators, expected 1")
        for order in self.orders:
            producer = order.attributes.get("producer")
            consumer = order.attributes.get("consumer")
            message = order.attributes.get("message")
            for fid in (producer, consumer):
                if not store.relations(predicate="wraps", object=fid):
                    raise DeductionError(f"order {order.id!r} endpoint {fid!r} has no mediator function")
            if store.get(message) is None:
                raise DeductionError(f"order {order.id!r} references missing message {message!r}")


class DeductionEngine:
    """Applies the shipped rule groups in waterfall order over a store."""

    def __init__(self, groups: Iterable[RuleGroup] | None = None):
        self.groups = tuple(groups) if groups is not None else default_rule_groups()
        if len(self.groups) < 5:
            raise DeductionError(f"expected 5 rule groups, loaded {len(self.groups)}")
        self.traces: list[TraceEntry] = []

    def _apply(self, store: InstanceStore, index: int) -> list[TraceEntry]:
        trace = apply_group(store, self.groups[index])
        self.traces.extend(trace)
        return trace

    def apply_group_1(self, store: InstanceStore) -> MediationInstances:
        self._apply(store, 0)
        return MediationInstances.from_store(store)

    def apply_group_2(self, store: InstanceStore) -> MediationInstances:
        self._apply(store, 1)
        return MediationInstances.from_store(store)

    def apply_groups_3_to_5(self, store: InstanceStore) -> MediationInstances:
        for index in (2, 3, 4):
            self._apply(store, index)
        view = MediationInstances.from_store(store)
        view.check(store)
        return view

    def apply_all(self, store: InstanceStore) -> MediationInstances:
        self.apply_group_1(store)
        self.apply_group_2(store)
        return self.apply_groups_3_to_5(store)


# ---------------------------------------------------------------------------
# Function selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectedFunction:
    function_id: str
    partner_id: str
    link_kind: str
    similarity: float


@dataclass(frozen=True)
class SelectionResult:
    by_objective: dict[str, tuple[SelectedFunction, ...]]
    unmatched: tuple[str, ...]

    def to_raw(self) -> dict:
        return {
            "objectives": {
                oid: [
                    {"function": s.function_id, "partner": s.partner_id,
                     "kind": s.link_kind, "similarity": round(s.similarity, 6)}
                    for s in sels
                ]
                for oid, sels in self.by_objective.items()
            },
            "unmatched": list(self.unmatched),
        }


def _resolved_concepts(refs, o: Ontology) -> list[str]:
    out = []
    for ref in refs:
        cid = ref.resolved or o.resolve(ref.concept_id)
        if cid:
            out.append(cid)
    return out


def _match_kind(objective_concepts: list[str], function_concepts: list[str],
                o: Ontology, threshold: float) -> tuple[str, float] | None:
    best: tuple[int, float] | None = None
    for oc in objective_concepts:
        for fc in function_concepts:
            if oc == fc:
                cand = (_KIND_PRIORITY[LINK_EXACT], 1.0)
            elif o.representative(oc) == o.representative(fc):
                cand = (_KIND_PRIORITY[LINK_SAME_AS], 1.0)
            else:
                sim = concept_distance(oc, fc, o)
                if sim < threshold:
                    continue
                cand = (_KIND_PRIORITY[LINK_NEAR_BY], sim)
            if best is None or (cand[0], -cand[1]) < (best[0], -best[1]):
                best = cand
    if best is None:
        return None
    for kind, pri in _KIND_PRIORITY.items():
        if pri == best[0]:
            return kind, best[1]
    return None


def select_functions(m: CollaborationModel, o: Ontology, *,
                     near_by_threshold: float = 0.5) -> SelectionResult:
    """Map each objective to the ranked functions able to achieve it."""
    by_objective: dict[str, tuple[SelectedFunction, ...]] = {}
    unmatched: list[str] = []
    for objective in m.objectives:
        oc = _resolved_concepts(objective.annotation, o)
        rows: list[SelectedFunction] = []
        for partner, func in m.functions():
            fc = _resolved_concepts(func.annotation.capability, o)
            hit = _match_kind(oc, fc, o, near_by_threshold)
            if hit is None:
                continue
            kind, sim = hit
            rows.append(SelectedFunction(func.id, partner.id, kind, sim))
        rows.sort(key=lambda s: (_KIND_PRIORITY[s.link_kind], -s.similarity,
                                 s.partner_id, s.function_id))
        by_objective[objective.id] = tuple(rows)
        if not rows:
            unmatched.append(objective.id)
    return SelectionResult(by_objective=by_objective, unmatched=tuple(unmatched))


def assign_functions(selection: SelectionResult, m: CollaborationModel) -> dict[str, list[str]]:
    """Resolve the selection to a one-objective-per-function assignment.

    A function matched by several objectives goes to the objective where its
    match is strongest; ties fall to document order. The result drives the
    generates relations and the cartography, where each selected function
    appears exactly once.
    """
    objective_order = {o.id: i for i, o in enumerate(m.objectives)}
    best: dict[str, tuple[tuple, str]] = {}
    for oid, rows in selection.by_objective.items():
        for rank, row in enumerate(rows):
            key = (_KIND_PRIORITY[row.link_kind], -row.similarity,
                   objective_order.get(oid, 0), rank)
            cur = best.get(row.function_id)
            if cur is None or key < cur[0]:
                best[row.function_id] = (key, oid)
    assignment: dict[str, list[str]] = {o.id: [] for o in m.objectives}
    for oid, rows in selection.by_objective.items():
        for row in rows:
            if best.get(row.function_id, (None, None))[1] == oid:
                assignment[oid].append(row.function_id)
    return {oid: fids for oid, fids in assignment.items() if fids}
