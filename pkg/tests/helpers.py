"""Generators and oracles shared across the test modules."""

from __future__ import annotations

import itertools
import random

from mediate.matching import (
    ActivityRequirement,
    Endpoint,
    Profile,
    ServiceDescriptor,
    ServiceOperation,
    hybrid_score,
)
from mediate.model import (
    CollaborationModel,
    ConceptRef,
    FunctionAnnotation,
    MessageDef,
    Objective,
    Partner,
    SharedFunction,
    SubNetwork,
)
from mediate.ontology import Concept, Ontology, concept_distance


def tiny_annotation(concept: str) -> FunctionAnnotation:
    return FunctionAnnotation(capability=(ConceptRef(concept),))


def minimal_model(**overrides) -> CollaborationModel:
    base = dict(
        network_id="net-1",
        name="minimal",
        sub_networks=(SubNetwork("sn-1", "SN 1", ("p-1", "p-2")),),
        partners=(
            Partner("p-1", "One", (
                SharedFunction("f-1", "make thing", (), ("m-1",), tiny_annotation("Fabricate")),
            )),
            Partner("p-2", "Two", (
                SharedFunction("f-2", "check thing", ("m-1",), (), tiny_annotation("Inspect")),
            )),
        ),
        objectives=(
            Objective("o-1", "operation", "get it done", "sn-1", (ConceptRef("Fabricate"),)),
        ),
        messages=(MessageDef("m-1", "thing", ConceptRef("Product")),),
    )
    base.update(overrides)
    return CollaborationModel(**base)


def random_wired_model(rng: random.Random, n_functions: int,
                       n_sub_networks: int = 1, kind: str = "operation"):
    """Model with forward-only message wiring: function i may feed function j>i.

    Each function gets its own objective (distinct concept tags are irrelevant
    because tests assign directly). Returns (model, assignment, deps) where
    deps is the set of (producer fid, consumer fid) pairs.
    """
    messages = []
    functions: list[SharedFunction] = []
    inputs: dict[int, list[str]] = {i: [] for i in range(n_functions)}
    outputs: dict[int, list[str]] = {i: [] for i in range(n_functions)}
    deps: set[tuple[str, str]] = set()
    msg_no = 0
    for i in range(n_functions):
        for j in range(i + 1, n_functions):
            if rng.random() < 0.4:
                msg_no += 1
                mid = f"m-{msg_no}"
                messages.append(MessageDef(mid, mid, ConceptRef("Product")))
                outputs[i].append(mid)
                inputs[j].append(mid)
                deps.add((f"f-{i}", f"f-{j}"))
    partner_count = max(2, min(3, n_functions))
    partners = []
    per_partner: dict[int, list[SharedFunction]] = {k: [] for k in range(partner_count)}
    for i in range(n_functions):
        per_partner[i % partner_count].append(SharedFunction(
            f"f-{i}", f"function {i}", tuple(inputs[i]), tuple(outputs[i]),
            tiny_annotation("Fabricate"),
        ))
    for k in range(partner_count):
        partners.append(Partner(f"p-{k}", f"Partner {k}", tuple(per_partner[k])))
    sub_networks = tuple(
        SubNetwork(f"sn-{s}", f"SN {s}", tuple(p.id for p in partners))
        for s in range(n_sub_networks)
    )
    objectives = tuple(
        Objective(f"o-{i}", kind, f"objective {i}", "sn-0", (ConceptRef("Fabricate"),))
        for i in range(n_functions)
    )
    model = CollaborationModel(
        network_id="net-r", name="random", sub_networks=sub_networks,
        partners=tuple(partners), objectives=objectives, messages=tuple(messages),
    )
    assignment = {f"o-{i}": [f"f-{i}"] for i in range(n_functions)}
    return model, assignment, deps


def orderings_respecting(deps: set[tuple[str, str]], items: list[str]) -> frozenset[tuple[str, ...]]:
    """Brute-force: every permutation consistent with the dependency pairs."""
    out = set()
    for perm in itertools.permutations(items):
        index = {fid: i for i, fid in enumerate(perm)}
        if all(index[a] < index[b] for a, b in deps if a in index and b in index):
            out.add(perm)
    return frozenset(out)


def random_taxonomy(rng: random.Random, n: int) -> Ontology:
    """Random forest-shaped concept graph (each concept gets 0..2 earlier parents)."""
    concepts = []
    for i in range(n):
        parents = []
        if i > 0 and rng.random() < 0.8:
            parents.append(f"c{rng.randrange(i)}")
            if rng.random() < 0.2:
                other = f"c{rng.randrange(i)}"
                if other not in parents:
                    parents.append(other)
        concepts.append(Concept(f"c{i}", f"concept {i}", tuple(parents)))
    return Ontology(concepts)


# -- matchmaking instances and the exhaustive-search oracle ----------------------

MATCH_CAPABILITIES = [
    "PickGoods", "PackGoods", "ShipParcel", "PrintLabel", "IssueInvoice",
    "Inspect", "Assemble", "StoreGoods", "TrackShipment", "NotifyCustomer",
]
MATCH_OBJECTS = [
    "Parcel", "Invoice", "DeliveryNotice", "ShippingLabel", "DeliverySchedule",
    "InspectionReport", "DeliveryConfirmation", "Product",
]
MATCH_WORDS = ["swift", "cargo", "atlas", "nimbus", "pallet", "beacon", "quay", "depot"]


def service_of(sid, name, cap, ins, outs, kind="mock") -> ServiceDescriptor:
    return ServiceDescriptor(
        id=sid, name=name, endpoint=Endpoint(kind),
        profile=Profile(name, tuple(cap), tuple(ins), tuple(outs)),
        operations=(ServiceOperation("main"),),
    )


def activity_of(aid, name, cap, ins, outs) -> ActivityRequirement:
    return ActivityRequirement(id=aid, name=name,
                               profile=Profile(name, tuple(cap), tuple(ins), tuple(outs)))


def random_match_instance(rng: random.Random):
    registry = []
    for i in range(rng.randint(3, 12)):
        registry.append(service_of(
            f"svc-{i}",
            " ".join(rng.sample(MATCH_WORDS, rng.randint(1, 2))),
            rng.sample(MATCH_CAPABILITIES, rng.randint(1, 2)),
            rng.sample(MATCH_OBJECTS, rng.randint(0, 2)),
            rng.sample(MATCH_OBJECTS, rng.randint(1, 2)),
        ))
    activity = activity_of(
        "f-r", " ".join(rng.sample(MATCH_WORDS, rng.randint(1, 2))),
        rng.sample(MATCH_CAPABILITIES, rng.randint(1, 2)),
        rng.sample(MATCH_OBJECTS, rng.randint(0, 2)),
        rng.sample(MATCH_OBJECTS, rng.randint(1, 3)),
    )
    return activity, tuple(registry)


def oracle_best_score(activity: Profile, registry, o, cfg) -> float | None:
    """Independent exhaustive matching search.

    Single covering services first; otherwise subsets of size <= k whose
    members each supply at least one required output.
    """

    def covers(services) -> bool:
        for out in sorted(set(activity.outputs)):
            if not any(concept_distance(out, c, o) >= cfg.cover_threshold
                       for s in services for c in s.profile.outputs):
                return False
        return True

    def union_score(services) -> float:
        ordered = sorted(services, key=lambda s: s.id)
        union = Profile(
            name=" ".join(s.name for s in ordered),
            capability=tuple(sorted({c for s in ordered for c in s.profile.capability})),
            inputs=tuple(sorted({c for s in ordered for c in s.profile.inputs})),
            outputs=tuple(sorted({c for s in ordered for c in s.profile.outputs})),
        )
        return hybrid_score(activity, union, o, cfg.alpha)

    singles = [s for s in registry if covers([s])]
    if singles:
        return max(union_score([s]) for s in singles)
    contributing = [s for s in registry if any(
        concept_distance(out, c, o) >= cfg.cover_threshold
        for out in activity.outputs for c in s.profile.outputs)]
    best = None
    for size in range(2, cfg.composition_k + 1):
        for combo in itertools.combinations(contributing, size):
            if covers(combo):
                score = union_score(combo)
                if best is None or score > best:
                    best = score
    return best
