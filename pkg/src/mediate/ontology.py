"""Concept graph and instance store.

The ontology is a subsumption DAG plus declared relations (``same_as``,
``part_of``). Similarity between two concepts is computed on the quotient
graph obtained by merging ``same_as`` equivalence classes:

    similarity(a, b) = 2 * depth(lca) / (depth(a) + depth(b))

with depth(root) = 1 and the deepest common ancestor chosen on ties. The
result is 1.0 exactly when the two concepts coincide (or are declared
equivalent) and 0.0 when they share no ancestor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

import yaml

from .errors import OntologyError, ProvenanceConflictError, UnknownConceptError
from .model import (
    LINK_EXACT,
    LINK_NEAR_BY,
    CollaborationModel,
    ConceptRef,
    iter_concept_refs,
    with_resolved_ref,
)

SCHEMA_VERSION = 1

PRED_SAME_AS = "same_as"
PRED_PART_OF = "part_of"

PROV_USER = "user"
PROV_DEDUCED = "deduced"
PROV_EVENT = "event"
PROVENANCES = frozenset({PROV_USER, PROV_DEDUCED, PROV_EVENT})

_TOKEN_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z]*|[a-z]+|\d+")


def tokenize(label: str) -> frozenset[str]:
    """Lower-cased token set of a label or CamelCase identifier."""
    return frozenset(t.lower() for t in _TOKEN_RE.findall(label or ""))


def token_set_similarity(a: str, b: str) -> float:
    ta, tb = tokenize(a), tokenize(b)
    if not ta and not tb:
        return 0.0
    union = ta | tb
    return len(ta & tb) / len(union) if union else 0.0


@dataclass(frozen=True)
class Concept:
    id: str
    label: str
    parents: tuple[str, ...] = ()


@dataclass(frozen=True)
class Relation:
    subject: str
    predicate: str
    object: str


@dataclass
class Instance:
    id: str
    concept: str
    attributes: dict[str, Any] = field(default_factory=dict)
    provenance: str = PROV_USER

    def copy(self) -> "Instance":
        return Instance(self.id, self.concept, dict(self.attributes), self.provenance)


class Ontology:
    """Immutable after construction; precomputes equivalence classes and depths."""

    def __init__(self, concepts: Iterable[Concept], relations: Iterable[Relation] = (),
                 instances: Iterable[Instance] = ()):
        self.concepts: dict[str, Concept] = {}
        for c in concepts:
            if c.id in self.concepts:
                raise OntologyError(f"duplicate concept id {c.id!r}")
            self.concepts[c.id] = c
        self.relations: tuple[Relation, ...] = tuple(relations)
        self.instances: tuple[Instance, ...] = tuple(instances)
        self._check_references()
        self._labels = {self._norm(c.label): c.id for c in self.concepts.values()}
        self._classes = self._equivalence_classes()
        self._parents = self._quotient_parents()
        self._depths = self._compute_depths()
        self._ancestor_cache: dict[str, frozenset[str]] = {}

    # -- construction checks -------------------------------------------------

    def _check_references(self) -> None:
        for c in self.concepts.values():
            for p in c.parents:
                if p not in self.concepts:
                    raise OntologyError(f"concept {c.id!r} has unknown parent {p!r}")
        # subsumption must be acyclic before any same_as merging
        state: dict[str, int] = {}

        def visit(cid: str, trail: list[str]) -> None:
            mark = state.get(cid)
            if mark == 2:
                return
            if mark == 1:
                cycle = trail[trail.index(cid):] + [cid]
                raise OntologyError("cycle in concept hierarchy: " + " -> ".join(cycle))
            state[cid] = 1
            trail.append(cid)
            for p in self.concepts[cid].parents:
                visit(p, trail)
            trail.pop()
            state[cid] = 2

        for cid in self.concepts:
            visit(cid, [])
        for r in self.relations:
            for end in (r.subject, r.object):
                if end not in self.concepts:
                    raise OntologyError(f"relation {r.predicate!r} references unknown concept {end!r}")
        for inst in self.instances:
            if inst.concept not in self.concepts:
                raise OntologyError(f"instance {inst.id!r} has unknown concept {inst.concept!r}")
            if inst.provenance not in PROVENANCES:
                raise OntologyError(f"instance {inst.id!r} has unknown provenance {inst.provenance!r}")

    @staticmethod
    def _norm(label: str) -> str:
        return " ".join(sorted(tokenize(label)))

    def _equivalence_classes(self) -> dict[str, str]:
        """Union-find over same_as relations; maps concept id to class representative."""
        parent = {cid: cid for cid in self.concepts}

        def find(x: str) -> str:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for r in self.relations:
            if r.predicate == PRED_SAME_AS:
                ra, rb = find(r.subject), find(r.object)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        return {cid: find(cid) for cid in self.concepts}

    def _quotient_parents(self) -> dict[str, frozenset[str]]:
        lifted: dict[str, set[str]] = {rep: set() for rep in set(self._classes.values())}
        for c in self.concepts.values():
            rep = self._classes[c.id]
            for p in c.parents:
                prep = self._classes[p]
                if prep != rep:
                    lifted[rep].add(prep)
        return {rep: frozenset(ps) for rep, ps in lifted.items()}

    def _compute_depths(self) -> dict[str, int]:
        depths: dict[str, int] = {}
        visiting: set[str] = set()

        def depth(rep: str) -> int:
            if rep in depths:
                return depths[rep]
            if rep in visiting:
                cycle = sorted(visiting | {rep})
                raise OntologyError("cycle in concept hierarchy involving: " + ", ".join(cycle))
            visiting.add(rep)
            parents = self._parents[rep]
            d = 1 if not parents else 1 + max(depth(p) for p in parents)
            visiting.discard(rep)
            depths[rep] = d
            return d

        for rep in self._parents:
            depth(rep)
        return depths

    # -- queries ---------------------------------------------------------------

    def has(self, concept_id: str) -> bool:
        return concept_id in self.concepts

    def resolve(self, name: str) -> str | None:
        """Resolve a concept by id, or by exact normalized label."""
        if name in self.concepts:
            return name
        return self._labels.get(self._norm(name))

    def label_of(self, concept_id: str) -> str:
        return self.concepts[concept_id].label

    def representative(self, concept_id: str) -> str:
        if concept_id not in self.concepts:
            raise UnknownConceptError(concept_id)
        return self._classes[concept_id]

    def ancestors(self, concept_id: str) -> frozenset[str]:
        """Class representatives of the concept and all its ancestors."""
        rep = self.representative(concept_id)
        cached = self._ancestor_cache.get(rep)
        if cached is not None:
            return cached
        out: set[str] = set()
        stack = [rep]
        while stack:
            cur = stack.pop()
            if cur in out:
                continue
            out.add(cur)
            stack.extend(self._parents[cur])
        result = frozenset(out)
        self._ancestor_cache[rep] = result
        return result

    def depth(self, concept_id: str) -> int:
        return self._depths[self.representative(concept_id)]

    def parts_of(self, concept_id: str) -> tuple[str, ...]:
        """Direct parts declared via part_of(part, whole), in relation order."""
        if concept_id not in self.concepts:
            raise UnknownConceptError(concept_id)
        return tuple(r.subject for r in self.relations
                     if r.predicate == PRED_PART_OF and r.object == concept_id)

    def same_as_pairs(self) -> frozenset[frozenset[str]]:
        return frozenset(
            frozenset((r.subject, r.object))
            for r in self.relations if r.predicate == PRED_SAME_AS
        )

    def to_raw(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "concepts": [
                {"id": c.id, "label": c.label, "parents": list(c.parents)}
                for c in self.concepts.values()
            ],
            "relations": [[r.subject, r.predicate, r.object] for r in self.relations],
            "instances": [
                {"id": i.id, "concept": i.concept, "attributes": dict(i.attributes),
                 "provenance": i.provenance}
                for i in self.instances
            ],
        }


def concept_distance(a: str, b: str, o: Ontology) -> float:
    """Similarity of two concepts in [0, 1]; 1.0 iff identical or declared equivalent."""
    ra, rb = o.representative(a), o.representative(b)
    if ra == rb:
        return 1.0
    common = o.ancestors(a) & o.ancestors(b)
    if not common:
        return 0.0
    lca_depth = max(o._depths[c] for c in common)
    return 2.0 * lca_depth / (o._depths[ra] + o._depths[rb])


def load_ontology(path) -> Ontology:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_ontology(fh.read())


def loads_ontology(text: str) -> Ontology:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise OntologyError(f"ontology file is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise OntologyError("ontology document must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise OntologyError(f"unsupported ontology schema_version: {version!r}")
    concepts = [
        Concept(
            id=str(c["id"]),
            label=str(c.get("label", c["id"])),
            parents=tuple(str(p) for p in c.get("parents", [])),
        )
        for c in raw.get("concepts", [])
    ]
    relations = []
    for r in raw.get("relations", []):
        if isinstance(r, (list, tuple)) and len(r) == 3:
            relations.append(Relation(str(r[0]), str(r[1]), str(r[2])))
        elif isinstance(r, dict):
            relations.append(Relation(str(r["subject"]), str(r["predicate"]), str(r["object"])))
        else:
            raise OntologyError(f"malformed relation entry: {r!r}")
    instances = [
        Instance(
            id=str(i["id"]),
            concept=str(i["concept"]),
            attributes=dict(i.get("attributes", {})),
            provenance=str(i.get("provenance", PROV_USER)),
        )
        for i in raw.get("instances", [])
    ]
    return Ontology(concepts, relations, instances)


# ---------------------------------------------------------------------------
# Instance store
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttributeDelta:
    instance_id: str
    attribute: str
    old: Any
    new: Any


class InstanceStore:
    """Mutable store of instances and relations with a provenance guard.

    Single writer at a time; ``snapshot`` returns an independent copy that
    readers can use without seeing later writes.
    """

    def __init__(self):
        self._instances: dict[str, Instance] = {}
        self._relations: list[Relation] = []
        self._relation_set: set[tuple[str, str, str]] = set()

    # -- reads ---------------------------------------------------------------

    def get(self, instance_id: str) -> Instance | None:
        return self._instances.get(instance_id)

    def instances(self, concept: str | None = None) -> list[Instance]:
        out = [i for i in self._instances.values() if concept is None or i.concept == concept]
        return sorted(out, key=lambda i: i.id)

    def relations(self, predicate: str | None = None,
                  subject: str | None = None, object: str | None = None) -> list[Relation]:
        return [
            r for r in self._relations
            if (predicate is None or r.predicate == predicate)
            and (subject is None or r.subject == subject)
            and (object is None or r.object == object)
        ]

    def has_relation(self, subject: str, predicate: str, object: str) -> bool:
        return (subject, predicate, object) in self._relation_set

    def snapshot(self) -> "InstanceStore":
        clone = InstanceStore()
        clone._instances = {k: v.copy() for k, v in self._instances.items()}
        clone._relations = list(self._relations)
        clone._relation_set = set(self._relation_set)
        return clone

    def element_set(self) -> frozenset[tuple]:
        """Canonical element encoding used for distance measurement."""
        elems: set[tuple] = set()
        for inst in self._instances.values():
            elems.add(("inst", inst.id, inst.concept))
            for name, value in inst.attributes.items():
                elems.add(("attr", inst.id, name, repr(value)))
        return frozenset(elems)

    # -- writes ----------------------------------------------------------------

    def upsert(self, inst: Instance) -> bool:
        """Insert an instance; returns True when the store changed.

        A deduced/event write that would replace differing user-provenance
        content raises instead of silently overwriting.
        """
        existing = self._instances.get(inst.id)
        if existing is None:
            self._instances[inst.id] = inst.copy()
            return True
        same = existing.concept == inst.concept and existing.attributes == inst.attributes
        if same:
            return False
        if existing.provenance == PROV_USER and inst.provenance != PROV_USER:
            raise ProvenanceConflictError(
                f"{inst.provenance} write would overwrite user instance {inst.id!r}"
            )
        self._instances[inst.id] = inst.copy()
        return True

    def set_attribute(self, instance_id: str, name: str, value: Any) -> AttributeDelta:
        inst = self._instances.get(instance_id)
        if inst is None:
            raise KeyError(f"unknown instance {instance_id!r}")
        old = inst.attributes.get(name)
        inst.attributes[name] = value
        return AttributeDelta(instance_id, name, old, value)

    def delete(self, instance_id: str) -> bool:
        if instance_id not in self._instances:
            return False
        del self._instances[instance_id]
        self._relations = [
            r for r in self._relations if r.subject != instance_id and r.object != instance_id
        ]
        self._relation_set = {(r.subject, r.predicate, r.object) for r in self._relations}
        return True

    def add_relation(self, subject: str, predicate: str, object: str) -> bool:
        key = (subject, predicate, object)
        if key in self._relation_set:
            return False
        self._relation_set.add(key)
        self._relations.append(Relation(subject, predicate, object))
        return True


# ---------------------------------------------------------------------------
# Reference linking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkCandidate:
    concept_id: str
    link_kind: str
    label_score: float
    semantic_score: float


@dataclass(frozen=True)
class LinkProposal:
    path: str
    ref: ConceptRef
    candidates: tuple[LinkCandidate, ...]


@dataclass(frozen=True)
class CompletionReport:
    resolved: tuple[tuple[str, str, str], ...]  # (path, concept id, link kind)
    proposals: tuple[LinkProposal, ...]

    @property
    def complete(self) -> bool:
        return not self.proposals

    def to_raw(self) -> dict[str, Any]:
        return {
            "resolved": [list(r) for r in self.resolved],
            "proposals": [
                {
                    "path": p.path,
                    "concept": p.ref.concept_id,
                    "candidates": [
                        {
                            "concept": c.concept_id,
                            "kind": c.link_kind,
                            "label_score": c.label_score,
                            "semantic_score": c.semantic_score,
                        }
                        for c in p.candidates
                    ],
                }
                for p in self.proposals
            ],
        }


def _candidates_for(ref: ConceptRef, o: Ontology, near_by_threshold: float,
                    limit: int) -> tuple[LinkCandidate, ...]:
    """Rank ontology concepts against an unresolved ref.

    Primary key is label similarity; the tie-breaker is the similarity between
    the candidate and any concept that one of the ref's label tokens resolves
    to directly (the "anchor" concepts).
    """
    anchors = []
    for token in sorted(tokenize(ref.concept_id)):
        hit = o.resolve(token)
        if hit:
            anchors.append(hit)
    scored = []
    for cid, concept in o.concepts.items():
        label_score = token_set_similarity(ref.concept_id, concept.label)
        semantic_score = max(
            (concept_distance(a, cid, o) for a in anchors), default=0.0
        )
        if label_score <= 0.0 and semantic_score <= 0.0:
            continue
        if max(label_score, semantic_score) < near_by_threshold:
            continue
        scored.append(LinkCandidate(cid, LINK_NEAR_BY, label_score, semantic_score))
    scored.sort(key=lambda c: (-c.label_score, -c.semantic_score, c.concept_id))
    return tuple(scored[:limit])


def link_references(m: CollaborationModel, o: Ontology, *,
                    near_by_threshold: float = 0.5,
                    max_candidates: int = 5) -> tuple[CollaborationModel, CompletionReport]:
    """Resolve every concept ref in the model against the ontology.

    Returns the model copy with confirmed links applied plus a report carrying
    open proposals for refs that could not be auto-confirmed. The ontology is
    never mutated.
    """
    resolved: list[tuple[str, str, str]] = []
    proposals: list[LinkProposal] = []
    linked = m
    for path, ref in iter_concept_refs(m):
        if ref.resolved is not None and o.has(ref.resolved):
            resolved.append((path, ref.resolved, ref.link_kind))
            continue
        target = o.resolve(ref.concept_id)
        if target is not None:
            new_ref = ConceptRef(ref.concept_id, LINK_EXACT, resolved=target)
            linked = with_resolved_ref(linked, path, new_ref)
            resolved.append((path, target, LINK_EXACT))
            continue
        candidates = _candidates_for(ref, o, near_by_threshold, max_candidates)
        proposals.append(LinkProposal(path=path, ref=ref, candidates=candidates))
    return linked, CompletionReport(resolved=tuple(resolved), proposals=tuple(proposals))


def confirm_proposal(m: CollaborationModel, proposal_path: str, ref: ConceptRef,
                     candidate: LinkCandidate) -> CollaborationModel:
    """Store a confirmed link on the model side."""
    new_ref = ConceptRef(ref.concept_id, candidate.link_kind, resolved=candidate.concept_id)
    return with_resolved_ref(m, proposal_path, new_ref)


def auto_confirm(m: CollaborationModel, report: CompletionReport) -> CollaborationModel:
    """Accept the top candidate of every proposal that has one (headless runs)."""
    for p in report.proposals:
        if p.candidates:
            m = confirm_proposal(m, p.path, p.ref, p.candidates[0])
    return m
