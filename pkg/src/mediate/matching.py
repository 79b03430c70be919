"""Hybrid matchmaking between business activities and technical services.

Both sides are described by the same profile pivot (name, capability
concepts, input/output concepts). The score blends semantic evidence
(best-pairing concept similarity over the profile groups) with syntactic
evidence (token-set similarity of names):

    score = alpha * semantic + (1 - alpha) * syntactic

A previously validated activity shape is looked up first in the pattern
store; fresh matching considers single services and, when no single service
covers all required outputs, compositions of up to ``composition_k``
services.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import combinations
from pathlib import Path
from typing import Any, Iterable

import yaml

from .errors import MatchingError, UnresolvedConceptsError
from .model import CollaborationModel, FieldSpec, SharedFunction
from .ontology import Ontology, concept_distance, token_set_similarity

SCHEMA_VERSION = 1

ENDPOINT_MOCK = "mock"
ENDPOINT_HTTP = "http"
ENDPOINT_HUMAN = "human"

STATUS_AUTO = "auto"
STATUS_AWAITING = "awaiting_validation"
STATUS_UNCOVERED = "uncovered"

SOURCE_PATTERN = "pattern"
SOURCE_HYBRID = "hybrid"


@dataclass(frozen=True)
class MatchConfig:
    alpha: float = 0.7
    auto_threshold: float = 0.9
    validation_floor: float = 0.4
    composition_k: int = 3
    pattern_threshold: float = 1.0
    # an output counts as supplied only by an exact or declared-equivalent
    # concept; near matches still influence the score, not the coverage
    cover_threshold: float = 1.0
    beam_width: int = 8
    desk_scale_max: int = 12

    def check(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise MatchingError(f"alpha must be in [0,1], got {self.alpha}")
        if self.composition_k < 1:
            raise MatchingError("composition_k must be >= 1")


@dataclass(frozen=True)
class Profile:
    """The level-independent matching pivot."""

    name: str
    capability: tuple[str, ...] = ()
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()


@dataclass(frozen=True)
class Endpoint:
    kind: str
    url: str | None = None
    outputs: dict[str, Any] | None = None  # static mock payload
    fault: bool = False

    def check(self) -> None:
        if self.kind not in (ENDPOINT_MOCK, ENDPOINT_HTTP, ENDPOINT_HUMAN):
            raise MatchingError(f"unknown endpoint kind {self.kind!r}")
        if self.kind == ENDPOINT_HTTP and not self.url:
            raise MatchingError("http endpoints require a url")


@dataclass(frozen=True)
class ServiceOperation:
    id: str
    inputs: tuple[FieldSpec, ...] = ()
    outputs: tuple[FieldSpec, ...] = ()


@dataclass(frozen=True)
class ServiceDescriptor:
    id: str
    name: str
    endpoint: Endpoint
    profile: Profile
    operations: tuple[ServiceOperation, ...] = ()

    def operation(self, op_id: str) -> ServiceOperation:
        for op in self.operations:
            if op.id == op_id:
                return op
        raise MatchingError(f"service {self.id!r} has no operation {op_id!r}")


@dataclass(frozen=True)
class OperationRef:
    service_id: str
    operation_id: str

    def __str__(self) -> str:
        return f"{self.service_id}#{self.operation_id}"

    @classmethod
    def parse(cls, text: str) -> "OperationRef":
        service_id, _, op_id = text.partition("#")
        return cls(service_id, op_id or "main")


@dataclass(frozen=True)
class Binding:
    services: tuple[OperationRef, ...]
    score: float
    coverage: dict[str, str] = field(default_factory=dict)  # output concept -> service id
    source: str = SOURCE_HYBRID

    def __eq__(self, other) -> bool:
        if not isinstance(other, Binding):
            return NotImplemented
        return (self.services, self.score, self.coverage, self.source) == (
            other.services, other.score, other.coverage, other.source)

    def to_raw(self) -> dict[str, Any]:
        return {
            "services": [str(s) for s in self.services],
            "score": round(self.score, 6),
            "coverage": dict(sorted(self.coverage.items())),
            "source": self.source,
        }

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "Binding":
        return cls(
            services=tuple(OperationRef.parse(s) for s in raw.get("services", [])),
            score=float(raw.get("score", 0.0)),
            coverage=dict(raw.get("coverage", {})),
            source=str(raw.get("source", SOURCE_HYBRID)),
        )


@dataclass(frozen=True)
class ActivityRequirement:
    """Matching view of one business activity (a selected shared function)."""

    id: str
    name: str
    profile: Profile
    input_fields: tuple[tuple[str, FieldSpec], ...] = ()   # (message id, field)
    output_fields: tuple[tuple[str, FieldSpec], ...] = ()


@dataclass
class MatchResult:
    activity_id: str
    candidates: tuple[Binding, ...]
    chosen: Binding | None
    status: str

    def to_raw(self) -> dict[str, Any]:
        return {
            "activity": self.activity_id,
            "status": self.status,
            "chosen": self.chosen.to_raw() if self.chosen else None,
            "candidates": [b.to_raw() for b in self.candidates],
        }

    @classmethod
    def from_raw(cls, raw: dict[str, Any]) -> "MatchResult":
        return cls(
            activity_id=str(raw["activity"]),
            candidates=tuple(Binding.from_raw(b) for b in raw.get("candidates", [])),
            chosen=Binding.from_raw(raw["chosen"]) if raw.get("chosen") else None,
            status=str(raw.get("status", STATUS_UNCOVERED)),
        )

    def validate_candidate(self, index: int) -> None:
        """User accepts a candidate: it becomes the chosen binding."""
        if not 0 <= index < len(self.candidates):
            raise MatchingError(
                f"activity {self.activity_id!r} has no candidate index {index}")
        self.chosen = self.candidates[index]
        self.status = STATUS_AUTO


# ---------------------------------------------------------------------------
# Registry file
# ---------------------------------------------------------------------------


def load_registry(path) -> tuple[ServiceDescriptor, ...]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh.read())
    if not isinstance(raw, dict) or raw.get("schema_version") != SCHEMA_VERSION:
        raise MatchingError(f"unsupported registry schema in {path}")
    services = []
    for s in raw.get("services", []):
        ep_raw = s.get("endpoint", {})
        endpoint = Endpoint(
            kind=str(ep_raw.get("kind", ENDPOINT_MOCK)),
            url=ep_raw.get("url"),
            outputs=ep_raw.get("outputs"),
            fault=bool(ep_raw.get("fault", False)),
        )
        endpoint.check()
        p = s.get("profile", {})
        profile = Profile(
            name=str(s.get("name", s["id"])),
            capability=tuple(str(c) for c in p.get("capability", [])),
            inputs=tuple(str(c) for c in p.get("inputs", [])),
            outputs=tuple(str(c) for c in p.get("outputs", [])),
        )
        if not profile.capability:
            raise MatchingError(f"service {s['id']!r} has an empty profile")
        operations = tuple(
            ServiceOperation(
                id=str(op.get("id", "main")),
                inputs=tuple(FieldSpec.from_raw(fs) for fs in op.get("inputs", [])),
                outputs=tuple(FieldSpec.from_raw(fs) for fs in op.get("outputs", [])),
            )
            for op in s.get("operations", [{"id": "main"}])
        )
        services.append(ServiceDescriptor(
            id=str(s["id"]), name=str(s.get("name", s["id"])),
            endpoint=endpoint, profile=profile, operations=operations,
        ))
    return tuple(services)


def build_activity(f: SharedFunction, m: CollaborationModel, o: Ontology) -> ActivityRequirement:
    messages = m.message_map()

    def resolved(refs) -> tuple[str, ...]:
        out = []
        for r in refs:
            cid = r.resolved or o.resolve(r.concept_id)
            out.append(cid if cid else r.concept_id)
        return tuple(out)

    def msg_concepts(mids) -> tuple[str, ...]:
        out = []
        for mid in mids:
            msg = messages.get(mid)
            if msg is None:
                continue
            cid = msg.concept.resolved or o.resolve(msg.concept.concept_id) or msg.concept.concept_id
            out.append(cid)
        return tuple(out)

    def fields(mids) -> tuple[tuple[str, FieldSpec], ...]:
        return tuple(
            (mid, fs) for mid in mids for fs in (messages[mid].fields if mid in messages else ())
        )

    profile = Profile(
        name=f.name,
        capability=resolved(f.annotation.capability),
        inputs=tuple(resolved(f.annotation.inputs)) + msg_concepts(f.inputs),
        outputs=tuple(resolved(f.annotation.outputs)) + msg_concepts(f.outputs),
    )
    return ActivityRequirement(
        id=f.id, name=f.name, profile=profile,
        input_fields=fields(f.inputs), output_fields=fields(f.outputs),
    )


def _check_resolved(profiles: Iterable[tuple[str, Profile]], o: Ontology) -> None:
    missing = []
    for owner, p in profiles:
        for cid in p.capability + p.inputs + p.outputs:
            if not o.has(cid) and not o.resolve(cid):
                missing.append(f"{owner}:{cid}")
    if missing:
        raise UnresolvedConceptsError(sorted(set(missing)))


def _resolve_profile(p: Profile, o: Ontology) -> Profile:
    def r(cids):
        return tuple(o.resolve(c) or c for c in cids)

    return Profile(name=p.name, capability=r(p.capability), inputs=r(p.inputs),
                   outputs=r(p.outputs))


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def _group_score(a_side: tuple[str, ...], s_side: tuple[str, ...], o: Ontology) -> float | None:
    if not a_side:
        return None
    if not s_side:
        return 0.0
    total = 0.0
    for ac in a_side:
        total += max(concept_distance(ac, sc, o) for sc in s_side)
    return total / len(a_side)


def hybrid_score(activity: Profile, service: Profile, o: Ontology, alpha: float = 0.7) -> float:
    """Requirement-side score; deterministic, bounded to [0, 1]."""
    groups = [
        _group_score(activity.capability, service.capability, o),
        _group_score(activity.inputs, service.inputs, o),
        _group_score(activity.outputs, service.outputs, o),
    ]
    present = [g for g in groups if g is not None]
    semantic = sum(present) / len(present) if present else 0.0
    syntactic = token_set_similarity(activity.name, service.name)
    return alpha * semantic + (1.0 - alpha) * syntactic


@dataclass(frozen=True)
class _Unit:
    ref: OperationRef
    service: ServiceDescriptor
    profile: Profile  # service capability + operation-level I/O concepts


def _units_of(registry: tuple[ServiceDescriptor, ...], o: Ontology) -> list[_Unit]:
    units = []
    for svc in sorted(registry, key=lambda s: s.id):
        base = _resolve_profile(svc.profile, o)
        for op in svc.operations:
            op_inputs = tuple(o.resolve(fs.concept) or fs.concept for fs in op.inputs)
            op_outputs = tuple(o.resolve(fs.concept) or fs.concept for fs in op.outputs)
            units.append(_Unit(
                ref=OperationRef(svc.id, op.id),
                service=svc,
                profile=Profile(
                    name=svc.name,
                    capability=base.capability,
                    inputs=op_inputs or base.inputs,
                    outputs=op_outputs or base.outputs,
                ),
            ))
    return units


def _union_profile(units: tuple[_Unit, ...]) -> Profile:
    return Profile(
        name=" ".join(u.profile.name for u in units),
        capability=tuple(sorted({c for u in units for c in u.profile.capability})),
        inputs=tuple(sorted({c for u in units for c in u.profile.inputs})),
        outputs=tuple(sorted({c for u in units for c in u.profile.outputs})),
    )


def composition_score(activity: Profile, units: tuple[_Unit, ...], o: Ontology,
                      alpha: float) -> float:
    ordered = tuple(sorted(units, key=lambda u: (u.ref.service_id, u.ref.operation_id)))
    return hybrid_score(activity, _union_profile(ordered), o, alpha)


def _coverage(activity: Profile, units: tuple[_Unit, ...], o: Ontology,
              threshold: float) -> dict[str, str] | None:
    """Map each required output concept to the best supplying service, or None."""
    coverage: dict[str, str] = {}
    for out in sorted(set(activity.outputs)):
        best: tuple[float, str] | None = None
        for u in sorted(units, key=lambda u: u.ref.service_id):
            sims = [concept_distance(out, c, o) for c in u.profile.outputs]
            sim = max(sims) if sims else 0.0
            if sim >= threshold and (best is None or sim > best[0]):
                best = (sim, u.ref.service_id)
        if best is None:
            return None
        coverage[out] = best[1]
    return coverage


def _binding(activity: Profile, units: tuple[_Unit, ...], o: Ontology,
             cfg: MatchConfig, source: str = SOURCE_HYBRID) -> Binding | None:
    coverage = _coverage(activity, units, o, cfg.cover_threshold)
    if coverage is None:
        return None
    ordered = tuple(sorted(units, key=lambda u: (u.ref.service_id, u.ref.operation_id)))
    score = composition_score(activity, ordered, o, cfg.alpha)
    return Binding(
        services=tuple(u.ref for u in ordered),
        score=1.0 if source == SOURCE_PATTERN else score,
        coverage=coverage,
        source=source,
    )


def _rank_key(b: Binding) -> tuple:
    return (
        0 if b.source == SOURCE_PATTERN else 1,
        -b.score,
        len(b.services),
        tuple(str(s) for s in b.services),
    )


def _search_compositions(activity: Profile, units: list[_Unit], o: Ontology,
                         cfg: MatchConfig) -> list[Binding]:
    useful = [
        u for u in units
        if any(concept_distance(out, c, o) >= cfg.cover_threshold
               for out in activity.outputs for c in u.profile.outputs)
    ]
    bindings: list[Binding] = []
    if len(useful) <= cfg.desk_scale_max:
        # desk scale: exhaustive over subsets, guaranteed optimal
        for size in range(2, cfg.composition_k + 1):
            for combo in combinations(useful, size):
                b = _binding(activity, combo, o, cfg)
                if b is not None:
                    bindings.append(b)
        return bindings
    # beam search over output-coverage states
    frontier: list[tuple[_Unit, ...]] = [()]
    for _ in range(cfg.composition_k):
        grown: list[tuple[_Unit, ...]] = []
        for state in frontier:
            last = state[-1].ref.service_id if state else ""
            for u in useful:
                if state and u.ref.service_id <= last:
                    continue
                candidate = state + (u,)
                grown.append(candidate)
                b = _binding(activity, candidate, o, cfg)
                if b is not None and len(candidate) >= 2:
                    bindings.append(b)
        grown.sort(key=lambda s: -composition_score(activity, s, o, cfg.alpha))
        frontier = grown[: cfg.beam_width]
    return bindings


def match_activity(activity: ActivityRequirement, registry: tuple[ServiceDescriptor, ...],
                   patterns: "PatternStore", o: Ontology,
                   cfg: MatchConfig | None = None) -> MatchResult:
    cfg = cfg or MatchConfig()
    cfg.check()
    if not activity.profile.capability:
        raise MatchingError(f"activity {activity.id!r} has no semantic details")
    _check_resolved([(activity.id, activity.profile)], o)
    _check_resolved([(s.id, s.profile) for s in registry], o)
    profile = _resolve_profile(activity.profile, o)
    units = _units_of(registry, o)
    unit_by_ref = {u.ref: u for u in units}
    registered = {u.ref.service_id for u in units}

    candidates: list[Binding] = []
    seen: set[tuple[OperationRef, ...]] = set()

    fp = fingerprint(profile)
    for similarity, record in patterns.lookup(fp, cfg.pattern_threshold):
        refs = tuple(OperationRef.parse(s) for s in record.binding)
        if any(r.service_id not in registered or r not in unit_by_ref for r in refs):
            continue  # stale pattern: service no longer in the registry
        b = _binding(profile, tuple(unit_by_ref[r] for r in refs), o, cfg,
                     source=SOURCE_PATTERN)
        if b is not None and b.services not in seen:
            seen.add(b.services)
            candidates.append(b)

    singles = []
    for u in units:
        b = _binding(profile, (u,), o, cfg)
        if b is not None:
            singles.append(b)
    if singles:
        pool = singles
    else:
        pool = _search_compositions(profile, units, o, cfg)
    for b in pool:
        if b.services not in seen:
            seen.add(b.services)
            candidates.append(b)

    candidates.sort(key=_rank_key)
    top = candidates[0] if candidates else None
    if top is not None and top.score >= cfg.auto_threshold:
        status, chosen = STATUS_AUTO, top
    elif top is not None and top.score >= cfg.validation_floor:
        status, chosen = STATUS_AWAITING, None
    else:
        status, chosen = STATUS_UNCOVERED, None
    return MatchResult(activity_id=activity.id, candidates=tuple(candidates),
                       chosen=chosen, status=status)


# ---------------------------------------------------------------------------
# Pattern store
# ---------------------------------------------------------------------------


def fingerprint(profile: Profile) -> tuple[tuple[str, str], ...]:
    """Canonical, order-independent activity shape."""
    tagged = (
        [("cap", c) for c in profile.capability]
        + [("in", c) for c in profile.inputs]
        + [("out", c) for c in profile.outputs]
    )
    return tuple(sorted(tagged))


def fingerprint_similarity(a, b) -> float:
    from collections import Counter

    ca, cb = Counter(a), Counter(b)
    inter = sum((ca & cb).values())
    union = sum((ca | cb).values())
    return inter / union if union else 0.0


@dataclass
class PatternRecord:
    fingerprint: tuple[tuple[str, str], ...]
    binding: tuple[str, ...]  # OperationRef strings
    success_count: int = 0
    last_used: str = ""

    def to_raw(self) -> dict[str, Any]:
        return {
            "fingerprint": [list(e) for e in self.fingerprint],
            "binding": list(self.binding),
            "success_count": self.success_count,
            "last_used": self.last_used,
        }


class PatternStore:
    """Pattern database: one document per fingerprint, kept on disk when a
    directory is given."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        self._records: dict[str, PatternRecord] = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            for doc in sorted(self.directory.glob("*.yaml")):
                raw = yaml.safe_load(doc.read_text(encoding="utf-8"))
                record = PatternRecord(
                    fingerprint=tuple(tuple(e) for e in raw["fingerprint"]),
                    binding=tuple(raw["binding"]),
                    success_count=int(raw.get("success_count", 0)),
                    last_used=str(raw.get("last_used", "")),
                )
                self._records[self._digest(record.fingerprint)] = record

    @staticmethod
    def _digest(fp) -> str:
        canon = json.dumps([list(e) for e in fp], sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:24]

    def records(self) -> list[PatternRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def lookup(self, fp, threshold: float) -> list[tuple[float, PatternRecord]]:
        hits = []
        for record in self.records():
            sim = fingerprint_similarity(fp, record.fingerprint)
            if sim >= threshold:
                hits.append((sim, record))
        hits.sort(key=lambda h: (-h[0], -h[1].success_count, h[1].binding))
        return hits

    def upsert(self, fp, binding: tuple[str, ...]) -> PatternRecord:
        key = self._digest(fp)
        record = self._records.get(key)
        if record is None or record.binding != binding:
            record = PatternRecord(fingerprint=tuple(fp), binding=tuple(binding))
            self._records[key] = record
        record.success_count += 1
        record.last_used = datetime.now(timezone.utc).isoformat(timespec="seconds")
        if self.directory is not None:
            path = self.directory / f"{key}.yaml"
            path.write_text(yaml.safe_dump(record.to_raw(), sort_keys=True), encoding="utf-8")
        return record


def record_success(result: MatchResult, activity_profile: Profile,
                   patterns: PatternStore) -> PatternRecord:
    if result.chosen is None:
        raise MatchingError(f"activity {result.activity_id!r} has no chosen binding")
    fp = fingerprint(activity_profile)
    return patterns.upsert(fp, tuple(str(s) for s in result.chosen.services))


# ---------------------------------------------------------------------------
# Uncovered activities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeferredActivity:
    activity_id: str
    reason: str


def resolve_uncovered(activity: ActivityRequirement, choice: str):
    """Resolve an uncovered activity per the user's decision.

    ``generate_gui_service`` mirrors the activity's message schemas into a
    human-task service the orchestrator will pause on; ``mark_external``
    emits a placeholder that needs an endpoint url before compile; ``defer``
    leaves the activity flagged, blocking compile.
    """
    if choice == "defer":
        return DeferredActivity(
            activity_id=activity.id,
            reason=f"activity {activity.id!r} deferred: no service bound, compile blocked",
        )
    if choice == "generate_gui_service":
        endpoint = Endpoint(kind=ENDPOINT_HUMAN)
        service_id = f"gui-{activity.id}"
    elif choice == "mark_external":
        endpoint = Endpoint(kind=ENDPOINT_HTTP, url=None)
        service_id = f"ext-{activity.id}"
    else:
        raise MatchingError(f"unknown resolution choice {choice!r}")
    op = ServiceOperation(
        id="main",
        inputs=tuple(fs for _, fs in activity.input_fields),
        outputs=tuple(fs for _, fs in activity.output_fields),
    )
    return ServiceDescriptor(
        id=service_id,
        name=f"{activity.name} ({'form' if choice == 'generate_gui_service' else 'external'})",
        endpoint=endpoint,
        profile=activity.profile,
        operations=(op,),
    )
