"""On-the-fly data transformation between bound services.

Each service input is paired with the most similar upstream output; when
concepts differ, the shortest rule chain (bounded BFS over the rule base)
converts the value. Targets that decompose into part concepts can be
assembled from several upstream fields. Numeric conversions run on exact
rationals so unit rules like Celsius to Fahrenheit round-trip cleanly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import yaml

from .errors import MapExecutionError, ReconciliationError
from .matching import OperationRef
from .model import FieldSpec
from .ontology import Ontology, concept_distance

SCHEMA_VERSION = 1

KIND_MATHEMATIC = "mathematic"
KIND_SYNTACTIC = "syntactic"
KIND_COMPOSITION = "composition"

START_SCOPE = "input"


@dataclass(frozen=True)
class TransformationRule:
    id: str
    kind: str
    from_concept: str | None
    to_concept: str
    # mathematic
    factor: Fraction | None = None
    offset: Fraction | None = None
    bidirectional: bool = False
    from_unit: str | None = None
    to_unit: str | None = None
    # syntactic
    source_pattern: str | None = None
    target_pattern: str | None = None
    # composition
    template: str | None = None

    def check(self) -> None:
        if self.kind == KIND_MATHEMATIC:
            if self.factor is None or self.offset is None:
                raise ReconciliationError(f"rule {self.id!r}: mathematic rules need factor and offset")
            if self.bidirectional and self.factor == 0:
                raise ReconciliationError(f"rule {self.id!r}: zero factor is not invertible")
        elif self.kind == KIND_SYNTACTIC:
            if not self.source_pattern or not self.target_pattern:
                raise ReconciliationError(f"rule {self.id!r}: syntactic rules need both patterns")
        elif self.kind == KIND_COMPOSITION:
            if not self.template:
                raise ReconciliationError(f"rule {self.id!r}: composition rules need a template")
        else:
            raise ReconciliationError(f"rule {self.id!r}: unknown kind {self.kind!r}")


_FIELD_RE = re.compile(r"\{(\w+)\}")


def _pattern_regex(pattern: str) -> re.Pattern:
    out = []
    pos = 0
    for match in _FIELD_RE.finditer(pattern):
        out.append(re.escape(pattern[pos:match.start()]))
        out.append(f"(?P<{match.group(1)}>.+?)")
        pos = match.end()
    out.append(re.escape(pattern[pos:]))
    return re.compile("^" + "".join(out) + "$")


def _to_fraction(value: Any, where: str) -> Fraction:
    if isinstance(value, bool):
        raise MapExecutionError(f"{where}: boolean is not numeric")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise MapExecutionError(f"{where}: cannot parse number from {value!r}") from exc
    raise MapExecutionError(f"{where}: unsupported value type {type(value).__name__}")


def _render_number(value: Fraction) -> Any:
    if value.denominator == 1:
        return int(value)
    return float(value)


def apply_rule(rule: TransformationRule, value: Any, *, inverse: bool = False) -> Any:
    if rule.kind == KIND_MATHEMATIC:
        x = _to_fraction(value, f"rule {rule.id}")
        if inverse:
            if rule.factor == 0:
                raise MapExecutionError(f"rule {rule.id}: not invertible")
            return _render_number((x - rule.offset) / rule.factor)
        return _render_number(rule.factor * x + rule.offset)
    if rule.kind == KIND_SYNTACTIC:
        if inverse:
            raise MapExecutionError(f"rule {rule.id}: syntactic rules are one-way")
        text = str(value)
        match = _pattern_regex(rule.source_pattern).match(text)
        if match is None:
            raise MapExecutionError(
                f"rule {rule.id}: value {text!r} does not match pattern {rule.source_pattern!r}")
        try:
            return rule.target_pattern.format(**match.groupdict())
        except KeyError as exc:
            raise MapExecutionError(f"rule {rule.id}: target pattern uses unbound field {exc}") from exc
    raise MapExecutionError(f"rule {rule.id}: kind {rule.kind!r} is not value-applicable")


class RuleBase:
    def __init__(self, rules: list[TransformationRule]):
        self.rules: dict[str, TransformationRule] = {}
        for r in rules:
            r.check()
            if r.id in self.rules:
                raise ReconciliationError(f"duplicate rule id {r.id!r}")
            self.rules[r.id] = r

    def validate_concepts(self, o: Ontology) -> None:
        for r in self.rules.values():
            for cid in (r.from_concept, r.to_concept):
                if cid is not None and not o.has(cid):
                    raise ReconciliationError(f"rule {r.id!r} references unknown concept {cid!r}")

    def edges_from(self, concept: str) -> list[tuple[str, "ChainStep"]]:
        out = []
        for r in self.rules.values():
            if r.kind == KIND_COMPOSITION:
                continue
            if r.from_concept == concept:
                out.append((r.to_concept, ChainStep(r.id, inverse=False)))
            if r.kind == KIND_MATHEMATIC and r.bidirectional and r.to_concept == concept:
                out.append((r.from_concept, ChainStep(r.id, inverse=True)))
        out.sort(key=lambda e: (e[0], e[1].rule_id, e[1].inverse))
        return out

    def find_chain(self, src: str, dst: str, bound: int) -> tuple["ChainStep", ...] | None:
        """Shortest rule chain from src to dst (BFS), or None beyond the bound."""
        if src == dst:
            return ()
        frontier: list[tuple[str, tuple[ChainStep, ...]]] = [(src, ())]
        seen = {src}
        for _ in range(bound):
            grown: list[tuple[str, tuple[ChainStep, ...]]] = []
            for concept, chain in frontier:
                for to_concept, step in self.edges_from(concept):
                    if to_concept in seen:
                        continue
                    new_chain = chain + (step,)
                    if to_concept == dst:
                        return new_chain
                    seen.add(to_concept)
                    grown.append((to_concept, new_chain))
            frontier = grown
            if not frontier:
                return None
        return None

    def composition_template(self, concept: str) -> str | None:
        for r in sorted(self.rules.values(), key=lambda r: r.id):
            if r.kind == KIND_COMPOSITION and r.to_concept == concept:
                return r.template
        return None


def load_rule_base(path) -> RuleBase:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh.read())
    if not isinstance(raw, dict) or raw.get("schema_version") != SCHEMA_VERSION:
        raise ReconciliationError(f"unsupported rule base schema in {path}")
    rules = []
    for r in raw.get("rules", []):
        rules.append(TransformationRule(
            id=str(r["id"]),
            kind=str(r["kind"]),
            from_concept=r.get("from_concept"),
            to_concept=str(r["to_concept"]),
            factor=Fraction(str(r["factor"])) if "factor" in r else None,
            offset=Fraction(str(r.get("offset", 0))) if r.get("kind") == KIND_MATHEMATIC else None,
            bidirectional=bool(r.get("bidirectional", False)),
            from_unit=r.get("from_unit"),
            to_unit=r.get("to_unit"),
            source_pattern=r.get("source_pattern"),
            target_pattern=r.get("target_pattern"),
            template=r.get("template"),
        ))
    return RuleBase(rules)


# ---------------------------------------------------------------------------
# Pairing, decomposition, map construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainStep:
    rule_id: str
    inverse: bool = False

    def to_raw(self):
        return {"rule": self.rule_id, "inverse": self.inverse} if self.inverse else {"rule": self.rule_id}

    @classmethod
    def from_raw(cls, raw) -> "ChainStep":
        return cls(rule_id=str(raw["rule"]), inverse=bool(raw.get("inverse", False)))


@dataclass(frozen=True)
class UpstreamField:
    path: str  # "<scope>.<field name>"
    concept: str
    unit: str | None = None
    hop: int = 1  # 1 = immediate predecessor; start data is farthest


@dataclass(frozen=True)
class Assignment:
    target_field: str
    sources: tuple[tuple[str, tuple[ChainStep, ...]], ...]
    compose_template: str | None = None
    compose_keys: tuple[str, ...] = ()

    def to_raw(self):
        raw: dict[str, Any] = {
            "target": self.target_field,
            "sources": [
                {"path": path, "chain": [s.to_raw() for s in chain]}
                for path, chain in self.sources
            ],
        }
        if self.compose_template:
            raw["compose"] = {"template": self.compose_template, "keys": list(self.compose_keys)}
        return raw

    @classmethod
    def from_raw(cls, raw) -> "Assignment":
        compose = raw.get("compose") or {}
        return cls(
            target_field=str(raw["target"]),
            sources=tuple(
                (s["path"], tuple(ChainStep.from_raw(c) for c in s.get("chain", [])))
                for s in raw.get("sources", [])
            ),
            compose_template=compose.get("template"),
            compose_keys=tuple(compose.get("keys", [])),
        )


@dataclass(frozen=True)
class DataMap:
    target: OperationRef
    assignments: tuple[Assignment, ...]
    unmapped: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.unmapped

    def to_raw(self):
        return {
            "target": str(self.target),
            "assignments": [a.to_raw() for a in self.assignments],
            "unmapped": list(self.unmapped),
        }

    @classmethod
    def from_raw(cls, raw) -> "DataMap":
        return cls(
            target=OperationRef.parse(raw["target"]),
            assignments=tuple(Assignment.from_raw(a) for a in raw.get("assignments", [])),
            unmapped=tuple(raw.get("unmapped", [])),
        )


def pair_inputs(inputs: tuple[FieldSpec, ...], upstream: list[UpstreamField], o: Ontology,
                *, threshold: float = 0.5) -> dict[str, UpstreamField]:
    """Pair each input field with the most similar upstream field.

    Ties go to the nearest predecessor, then to the lexicographically first
    path. Unpaired fields are simply absent from the result.
    """
    pairs: dict[str, UpstreamField] = {}
    for fs in inputs:
        target_concept = o.resolve(fs.concept) or fs.concept
        best: tuple[float, int, str, UpstreamField] | None = None
        for up in upstream:
            up_concept = o.resolve(up.concept) or up.concept
            if not o.has(target_concept) or not o.has(up_concept):
                sim = 1.0 if target_concept == up_concept else 0.0
            else:
                sim = concept_distance(target_concept, up_concept, o)
            if sim < threshold:
                continue
            key = (-sim, up.hop, up.path)
            if best is None or key < (-best[0], best[1], best[2]):
                best = (sim, up.hop, up.path, up)
        if best is not None:
            pairs[fs.name] = best[3]
    return pairs


def decompose(concept: str, o: Ontology) -> tuple[str, ...]:
    """Frontier of the part-of decomposition: concepts with no declared parts."""
    leaves: list[str] = []
    seen: set[str] = set()

    def walk(cid: str) -> None:
        if cid in seen:
            return
        seen.add(cid)
        parts = o.parts_of(cid)
        if not parts:
            leaves.append(cid)
            return
        for p in parts:
            walk(p)

    walk(o.resolve(concept) or concept)
    return tuple(leaves)


def _chain_checks(src: str, dst: str, chain: tuple[ChainStep, ...], base: RuleBase) -> None:
    cur = src
    for step in chain:
        rule = base.rules[step.rule_id]
        start = rule.to_concept if step.inverse else rule.from_concept
        end = rule.from_concept if step.inverse else rule.to_concept
        if start != cur:
            raise ReconciliationError(
                f"chain does not type-check: at {cur!r}, rule {rule.id!r} starts from {start!r}")
        cur = end
    if cur != dst:
        raise ReconciliationError(f"chain ends at {cur!r}, expected {dst!r}")


def _assert_chain_links(chain: tuple[ChainStep, ...], base: RuleBase) -> None:
    """Re-check at execution that consecutive rules connect concept-to-concept."""
    prev_end: str | None = None
    for step in chain:
        rule = base.rules.get(step.rule_id)
        if rule is None:
            raise MapExecutionError(f"chain references unknown rule {step.rule_id!r}")
        start = rule.to_concept if step.inverse else rule.from_concept
        end = rule.from_concept if step.inverse else rule.to_concept
        if prev_end is not None and start != prev_end:
            raise MapExecutionError(
                f"chain broken at rule {rule.id!r}: expected {prev_end!r}, starts from {start!r}")
        prev_end = end


def build_data_map(target: OperationRef, inputs: tuple[FieldSpec, ...],
                   upstream: list[UpstreamField], base: RuleBase, o: Ontology,
                   *, chain_bound: int = 3, pair_threshold: float = 0.5) -> DataMap:
    """Derive assignments for every input field of a bound service operation.

    Unmappable fields land in ``unmapped``; a non-empty set marks the whole
    binding infeasible, signalling that another service must be matched.
    """
    pairs = pair_inputs(inputs, upstream, o, threshold=pair_threshold)
    by_concept: dict[str, list[UpstreamField]] = {}
    for up in sorted(upstream, key=lambda u: (u.hop, u.path)):
        cid = o.resolve(up.concept) or up.concept
        by_concept.setdefault(cid, []).append(up)

    assignments: list[Assignment] = []
    unmapped: list[str] = []
    for fs in inputs:
        target_concept = o.resolve(fs.concept) or fs.concept
        paired = pairs.get(fs.name)
        assignment: Assignment | None = None
        if paired is not None:
            src_concept = o.resolve(paired.concept) or paired.concept
            if src_concept == target_concept:
                assignment = Assignment(fs.name, ((paired.path, ()),))
            else:
                chain = base.find_chain(src_concept, target_concept, chain_bound)
                if chain is not None:
                    _chain_checks(src_concept, target_concept, chain, base)
                    assignment = Assignment(fs.name, ((paired.path, chain),))
        if assignment is None:
            # try the shortest chain from any upstream concept, then decomposition
            best: tuple[int, str, Assignment] | None = None
            for cid, ups in sorted(by_concept.items()):
                chain = base.find_chain(cid, target_concept, chain_bound)
                if chain is None:
                    continue
                _chain_checks(cid, target_concept, chain, base)
                cand = Assignment(fs.name, ((ups[0].path, chain),))
                key = (len(chain), ups[0].path)
                if best is None or key < (best[0], best[1]):
                    best = (len(chain), ups[0].path, cand)
            if best is not None:
                assignment = best[2]
        if assignment is None and o.has(target_concept):
            parts = decompose(target_concept, o)
            if parts != (target_concept,):
                part_sources: list[tuple[str, tuple[ChainStep, ...]]] = []
                ok = True
                for part in parts:
                    ups = by_concept.get(part)
                    if ups:
                        part_sources.append((ups[0].path, ()))
                        continue
                    found = None
                    for cid, cand_ups in sorted(by_concept.items()):
                        chain = base.find_chain(cid, part, chain_bound)
                        if chain is not None:
                            _chain_checks(cid, part, chain, base)
                            found = (cand_ups[0].path, chain)
                            break
                    if found is None:
                        ok = False
                        break
                    part_sources.append(found)
                if ok:
                    template = base.composition_template(target_concept) or " ".join(
                        "{%s}" % p for p in parts)
                    assignment = Assignment(fs.name, tuple(part_sources),
                                            compose_template=template, compose_keys=parts)
        if assignment is None:
            unmapped.append(fs.name)
        else:
            assignments.append(assignment)
    return DataMap(target=target, assignments=tuple(assignments), unmapped=tuple(unmapped))


def execute_map(data_map: DataMap, env: dict[str, dict[str, Any]], base: RuleBase) -> dict[str, Any]:
    """Pure application of a feasible map to the available payloads.

    ``env`` maps scope (task node or start-data scope) to its payload dict.
    """
    if not data_map.feasible:
        raise MapExecutionError(
            f"map for {data_map.target} is infeasible; unmapped: {list(data_map.unmapped)}")
    out: dict[str, Any] = {}
    for assignment in data_map.assignments:
        values = []
        for path, chain in assignment.sources:
            scope, _, name = path.rpartition(".")
            payload = env.get(scope)
            if payload is None or name not in payload:
                raise MapExecutionError(f"missing field {path!r} for {assignment.target_field!r}")
            _assert_chain_links(chain, base)
            value = payload[name]
            for step in chain:
                value = apply_rule(base.rules[step.rule_id], value, inverse=step.inverse)
            values.append(value)
        if assignment.compose_template is not None:
            bound = dict(zip(assignment.compose_keys, (str(v) for v in values)))
            out[assignment.target_field] = assignment.compose_template.format(**bound)
        else:
            out[assignment.target_field] = values[0]
    return out
