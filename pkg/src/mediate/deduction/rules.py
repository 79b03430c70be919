"""Pattern rule interpreter for the transformation rule groups.

Rules ship as data (YAML): each rule has premises (instance/relation patterns
over the store, with ?var unification and optional inequality constraints)
and conclusions (instance/relation templates). Application is monotone and
idempotent because conclusion ids are deterministic functions of the
bindings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

import yaml

from ..errors import DeductionError
from ..ontology import Instance, InstanceStore, PROV_DEDUCED

SCHEMA_VERSION = 1

_VAR_RE = re.compile(r"\{\?(\w+)\}")


def _is_var(token: str) -> bool:
    return isinstance(token, str) and token.startswith("?")


def _subst(template: str, binding: dict[str, str]) -> str:
    def repl(match: re.Match) -> str:
        name = match.group(1)
        if name not in binding:
            raise DeductionError(f"unbound variable ?{name} in template {template!r}")
        return binding[name]

    return _VAR_RE.sub(repl, template)


@dataclass(frozen=True)
class InstancePattern:
    var: str
    concept: str


@dataclass(frozen=True)
class RelationPattern:
    subject: str
    predicate: str
    object: str


@dataclass(frozen=True)
class Constraint:
    op: str  # only "neq" is needed by the shipped groups
    left: str
    right: str


@dataclass(frozen=True)
class InstanceConclusion:
    id_template: str
    concept: str
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RelationConclusion:
    subject: str
    predicate: str
    object: str


@dataclass(frozen=True)
class Rule:
    id: str
    premises: tuple[Any, ...]
    conclusions: tuple[Any, ...]
    constraints: tuple[Constraint, ...] = ()


@dataclass(frozen=True)
class RuleGroup:
    id: str
    name: str
    rules: tuple[Rule, ...]


@dataclass(frozen=True)
class TraceEntry:
    """Why a conclusion exists: the rule and the premise bindings that fired."""

    rule_id: str
    binding: tuple[tuple[str, str], ...]
    added: tuple[str, ...]


def load_rule_groups(path) -> tuple[RuleGroup, ...]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh.read())
    if not isinstance(raw, dict) or raw.get("schema_version") != SCHEMA_VERSION:
        raise DeductionError(f"unsupported rule file schema in {path}")
    groups = []
    for g in raw.get("groups", []):
        rules = []
        for r in g.get("rules", []):
            premises: list[Any] = []
            for p in r.get("premises", []):
                if "instance" in p:
                    spec = p["instance"]
                    premises.append(InstancePattern(var=spec["var"], concept=spec["concept"]))
                elif "relation" in p:
                    spec = p["relation"]
                    premises.append(RelationPattern(
                        subject=spec["subject"], predicate=spec["predicate"],
                        object=spec["object"],
                    ))
                else:
                    raise DeductionError(f"rule {r.get('id')}: unknown premise {p!r}")
            conclusions: list[Any] = []
            for c in r.get("conclusions", []):
                if "instance" in c:
                    spec = c["instance"]
                    conclusions.append(InstanceConclusion(
                        id_template=spec["id"], concept=spec["concept"],
                        attributes=dict(spec.get("attributes", {})),
                    ))
                elif "relation" in c:
                    spec = c["relation"]
                    conclusions.append(RelationConclusion(
                        subject=spec["subject"], predicate=spec["predicate"],
                        object=spec["object"],
                    ))
                else:
                    raise DeductionError(f"rule {r.get('id')}: unknown conclusion {c!r}")
            constraints = tuple(
                Constraint(op=c["op"], left=c["left"], right=c["right"])
                for c in r.get("constraints", [])
            )
            rules.append(Rule(
                id=str(r["id"]), premises=tuple(premises),
                conclusions=tuple(conclusions), constraints=constraints,
            ))
        groups.append(RuleGroup(id=str(g["id"]), name=str(g.get("name", g["id"])),
                                rules=tuple(rules)))
    return tuple(groups)


def _match_premises(store: InstanceStore, premises: tuple[Any, ...],
                    constraints: tuple[Constraint, ...]) -> list[dict[str, str]]:
    bindings: list[dict[str, str]] = [{}]
    for premise in premises:
        next_bindings: list[dict[str, str]] = []
        if isinstance(premise, InstancePattern):
            candidates = store.instances(concept=premise.concept)
            var = premise.var.lstrip("?")
            for b in bindings:
                if var in b:
                    if any(i.id == b[var] for i in candidates):
                        next_bindings.append(b)
                    continue
                for inst in candidates:
                    nb = dict(b)
                    nb[var] = inst.id
                    next_bindings.append(nb)
        elif isinstance(premise, RelationPattern):
            rels = store.relations(predicate=premise.predicate)
            for b in bindings:
                for rel in sorted(rels, key=lambda r: (r.subject, r.object)):
                    nb = _unify(b, premise.subject, rel.subject)
                    if nb is None:
                        continue
                    nb = _unify(nb, premise.object, rel.object)
                    if nb is None:
                        continue
                    next_bindings.append(nb)
        else:
            raise DeductionError(f"unknown premise type {premise!r}")
        bindings = next_bindings
        if not bindings:
            return []
    out = []
    for b in bindings:
        ok = True
        for c in constraints:
            left = b.get(c.left.lstrip("?"), c.left)
            right = b.get(c.right.lstrip("?"), c.right)
            if c.op == "neq" and left == right:
                ok = False
            elif c.op not in ("neq",):
                raise DeductionError(f"unknown constraint op {c.op!r}")
        if ok:
            out.append(b)
    # deterministic application order
    out.sort(key=lambda b: sorted(b.items()))
    return out


def _unify(binding: dict[str, str], token: str, value: str) -> dict[str, str] | None:
    if _is_var(token):
        name = token.lstrip("?")
        bound = binding.get(name)
        if bound is None:
            nb = dict(binding)
            nb[name] = value
            return nb
        return binding if bound == value else None
    return binding if token == value else None


def apply_group(store: InstanceStore, group: RuleGroup) -> list[TraceEntry]:
    """Run one rule group to fixpoint; returns the trace of additions."""
    traces: list[TraceEntry] = []
    for _ in range(1000):
        changed = False
        for rule in group.rules:
            for binding in _match_premises(store, rule.premises, rule.constraints):
                added: list[str] = []
                for conclusion in rule.conclusions:
                    if isinstance(conclusion, InstanceConclusion):
                        inst_id = _subst(conclusion.id_template, binding)
                        attrs = {k: _subst(v, binding) for k, v in conclusion.attributes.items()}
                        if store.upsert(Instance(inst_id, conclusion.concept, attrs, PROV_DEDUCED)):
                            added.append(f"instance:{inst_id}")
                    else:
                        s = _subst(conclusion.subject, binding)
                        o = _subst(conclusion.object, binding)
                        if store.add_relation(s, conclusion.predicate, o):
                            added.append(f"relation:{s}|{conclusion.predicate}|{o}")
                if added:
                    changed = True
                    traces.append(TraceEntry(
                        rule_id=rule.id,
                        binding=tuple(sorted(binding.items())),
                        added=tuple(added),
                    ))
        if not changed:
            return traces
    raise DeductionError(f"rule group {group.id!r} did not reach a fixpoint")
