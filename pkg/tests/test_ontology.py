import random

import pytest
from hypothesis import given, strategies as st

from mediate.errors import OntologyError, ProvenanceConflictError, UnknownConceptError
from mediate.model import ConceptRef
from mediate.ontology import (
    Concept,
    Instance,
    InstanceStore,
    Ontology,
    Relation,
    auto_confirm,
    concept_distance,
    link_references,
    load_ontology,
    loads_ontology,
    token_set_similarity,
)
from mediate.project import packaged_data

from helpers import minimal_model, random_taxonomy


# Fixed 5-node taxonomy. Depths: root=1, a=2, b=2, aa=3, ab=3.
# Expected similarity 2*depth(lca)/(depth(x)+depth(y)), computed by hand for
# all 10 unordered pairs.
_FIVE = Ontology([
    Concept("root", "Root"),
    Concept("a", "Alpha", ("root",)),
    Concept("b", "Beta", ("root",)),
    Concept("aa", "Alpha One", ("a",)),
    Concept("ab", "Alpha Two", ("a",)),
])

_FIVE_EXPECTED = {
    ("root", "root"): 1.0,
    ("root", "a"): 2 * 1 / (1 + 2),
    ("root", "b"): 2 * 1 / (1 + 2),
    ("root", "aa"): 2 * 1 / (1 + 3),
    ("root", "ab"): 2 * 1 / (1 + 3),
    ("a", "a"): 1.0,
    ("a", "b"): 2 * 1 / (2 + 2),
    ("a", "aa"): 2 * 2 / (2 + 3),
    ("a", "ab"): 2 * 2 / (2 + 3),
    ("b", "aa"): 2 * 1 / (2 + 3),
    ("b", "ab"): 2 * 1 / (2 + 3),
    ("aa", "ab"): 2 * 2 / (3 + 3),
}


@pytest.mark.parametrize("pair,expected", sorted(_FIVE_EXPECTED.items()))
def test_similarity_matches_hand_computation(pair, expected):
    a, b = pair
    assert concept_distance(a, b, _FIVE) == pytest.approx(expected)
    assert concept_distance(b, a, _FIVE) == pytest.approx(expected)


def test_identity_is_one_and_disjoint_is_zero():
    o = Ontology([Concept("x", "X"), Concept("y", "Y")])
    assert concept_distance("x", "x", o) == 1.0
    assert concept_distance("x", "y", o) == 0.0


def test_child_parent_closer_than_child_grandparent():
    child_parent = concept_distance("aa", "a", _FIVE)
    child_grandparent = concept_distance("aa", "root", _FIVE)
    assert child_parent >= child_grandparent


def test_declared_equivalence_yields_full_similarity():
    o = Ontology(
        [Concept("r", "R"), Concept("x", "X", ("r",)), Concept("y", "Y", ("r",))],
        [Relation("x", "same_as", "y")],
    )
    assert concept_distance("x", "y", o) == 1.0


def test_unknown_concept_raises():
    with pytest.raises(UnknownConceptError):
        concept_distance("x", "nope", _FIVE)


def test_cycle_detection_names_the_cycle():
    with pytest.raises(OntologyError) as err:
        loads_ontology(
            "schema_version: 1\n"
            "concepts:\n- {id: a, parents: [a]}\n"
        )
    assert "cycle" in str(err.value)


def test_dangling_parent_rejected():
    with pytest.raises(OntologyError):
        Ontology([Concept("a", "A", ("ghost",))])


def test_single_concept_ontology_loads():
    o = loads_ontology("schema_version: 1\nconcepts:\n- {id: only}\n")
    assert o.has("only")


def test_seed_ontology_ships_enough_concepts():
    o = load_ontology(packaged_data("ontology.yaml"))
    assert len(o.concepts) >= 50
    assert o.has("Deliver")
    # part-of and equivalence relations present
    assert o.parts_of("FullName") == ("GivenName", "FamilyName")
    assert concept_distance("DispatchGoods", "ShipParcel", o) == 1.0


@given(st.integers(0, 2**32 - 1), st.integers(2, 14))
def test_distance_symmetric_and_bounded_on_random_taxonomies(seed, n):
    o = random_taxonomy(random.Random(seed), n)
    ids = sorted(o.concepts)
    rng = random.Random(seed ^ 0xABCDEF)
    for _ in range(10):
        a, b = rng.choice(ids), rng.choice(ids)
        d_ab = concept_distance(a, b, o)
        assert 0.0 <= d_ab <= 1.0
        assert d_ab == concept_distance(b, a, o)
        if a == b:
            assert d_ab == 1.0


# -- reference linking --------------------------------------------------------


def test_exact_label_auto_confirms(seed_ontology):
    m = minimal_model()
    linked, report = link_references(m, seed_ontology)
    assert report.complete
    paths = dict((p, (c, k)) for p, c, k in report.resolved)
    assert paths["function:f-1/capability:0"] == ("Fabricate", "exact")
    # links live on the model copy, the input is untouched
    assert m.partners[0].functions[0].annotation.capability[0].resolved is None
    assert linked.partners[0].functions[0].annotation.capability[0].resolved == "Fabricate"


def test_unresolved_ref_gets_ranked_candidates(seed_ontology):
    from mediate.model import FunctionAnnotation, Partner, SharedFunction

    m = minimal_model(partners=(
        Partner("p-1", "One", (
            SharedFunction("f-1", "ship goods", (), ("m-1",),
                           FunctionAnnotation((ConceptRef("ship goods"),))),
        )),
        Partner("p-2", "Two"),
    ))
    linked, report = link_references(m, seed_ontology, max_candidates=50)
    assert not report.complete
    proposal = report.proposals[0]
    assert proposal.path == "function:f-1/capability:0"
    assert proposal.candidates
    # every proposal is a near_by link awaiting confirmation; "ship" anchors
    # the Ship concept, so shipping concepts lead the ranking and concepts
    # sharing an ancestor with Ship (DeliverProduct under Transport) are
    # proposed while unrelated ones are not
    top = proposal.candidates[0]
    assert top.link_kind == "near_by"
    assert "Ship" in top.concept_id
    proposed = [c.concept_id for c in proposal.candidates]
    assert "DeliverProduct" in proposed
    assert "Invoice" not in proposed
    confirmed = auto_confirm(linked, report)
    _, report2 = link_references(confirmed, seed_ontology)
    assert report2.complete


def test_proposal_ranking_follows_stated_score(seed_ontology):
    from mediate.ontology import _candidates_for

    ref = ConceptRef("ship goods")
    candidates = _candidates_for(ref, seed_ontology, 0.5, 50)
    keys = [(-c.label_score, -c.semantic_score, c.concept_id) for c in candidates]
    assert keys == sorted(keys)


def test_empty_ontology_leaves_refs_unresolved():
    o = Ontology([Concept("Lonely", "Lonely")])
    m = minimal_model()
    _, report = link_references(m, o)
    assert report.proposals


# -- instance store -----------------------------------------------------------


def test_store_provenance_guard_blocks_silent_overwrite():
    store = InstanceStore()
    store.upsert(Instance("i-1", "Partner", {"name": "A"}, "user"))
    with pytest.raises(ProvenanceConflictError):
        store.upsert(Instance("i-1", "Partner", {"name": "B"}, "deduced"))
    # identical content is an idempotent no-op
    assert store.upsert(Instance("i-1", "Partner", {"name": "A"}, "deduced")) is False


def test_store_snapshot_isolated_from_later_writes():
    store = InstanceStore()
    store.upsert(Instance("i-1", "Task", {"status": "running"}, "event"))
    snap = store.snapshot()
    store.set_attribute("i-1", "status", "done")
    assert snap.get("i-1").attributes["status"] == "running"
    assert store.get("i-1").attributes["status"] == "done"


def test_delete_removes_incident_relations():
    store = InstanceStore()
    store.upsert(Instance("a", "Partner", {}, "user"))
    store.upsert(Instance("b", "Partner", {}, "user"))
    store.add_relation("a", "knows", "b")
    store.delete("b")
    assert store.relations(predicate="knows") == []


def test_token_set_similarity_basics():
    assert token_set_similarity("Ship Parcel", "ship parcel") == 1.0
    assert token_set_similarity("ShipParcel", "ship parcel") == 1.0
    assert token_set_similarity("alpha", "beta") == 0.0
