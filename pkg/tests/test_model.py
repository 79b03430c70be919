import pytest
from hypothesis import given, strategies as st

from mediate.errors import ModelParseError, ModelValidationError
from mediate.model import (
    CollaborationModel,
    ConceptRef,
    FieldSpec,
    FunctionAnnotation,
    MessageDef,
    Objective,
    Partner,
    SharedFunction,
    SubNetwork,
    dumps_model,
    iter_concept_refs,
    loads_model,
    validate_model,
    with_resolved_ref,
)

from helpers import minimal_model


def test_minimal_model_round_trips_through_loader():
    m = minimal_model()
    again = loads_model(dumps_model(m))
    assert again == m
    assert len(again.partners) == 2


def test_validation_passes_on_minimal_model():
    assert validate_model(minimal_model()).ok


def test_dangling_sub_network_reference_is_named():
    m = minimal_model(objectives=(
        Objective("o-1", "operation", "x", "sn-missing", (ConceptRef("Fabricate"),)),
    ))
    report = validate_model(m)
    assert not report.ok
    assert any(f.rule == "dangling-sub-network" and "sn-missing" in f.message
               for f in report.findings)
    with pytest.raises(ModelValidationError) as err:
        loads_model(dumps_model(m))
    assert "sn-missing" in str(err.value)


def test_duplicate_partner_id_fires_unique_ids_rule():
    m = minimal_model(partners=(
        Partner("p-1", "One"), Partner("p-1", "One again"), Partner("p-2", "Two"),
    ))
    report = validate_model(m)
    assert [f.rule for f in report.findings].count("unique-ids") == 1


def test_function_without_annotation_is_flagged():
    m = minimal_model(partners=(
        Partner("p-1", "One", (SharedFunction("f-1", "bare", (), ("m-1",)),)),
        Partner("p-2", "Two"),
    ))
    report = validate_model(m)
    assert any(f.rule == "annotated-function" for f in report.findings)


def test_sub_network_needs_two_distinct_partners():
    m = minimal_model(sub_networks=(SubNetwork("sn-1", "SN", ("p-1", "p-1")),))
    assert any(f.rule == "sub-network-size" for f in validate_model(m).findings)


def test_empty_sub_networks_rejected():
    m = minimal_model(sub_networks=())
    assert any(f.rule == "non-empty-scopes" for f in validate_model(m).findings)


def test_decisional_kind_normalizes_to_strategy():
    m = loads_model(dumps_model(minimal_model()).replace("kind: operation", "kind: decisional"))
    assert m.objectives[0].kind == "strategy"


def test_malformed_yaml_is_a_parse_error():
    with pytest.raises(ModelParseError):
        loads_model(":\n  - not a model")
    with pytest.raises(ModelParseError):
        loads_model("schema_version: 99\nnetwork_id: x\n")


def test_validation_is_pure():
    m = minimal_model(sub_networks=())
    assert validate_model(m) == validate_model(m)


_ident = st.from_regex(r"[a-z][a-z0-9\-]{0,8}", fullmatch=True)
_text = st.text(
    alphabet=st.characters(whitelist_categories=("L", "N", "Zs"), max_codepoint=0x2FF),
    min_size=0, max_size=12)
_kind = st.sampled_from(["exact", "same_as", "near_by"])


@st.composite
def concept_refs(draw):
    concept = draw(_ident)
    kind = draw(_kind)
    if kind == "exact" and draw(st.booleans()):
        return ConceptRef(concept)
    return ConceptRef(concept, kind, resolved=draw(_ident))


@st.composite
def models(draw):
    n_partners = draw(st.integers(2, 4))
    partner_ids = [f"p{i}" for i in range(n_partners)]
    n_messages = draw(st.integers(1, 4))
    message_ids = [f"m{i}" for i in range(n_messages)]
    messages = tuple(
        MessageDef(mid, draw(_text) or mid, draw(concept_refs()),
                   tuple(FieldSpec(f"fld{k}", draw(_ident), draw(st.none() | _ident))
                         for k in range(draw(st.integers(0, 2)))))
        for mid in message_ids
    )
    partners = []
    fn_no = 0
    for pid in partner_ids:
        functions = []
        for _ in range(draw(st.integers(0, 2))):
            fn_no += 1
            functions.append(SharedFunction(
                f"f{fn_no}", draw(_text) or f"f{fn_no}",
                tuple(draw(st.lists(st.sampled_from(message_ids), max_size=2, unique=True))),
                tuple(draw(st.lists(st.sampled_from(message_ids), max_size=2, unique=True))),
                FunctionAnnotation(capability=(draw(concept_refs()),)),
            ))
        partners.append(Partner(pid, draw(_text) or pid, tuple(functions)))
    sub_networks = (SubNetwork("sn0", "sn", tuple(partner_ids[:2])),)
    objectives = tuple(
        Objective(f"o{i}", draw(st.sampled_from(["strategy", "operation", "support"])),
                  draw(_text), "sn0", (draw(concept_refs()),))
        for i in range(draw(st.integers(0, 2)))
    )
    return CollaborationModel(
        network_id="net", name=draw(_text) or "net", sub_networks=sub_networks,
        partners=tuple(partners), objectives=objectives, messages=messages,
    )


@given(models())
def test_serialization_round_trip(m):
    assert loads_model(dumps_model(m)) == m


@given(models())
def test_ref_paths_address_every_ref(m):
    for path, ref in iter_concept_refs(m):
        replaced = with_resolved_ref(m, path, ConceptRef("Sentinel", "near_by", "Sentinel"))
        refs = dict(iter_concept_refs(replaced))
        assert refs[path].resolved == "Sentinel"
