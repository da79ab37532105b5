"""Schema compilation, structural validation, and N-Triples export."""

from __future__ import annotations

import itertools
import json
import random

import jsonschema
import pytest

from metaforge.compiler import compile as compile_template, export_ntriples, validate
from metaforge.errors import NoPropertyIri
from metaforge.model import (
    Cardinality,
    FieldSpec,
    LiteralEntry,
    LiteralList,
    LiteralValue,
    MetadataInstance,
    ResolvedElement,
    ResolvedTemplate,
    TermValue,
    TextConstraints,
    NumberConstraints,
    ValueConstraintSet,
    instance_doc,
    parse_instance,
    resolve_composition,
    serialize_instance,
)

from generators import instance_for, random_template
from ntriples_checker import check_document

TID = "11111111-1111-4111-8111-111111111111"
LIVER = "http://purl.obolibrary.org/obo/UBERON_0002107"
LUNG = "http://purl.obolibrary.org/obo/UBERON_0002048"
HEPATITIS = "http://purl.obolibrary.org/obo/DOID_2237"

PERMISSIVE = lambda _c, _iri: True


def literal_list_membership(constraints: ValueConstraintSet, iri: str) -> bool:
    return any(
        entry.iri == iri
        for source in constraints.sources
        if isinstance(source, LiteralList)
        for entry in source.entries
    )


def make_instance(values: dict, template_id: str = TID) -> MetadataInstance:
    return MetadataInstance(
        context_map={},
        instance_id="urn:metaforge:instance:00000000-0000-4000-8000-000000000009",
        template_id=template_id,
        values=values,
    )


def five_type_template() -> ResolvedTemplate:
    term_constraints = ValueConstraintSet(
        (LiteralList((LiteralEntry("liver", LIVER), LiteralEntry("lung", LUNG))),)
    )
    return ResolvedTemplate(
        id=TID,
        name="five",
        children=(
            FieldSpec("a", "text", property_iri="http://example.org/p/a"),
            FieldSpec("b", "paragraph", property_iri="http://example.org/p/b"),
            FieldSpec("c", "number", property_iri="http://example.org/p/c"),
            FieldSpec("d", "date", property_iri="http://example.org/p/d"),
            FieldSpec("e", "term", constraints=term_constraints,
                      property_iri="http://example.org/p/e"),
        ),
    )


# -- compile -------------------------------------------------------------------

def test_compile_empty_template_accepts_only_jsonld_keys():
    schema = json.loads(compile_template(ResolvedTemplate(id=TID, name="empty")).schema_doc)
    assert set(schema["properties"]) == {"@context", "@id", "@type"}
    assert schema["additionalProperties"] is False
    validator = jsonschema.Draft7Validator(schema)
    ok = {"@context": {}, "@id": "urn:x:1", "@type": f"urn:metaforge:template:{TID}"}
    assert list(validator.iter_errors(ok)) == []
    assert list(validator.iter_errors({**ok, "extra": 1})) != []


def test_compile_five_types_mapping():
    schema = json.loads(compile_template(five_type_template()).schema_doc)
    props = schema["properties"]
    assert props["a"]["properties"]["@value"]["type"] == "string"
    assert props["b"]["properties"]["@value"]["type"] == "string"
    assert props["c"]["properties"]["@value"]["anyOf"][0]["type"] == "number"
    assert props["d"]["properties"]["@value"]["pattern"] == "^\\d{4}-\\d{2}-\\d{2}$"
    assert props["e"]["required"] == ["@id", "rdfs:label"]


def test_compile_number_constraints_stated_mapping():
    rt = ResolvedTemplate(id=TID, name="n", children=(
        FieldSpec("c", "number",
                  constraints=NumberConstraints(minimum=0, decimal_places=2)),
    ))
    schema = json.loads(compile_template(rt).schema_doc)
    number_branch = schema["properties"]["c"]["properties"]["@value"]["anyOf"][0]
    assert number_branch == {"type": "number", "minimum": 0, "multipleOf": 0.01}


def test_schema_doc_passes_draft7_meta_schema():
    rng = random.Random(31)
    for _ in range(20):
        rt = resolve_composition(random_template(rng))
        schema = json.loads(compile_template(rt).schema_doc)
        jsonschema.Draft7Validator.check_schema(schema)


def test_compile_is_deterministic():
    rng = random.Random(32)
    for _ in range(10):
        rt = resolve_composition(random_template(rng))
        assert compile_template(rt).schema_doc == compile_template(rt).schema_doc


def test_term_fields_are_exactly_term_paths():
    rt = ResolvedTemplate(id=TID, name="t", children=(
        FieldSpec("plain", "text"),
        ResolvedElement("sample", "http://example.org/p/sample", Cardinality(0, 1),
                        children=(
                            FieldSpec("organ", "term", constraints=ValueConstraintSet(
                                (LiteralList((LiteralEntry("liver", LIVER),)),))),
                        )),
    ))
    assert set(compile_template(rt).term_fields) == {"sample/organ"}


def test_cardinality_becomes_array_schema():
    rt = ResolvedTemplate(id=TID, name="t", children=(
        FieldSpec("tags", "text", cardinality=Cardinality(1, 5)),
    ))
    schema = json.loads(compile_template(rt).schema_doc)
    assert schema["properties"]["tags"]["type"] == "array"
    assert schema["properties"]["tags"]["minItems"] == 1
    assert schema["properties"]["tags"]["maxItems"] == 5
    assert "tags" in schema["required"]


# -- validate -------------------------------------------------------------------

def test_numeric_value_in_term_field_is_type_mismatch():
    rt = five_type_template()
    m = make_instance({"e": LiteralValue(42, "number")})
    report = validate(rt, m, PERMISSIVE)
    assert not report.valid
    assert any(e.code == "TYPE_MISMATCH" and e.path == "/e" for e in report.errors)


def test_conformant_instance_is_valid():
    rt = five_type_template()
    m = make_instance({
        "a": LiteralValue("short", "string"),
        "b": LiteralValue("longer prose", "string"),
        "c": LiteralValue(7, "number"),
        "d": LiteralValue("2021-03-04", "date"),
        "e": TermValue(LIVER, "liver"),
    })
    report = validate(rt, m, literal_list_membership)
    assert report.valid and report.errors == ()


def test_term_not_in_constraint():
    rt = five_type_template()
    m = make_instance({"e": TermValue(HEPATITIS, "hepatitis")})
    report = validate(rt, m, literal_list_membership)
    assert [e.code for e in report.errors] == ["TERM_NOT_IN_CONSTRAINT"]


def test_all_errors_reported_not_just_first():
    rt = five_type_template()
    m = make_instance({
        "a": LiteralValue(1, "number"),
        "c": LiteralValue("x", "string"),
        "unknown": LiteralValue("y", "string"),
    })
    codes = sorted(e.code for e in validate(rt, m, PERMISSIVE).errors)
    assert codes == ["TYPE_MISMATCH", "TYPE_MISMATCH", "UNKNOWN_FIELD"]


def test_missing_required_reported_at_parent():
    rt = ResolvedTemplate(id=TID, name="t", children=(
        FieldSpec("must", "text", required=True, cardinality=Cardinality(1, 1)),
    ))
    report = validate(rt, make_instance({}), PERMISSIVE)
    assert report.errors[0].code == "MISSING_REQUIRED"
    assert report.errors[0].path == ""


def test_cardinality_errors():
    rt = ResolvedTemplate(id=TID, name="t", children=(
        FieldSpec("one", "text", cardinality=Cardinality(0, 1)),
        FieldSpec("many", "text", cardinality=Cardinality(2, 3)),
    ))
    m = make_instance({
        "one": [LiteralValue("a", "string"), LiteralValue("b", "string")],
        "many": [LiteralValue("a", "string")],
    })
    report = validate(rt, m, PERMISSIVE)
    assert {(e.path, e.code) for e in report.errors} == {
        ("/one", "CARDINALITY"), ("/many", "CARDINALITY"),
    }
    m2 = make_instance({"many": LiteralValue("a", "string")})
    assert any(e.code == "CARDINALITY" for e in validate(rt, m2, PERMISSIVE).errors)


def test_date_checks():
    rt = ResolvedTemplate(id=TID, name="t", children=(FieldSpec("d", "date"),))
    bad_format = make_instance({"d": LiteralValue("2017-2-3", "date")})
    assert [e.code for e in validate(rt, bad_format, PERMISSIVE).errors] == ["PATTERN_MISMATCH"]
    bad_calendar = make_instance({"d": LiteralValue("2017-02-30", "date")})
    assert [e.code for e in validate(rt, bad_calendar, PERMISSIVE).errors] == ["OUT_OF_RANGE"]
    good = make_instance({"d": LiteralValue("2016-02-29", "date")})
    assert validate(rt, good, PERMISSIVE).valid


def test_number_checked_on_decimal_string():
    rt = ResolvedTemplate(id=TID, name="t", children=(
        FieldSpec("n", "number",
                  constraints=NumberConstraints(minimum=0, maximum=10, decimal_places=2)),
    ))
    ok = make_instance({"n": LiteralValue("4.02", "number")})
    assert validate(rt, ok, PERMISSIVE).valid
    too_precise = make_instance({"n": LiteralValue("4.021", "number")})
    assert [e.code for e in validate(rt, too_precise, PERMISSIVE).errors] == ["OUT_OF_RANGE"]
    trailing_zeros_ok = make_instance({"n": LiteralValue("4.0200000", "number")})
    assert validate(rt, trailing_zeros_ok, PERMISSIVE).valid
    out_of_range = make_instance({"n": LiteralValue("10.01", "number")})
    assert [e.code for e in validate(rt, out_of_range, PERMISSIVE).errors] == ["OUT_OF_RANGE"]


def test_wrong_template_id_flagged():
    rt = five_type_template()
    m = make_instance({}, template_id="99999999-9999-4999-8999-999999999999")
    report = validate(rt, m, PERMISSIVE)
    assert report.errors[0].path == "" and report.errors[0].code == "TYPE_MISMATCH"


# -- the 64-candidate enumeration oracle ----------------------------------------

def enumeration_fixture() -> ResolvedTemplate:
    term_constraints = ValueConstraintSet(
        (LiteralList((LiteralEntry("liver", LIVER), LiteralEntry("lung", LUNG))),)
    )
    return ResolvedTemplate(id=TID, name="enum", children=(
        FieldSpec("tissue", "term", required=True, cardinality=Cardinality(1, 1),
                  constraints=term_constraints),
        FieldSpec("age", "number",
                  constraints=NumberConstraints(minimum=0, maximum=120, decimal_places=0)),
        FieldSpec("notes", "text",
                  constraints=TextConstraints(max_length=10, pattern="^[A-Za-z ]*$")),
    ))


ABSENT = object()

TISSUE_CANDIDATES = [ABSENT, TermValue(LIVER, "liver"), TermValue(HEPATITIS, "hepatitis"),
                     LiteralValue(42, "number")]
AGE_CANDIDATES = [ABSENT, LiteralValue(42, "number"), LiteralValue(-5, "number"),
                  LiteralValue("forty", "string")]
NOTES_CANDIDATES = [ABSENT, LiteralValue("short", "string"),
                    LiteralValue("waaaay too long", "string"),
                    LiteralValue("num3r1c", "string")]


# Independent per-field checkers, written before the validator was run against
# them; they share no code with metaforge.compiler.

def tissue_ok(v) -> bool:
    if v is ABSENT:
        return False  # required
    return isinstance(v, TermValue) and v.iri in {LIVER, LUNG}


def age_ok(v) -> bool:
    if v is ABSENT:
        return True
    if not isinstance(v, LiteralValue) or v.datatype != "number":
        return False
    try:
        n = float(v.value)
    except (TypeError, ValueError):
        return False
    return 0 <= n <= 120 and float(n) == int(n)


def notes_ok(v) -> bool:
    if v is ABSENT:
        return True
    if not isinstance(v, LiteralValue) or v.datatype != "string":
        return False
    text = str(v.value)
    return len(text) <= 10 and all(ch.isalpha() or ch == " " for ch in text)


def test_enumerated_instances_match_bruteforce_checker():
    rt = enumeration_fixture()
    combos = list(itertools.product(TISSUE_CANDIDATES, AGE_CANDIDATES, NOTES_CANDIDATES))
    assert len(combos) == 64
    agreements = 0
    for tissue, age, notes in combos:
        values = {}
        if tissue is not ABSENT:
            values["tissue"] = tissue
        if age is not ABSENT:
            values["age"] = age
        if notes is not ABSENT:
            values["notes"] = notes
        expected = tissue_ok(tissue) and age_ok(age) and notes_ok(notes)
        report = validate(rt, make_instance(values), literal_list_membership)
        assert report.valid == expected, (tissue, age, notes, report.errors)
        agreements += 1
    assert agreements == 64


# -- error paths resolve and the draft-07 soundness link -------------------------

def resolve_pointer(doc, pointer: str):
    if pointer == "":
        return doc
    node = doc
    for raw in pointer.lstrip("/").split("/"):
        token = raw.replace("~1", "/").replace("~0", "~")
        if isinstance(node, list):
            node = node[int(token)]
        else:
            node = node[token]
    return node


def test_error_paths_resolve_into_document():
    rng = random.Random(41)
    for _ in range(40):
        rt = resolve_composition(random_template(rng))
        m = instance_for(rng, rt, fill_prob=0.5)
        # mutate: drop template agreement and sprinkle an unknown key
        m.values["zzz_unknown"] = LiteralValue("x", "string")
        doc = json.loads(serialize_instance(m))
        for error in validate(rt, m, PERMISSIVE).errors:
            resolve_pointer(doc, error.path)


def test_validate_valid_implies_schema_valid():
    rng = random.Random(42)
    checked = 0
    for _ in range(120):
        rt = resolve_composition(random_template(rng))
        m = instance_for(rng, rt)
        if not validate(rt, m, PERMISSIVE).valid:
            continue
        schema = json.loads(compile_template(rt).schema_doc)
        doc = json.loads(serialize_instance(m))
        errors = list(jsonschema.Draft7Validator(schema).iter_errors(doc))
        assert errors == [], (serialize_instance(m), errors)
        checked += 1
    assert checked >= 30


# -- export_ntriples ---------------------------------------------------------------

def test_export_empty_instance_is_one_type_triple():
    rt = ResolvedTemplate(id=TID, name="t")
    text = export_ntriples(rt, make_instance({}))
    assert text.count("\n") == 1
    assert "22-rdf-syntax-ns#type" in text
    assert check_document(text) == 1


def test_export_three_literals_one_term_is_six_lines():
    rt = five_type_template()
    m = make_instance({
        "a": LiteralValue("x", "string"),
        "c": LiteralValue(5, "number"),
        "d": LiteralValue("2020-01-01", "date"),
        "e": TermValue(LIVER, "liver"),
    })
    text = export_ntriples(rt, m)
    assert check_document(text) == 6  # 1 type + 3 literals + 2 for the term
    assert text == "".join(sorted(text.splitlines(keepends=True)))


def test_export_missing_property_iri():
    rt = ResolvedTemplate(id=TID, name="t", children=(FieldSpec("bare", "text"),))
    with pytest.raises(NoPropertyIri) as err:
        export_ntriples(rt, make_instance({"bare": LiteralValue("x", "string")}))
    assert err.value.path == "bare"


def test_export_nested_blank_nodes_depth_first():
    rt = ResolvedTemplate(id=TID, name="t", children=(
        ResolvedElement("sample", "http://example.org/p/sample", Cardinality(0, None),
                        children=(
                            FieldSpec("tissue", "text",
                                      property_iri="http://example.org/p/tissue"),
                        )),
    ))
    m = make_instance({"sample": [
        {"tissue": LiteralValue("lung", "string")},
        {"tissue": LiteralValue("liver", "string")},
        {},  # empty repetition contributes nothing
    ]})
    text = export_ntriples(rt, m)
    # 1 type + 2 element links + 2 literals
    assert check_document(text) == 5
    assert "_:e1" in text and "_:e2" in text and "_:e3" not in text


def count_element_nodes(value) -> int:
    if isinstance(value, list):
        return sum(count_element_nodes(v) for v in value)
    if isinstance(value, dict):
        inner = sum(count_element_nodes(v) for v in value.values())
        has_leaf = any(_leaf_count(v) > 0 for v in value.values())
        return inner + (1 if has_leaf else 0)
    return 0


def _leaf_count(value) -> int:
    if isinstance(value, list):
        return sum(_leaf_count(v) for v in value)
    if isinstance(value, dict):
        return sum(_leaf_count(v) for v in value.values())
    return 1


def count_terms(value) -> int:
    if isinstance(value, list):
        return sum(count_terms(v) for v in value)
    if isinstance(value, dict):
        return sum(count_terms(v) for v in value.values())
    return 1 if isinstance(value, TermValue) else 0


def test_export_line_count_formula_on_random_fixtures():
    rng = random.Random(51)
    for _ in range(60):
        rt = resolve_composition(random_template(rng, with_property_iris=True))
        m = instance_for(rng, rt)
        text = export_ntriples(rt, m)
        leaves = _leaf_count(m.values)
        terms = count_terms(m.values)
        literals = leaves - terms
        element_nodes = sum(count_element_nodes(v) for v in m.values.values())
        expected = 1 + literals + 2 * terms + element_nodes
        assert check_document(text) == expected
        assert export_ntriples(rt, m) == text  # deterministic


def test_export_escapes_awkward_literals():
    rt = ResolvedTemplate(id=TID, name="t", children=(
        FieldSpec("x", "text", property_iri="http://example.org/p/x"),
    ))
    m = make_instance({"x": LiteralValue('quote " backslash \\ tab \t nl \n', "string")})
    text = export_ntriples(rt, m)
    assert check_document(text) == 2
    assert '\\"' in text and "\\\\" in text and "\\t" in text and "\\n" in text
