"""Target serialization, the external validator protocol, and submission receipts."""

from __future__ import annotations

import random

import pytest

from metaforge.errors import (
    MissingCredential,
    SubmissionRejected,
    SubmissionUnavailable,
    Unserializable,
    ValidatorMalformed,
    ValidatorUnavailable,
)
from metaforge.mockservers import MockExternalValidator, MockSubmissionServer
from metaforge.model import (
    Cardinality,
    FieldSpec,
    LiteralValue,
    MetadataInstance,
    ResolvedElement,
    ResolvedTemplate,
    TermValue,
    resolve_composition,
    serialize_instance,
)
from metaforge.repository import Principal, ResourceRecord, ResourceStore
from metaforge.submission import (
    ExternalValidationResult,
    SubmissionTarget,
    ValidationMessage,
    serialize_for_target,
    submit,
    validate_external,
)

from generators import instance_for, random_template

TID = "11111111-1111-4111-8111-111111111111"
LIVER = "http://purl.obolibrary.org/obo/UBERON_0002107"
ALICE = Principal.user("aaaaaaaa-0000-4000-8000-000000000001")


def make_instance(values: dict) -> MetadataInstance:
    return MetadataInstance(
        context_map={}, instance_id="urn:metaforge:instance:x", template_id=TID,
        values=values)


def flat_template() -> ResolvedTemplate:
    return ResolvedTemplate(id=TID, name="t", children=(
        FieldSpec("tissue", "text", property_iri="http://example.org/p/tissue"),
        FieldSpec("organism", "term", property_iri="http://example.org/p/organism"),
    ))


def target_for(url: str, format: str = "json", validator: str | None = None) -> SubmissionTarget:
    return SubmissionTarget(name="mock", endpoint_url=url, format=format,
                            api_key_env_var="METAFORGE_TEST_TARGET_KEY",
                            external_validator_url=validator)


# -- serialize_for_target ---------------------------------------------------------

def test_json_payload_is_canonical_instance():
    m = make_instance({"tissue": LiteralValue("liver", "string")})
    payload = serialize_for_target(flat_template(), m, target_for("http://x/submit"))
    assert payload == serialize_instance(m).encode("utf-8")


def test_tsv_rendering():
    m = make_instance({
        "tissue": LiteralValue("liver", "string"),
        "organism": TermValue(LIVER, "house mouse"),
    })
    payload = serialize_for_target(flat_template(), m,
                                   target_for("http://x/submit", format="tsv"))
    header, row, trailer = payload.decode("utf-8").split("\n")
    assert header == "tissue\torganism"
    assert row == f"liver\thouse mouse [{LIVER}]"
    assert trailer == ""


def test_tsv_repeated_values_joined_with_pipe():
    rt = ResolvedTemplate(id=TID, name="t", children=(
        FieldSpec("tags", "text", cardinality=Cardinality(0, 5)),
    ))
    m = make_instance({"tags": [LiteralValue("a", "string"), LiteralValue("b", "string")]})
    payload = serialize_for_target(rt, m, target_for("http://x/submit", format="tsv"))
    assert payload.decode("utf-8").split("\n")[1] == "a|b"


def test_tsv_replaces_tabs_and_newlines():
    rt = ResolvedTemplate(id=TID, name="t", children=(FieldSpec("x", "text"),))
    m = make_instance({"x": LiteralValue("a\tb\nc", "string")})
    payload = serialize_for_target(rt, m, target_for("http://x/submit", format="tsv"))
    assert payload.decode("utf-8").split("\n")[1] == "a b c"


def test_tsv_depth_limit():
    rt = ResolvedTemplate(id=TID, name="t", children=(
        ResolvedElement("a", None, Cardinality(0, 1), children=(
            ResolvedElement("b", None, Cardinality(0, 1), children=(
                ResolvedElement("c", None, Cardinality(0, 1), children=(
                    FieldSpec("leaf", "text"),
                )),
            )),
        )),
    ))
    deep = make_instance({"a": {"b": {"c": {"leaf": LiteralValue("x", "string")}}}})
    with pytest.raises(Unserializable):
        serialize_for_target(rt, deep, target_for("http://x/submit", format="tsv"))


def test_tsv_column_order_is_template_order():
    rng = random.Random(71)
    for _ in range(25):
        rt = resolve_composition(random_template(rng, with_property_iris=True))
        m = instance_for(rng, rt)

        def field_paths(children, prefix=""):
            for child in children:
                path = f"{prefix}/{child.name}" if prefix else child.name
                if isinstance(child, FieldSpec):
                    yield path
                else:
                    yield from field_paths(child.children, path)

        expected = list(field_paths(rt.children))
        try:
            payload = serialize_for_target(rt, m, target_for("http://x/y", format="tsv"))
        except Unserializable:
            continue
        header = payload.decode("utf-8").split("\n")[0]
        assert header.split("\t") == expected if expected else header == ""


# -- validate_external ---------------------------------------------------------------

@pytest.fixture
def validator_server():
    server = MockExternalValidator()
    server.start()
    yield server
    server.stop()


def test_external_validator_accepts(validator_server):
    target = target_for("http://x/submit", validator=validator_server.base_url)
    result = validate_external(target, flat_template(), make_instance({}))
    assert result == ExternalValidationResult(True, ())
    assert validator_server.requests[-1]["headers"]["Content-Type"] == "application/ld+json"


def test_external_validator_messages_pass_through(validator_server):
    validator_server.result = {
        "valid": False,
        "messages": [{"path": "/tissue", "message": "not a tissue", "severity": "error"}],
    }
    target = target_for("http://x/submit", validator=validator_server.base_url)
    result = validate_external(target, flat_template(), make_instance({}))
    assert result.valid is False
    assert result.messages == (ValidationMessage("/tissue", "not a tissue", "error"),)
    validator_server.result = {"valid": True, "messages": []}


def test_external_validator_down(validator_server):
    validator_server.fail_with = 503
    try:
        target = target_for("http://x/submit", validator=validator_server.base_url)
        with pytest.raises(ValidatorUnavailable):
            validate_external(target, flat_template(), make_instance({}))
    finally:
        validator_server.fail_with = None


def test_external_validator_unreachable():
    target = target_for("http://x/submit", validator="http://127.0.0.1:9/validate")
    with pytest.raises(ValidatorUnavailable):
        validate_external(target, flat_template(), make_instance({}), timeout=0.5)


def test_external_validator_malformed(validator_server):
    validator_server.raw_response = "%% not json %%"
    try:
        target = target_for("http://x/submit", validator=validator_server.base_url)
        with pytest.raises(ValidatorMalformed):
            validate_external(target, flat_template(), make_instance({}))
    finally:
        validator_server.raw_response = None


def test_external_validator_inconsistent_verdict(validator_server):
    validator_server.result = {
        "valid": True,
        "messages": [{"path": "", "message": "boom", "severity": "error"}],
    }
    try:
        target = target_for("http://x/submit", validator=validator_server.base_url)
        with pytest.raises(ValidatorMalformed):
            validate_external(target, flat_template(), make_instance({}))
    finally:
        validator_server.result = {"valid": True, "messages": []}


# -- submit ----------------------------------------------------------------------------

@pytest.fixture
def submission_server():
    server = MockSubmissionServer()
    server.start()
    yield server
    server.stop()


@pytest.fixture
def store(tmp_path):
    s = ResourceStore(tmp_path / "data")
    yield s
    s.close()


def seeded_instance_record(store) -> ResourceRecord:
    home = store.ensure_user_home(ALICE.id)
    m = make_instance({})
    import json as _json

    from metaforge.model import instance_doc
    record = ResourceRecord(
        id="99999999-9999-4999-8999-999999999999", resource_type="instance",
        parent_folder=home.id, owner=ALICE,
        payload=_json.loads(_json.dumps(instance_doc(m))), name="inst",
    )
    return store.put_resource(record, None, ALICE)


def receipts_of(store, instance_id):
    return [r for r in store.records_of_type("submissionReceipt")
            if r.parent_folder == instance_id]


def test_submit_success_persists_receipt(store, submission_server, monkeypatch):
    monkeypatch.setenv("METAFORGE_TEST_TARGET_KEY", "sekret-sekret-sekret-sekret-123456")
    record = seeded_instance_record(store)
    target = target_for(submission_server.base_url + "/submit")
    receipt = submit(target, flat_template(), make_instance({}), store, ALICE, record.id)
    assert receipt.http_status == 201
    assert receipt.remote_id == "MOCK-1"
    assert receipt.forced is False
    stored = receipts_of(store, record.id)
    assert len(stored) == 1
    assert stored[0].payload["httpStatus"] == 201
    auth = submission_server.requests[-1]["headers"]["Authorization"]
    assert auth == "apikey token=sekret-sekret-sekret-sekret-123456"


def test_submit_missing_credential_makes_no_call(store, submission_server, monkeypatch):
    monkeypatch.delenv("METAFORGE_TEST_TARGET_KEY", raising=False)
    record = seeded_instance_record(store)
    target = target_for(submission_server.base_url + "/submit")
    before = len(submission_server.requests)
    with pytest.raises(MissingCredential):
        submit(target, flat_template(), make_instance({}), store, ALICE, record.id)
    assert len(submission_server.requests) == before
    assert receipts_of(store, record.id) == []


def test_submit_rejected_still_persists_receipt(store, submission_server, monkeypatch):
    monkeypatch.setenv("METAFORGE_TEST_TARGET_KEY", "sekret-sekret-sekret-sekret-123456")
    record = seeded_instance_record(store)
    submission_server.next_status = 400
    target = target_for(submission_server.base_url + "/submit")
    with pytest.raises(SubmissionRejected) as err:
        submit(target, flat_template(), make_instance({}), store, ALICE, record.id)
    assert err.value.receipt.http_status == 400
    stored = receipts_of(store, record.id)
    assert len(stored) == 1 and stored[0].payload["httpStatus"] == 400


def test_submit_unreachable_no_receipt(store, monkeypatch):
    monkeypatch.setenv("METAFORGE_TEST_TARGET_KEY", "sekret-sekret-sekret-sekret-123456")
    record = seeded_instance_record(store)
    target = target_for("http://127.0.0.1:9/submit")
    with pytest.raises(SubmissionUnavailable):
        submit(target, flat_template(), make_instance({}), store, ALICE, record.id,
               timeout=0.5)
    assert receipts_of(store, record.id) == []


def test_forced_flag_recorded(store, submission_server, monkeypatch):
    monkeypatch.setenv("METAFORGE_TEST_TARGET_KEY", "sekret-sekret-sekret-sekret-123456")
    record = seeded_instance_record(store)
    target = target_for(submission_server.base_url + "/submit")
    receipt = submit(target, flat_template(), make_instance({}), store, ALICE, record.id,
                     forced=True)
    assert receipt.forced is True
    assert receipts_of(store, record.id)[0].payload["forced"] is True
