"""Terminology: search ranking, branch expansion + cache, provisional terms,
value sets, and the membership oracle, all against the bundled mock server."""

from __future__ import annotations

from pathlib import Path

import pytest

from metaforge.errors import (
    BranchTooLarge,
    DuplicateLabel,
    DuplicateMember,
    EmptyQuery,
    InvalidPayload,
    TerminologyUnavailable,
    UnknownTerm,
)
from metaforge.mockservers import MockTerminologyServer, load_taxonomy
from metaforge.model import (
    LiteralEntry,
    LiteralList,
    OntologyBranch,
    ValueConstraintSet,
    ValueSetRef,
)
from metaforge.repository import Principal, ResourceStore
from metaforge.terminology import (
    SkosMapping,
    TerminologyClient,
    TerminologyService,
)

FIXTURES = Path(__file__).parent.parent / "fixtures"

ROOT = "http://purl.obolibrary.org/obo/UBERON_0001062"   # anatomical entity
ORGAN = "http://purl.obolibrary.org/obo/UBERON_0000062"
TISSUE = "http://purl.obolibrary.org/obo/UBERON_0000479"
LIVER = "http://purl.obolibrary.org/obo/UBERON_0002107"
LUNG = "http://purl.obolibrary.org/obo/UBERON_0002048"
EPITHELIUM = "http://purl.obolibrary.org/obo/UBERON_0000483"
MUSCLE = "http://purl.obolibrary.org/obo/UBERON_0002385"

ALICE = Principal.user("aaaaaaaa-0000-4000-8000-000000000001")


@pytest.fixture(scope="module")
def mock_server():
    server = MockTerminologyServer(load_taxonomy(FIXTURES / "taxonomy.json"))
    server.start()
    yield server
    server.stop()


@pytest.fixture
def store(tmp_path):
    s = ResourceStore(tmp_path / "data")
    yield s
    s.close()


class FakeClock:
    def __init__(self):
        self.t = 1000.0

    def __call__(self):
        return self.t


@pytest.fixture
def service(store, mock_server):
    mock_server.fail_with = None
    client = TerminologyClient(mock_server.base_url, api_key="test-key", page_size=3)
    return TerminologyService(store, client, cache_ttl=600, clock=FakeClock())


# -- search -------------------------------------------------------------------

def test_search_liver_ranks_fixture_term_first(service):
    result = service.search_terms("liver")
    assert result.terms[0].label == "liver"
    assert result.terms[0].iri == LIVER
    assert not result.degraded


def test_search_ranking_tiers_hand_applied(service):
    # "organ": exact label match "organ" first; "liver" follows via its
    # synonym "hepatic organ" (substring tier).
    labels = [t.label for t in service.search_terms("organ").terms]
    assert labels == ["organ", "liver"]


def test_search_blank_query_rejected(service):
    with pytest.raises(EmptyQuery):
        service.search_terms("   ")


def test_search_no_match_is_empty(service):
    assert service.search_terms("zebrafish").terms == ()


def test_search_limit(service):
    assert len(service.search_terms("ti", limit=1).terms) == 1


def test_search_degrades_to_provisional_results(service, mock_server):
    term = service.create_provisional_term("liverwort sample", [], ALICE)
    mock_server.fail_with = 500
    try:
        result = service.search_terms("liverwort")
        assert result.degraded
        assert [t.iri for t in result.terms] == [term.iri]
        assert result.terms[0].source == "provisional"
    finally:
        mock_server.fail_with = None


def test_search_sends_api_key(service, mock_server):
    mock_server.requests.clear()
    service.search_terms("organ")
    assert mock_server.requests[-1]["headers"]["Authorization"] == "apikey token=test-key"


# -- branch expansion -------------------------------------------------------------

def test_expand_root_branch_counts_from_fixture(service):
    descendants = service.expand_branch("UBERON", ROOT, include_root=False)
    assert descendants == {ORGAN, TISSUE, LIVER, LUNG, EPITHELIUM, MUSCLE}
    with_root = service.expand_branch("UBERON", ROOT, include_root=True)
    assert with_root == descendants | {ROOT}


def test_expand_leaf(service):
    assert service.expand_branch("UBERON", LIVER, include_root=True) == {LIVER}
    assert service.expand_branch("UBERON", LIVER, include_root=False) == set()


def test_expand_unknown_term(service):
    with pytest.raises(UnknownTerm):
        service.expand_branch("UBERON", "http://example.org/not-a-term", True)


def test_expansion_follows_pagination(service, mock_server):
    mock_server.requests.clear()
    service.expand_branch("UBERON", ROOT, include_root=False)
    # 6 descendants with page_size 3: the client must fetch a second page
    descendant_requests = [r for r in mock_server.requests if "descendants" in r["path"]]
    assert len(descendant_requests) == 2


def test_branch_cap(store, mock_server):
    client = TerminologyClient(mock_server.base_url, page_size=3, branch_cap=4)
    service = TerminologyService(store, client)
    with pytest.raises(BranchTooLarge):
        service.expand_branch("UBERON", ROOT, include_root=False)


def test_warm_cache_survives_outage_cold_cache_does_not(service, mock_server):
    warm = service.expand_branch("UBERON", ROOT, include_root=False)
    mock_server.fail_with = 500
    try:
        assert service.expand_branch("UBERON", ROOT, include_root=False) == warm
        with pytest.raises(TerminologyUnavailable):
            service.expand_branch("UBERON", ORGAN, include_root=False)
    finally:
        mock_server.fail_with = None


def test_cache_ttl_expiry_refetches(service, mock_server):
    service.expand_branch("UBERON", ROOT, include_root=False)
    mock_server.requests.clear()
    service.expand_branch("UBERON", ROOT, include_root=False)
    assert mock_server.requests == []  # served from cache
    service._clock.t += 601
    service.expand_branch("UBERON", ROOT, include_root=False)
    assert any("descendants" in r["path"] for r in mock_server.requests)


def test_stale_cache_serves_when_remote_down_after_ttl(service, mock_server):
    warm = service.expand_branch("UBERON", ROOT, include_root=False)
    service._clock.t += 601
    mock_server.fail_with = 500
    try:
        assert service.expand_branch("UBERON", ROOT, include_root=False) == warm
    finally:
        mock_server.fail_with = None


# -- provisional terms and value sets -----------------------------------------------

def test_create_provisional_term_with_mapping(service):
    term = service.create_provisional_term(
        "organoid sample", [SkosMapping("exactMatch", LIVER)], ALICE)
    assert term.iri == f"urn:metaforge:term:{term.id}"
    assert term.mappings == (SkosMapping("exactMatch", LIVER),)
    found = service.search_terms("organoid")
    assert found.terms[0].iri == term.iri


def test_empty_label_rejected(service):
    with pytest.raises(InvalidPayload):
        service.create_provisional_term("", [], ALICE)


def test_duplicate_label_warning_and_force(service):
    service.create_provisional_term("Liver", [], ALICE)
    with pytest.raises(DuplicateLabel):
        service.create_provisional_term("liver", [], ALICE)
    forced = service.create_provisional_term("liver", [], ALICE, force=True)
    assert forced.iri.startswith("urn:metaforge:term:")


def test_bad_mapping_relation_rejected(service):
    with pytest.raises(InvalidPayload):
        service.create_provisional_term("x", [SkosMapping("sameAs", LIVER)], ALICE)


def test_create_value_set(service):
    vs = service.create_value_set("yes/no", [(LIVER, "yes"), (LUNG, "no")], ALICE)
    assert len(vs.members) == 2
    assert service.get_value_set(vs.id) == vs


def test_value_set_duplicate_member(service):
    with pytest.raises(DuplicateMember):
        service.create_value_set("dup", [(LIVER, "a"), (LIVER, "b")], ALICE)


def test_value_set_of_provisional_term_is_member_end_to_end(service):
    term = service.create_provisional_term("undocumented tissue", [], ALICE)
    vs = service.create_value_set("locals", [(term.iri, term.label)], ALICE)
    constraints = ValueConstraintSet((ValueSetRef(vs.id),))
    assert service.is_member(constraints, term.iri)
    assert not service.is_member(constraints, LIVER)


def test_provisional_terms_survive_restart(tmp_path, mock_server):
    store = ResourceStore(tmp_path / "data")
    service = TerminologyService(store, None)
    term = service.create_provisional_term("persisted term", [], ALICE)
    vs = service.create_value_set("persisted set", [(term.iri, term.label)], ALICE)
    store.close()
    reopened = ResourceStore(tmp_path / "data")
    service2 = TerminologyService(reopened, None)
    assert [t.iri for t in service2.provisional_terms()] == [term.iri]
    assert service2.get_value_set(vs.id) == vs
    reopened.close()


# -- membership oracle ----------------------------------------------------------------

def test_literal_list_membership(service):
    constraints = ValueConstraintSet((LiteralList((LiteralEntry("liver", LIVER),)),))
    assert service.is_member(constraints, LIVER)
    assert not service.is_member(constraints, LUNG)


def test_branch_membership_respects_include_root(service):
    excluded = ValueConstraintSet((OntologyBranch("UBERON", ROOT, include_root=False),))
    assert not service.is_member(excluded, ROOT)
    assert service.is_member(excluded, MUSCLE)
    included = ValueConstraintSet((OntologyBranch("UBERON", ROOT, include_root=True),))
    assert service.is_member(included, ROOT)


def test_union_membership_probe_set(service):
    vs = service.create_value_set("ab", [(ORGAN, "A"), (TISSUE, "B")], ALICE)
    constraints = ValueConstraintSet((
        ValueSetRef(vs.id),
        LiteralList((LiteralEntry("c", EPITHELIUM),)),
    ))
    # hand-computed union: {ORGAN, TISSUE, EPITHELIUM}
    probes = {
        ORGAN: True, TISSUE: True, EPITHELIUM: True,
        LIVER: False, LUNG: False, ROOT: False,
    }
    for iri, expected in probes.items():
        assert service.is_member(constraints, iri) == expected, iri


def test_membership_monotone_under_added_sources(service):
    base = ValueConstraintSet((LiteralList((LiteralEntry("liver", LIVER),)),))
    extended = ValueConstraintSet(base.sources + (OntologyBranch("UBERON", ROOT, False),))
    for iri in (LIVER, LUNG, MUSCLE, ROOT):
        if service.is_member(base, iri):
            assert service.is_member(extended, iri)


def test_membership_does_not_need_remote_when_local_decides(store, mock_server):
    client = TerminologyClient("http://127.0.0.1:9")  # nothing listens there
    service = TerminologyService(store, client)
    constraints = ValueConstraintSet((
        LiteralList((LiteralEntry("liver", LIVER),)),
        OntologyBranch("UBERON", ROOT, include_root=False),
    ))
    assert service.is_member(constraints, LIVER)  # literal hit, no network
    with pytest.raises(TerminologyUnavailable):
        service.is_member(constraints, LUNG)  # branch needed, remote down, cold
