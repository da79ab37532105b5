"""Terminology layer: BioPortal-style remote client, locally minted
provisional terms and value sets, branch expansion with a TTL cache, and
the term-membership oracle used by validation.

Provisional terms and value sets persist as repository records, so they
survive restarts and show up in resource listings like everything else.
Branch expansions are cached per (source, root) and served stale when the
remote is unreachable; only a cold cache propagates the outage.
"""

from __future__ import annotations

import json
import time
import urllib.parse
from dataclasses import dataclass

import httpx

from .errors import (
    BranchTooLarge,
    DuplicateLabel,
    DuplicateMember,
    EmptyQuery,
    InvalidPayload,
    TerminologyUnavailable,
    UnknownTerm,
)
from .model import (
    LiteralList,
    OntologyBranch,
    ValueConstraintSet,
    ValueSetRef,
    is_iri,
    is_resource_id,
    new_resource_id,
)
from .repository import Principal, ResourceRecord, ResourceStore

PROVISIONAL_IRI_PREFIX = "urn:metaforge:term:"
SKOS_RELATIONS = ("exactMatch", "closeMatch", "broadMatch", "narrowMatch")

BRANCH_PAGE_SIZE = 500
BRANCH_HARD_CAP = 10_000
DEFAULT_CACHE_TTL = 600.0  # seconds


@dataclass(frozen=True)
class OntologyTerm:
    iri: str
    label: str
    source: str
    synonyms: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"iri": self.iri, "label": self.label, "source": self.source,
                "synonyms": list(self.synonyms)}


@dataclass(frozen=True)
class SkosMapping:
    relation: str
    target_iri: str


@dataclass(frozen=True)
class ProvisionalTerm:
    id: str
    label: str
    mappings: tuple[SkosMapping, ...]

    @property
    def iri(self) -> str:
        return PROVISIONAL_IRI_PREFIX + self.id

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "iri": self.iri,
            "mappings": [{"relation": m.relation, "targetIri": m.target_iri}
                         for m in self.mappings],
        }


@dataclass(frozen=True)
class ValueSet:
    id: str
    name: str
    members: tuple[tuple[str, str], ...]  # (iri, label)

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "members": [{"iri": iri, "label": label} for iri, label in self.members],
        }


@dataclass(frozen=True)
class TermSearchResult:
    terms: tuple[OntologyTerm, ...]
    degraded: bool = False


def provisional_term_from_doc(doc: dict) -> ProvisionalTerm:
    return ProvisionalTerm(
        id=doc["id"], label=doc["label"],
        mappings=tuple(SkosMapping(m["relation"], m["targetIri"])
                       for m in doc.get("mappings", [])),
    )


def value_set_from_doc(doc: dict) -> ValueSet:
    return ValueSet(
        id=doc["id"], name=doc["name"],
        members=tuple((m["iri"], m["label"]) for m in doc["members"]),
    )


def validate_terminology_payload(resource_type: str, payload, record_id: str) -> None:
    """Shape check used by the repository before accepting a payload."""
    if not isinstance(payload, dict):
        raise InvalidPayload(f"a {resource_type} needs a JSON document payload")
    if payload.get("id") != record_id:
        raise InvalidPayload("payload id does not match the record id")
    if resource_type == "valueSet":
        members = payload.get("members")
        if not isinstance(payload.get("name"), str) or not payload["name"]:
            raise InvalidPayload("a value set needs a non-empty name")
        if not isinstance(members, list) or not members:
            raise InvalidPayload("a value set needs at least one member")
        seen = set()
        for m in members:
            if not isinstance(m, dict) or not is_iri(m.get("iri")) \
                    or not isinstance(m.get("label"), str):
                raise InvalidPayload("value set members are {iri, label} objects")
            if m["iri"] in seen:
                raise DuplicateMember(f"member {m['iri']} appears twice")
            seen.add(m["iri"])
        return
    # provisionalTerm
    if not isinstance(payload.get("label"), str) or not payload["label"]:
        raise InvalidPayload("a provisional term needs a non-empty label")
    if payload.get("iri") != PROVISIONAL_IRI_PREFIX + record_id:
        raise InvalidPayload("provisional term IRIs are minted from the record id")
    for m in payload.get("mappings", []):
        if not isinstance(m, dict) or m.get("relation") not in SKOS_RELATIONS:
            raise InvalidPayload(f"mapping relations must be one of {SKOS_RELATIONS}")
        if not is_iri(m.get("targetIri")):
            raise InvalidPayload("mapping targets must be absolute IRIs")


# ---------------------------------------------------------------------------
# remote client
# ---------------------------------------------------------------------------

class TerminologyClient:
    """Thin HTTP client for the remote terminology protocol."""

    def __init__(self, base_url: str, api_key: str | None = None, timeout: float = 10.0,
                 page_size: int = BRANCH_PAGE_SIZE, branch_cap: int = BRANCH_HARD_CAP):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.page_size = page_size
        self.branch_cap = branch_cap

    def _headers(self) -> dict:
        if self.api_key:
            return {"Authorization": f"apikey token={self.api_key}"}
        return {}

    def _get(self, url: str) -> dict:
        try:
            response = httpx.get(url, headers=self._headers(), timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise TerminologyUnavailable(f"terminology request failed: {exc}")
        if response.status_code == 404:
            raise UnknownTerm(f"the terminology server does not know this term: {url}")
        if response.status_code // 100 != 2:
            raise TerminologyUnavailable(
                f"terminology server answered {response.status_code}")
        try:
            return response.json()
        except json.JSONDecodeError as exc:
            raise TerminologyUnavailable(f"unparseable terminology response: {exc}")

    @staticmethod
    def _terms_of(collection: list) -> list[OntologyTerm]:
        return [
            OntologyTerm(
                iri=entry["@id"], label=entry.get("prefLabel", ""),
                source=entry.get("ontology", ""),
                synonyms=tuple(entry.get("synonym", [])),
            )
            for entry in collection
        ]

    def search(self, query: str, source: str | None, limit: int) -> list[OntologyTerm]:
        params = {"q": query, "pagesize": str(limit)}
        if source:
            params["ontologies"] = source
        url = f"{self.base_url}/search?{urllib.parse.urlencode(params)}"
        return self._terms_of(self._get(url).get("collection", []))

    def descendants(self, source: str, root_iri: str) -> list[OntologyTerm]:
        encoded = urllib.parse.quote(root_iri, safe="")
        url = (f"{self.base_url}/ontologies/{source}/classes/{encoded}/descendants"
               f"?pagesize={self.page_size}")
        terms: list[OntologyTerm] = []
        while url:
            body = self._get(url)
            terms.extend(self._terms_of(body.get("collection", [])))
            if len(terms) > self.branch_cap:
                raise BranchTooLarge(
                    f"branch under {root_iri} exceeds {self.branch_cap} terms")
            url = body.get("nextPage")
        return terms


# ---------------------------------------------------------------------------
# service
# ---------------------------------------------------------------------------

def _match_tier(term: OntologyTerm, query_cf: str) -> int | None:
    label_cf = term.label.casefold()
    if label_cf == query_cf:
        return 0
    if label_cf.startswith(query_cf):
        return 1
    if query_cf in label_cf or any(query_cf in s.casefold() for s in term.synonyms):
        return 2
    return None


class TerminologyService:
    """``store`` may be None for file-only (CLI) runs: provisional terms and
    value sets are then simply absent."""

    def __init__(self, store: ResourceStore | None,
                 client: TerminologyClient | None = None,
                 cache_ttl: float = DEFAULT_CACHE_TTL, clock=time.monotonic):
        self.store = store
        self.client = client
        self.cache_ttl = cache_ttl
        self._clock = clock
        self._branch_cache: dict[tuple[str, str], tuple[float, frozenset[str]]] = {}

    # -- local resources -----------------------------------------------------

    def provisional_terms(self) -> list[ProvisionalTerm]:
        if self.store is None:
            return []
        return [provisional_term_from_doc(r.payload)
                for r in self.store.records_of_type("provisionalTerm")]

    def get_value_set(self, value_set_id: str) -> ValueSet | None:
        if self.store is None:
            return None
        record = self.store.peek(value_set_id)
        if record is None or record.resource_type != "valueSet":
            return None
        return value_set_from_doc(record.payload)

    def create_provisional_term(self, label: str, mappings: list[SkosMapping],
                                actor: Principal, parent_folder: str | None = None,
                                force: bool = False) -> ProvisionalTerm:
        if self.store is None:
            raise InvalidPayload("no repository configured; cannot persist local terms")
        if not label or not label.strip():
            raise InvalidPayload("a provisional term needs a non-empty label")
        for m in mappings:
            if m.relation not in SKOS_RELATIONS:
                raise InvalidPayload(f"mapping relations must be one of {SKOS_RELATIONS}")
            if not is_iri(m.target_iri):
                raise InvalidPayload("mapping targets must be absolute IRIs")
        if not force:
            wanted = label.casefold()
            for existing in self.provisional_terms():
                if existing.label.casefold() == wanted:
                    raise DuplicateLabel(
                        f"a provisional term labeled {existing.label!r} already exists "
                        f"({existing.iri}); pass force to create another")
        term = ProvisionalTerm(new_resource_id(), label, tuple(mappings))
        parent = parent_folder or self.store.ensure_user_home(actor.id).id
        self.store.put_resource(
            ResourceRecord(id=term.id, resource_type="provisionalTerm",
                           parent_folder=parent, owner=actor, payload=term.to_doc(),
                           name=label),
            expected_version=None, actor=actor)
        return term

    def create_value_set(self, name: str, members: list[tuple[str, str]],
                         actor: Principal, parent_folder: str | None = None) -> ValueSet:
        if self.store is None:
            raise InvalidPayload("no repository configured; cannot persist value sets")
        if not name or not name.strip():
            raise InvalidPayload("a value set needs a non-empty name")
        if not members:
            raise InvalidPayload("a value set needs at least one member")
        seen = set()
        for iri, _label in members:
            if not is_iri(iri):
                raise InvalidPayload(f"member {iri!r} is not an absolute IRI")
            if iri in seen:
                raise DuplicateMember(f"member {iri} appears twice")
            seen.add(iri)
        value_set = ValueSet(new_resource_id(), name, tuple(members))
        parent = parent_folder or self.store.ensure_user_home(actor.id).id
        self.store.put_resource(
            ResourceRecord(id=value_set.id, resource_type="valueSet",
                           parent_folder=parent, owner=actor,
                           payload=value_set.to_doc(), name=name),
            expected_version=None, actor=actor)
        return value_set

    # -- search ----------------------------------------------------------------

    def search_terms(self, query: str, source: str | None = None,
                     limit: int = 20) -> TermSearchResult:
        query = (query or "").strip()
        if not query:
            raise EmptyQuery("the search query is empty")
        if limit < 1:
            raise ValueError("limit must be positive")
        degraded = False
        remote: list[OntologyTerm] = []
        if self.client is not None:
            try:
                remote = self.client.search(query, source, limit)
            except (TerminologyUnavailable, UnknownTerm):
                degraded = True
        local = [
            OntologyTerm(iri=t.iri, label=t.label, source="provisional")
            for t in self.provisional_terms()
        ]
        query_cf = query.casefold()
        ranked = []
        for origin, terms in ((0, remote), (1, local)):
            for term in terms:
                tier = _match_tier(term, query_cf)
                if tier is None:
                    continue
                ranked.append((tier, term.label.casefold(), term.label, origin, term))
        ranked.sort(key=lambda row: row[:4])
        return TermSearchResult(tuple(row[4] for row in ranked[:limit]), degraded)

    # -- branch expansion ----------------------------------------------------------

    def expand_branch(self, source: str, root_iri: str, include_root: bool) -> set[str]:
        key = (source, root_iri)
        now = self._clock()
        cached = self._branch_cache.get(key)
        if cached is not None and cached[0] > now:
            descendants = cached[1]
        else:
            if self.client is None:
                if cached is not None:
                    descendants = cached[1]
                else:
                    raise TerminologyUnavailable("no terminology endpoint is configured")
            else:
                try:
                    terms = self.client.descendants(source, root_iri)
                except TerminologyUnavailable:
                    if cached is None:
                        raise
                    descendants = cached[1]  # stale beats unavailable
                else:
                    descendants = frozenset(t.iri for t in terms)
                    self._branch_cache[key] = (now + self.cache_ttl, descendants)
        out = set(descendants)
        if include_root:
            out.add(root_iri)
        else:
            out.discard(root_iri)
        return out

    # -- membership oracle -----------------------------------------------------------

    def is_member(self, constraints: ValueConstraintSet, iri: str) -> bool:
        """Union over the constraint sources; branch sources are consulted
        last so a remote outage only matters when nothing local decides."""
        branches = []
        for src in constraints.sources:
            if isinstance(src, LiteralList):
                if any(entry.iri == iri for entry in src.entries):
                    return True
            elif isinstance(src, ValueSetRef):
                value_set = self.get_value_set(src.value_set_id)
                if value_set and any(member_iri == iri for member_iri, _ in value_set.members):
                    return True
            else:
                branches.append(src)
        for src in branches:
            if iri in self.expand_branch(src.source, src.root_iri, src.include_root):
                return True
        return False
