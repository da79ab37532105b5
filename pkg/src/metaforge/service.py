"""Composition root: owns the store, terminology, recommender indexes,
API keys, and submission targets.  The REST layer and the CLI both call
through here so their behavior (and output bytes) stay identical.
"""

from __future__ import annotations

import hmac
import json
import os
import secrets
import threading
from pathlib import Path

from .compiler import ValidationReport, ValidationSchema, compile as compile_schema, validate
from .errors import (
    InvalidPayload,
    NotFound,
    NotValidated,
    TerminologyUnavailable,
)
from .model import (
    MetadataInstance,
    ResolvedTemplate,
    Template,
    parse_instance,
    parse_template,
    resolve_composition,
    serialize_instance,
)
from .recommender import (
    ContextPair,
    CorpusIndex,
    Suggestion,
    normalize_context_value,
    suggest,
)
from .repository import Principal, ResourceRecord, ResourceStore
from .submission import SubmissionReceipt, SubmissionTarget, submit, validate_external
from .terminology import TerminologyClient, TerminologyService

DEFAULT_PORT = 9090


def canonical_json(obj) -> str:
    """The one JSON rendering used for CLI stdout and REST bodies."""
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


class ApiKeyRegistry:
    """Token -> user principal; lookups compare every stored token in
    constant time so unknown and known tokens are indistinguishable."""

    def __init__(self, path: Path):
        self.path = path
        self._keys: list[tuple[str, str]] = []  # (token, user_id)
        if path.exists():
            for entry in json.loads(path.read_text(encoding="utf-8")):
                self._keys.append((entry["token"], entry["userId"]))

    def _save(self) -> None:
        doc = [{"token": t, "userId": u} for t, u in self._keys]
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    def add_key(self, user_id: str, token: str | None = None) -> str:
        token = token or secrets.token_hex(16)
        if len(token) < 32:
            raise ValueError("API tokens must be at least 32 characters")
        if any(stored == token for stored, _ in self._keys):
            raise ValueError("token already registered")
        self._keys.append((token, user_id))
        self._save()
        return token

    def resolve(self, token: str) -> Principal | None:
        found = None
        for stored, user_id in self._keys:
            if hmac.compare_digest(stored, token):
                found = user_id
        return Principal.user(found) if found else None

    @property
    def empty(self) -> bool:
        return not self._keys


class MetaforgeService:
    def __init__(self, data_dir: str | os.PathLike,
                 terminology_url: str | None = None,
                 terminology_api_key: str | None = None,
                 targets: list[SubmissionTarget] | None = None,
                 cache_ttl: float = 600.0):
        self.data_dir = Path(data_dir)
        self.store = ResourceStore(self.data_dir)
        client = None
        if terminology_url:
            client = TerminologyClient(terminology_url, terminology_api_key)
        self.terminology = TerminologyService(self.store, client, cache_ttl)
        self.keys = ApiKeyRegistry(self.data_dir / "apikeys.json")
        self.targets = {t.name: t for t in (targets or [])}
        self._indexes: dict[str, CorpusIndex] = {}
        self._index_lock = threading.Lock()
        self._rebuild_indexes()

    @staticmethod
    def from_env() -> "MetaforgeService":
        data_dir = os.environ.get("METAFORGE_DATA_DIR", "./data")
        targets: list[SubmissionTarget] = []
        targets_file = os.environ.get("METAFORGE_TARGETS_FILE")
        if targets_file:
            for doc in json.loads(Path(targets_file).read_text(encoding="utf-8")):
                targets.append(SubmissionTarget.from_dict(doc))
        return MetaforgeService(
            data_dir,
            terminology_url=os.environ.get("METAFORGE_TERMINOLOGY_URL"),
            terminology_api_key=os.environ.get("METAFORGE_TERMINOLOGY_APIKEY"),
            targets=targets,
        )

    def close(self) -> None:
        self.store.close()

    # -- bootstrap -------------------------------------------------------------

    def bootstrap_admin(self) -> tuple[str, str] | None:
        """First run: mint an admin user + key so the service is reachable.
        Returns (user_id, token) when a key was created."""
        if not self.keys.empty:
            return None
        from .model import new_resource_id

        user_id = new_resource_id()
        token = self.keys.add_key(user_id)
        self.store.ensure_user_home(user_id)
        return user_id, token

    def authenticate_token(self, token: str) -> Principal | None:
        principal = self.keys.resolve(token)
        if principal is not None:
            self.store.ensure_user_home(principal.id)
        return principal

    # -- template machinery ------------------------------------------------------

    def template_lookup(self, resource_id: str) -> Template | None:
        """Reference resolution peeks past ACLs: whoever can read a template
        is entitled to the parts it is composed of."""
        record = self.store.peek(resource_id)
        if record is None or record.resource_type not in ("element", "field"):
            return None
        return parse_template(json.dumps(record.payload))

    def resolved_template(self, template_id: str, actor: Principal) -> ResolvedTemplate:
        record = self.store.get_resource(template_id, actor)
        if record.resource_type != "template":
            raise NotFound(f"{template_id} is not a template")
        template = parse_template(json.dumps(record.payload))
        return resolve_composition(template, self.template_lookup)

    def compile_template(self, template_id: str, actor: Principal) -> ValidationSchema:
        return compile_schema(self.resolved_template(template_id, actor))

    # -- validation ----------------------------------------------------------------

    def membership_oracle(self, lenient: bool, warnings: list[str] | None = None):
        def check(constraints, iri: str) -> bool:
            try:
                return self.terminology.is_member(constraints, iri)
            except TerminologyUnavailable:
                if not lenient:
                    raise
                if warnings is not None:
                    warnings.append(
                        f"terminology unavailable; membership of {iri} not checked")
                return True
        return check

    def offline_oracle(self, warnings: list[str] | None = None):
        def check(_constraints, iri: str) -> bool:
            if warnings is not None:
                warnings.append(f"offline mode: membership of {iri} not checked")
            return True
        return check

    def validate_instance(self, rt: ResolvedTemplate, m: MetadataInstance,
                          lenient: bool = False) -> ValidationReport:
        return validate(rt, m, self.membership_oracle(lenient))

    # -- instance lifecycle -----------------------------------------------------------

    def _instance_of(self, record: ResourceRecord) -> MetadataInstance:
        return parse_instance(json.dumps(record.payload))

    def _resolved_for_instance(self, m: MetadataInstance) -> ResolvedTemplate | None:
        record = self.store.peek(m.template_id)
        if record is None or record.resource_type != "template":
            return None
        template = parse_template(json.dumps(record.payload))
        return resolve_composition(template, self.template_lookup)

    def save_instance(self, record: ResourceRecord, expected_version: int | None,
                      actor: Principal, force: bool = False) -> tuple[ResourceRecord, ValidationReport | None]:
        """Validates, stores, and indexes an instance.  Invalid instances are
        rejected unless forced; forced saves are never indexed."""
        m = self._instance_of(record)
        rt = self._resolved_for_instance(m)
        report = None
        if rt is None:
            if not force:
                raise InvalidPayload(
                    f"instance declares unknown template {m.template_id}")
        else:
            report = self.validate_instance(rt, m, lenient=True)
            if not report.valid and not force:
                raise NotValidated("the instance failed validation", report=report)
        stored = self.store.put_resource(record, expected_version, actor)
        self._reindex_template(m.template_id)
        return stored, report

    def delete_resource(self, resource_id: str, actor: Principal) -> None:
        record = self.store.peek(resource_id)
        self.store.delete_resource(resource_id, actor)
        if record is not None and record.resource_type == "instance":
            m = self._instance_of(record)
            self._reindex_template(m.template_id)

    # -- recommender -------------------------------------------------------------------

    def _valid_instances_of_template(self, template_id: str) -> list[MetadataInstance]:
        rt = None
        record = self.store.peek(template_id)
        if record is not None and record.resource_type == "template":
            template = parse_template(json.dumps(record.payload))
            rt = resolve_composition(template, self.template_lookup)
        out = []
        for r in self.store.records_of_type("instance"):
            try:
                m = self._instance_of(r)
            except Exception:
                continue
            if m.template_id != template_id:
                continue
            if rt is None:
                continue
            if self.validate_instance(rt, m, lenient=True).valid:
                out.append(m)
        return out

    def _reindex_template(self, template_id: str) -> None:
        from .recommender import index_corpus

        with self._index_lock:
            instances = self._valid_instances_of_template(template_id)
            self._indexes[template_id] = index_corpus(template_id, instances)

    def _rebuild_indexes(self) -> None:
        template_ids = {r.id for r in self.store.records_of_type("template")}
        for template_id in template_ids:
            self._reindex_template(template_id)

    def recommend(self, template_id: str, target_path: str,
                  context: list[tuple[str, str]], k: int, actor: Principal,
                  min_support: int = 1) -> list[Suggestion]:
        rt = self.resolved_template(template_id, actor)
        index = self._indexes.get(template_id)
        if index is None:
            return []
        pairs = [
            ContextPair(path, normalize_context_value(rt, path, value))
            for path, value in context
        ]
        return suggest(index, target_path, pairs, k, min_support)

    # -- export ------------------------------------------------------------------------

    def instance_document(self, instance_id: str, actor: Principal) -> str:
        record = self.store.get_resource(instance_id, actor)
        if record.resource_type != "instance":
            raise NotFound(f"{instance_id} is not an instance")
        return serialize_instance(self._instance_of(record))

    def instance_ntriples(self, instance_id: str, actor: Principal) -> str:
        from .compiler import export_ntriples

        record = self.store.get_resource(instance_id, actor)
        if record.resource_type != "instance":
            raise NotFound(f"{instance_id} is not an instance")
        m = self._instance_of(record)
        rt = self._resolved_for_instance(m)
        if rt is None:
            raise NotFound(f"template {m.template_id} for instance {instance_id} not found")
        return export_ntriples(rt, m)

    # -- submission ---------------------------------------------------------------------

    def submit_instance(self, instance_id: str, target_name: str, actor: Principal,
                        force: bool = False) -> SubmissionReceipt:
        target = self.targets.get(target_name)
        if target is None:
            raise NotFound(f"no submission target named {target_name!r} is configured")
        record = self.store.get_resource(instance_id, actor)
        if record.resource_type != "instance":
            raise NotFound(f"{instance_id} is not an instance")
        m = self._instance_of(record)
        rt = self._resolved_for_instance(m)
        if rt is None:
            raise NotValidated(f"template {m.template_id} is unknown; cannot validate")
        if not force:
            report = self.validate_instance(rt, m)
            if not report.valid:
                raise NotValidated(
                    f"local validation failed with {len(report.errors)} error(s); "
                    "pass force to submit anyway")
            if target.external_validator_url is not None:
                result = validate_external(target, rt, m)
                if not result.valid:
                    raise NotValidated(
                        "the external validator rejected the instance; "
                        "pass force to submit anyway")
        return submit(target, rt, m, self.store, actor, instance_id, forced=force)

    def list_receipts(self, instance_id: str, actor: Principal) -> list[ResourceRecord]:
        self.store.get_resource(instance_id, actor)  # permission gate
        return sorted(
            (r for r in self.store.records_of_type("submissionReceipt")
             if r.parent_folder == instance_id),
            key=lambda r: r.created_at,
        )
