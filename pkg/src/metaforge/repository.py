"""Folder-tree resource store with read/write ACLs, groups, optimistic
versioning, keyword search, and JSON-file persistence.

Layout on disk: ``resources/<id>.json`` and ``groups/<id>.json`` under the
data directory, plus ``wal.log``, an append-only intent log replayed on
startup so a crash between the log append and the file write cannot lose a
committed mutation.  Writes serialize through one store lock; readers see
immutable record objects swapped in whole.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from .errors import (
    CyclicMove,
    DuplicateMember,
    FolderNotEmpty,
    InvalidPayload,
    MissingParent,
    NotFound,
    OwnerImmutable,
    PermissionDenied,
    Referenced,
    VersionConflict,
)
from .model import Annotation, is_resource_id, parse_instance, parse_template

ROOT_FOLDER_ID = "00000000-0000-4000-8000-000000000000"
SYSTEM_USER_ID = "00000000-0000-4000-8000-000000000001"
_HOME_NAMESPACE = uuid.UUID("8f3a74a2-1bb0-4d2b-9f5e-6c26a1a25c4d")

RESOURCE_TYPES = (
    "template", "element", "field", "instance", "valueSet",
    "provisionalTerm", "folder", "submissionReceipt",
)
_MODEL_TYPES = {"template", "element", "field"}

PERMISSION_LEVELS = {"none": 0, "read": 1, "write": 2}


def now_rfc3339() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


@dataclass(frozen=True)
class Principal:
    kind: str  # user | group | everyone
    id: str | None = None

    def __post_init__(self):
        if self.kind not in ("user", "group", "everyone"):
            raise ValueError(f"unknown principal kind {self.kind!r}")
        if self.kind == "everyone":
            if self.id is not None:
                raise ValueError("'everyone' carries no id")
        elif not is_resource_id(self.id or ""):
            raise ValueError(f"principal id must be a resource id, got {self.id!r}")

    @staticmethod
    def user(id: str) -> "Principal":
        return Principal("user", id)

    @staticmethod
    def group(id: str) -> "Principal":
        return Principal("group", id)

    @staticmethod
    def everyone() -> "Principal":
        return Principal("everyone")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.id is not None:
            out["id"] = self.id
        return out

    @staticmethod
    def from_dict(doc: dict) -> "Principal":
        return Principal(doc["kind"], doc.get("id"))


@dataclass(frozen=True)
class AclEntry:
    principal: Principal
    level: str  # read | write

    def __post_init__(self):
        if self.level not in ("read", "write"):
            raise ValueError(f"unknown permission level {self.level!r}")

    def to_dict(self) -> dict:
        return {"principal": self.principal.to_dict(), "level": self.level}

    @staticmethod
    def from_dict(doc: dict) -> "AclEntry":
        return AclEntry(Principal.from_dict(doc["principal"]), doc["level"])


@dataclass(frozen=True)
class ResourceRecord:
    id: str
    resource_type: str
    parent_folder: str
    owner: Principal
    acl: tuple[AclEntry, ...] = ()
    payload: dict | None = None
    name: str = ""
    description: str | None = None
    annotations: tuple[Annotation, ...] = ()
    version: int = 0
    created_at: str = ""
    updated_at: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "resourceType": self.resource_type,
            "parentFolder": self.parent_folder,
            "owner": self.owner.to_dict(),
            "acl": [e.to_dict() for e in self.acl],
            "name": self.name,
            "description": self.description,
            "annotations": [
                {"propertyIri": a.property_iri, "termIri": a.term_iri, "termLabel": a.term_label}
                for a in self.annotations
            ],
            "version": self.version,
            "createdAt": self.created_at,
            "updatedAt": self.updated_at,
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ResourceRecord":
        return ResourceRecord(
            id=doc["id"],
            resource_type=doc["resourceType"],
            parent_folder=doc["parentFolder"],
            owner=Principal.from_dict(doc["owner"]),
            acl=tuple(AclEntry.from_dict(e) for e in doc.get("acl", [])),
            payload=doc.get("payload"),
            name=doc.get("name", ""),
            description=doc.get("description"),
            annotations=tuple(
                Annotation(a["propertyIri"], a["termIri"], a["termLabel"])
                for a in doc.get("annotations", [])
            ),
            version=doc["version"],
            created_at=doc.get("createdAt", ""),
            updated_at=doc.get("updatedAt", ""),
        )


@dataclass(frozen=True)
class Group:
    id: str
    name: str
    owner: str  # user id
    members: tuple[str, ...]
    created_at: str = ""
    updated_at: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id, "name": self.name, "owner": self.owner,
            "members": list(self.members),
            "createdAt": self.created_at, "updatedAt": self.updated_at,
        }

    @staticmethod
    def from_dict(doc: dict) -> "Group":
        return Group(doc["id"], doc["name"], doc["owner"], tuple(doc["members"]),
                     doc.get("createdAt", ""), doc.get("updatedAt", ""))


@dataclass(frozen=True)
class SearchQuery:
    text: str | None = None
    resource_type: str | None = None
    annotated_with: str | None = None
    folder: str | None = None

    def __post_init__(self):
        if not any((self.text, self.resource_type, self.annotated_with, self.folder)):
            raise ValueError("a search query needs at least one criterion")


def home_folder_id(user_id: str) -> str:
    return str(uuid.uuid5(_HOME_NAMESPACE, user_id))


def _validate_model_payload(resource_type: str, payload, record_id: str) -> tuple[str, str | None]:
    """Returns (name, description) extracted from the payload document."""
    if not isinstance(payload, dict):
        raise InvalidPayload(f"a {resource_type} needs a JSON document payload")
    try:
        template = parse_template(json.dumps(payload))
    except Exception as exc:
        raise InvalidPayload(f"payload is not a valid {resource_type} document: {exc}")
    if template.kind != resource_type:
        raise InvalidPayload(
            f"payload kind {template.kind!r} does not match resource type {resource_type!r}")
    if template.id != record_id:
        raise InvalidPayload(
            f"payload id {template.id} does not match record id {record_id}")
    return template.name, template.description


def _validate_instance_payload(payload) -> None:
    if not isinstance(payload, dict):
        raise InvalidPayload("an instance needs a JSON-LD document payload")
    try:
        parse_instance(json.dumps(payload))
    except Exception as exc:
        raise InvalidPayload(f"payload is not a valid instance document: {exc}")


def _payload_references(payload, target_id: str) -> bool:
    if isinstance(payload, dict):
        if payload.get("ref") == target_id or payload.get("valueSetId") == target_id:
            return True
        return any(_payload_references(v, target_id) for v in payload.values())
    if isinstance(payload, list):
        return any(_payload_references(v, target_id) for v in payload)
    return False


class ResourceStore:
    """Single-writer multi-reader store over a data directory."""

    def __init__(self, data_dir: str | os.PathLike):
        self.data_dir = Path(data_dir)
        self._resources_dir = self.data_dir / "resources"
        self._groups_dir = self.data_dir / "groups"
        self._resources_dir.mkdir(parents=True, exist_ok=True)
        self._groups_dir.mkdir(parents=True, exist_ok=True)
        self._wal_path = self.data_dir / "wal.log"
        self._lock = threading.RLock()
        self._records: dict[str, ResourceRecord] = {}
        self._groups: dict[str, Group] = {}
        self._txn = 0
        self._load()
        self._wal = open(self._wal_path, "a", encoding="utf-8")
        self._ensure_root()

    # -- persistence --------------------------------------------------------

    def _load(self) -> None:
        for path in sorted(self._resources_dir.glob("*.json")):
            record = ResourceRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))
            self._records[record.id] = record
        for path in sorted(self._groups_dir.glob("*.json")):
            group = Group.from_dict(json.loads(path.read_text(encoding="utf-8")))
            self._groups[group.id] = group
        self._replay_wal()

    def _replay_wal(self) -> None:
        if not self._wal_path.exists():
            return
        committed: set[int] = set()
        pending: dict[int, dict] = {}
        with open(self._wal_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn tail write; everything before it is intact
                if entry.get("commit"):
                    committed.add(entry["txn"])
                else:
                    pending[entry["txn"]] = entry
        for txn in sorted(pending):
            if txn in committed:
                continue
            entry = pending[txn]
            if entry["op"] == "put":
                if entry["collection"] == "resources":
                    record = ResourceRecord.from_dict(entry["doc"])
                    self._records[record.id] = record
                    self._write_file(self._resources_dir / f"{record.id}.json", entry["doc"])
                else:
                    group = Group.from_dict(entry["doc"])
                    self._groups[group.id] = group
                    self._write_file(self._groups_dir / f"{group.id}.json", entry["doc"])
            elif entry["op"] == "delete":
                target = (self._resources_dir if entry["collection"] == "resources"
                          else self._groups_dir) / f"{entry['id']}.json"
                target.unlink(missing_ok=True)
                (self._records if entry["collection"] == "resources"
                 else self._groups).pop(entry["id"], None)
        # everything is in the files now; start from an empty log
        self._wal_path.write_text("", encoding="utf-8")

    @staticmethod
    def _write_file(path: Path, doc: dict) -> None:
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    def _append_wal(self, entry: dict) -> None:
        self._wal.write(json.dumps(entry, ensure_ascii=False) + "\n")
        self._wal.flush()
        os.fsync(self._wal.fileno())

    def _commit_record(self, record: ResourceRecord) -> None:
        self._txn += 1
        doc = record.to_dict()
        self._append_wal({"txn": self._txn, "op": "put", "collection": "resources", "doc": doc})
        self._write_file(self._resources_dir / f"{record.id}.json", doc)
        self._records[record.id] = record
        self._append_wal({"txn": self._txn, "commit": True})

    def _commit_group(self, group: Group) -> None:
        self._txn += 1
        doc = group.to_dict()
        self._append_wal({"txn": self._txn, "op": "put", "collection": "groups", "doc": doc})
        self._write_file(self._groups_dir / f"{group.id}.json", doc)
        self._groups[group.id] = group
        self._append_wal({"txn": self._txn, "commit": True})

    def _commit_delete(self, record_id: str) -> None:
        self._txn += 1
        self._append_wal({"txn": self._txn, "op": "delete", "collection": "resources",
                          "id": record_id})
        (self._resources_dir / f"{record_id}.json").unlink(missing_ok=True)
        self._records.pop(record_id, None)
        self._append_wal({"txn": self._txn, "commit": True})

    def close(self) -> None:
        with self._lock:
            self._wal.flush()
            self._wal.close()

    def _ensure_root(self) -> None:
        if ROOT_FOLDER_ID in self._records:
            return
        now = now_rfc3339()
        root = ResourceRecord(
            id=ROOT_FOLDER_ID, resource_type="folder", parent_folder=ROOT_FOLDER_ID,
            owner=Principal.user(SYSTEM_USER_ID), name="root",
            version=0, created_at=now, updated_at=now,
        )
        with self._lock:
            self._commit_record(root)

    def ensure_user_home(self, user_id: str) -> ResourceRecord:
        """Every user gets a personal folder under the root; creation is
        idempotent and the folder id is stable per user."""
        hid = home_folder_id(user_id)
        with self._lock:
            existing = self._records.get(hid)
            if existing is not None:
                return existing
            now = now_rfc3339()
            home = ResourceRecord(
                id=hid, resource_type="folder", parent_folder=ROOT_FOLDER_ID,
                owner=Principal.user(user_id), name=f"home-{user_id[:8]}",
                version=0, created_at=now, updated_at=now,
            )
            self._commit_record(home)
            return home

    # -- permissions ----------------------------------------------------------

    def _group_memberships(self, user_id: str) -> set[str]:
        return {g.id for g in self._groups.values() if user_id in g.members}

    def _ancestors(self, record: ResourceRecord):
        seen = {record.id}
        current = record
        while current.parent_folder not in seen:
            parent = self._records.get(current.parent_folder)
            if parent is None:
                return
            yield parent
            seen.add(parent.id)
            current = parent

    def _entry_level(self, entries, actor: Principal, groups: set[str]) -> int:
        level = 0
        for entry in entries:
            p = entry.principal
            matches = (
                p.kind == "everyone"
                or (p.kind == actor.kind and p.id == actor.id)
                or (p.kind == "group" and actor.kind == "user" and p.id in groups)
            )
            if matches:
                level = max(level, PERMISSION_LEVELS[entry.level])
        return level

    def effective_permission(self, actor: Principal, resource_id: str) -> str:
        record = self._records.get(resource_id)
        if record is None:
            raise NotFound(f"resource {resource_id} not found")
        if actor.kind == "user" and record.owner == actor:
            return "write"
        groups = self._group_memberships(actor.id) if actor.kind == "user" else set()
        level = self._entry_level(record.acl, actor, groups)
        for ancestor in self._ancestors(record):
            level = max(level, self._entry_level(ancestor.acl, actor, groups))
        return {0: "none", 1: "read", 2: "write"}[level]

    def _require(self, actor: Principal, resource_id: str, level: str) -> ResourceRecord:
        record = self._records.get(resource_id)
        if record is None:
            raise NotFound(f"resource {resource_id} not found")
        got = self.effective_permission(actor, resource_id)
        if PERMISSION_LEVELS[got] < PERMISSION_LEVELS[level]:
            raise PermissionDenied(
                f"{level} access to {resource_id} denied for {actor.kind} {actor.id}")
        return record

    # -- resource CRUD ----------------------------------------------------------

    def _validate_payload(self, record: ResourceRecord) -> ResourceRecord:
        rtype = record.resource_type
        if rtype in _MODEL_TYPES:
            name, description = _validate_model_payload(rtype, record.payload, record.id)
            return replace(record, name=record.name or name,
                           description=record.description or description)
        if rtype == "instance":
            _validate_instance_payload(record.payload)
            return record
        if rtype in ("valueSet", "provisionalTerm"):
            from .terminology import validate_terminology_payload  # avoids an import cycle

            validate_terminology_payload(rtype, record.payload, record.id)
            return record
        if rtype == "folder":
            if record.payload is not None:
                raise InvalidPayload("folders carry no payload")
            return record
        if rtype == "submissionReceipt":
            if not isinstance(record.payload, dict):
                raise InvalidPayload("a submission receipt needs a JSON payload")
            return record
        raise InvalidPayload(f"unknown resource type {rtype!r}")

    def _check_parent(self, record: ResourceRecord, actor: Principal) -> None:
        parent = self._records.get(record.parent_folder)
        if parent is None:
            raise MissingParent(f"parent {record.parent_folder} does not exist")
        expected = "instance" if record.resource_type == "submissionReceipt" else "folder"
        if parent.resource_type != expected:
            raise MissingParent(
                f"parent {parent.id} is a {parent.resource_type}, expected {expected}")
        self._require(actor, parent.id, "write")

    def put_resource(self, record: ResourceRecord, expected_version: int | None,
                     actor: Principal) -> ResourceRecord:
        if actor.kind != "user":
            raise PermissionDenied("only users can write resources")
        if not is_resource_id(record.id):
            raise InvalidPayload(f"{record.id!r} is not a resource id")
        if record.resource_type not in RESOURCE_TYPES:
            raise InvalidPayload(f"unknown resource type {record.resource_type!r}")
        with self._lock:
            existing = self._records.get(record.id)
            now = now_rfc3339()
            if existing is None:
                record = self._validate_payload(record)
                self._check_parent(record, actor)
                stored = replace(record, owner=actor, version=0,
                                 created_at=now, updated_at=now)
                self._commit_record(stored)
                return stored
            if expected_version is None:
                raise VersionConflict(
                    f"resource {record.id} exists; updates must supply expectedVersion")
            if expected_version != existing.version:
                raise VersionConflict(
                    f"expected version {expected_version}, stored version is {existing.version}")
            if record.resource_type != existing.resource_type:
                raise InvalidPayload("the resource type of an existing record cannot change")
            self._require(actor, record.id, "write")
            record = self._validate_payload(record)
            stored = replace(
                record, owner=existing.owner, acl=existing.acl,
                parent_folder=existing.parent_folder, version=existing.version + 1,
                created_at=existing.created_at, updated_at=now,
            )
            self._commit_record(stored)
            return stored

    def get_resource(self, resource_id: str, actor: Principal) -> ResourceRecord:
        return self._require(actor, resource_id, "read")

    def delete_resource(self, resource_id: str, actor: Principal) -> None:
        with self._lock:
            record = self._require(actor, resource_id, "write")
            if resource_id == ROOT_FOLDER_ID:
                raise PermissionDenied("the root folder cannot be deleted")
            if record.resource_type == "folder":
                if any(r.parent_folder == resource_id for r in self._records.values()
                       if r.id != resource_id):
                    raise FolderNotEmpty(f"folder {resource_id} is not empty")
            for other in self._records.values():
                if other.id != resource_id and _payload_references(other.payload, resource_id):
                    raise Referenced(
                        f"resource {resource_id} is referenced by {other.id}")
            self._commit_delete(resource_id)

    def move_resource(self, resource_id: str, new_parent: str, actor: Principal) -> ResourceRecord:
        with self._lock:
            record = self._require(actor, resource_id, "write")
            if resource_id == ROOT_FOLDER_ID:
                raise PermissionDenied("the root folder cannot move")
            destination = self._records.get(new_parent)
            if destination is None or destination.resource_type != "folder":
                raise MissingParent(f"destination {new_parent} is not an existing folder")
            self._require(actor, new_parent, "write")
            if record.resource_type == "folder":
                probe = destination
                while True:
                    if probe.id == resource_id:
                        raise CyclicMove(
                            f"cannot move folder {resource_id} into its own subtree")
                    if probe.parent_folder == probe.id:
                        break
                    probe = self._records[probe.parent_folder]
            moved = replace(record, parent_folder=new_parent,
                            version=record.version + 1, updated_at=now_rfc3339())
            self._commit_record(moved)
            return moved

    def list_children(self, folder_id: str, actor: Principal) -> list[ResourceRecord]:
        folder = self._require(actor, folder_id, "read")
        if folder.resource_type != "folder":
            raise NotFound(f"{folder_id} is not a folder")
        children = [
            r for r in self._records.values()
            if r.parent_folder == folder_id and r.id != folder_id
        ]
        readable = [r for r in children
                    if self.effective_permission(actor, r.id) != "none"]
        readable.sort(key=lambda r: (r.resource_type != "folder", r.name.casefold()))
        return readable

    # -- search -------------------------------------------------------------------

    def _in_subtree(self, record: ResourceRecord, folder_id: str) -> bool:
        if record.id == folder_id:
            return True
        return any(a.id == folder_id for a in self._ancestors(record))

    def search(self, query: SearchQuery, actor: Principal) -> list[ResourceRecord]:
        tokens = [t.casefold() for t in (query.text or "").split() if t]
        scored = []
        for record in self._records.values():
            if query.resource_type and record.resource_type != query.resource_type:
                continue
            if query.annotated_with and not any(
                    a.term_iri == query.annotated_with for a in record.annotations):
                continue
            if query.folder and not self._in_subtree(record, query.folder):
                continue
            name = record.name.casefold()
            description = (record.description or "").casefold()
            if tokens:
                matched = sum(1 for t in tokens if t in name or t in description)
                if matched == 0:
                    continue
                name_hit = any(t in name for t in tokens)
            else:
                matched, name_hit = 0, True
            if self.effective_permission(actor, record.id) == "none":
                continue
            scored.append((-matched, 0 if name_hit else 1, name, record))
        scored.sort(key=lambda row: row[:3])
        return [row[3] for row in scored]

    # -- sharing ---------------------------------------------------------------------

    def set_permissions(self, resource_id: str, acl: list[AclEntry],
                        actor: Principal) -> ResourceRecord:
        with self._lock:
            record = self._require(actor, resource_id, "write")
            for entry in acl:
                if entry.principal == record.owner and entry.level != "write":
                    raise OwnerImmutable(
                        "the owner cannot be demoted below write access")
            deduped: dict[Principal, AclEntry] = {}
            for entry in acl:
                current = deduped.get(entry.principal)
                if current is None or PERMISSION_LEVELS[entry.level] > PERMISSION_LEVELS[current.level]:
                    deduped[entry.principal] = entry
            updated = replace(record, acl=tuple(deduped.values()),
                              version=record.version + 1, updated_at=now_rfc3339())
            self._commit_record(updated)
            return updated

    # -- groups -----------------------------------------------------------------------

    def create_group(self, name: str, actor: Principal) -> Group:
        if actor.kind != "user":
            raise PermissionDenied("only users can create groups")
        with self._lock:
            now = now_rfc3339()
            group = Group(id=str(uuid.uuid4()), name=name, owner=actor.id,
                          members=(actor.id,), created_at=now, updated_at=now)
            self._commit_group(group)
            return group

    def get_group(self, group_id: str) -> Group:
        group = self._groups.get(group_id)
        if group is None:
            raise NotFound(f"group {group_id} not found")
        return group

    def add_member(self, group_id: str, user_id: str, actor: Principal) -> Group:
        with self._lock:
            group = self.get_group(group_id)
            if actor.kind != "user" or actor.id != group.owner:
                raise PermissionDenied("only the group owner can change membership")
            if user_id in group.members:
                raise DuplicateMember(f"{user_id} is already a member")
            updated = replace(group, members=group.members + (user_id,),
                              updated_at=now_rfc3339())
            self._commit_group(updated)
            return updated

    def remove_member(self, group_id: str, user_id: str, actor: Principal) -> Group:
        with self._lock:
            group = self.get_group(group_id)
            if actor.kind != "user" or actor.id != group.owner:
                raise PermissionDenied("only the group owner can change membership")
            if user_id not in group.members:
                raise NotFound(f"{user_id} is not a member of {group_id}")
            updated = replace(group, members=tuple(m for m in group.members if m != user_id),
                              updated_at=now_rfc3339())
            self._commit_group(updated)
            return updated

    def update_members(self, group_id: str, add: list[str], remove: list[str],
                       actor: Principal) -> Group:
        """Applies all membership changes or none of them."""
        with self._lock:
            group = self.get_group(group_id)
            if actor.kind != "user" or actor.id != group.owner:
                raise PermissionDenied("only the group owner can change membership")
            members = list(group.members)
            for user_id in add:
                if user_id in members:
                    raise DuplicateMember(f"{user_id} is already a member")
                members.append(user_id)
            for user_id in remove:
                if user_id not in members:
                    raise NotFound(f"{user_id} is not a member of {group_id}")
                members.remove(user_id)
            updated = replace(group, members=tuple(members), updated_at=now_rfc3339())
            self._commit_group(updated)
            return updated

    # -- internal iteration (service wiring, not permission-checked) -------------------

    def records_of_type(self, resource_type: str) -> list[ResourceRecord]:
        return [r for r in self._records.values() if r.resource_type == resource_type]

    def peek(self, resource_id: str) -> ResourceRecord | None:
        return self._records.get(resource_id)
