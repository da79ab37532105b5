"""Submission pipeline: payload serialization for external targets, the
external-validator call, and the POST to the target endpoint with receipt
persistence.

Targets are named configurations; credentials are looked up from the
environment variable the target names and never stored on disk.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass

import httpx

from .errors import (
    MissingCredential,
    SubmissionRejected,
    SubmissionUnavailable,
    Unserializable,
    ValidatorMalformed,
    ValidatorUnavailable,
)
from .model import (
    FieldSpec,
    LiteralValue,
    MetadataInstance,
    ResolvedElement,
    ResolvedTemplate,
    TermValue,
    new_resource_id,
    serialize_instance,
)
from .repository import Principal, ResourceRecord, ResourceStore, now_rfc3339

MAX_RAW_RESPONSE_BYTES = 64 * 1024
TSV_MAX_DEPTH = 3
_HTTP_URL_RE = re.compile(r"^https?://\S+$")

EXTERNAL_VALIDATOR_TIMEOUT = 30.0
SUBMISSION_TIMEOUT = 30.0


@dataclass(frozen=True)
class SubmissionTarget:
    name: str
    endpoint_url: str
    format: str  # json | tsv
    api_key_env_var: str
    external_validator_url: str | None = None

    def __post_init__(self):
        if self.format not in ("json", "tsv"):
            raise ValueError(f"unknown target format {self.format!r}")
        if not _HTTP_URL_RE.match(self.endpoint_url):
            raise ValueError(f"endpoint URL must be absolute http(s): {self.endpoint_url!r}")
        if self.external_validator_url is not None \
                and not _HTTP_URL_RE.match(self.external_validator_url):
            raise ValueError("validator URL must be absolute http(s)")

    @staticmethod
    def from_dict(doc: dict) -> "SubmissionTarget":
        return SubmissionTarget(
            name=doc["name"], endpoint_url=doc["endpointUrl"], format=doc["format"],
            api_key_env_var=doc["apiKeyEnvVar"],
            external_validator_url=doc.get("externalValidatorUrl"),
        )


@dataclass(frozen=True)
class ValidationMessage:
    path: str
    message: str
    severity: str  # error | warning


@dataclass(frozen=True)
class ExternalValidationResult:
    valid: bool
    messages: tuple[ValidationMessage, ...]

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "messages": [
                {"path": m.path, "message": m.message, "severity": m.severity}
                for m in self.messages
            ],
        }


@dataclass(frozen=True)
class SubmissionReceipt:
    target_name: str
    submitted_at: str
    http_status: int
    remote_id: str | None
    raw_response: str
    forced: bool = False

    def to_dict(self) -> dict:
        return {
            "targetName": self.target_name,
            "submittedAt": self.submitted_at,
            "httpStatus": self.http_status,
            "remoteId": self.remote_id,
            "rawResponse": self.raw_response,
            "forced": self.forced,
        }


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _tsv_header_paths(children, prefix: str, out: list) -> None:
    for child in children:
        path = f"{prefix}/{child.name}" if prefix else child.name
        if isinstance(child, FieldSpec):
            out.append(path)
        elif isinstance(child, ResolvedElement):
            _tsv_header_paths(child.children, path, out)


def _tsv_cell_text(value) -> str:
    if isinstance(value, TermValue):
        text = f"{value.label} [{value.iri}]"
    else:
        text = str(value.value)
    return text.replace("\t", " ").replace("\r", " ").replace("\n", " ")


def _collect_cells(values: dict, prefix: str, depth: int, out: dict) -> None:
    if depth > TSV_MAX_DEPTH:
        raise Unserializable(
            f"tsv output is limited to {TSV_MAX_DEPTH} nesting levels", path=prefix)
    for name, value in values.items():
        path = f"{prefix}/{name}" if prefix else name
        entries = value if isinstance(value, list) else [value]
        for entry in entries:
            if isinstance(entry, dict):
                _collect_cells(entry, path, depth + 1, out)
            else:
                out.setdefault(path, []).append(_tsv_cell_text(entry))


def serialize_for_target(rt: ResolvedTemplate, m: MetadataInstance,
                         target: SubmissionTarget) -> bytes:
    if target.format == "json":
        return serialize_instance(m).encode("utf-8")
    header: list[str] = []
    _tsv_header_paths(rt.children, "", header)
    cells: dict[str, list[str]] = {}
    _collect_cells(m.values, "", 1, cells)
    row = ["|".join(cells.get(path, [])) for path in header]
    text = "\t".join(header) + "\n" + "\t".join(row) + "\n"
    return text.encode("utf-8")


# ---------------------------------------------------------------------------
# external validation
# ---------------------------------------------------------------------------

def validate_external(target: SubmissionTarget, rt: ResolvedTemplate,
                      m: MetadataInstance,
                      timeout: float = EXTERNAL_VALIDATOR_TIMEOUT) -> ExternalValidationResult:
    if target.external_validator_url is None:
        raise ValueError(f"target {target.name!r} has no external validator configured")
    payload = serialize_instance(m).encode("utf-8")
    try:
        response = httpx.post(
            target.external_validator_url, content=payload,
            headers={"Content-Type": "application/ld+json"}, timeout=timeout)
    except httpx.HTTPError as exc:
        raise ValidatorUnavailable(f"external validator unreachable: {exc}")
    if response.status_code // 100 != 2:
        raise ValidatorUnavailable(
            f"external validator answered {response.status_code}")
    try:
        body = response.json()
        valid = body["valid"]
        messages = tuple(
            ValidationMessage(m["path"], m["message"], m["severity"])
            for m in body.get("messages", [])
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidatorMalformed(f"unparseable validator response: {exc}")
    if not isinstance(valid, bool) or any(m.severity not in ("error", "warning")
                                          for m in messages):
        raise ValidatorMalformed("validator response violates the protocol")
    if valid and any(m.severity == "error" for m in messages):
        raise ValidatorMalformed("validator claimed valid but sent error messages")
    return ExternalValidationResult(valid, messages)


# ---------------------------------------------------------------------------
# submission
# ---------------------------------------------------------------------------

def _persist_receipt(store: ResourceStore, actor: Principal, instance_record_id: str,
                     receipt: SubmissionReceipt) -> None:
    store.put_resource(
        ResourceRecord(
            id=new_resource_id(), resource_type="submissionReceipt",
            parent_folder=instance_record_id, owner=actor,
            payload=receipt.to_dict(),
            name=f"submission to {receipt.target_name}",
        ),
        expected_version=None, actor=actor)


def submit(target: SubmissionTarget, rt: ResolvedTemplate, m: MetadataInstance,
           store: ResourceStore, actor: Principal, instance_record_id: str,
           forced: bool = False,
           timeout: float = SUBMISSION_TIMEOUT) -> SubmissionReceipt:
    """POST the serialized payload to the target; the receipt is persisted as
    a child record of the instance for every attempt that got an HTTP status,
    rejected ones included.

    Preconditions (enforced by the calling service): the instance passed
    local validation and, when the target names an external validator, that
    validator accepted it, unless ``forced`` is set.
    """
    api_key = os.environ.get(target.api_key_env_var)
    if not api_key:
        raise MissingCredential(
            f"environment variable {target.api_key_env_var} is not set; not submitting")
    payload = serialize_for_target(rt, m, target)
    content_type = "application/ld+json" if target.format == "json" \
        else "text/tab-separated-values"
    try:
        response = httpx.post(
            target.endpoint_url, content=payload,
            headers={"Authorization": f"apikey token={api_key}",
                     "Content-Type": content_type},
            timeout=timeout)
    except httpx.HTTPError as exc:
        raise SubmissionUnavailable(f"submission endpoint unreachable: {exc}")
    raw = response.content[:MAX_RAW_RESPONSE_BYTES].decode("utf-8", errors="replace")
    remote_id = None
    try:
        body = response.json()
        if isinstance(body, dict) and isinstance(body.get("id"), str):
            remote_id = body["id"]
    except json.JSONDecodeError:
        pass
    receipt = SubmissionReceipt(
        target_name=target.name, submitted_at=now_rfc3339(),
        http_status=response.status_code, remote_id=remote_id,
        raw_response=raw, forced=forced,
    )
    _persist_receipt(store, actor, instance_record_id, receipt)
    if response.status_code // 100 != 2:
        raise SubmissionRejected(
            f"target {target.name} answered {response.status_code}", receipt=receipt)
    return receipt
