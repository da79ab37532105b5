"""Error hierarchy shared by all metaforge modules.

Every error carries a stable machine-readable ``code`` (used verbatim in
REST error bodies and CLI stderr output) plus an optional document path.
"""

from __future__ import annotations


class MetaforgeError(Exception):
    """Base class; ``code`` is the wire-format error identifier."""

    code = "ERROR"

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.message = message
        self.path = path

    def to_dict(self) -> dict:
        body: dict = {"error": self.code, "message": self.message}
        if self.path is not None:
            body["path"] = self.path
        return body


# -- core model ------------------------------------------------------------

class MalformedJson(MetaforgeError):
    code = "MALFORMED_JSON"


class ModelViolation(MetaforgeError):
    code = "MODEL_VIOLATION"


class UnresolvedReference(MetaforgeError):
    code = "UNRESOLVED_REFERENCE"


class CycleDetected(MetaforgeError):
    code = "CYCLE_DETECTED"

    def __init__(self, message: str, cycle: list[str]):
        super().__init__(message)
        self.cycle = cycle

    def to_dict(self) -> dict:
        body = super().to_dict()
        body["cycle"] = self.cycle
        return body


class NoPropertyIri(MetaforgeError):
    code = "NO_PROPERTY_IRI"


# -- terminology -----------------------------------------------------------

class EmptyQuery(MetaforgeError):
    code = "EMPTY_QUERY"


class TerminologyUnavailable(MetaforgeError):
    code = "TERMINOLOGY_UNAVAILABLE"


class UnknownTerm(MetaforgeError):
    code = "UNKNOWN_TERM"


class BranchTooLarge(MetaforgeError):
    code = "BRANCH_TOO_LARGE"


class DuplicateLabel(MetaforgeError):
    code = "DUPLICATE_LABEL"


class DuplicateMember(MetaforgeError):
    code = "DUPLICATE_MEMBER"


# -- recommender -----------------------------------------------------------

class TemplateMismatch(MetaforgeError):
    code = "TEMPLATE_MISMATCH"


# -- repository ------------------------------------------------------------

class NotFound(MetaforgeError):
    code = "NOT_FOUND"


class PermissionDenied(MetaforgeError):
    code = "PERMISSION_DENIED"


class VersionConflict(MetaforgeError):
    code = "VERSION_CONFLICT"


class InvalidPayload(MetaforgeError):
    code = "INVALID_PAYLOAD"


class MissingParent(MetaforgeError):
    code = "MISSING_PARENT"


class CyclicMove(MetaforgeError):
    code = "CYCLIC_MOVE"


class OwnerImmutable(MetaforgeError):
    code = "OWNER_IMMUTABLE"


class Referenced(MetaforgeError):
    code = "REFERENCED"


class FolderNotEmpty(MetaforgeError):
    code = "FOLDER_NOT_EMPTY"


# -- submission ------------------------------------------------------------

class Unserializable(MetaforgeError):
    code = "UNSERIALIZABLE"


class ValidatorUnavailable(MetaforgeError):
    code = "VALIDATOR_UNAVAILABLE"


class ValidatorMalformed(MetaforgeError):
    code = "VALIDATOR_MALFORMED"


class SubmissionUnavailable(MetaforgeError):
    code = "SUBMISSION_UNAVAILABLE"


class SubmissionRejected(MetaforgeError):
    code = "SUBMISSION_REJECTED"

    def __init__(self, message: str, receipt=None):
        super().__init__(message)
        self.receipt = receipt


class MissingCredential(MetaforgeError):
    code = "MISSING_CREDENTIAL"


class NotValidated(MetaforgeError):
    code = "NOT_VALIDATED"

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report

    def to_dict(self) -> dict:
        body = super().to_dict()
        if self.report is not None:
            body["report"] = self.report.to_dict()
        return body
