"""Compiles resolved templates into draft-07 validation schemas, validates
instances against them (structural plus term-membership checks), and exports
instances as N-Triples.

The structural checker reports every violation with a JSON-Pointer path and
a typed code instead of failing fast.  Numeric constraints are compared on
the decimal string to keep 0.1-style binary float artifacts out of the
results; the emitted JSON Schema uses ``multipleOf`` as the closest
standard encoding of the decimal-places rule.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date
from decimal import Decimal, InvalidOperation
from typing import Callable

from .errors import NoPropertyIri
from .model import (
    FieldSpec,
    LiteralValue,
    MetadataInstance,
    RDFS_LABEL_IRI,
    RDF_TYPE_IRI,
    ResolvedElement,
    ResolvedTemplate,
    TEMPLATE_IRI_PREFIX,
    TermValue,
    TextConstraints,
    NumberConstraints,
    ValueConstraintSet,
    XSD_NS,
)

DRAFT7_URI = "http://json-schema.org/draft-07/schema#"
IRI_PATTERN = "^[A-Za-z][A-Za-z0-9+.\\-]*:\\S+$"
DATE_PATTERN = "^\\d{4}-\\d{2}-\\d{2}$"

_DATE_RE = re.compile(DATE_PATTERN)

MembershipOracle = Callable[[ValueConstraintSet, str], bool]


@dataclass(frozen=True)
class ValidationSchema:
    schema_doc: str
    context_map: dict
    term_fields: dict


@dataclass(frozen=True)
class ValidationError:
    path: str
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"path": self.path, "code": self.code, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    errors: tuple[ValidationError, ...]

    def to_dict(self) -> dict:
        return {"valid": self.valid, "errors": [e.to_dict() for e in self.errors]}


# ---------------------------------------------------------------------------
# schema compilation
# ---------------------------------------------------------------------------

def _decimal_value_pattern(decimal_places: int | None) -> str:
    if decimal_places is None:
        return "^-?\\d+(\\.\\d+)?$"
    if decimal_places == 0:
        return "^-?\\d+$"
    return f"^-?\\d+(\\.\\d{{1,{decimal_places}}})?$"


def _field_value_schema(spec: FieldSpec) -> dict:
    if spec.field_type in ("text", "paragraph"):
        value: dict = {"type": "string"}
        c = spec.constraints
        if isinstance(c, TextConstraints):
            if c.min_length is not None:
                value["minLength"] = c.min_length
            if c.max_length is not None:
                value["maxLength"] = c.max_length
            if c.pattern is not None:
                value["pattern"] = c.pattern
        return {
            "type": "object",
            "properties": {"@value": value},
            "required": ["@value"],
            "additionalProperties": False,
        }
    if spec.field_type == "number":
        number: dict = {"type": "number"}
        c = spec.constraints
        decimal_places = None
        if isinstance(c, NumberConstraints):
            if c.minimum is not None:
                number["minimum"] = c.minimum
            if c.maximum is not None:
                number["maximum"] = c.maximum
            if c.decimal_places is not None:
                decimal_places = c.decimal_places
                number["multipleOf"] = float(Decimal(1).scaleb(-decimal_places))
        return {
            "type": "object",
            "properties": {
                "@value": {
                    "anyOf": [
                        number,
                        {"type": "string", "pattern": _decimal_value_pattern(decimal_places)},
                    ]
                },
                "@type": {"const": "xsd:decimal"},
            },
            "required": ["@value"],
            "additionalProperties": False,
        }
    if spec.field_type == "date":
        return {
            "type": "object",
            "properties": {
                "@value": {"type": "string", "format": "date", "pattern": DATE_PATTERN},
                "@type": {"const": "xsd:date"},
            },
            "required": ["@value", "@type"],
            "additionalProperties": False,
        }
    # term: only the object shape is schema-checkable; membership is the
    # oracle's job.
    return {
        "type": "object",
        "properties": {
            "@id": {"type": "string", "pattern": IRI_PATTERN},
            "rdfs:label": {"type": "string"},
        },
        "required": ["@id", "rdfs:label"],
        "additionalProperties": False,
    }


def _wrap_cardinality(value_schema: dict, child) -> dict:
    card = child.cardinality
    if not card.multi:
        return value_schema
    out: dict = {"type": "array", "items": value_schema, "minItems": card.min}
    if card.max is not None:
        out["maxItems"] = card.max
    return out


def _child_schema(child) -> dict:
    if isinstance(child, FieldSpec):
        return _wrap_cardinality(_field_value_schema(child), child)
    return _wrap_cardinality(_element_schema(child), child)


def _element_schema(element: ResolvedElement) -> dict:
    properties = {c.name: _child_schema(c) for c in element.children}
    required = [c.name for c in element.children if c.cardinality.min >= 1]
    out: dict = {"type": "object", "properties": properties}
    if required:
        out["required"] = required
    out["additionalProperties"] = False
    return out


def _walk_term_fields(children, prefix: str, out: dict) -> None:
    for child in children:
        path = f"{prefix}/{child.name}" if prefix else child.name
        if isinstance(child, FieldSpec):
            if child.field_type == "term":
                out[path] = child.constraints
        else:
            _walk_term_fields(child.children, path, out)


def _walk_context(children, out: dict) -> None:
    for child in children:
        if child.property_iri is not None and child.name not in out:
            out[child.name] = child.property_iri
        if isinstance(child, ResolvedElement):
            _walk_context(child.children, out)


def compile(rt: ResolvedTemplate) -> ValidationSchema:
    """Deterministic draft-07 schema plus the JSON-LD context and the
    term-field constraint table for the membership checks."""
    properties: dict = {
        "@context": {"type": "object"},
        "@id": {"type": "string", "pattern": IRI_PATTERN},
        "@type": {"const": TEMPLATE_IRI_PREFIX + rt.id},
    }
    required = ["@context", "@id", "@type"]
    for child in rt.children:
        properties[child.name] = _child_schema(child)
        if child.cardinality.min >= 1:
            required.append(child.name)
    schema = {
        "$schema": DRAFT7_URI,
        "title": rt.name,
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": False,
    }
    context_map: dict = {}
    _walk_context(rt.children, context_map)
    term_fields: dict = {}
    _walk_term_fields(rt.children, "", term_fields)
    return ValidationSchema(
        schema_doc=json.dumps(schema, indent=2, ensure_ascii=False) + "\n",
        context_map=context_map,
        term_fields=term_fields,
    )


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _error(errors: list, path: str, code: str, message: str) -> None:
    errors.append(ValidationError(path, code, message))


def _as_decimal(value) -> Decimal | None:
    try:
        d = Decimal(str(value))
    except InvalidOperation:
        return None
    return d if d.is_finite() else None


def _decimal_places_of(d: Decimal) -> int:
    return max(0, -d.normalize().as_tuple().exponent)


def _check_text(spec: FieldSpec, value: LiteralValue, path: str, errors: list) -> None:
    if value.datatype != "string":
        _error(errors, path, "TYPE_MISMATCH",
               f"field {spec.name!r} expects text, got {value.datatype}")
        return
    text = str(value.value)
    c = spec.constraints
    if not isinstance(c, TextConstraints):
        return
    if c.min_length is not None and len(text) < c.min_length:
        _error(errors, path, "OUT_OF_RANGE",
               f"length {len(text)} is below minLength {c.min_length}")
    if c.max_length is not None and len(text) > c.max_length:
        _error(errors, path, "OUT_OF_RANGE",
               f"length {len(text)} exceeds maxLength {c.max_length}")
    if c.pattern is not None and re.search(c.pattern, text) is None:
        _error(errors, path, "PATTERN_MISMATCH",
               f"value does not match pattern {c.pattern!r}")


def _check_number(spec: FieldSpec, value: LiteralValue, path: str, errors: list) -> None:
    if value.datatype != "number":
        _error(errors, path, "TYPE_MISMATCH",
               f"field {spec.name!r} expects a number, got {value.datatype}")
        return
    d = _as_decimal(value.value)
    if d is None:
        _error(errors, path, "TYPE_MISMATCH",
               f"value {value.value!r} is not a decimal number")
        return
    c = spec.constraints
    if not isinstance(c, NumberConstraints):
        return
    if c.minimum is not None and d < Decimal(str(c.minimum)):
        _error(errors, path, "OUT_OF_RANGE", f"{d} is below minimum {c.minimum}")
    if c.maximum is not None and d > Decimal(str(c.maximum)):
        _error(errors, path, "OUT_OF_RANGE", f"{d} exceeds maximum {c.maximum}")
    if c.decimal_places is not None and _decimal_places_of(d) > c.decimal_places:
        _error(errors, path, "OUT_OF_RANGE",
               f"{d} has more than {c.decimal_places} decimal places")


def _check_date(spec: FieldSpec, value: LiteralValue, path: str, errors: list) -> None:
    if value.datatype != "date":
        _error(errors, path, "TYPE_MISMATCH",
               f"field {spec.name!r} expects an xsd:date value, got {value.datatype}")
        return
    text = str(value.value)
    if _DATE_RE.match(text) is None:
        _error(errors, path, "PATTERN_MISMATCH", f"{text!r} is not YYYY-MM-DD")
        return
    try:
        date.fromisoformat(text)
    except ValueError:
        _error(errors, path, "OUT_OF_RANGE", f"{text!r} is not a calendar date")


def _check_leaf(spec: FieldSpec, value, path: str, errors: list,
                membership: MembershipOracle) -> None:
    if isinstance(value, dict):
        _error(errors, path, "TYPE_MISMATCH",
               f"field {spec.name!r} expects a value, got a nested element")
        return
    if isinstance(value, TermValue):
        if spec.field_type != "term":
            _error(errors, path, "TYPE_MISMATCH",
                   f"field {spec.name!r} expects {spec.field_type}, got an ontology term")
            return
        if not membership(spec.constraints, value.iri):
            _error(errors, path, "TERM_NOT_IN_CONSTRAINT",
                   f"term {value.iri} is not in the field's value constraints")
        return
    if spec.field_type == "term":
        _error(errors, path, "TYPE_MISMATCH",
               f"an ontology term is expected where a {value.datatype} literal was given")
        return
    if spec.field_type in ("text", "paragraph"):
        _check_text(spec, value, path, errors)
    elif spec.field_type == "number":
        _check_number(spec, value, path, errors)
    else:
        _check_date(spec, value, path, errors)


def _check_value(child, value, path: str, errors: list, membership: MembershipOracle) -> None:
    if isinstance(child, ResolvedElement):
        if not isinstance(value, dict):
            _error(errors, path, "TYPE_MISMATCH",
                   f"element {child.name!r} expects a nested object")
            return
        _validate_level(child.children, value, path, errors, membership)
    else:
        _check_leaf(child, value, path, errors, membership)


def _validate_level(children, values: dict, prefix: str, errors: list,
                    membership: MembershipOracle) -> None:
    by_name = {c.name: c for c in children}
    for child in children:
        if child.cardinality.min >= 1 and child.name not in values:
            _error(errors, prefix, "MISSING_REQUIRED",
                   f"required entry {child.name!r} is missing")
    for name, value in values.items():
        path = f"{prefix}/{name}"
        child = by_name.get(name)
        if child is None:
            _error(errors, path, "UNKNOWN_FIELD",
                   f"{name!r} is not defined by the template")
            continue
        card = child.cardinality
        if isinstance(value, list):
            if not card.multi:
                _error(errors, path, "CARDINALITY",
                       f"{name!r} is single-valued but {len(value)} values were given")
            else:
                if len(value) < card.min:
                    _error(errors, path, "CARDINALITY",
                           f"{name!r} needs at least {card.min} values, got {len(value)}")
                if card.max is not None and len(value) > card.max:
                    _error(errors, path, "CARDINALITY",
                           f"{name!r} allows at most {card.max} values, got {len(value)}")
            for i, entry in enumerate(value):
                _check_value(child, entry, f"{path}/{i}", errors, membership)
        else:
            if card.multi:
                _error(errors, path, "CARDINALITY",
                       f"{name!r} is multi-valued and expects an array")
            _check_value(child, value, path, errors, membership)


def validate(rt: ResolvedTemplate, m: MetadataInstance,
             membership: MembershipOracle) -> ValidationReport:
    """Full structural + term-membership report; collects every violation."""
    errors: list[ValidationError] = []
    if m.template_id != rt.id:
        _error(errors, "", "TYPE_MISMATCH",
               f"instance declares template {m.template_id}, expected {rt.id}")
    _validate_level(rt.children, m.values, "", errors, membership)
    return ValidationReport(valid=not errors, errors=tuple(errors))


# ---------------------------------------------------------------------------
# N-Triples export
# ---------------------------------------------------------------------------

_LITERAL_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def _escape_literal(text: str) -> str:
    return "".join(_LITERAL_ESCAPES.get(ch, ch) for ch in text)


def _escape_iri(iri: str) -> str:
    out = []
    for ch in iri:
        code = ord(ch)
        if code <= 0x20 or ch in '<>"{}|^`\\':
            out.append(f"\\u{code:04X}")
        else:
            out.append(ch)
    return "".join(out)


def _iri_ref(iri: str) -> str:
    return f"<{_escape_iri(iri)}>"


def _typed_literal(lexical: str, xsd_type: str) -> str:
    return f'"{_escape_literal(lexical)}"^^{_iri_ref(XSD_NS + xsd_type)}'


_XSD_FOR_DATATYPE = {"string": "string", "number": "decimal", "date": "date"}


class _BlankNodes:
    def __init__(self):
        self.counter = 0

    def next(self) -> str:
        self.counter += 1
        return f"_:e{self.counter}"


def _has_leaves(value) -> bool:
    if isinstance(value, list):
        return any(_has_leaves(v) for v in value)
    if isinstance(value, dict):
        return any(_has_leaves(v) for v in value.values())
    return True


def _emit_level(children, values: dict, subject: str, prefix: str,
                lines: list, nodes: _BlankNodes) -> None:
    by_name = {c.name: c for c in children}
    for name, value in values.items():
        path = f"{prefix}/{name}" if prefix else name
        child = by_name.get(name)
        entries = value if isinstance(value, list) else [value]
        for entry in entries:
            if isinstance(entry, dict):
                if not _has_leaves(entry):
                    continue
                if child is None or child.property_iri is None:
                    raise NoPropertyIri(
                        f"element {path!r} has no propertyIri; cannot emit a predicate",
                        path=path)
                node = nodes.next()
                lines.append(f"{subject} {_iri_ref(child.property_iri)} {node} .")
                _emit_level(getattr(child, "children", ()), entry, node, path, lines, nodes)
                continue
            if child is None or child.property_iri is None:
                raise NoPropertyIri(
                    f"field {path!r} has no propertyIri; cannot emit a predicate",
                    path=path)
            predicate = _iri_ref(child.property_iri)
            if isinstance(entry, TermValue):
                lines.append(f"{subject} {predicate} {_iri_ref(entry.iri)} .")
                lines.append(
                    f'{_iri_ref(entry.iri)} {_iri_ref(RDFS_LABEL_IRI)} '
                    f'"{_escape_literal(entry.label)}" .')
            else:
                xsd_type = _XSD_FOR_DATATYPE[entry.datatype]
                lines.append(
                    f"{subject} {predicate} {_typed_literal(str(entry.value), xsd_type)} .")


def export_ntriples(rt: ResolvedTemplate, m: MetadataInstance) -> str:
    """Deterministic, lexicographically sorted N-Triples rendering.

    Blank node labels are assigned in depth-first document order before the
    final sort so equal inputs always produce identical bytes.
    """
    subject = _iri_ref(m.instance_id)
    lines = [f"{subject} {_iri_ref(RDF_TYPE_IRI)} "
             f"{_iri_ref(TEMPLATE_IRI_PREFIX + m.template_id)} ."]
    _emit_level(rt.children, m.values, subject, "", lines, _BlankNodes())
    lines.sort()
    return "\n".join(lines) + "\n"
