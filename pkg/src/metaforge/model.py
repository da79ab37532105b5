"""Template / instance data model, canonical JSON (de)serialization,
composition resolution, and instance flattening.

Documents follow a fixed profile:

* Template files carry keys in the order ``id, kind, name, description,
  propertyIri, annotations, children, version`` (``field`` replaces
  ``children`` for single-field resources).  Child entries are field
  specs (discriminated by ``fieldType``), embedded elements
  (discriminated by ``kind``) or references (``{"ref": ..., "cardinality": ...}``).
* Instance files are JSON-LD: ``@context`` maps field names to property
  IRIs (plus the pinned ``rdfs`` prefix), ``@type`` names the template as
  ``urn:metaforge:template:<id>``, literals are ``{"@value": ...}`` objects
  with optional ``xsd:decimal`` / ``xsd:date`` markers, and term values are
  ``{"@id": ..., "rdfs:label": ...}`` objects.

All values are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field as dc_field, replace
from decimal import Decimal, InvalidOperation
from typing import Callable, Union

from .errors import CycleDetected, MalformedJson, ModelViolation, UnresolvedReference

RESOURCE_ID_RE = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")
IRI_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:\S+$")

RDFS_NS = "http://www.w3.org/2000/01/rdf-schema#"
RDFS_LABEL_IRI = RDFS_NS + "label"
RDF_TYPE_IRI = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
XSD_NS = "http://www.w3.org/2001/XMLSchema#"
TEMPLATE_IRI_PREFIX = "urn:metaforge:template:"

FIELD_TYPES = ("text", "paragraph", "number", "date", "term")
RESOURCE_KINDS = ("template", "element", "field")

_LABEL_KEY = "rdfs:label"
_TYPE_MARKERS = {"xsd:decimal": "number", "xsd:date": "date"}


def new_resource_id() -> str:
    return str(uuid.uuid4())


def is_resource_id(value) -> bool:
    return isinstance(value, str) and bool(RESOURCE_ID_RE.match(value))


def is_iri(value) -> bool:
    """Absolute IRI check: a scheme followed by ':' and a non-empty tail."""
    return isinstance(value, str) and bool(IRI_RE.match(value))


def canonical_decimal(text: str) -> str:
    """Shortest plain-decimal rendering; raises InvalidOperation on non-numbers."""
    d = Decimal(text)
    if not d.is_finite():
        raise InvalidOperation(f"not a finite decimal: {text!r}")
    d = d.normalize()
    if d == 0:
        d = Decimal(0)
    return format(d, "f")


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Annotation:
    property_iri: str
    term_iri: str
    term_label: str


@dataclass(frozen=True)
class Cardinality:
    min: int = 0
    max: int | None = 1  # None means unbounded

    @property
    def multi(self) -> bool:
        return self.max is None or self.max > 1

    @staticmethod
    def single_required() -> "Cardinality":
        return Cardinality(1, 1)

    @staticmethod
    def single_optional() -> "Cardinality":
        return Cardinality(0, 1)


@dataclass(frozen=True)
class OntologyBranch:
    source: str
    root_iri: str
    include_root: bool = False


@dataclass(frozen=True)
class ValueSetRef:
    value_set_id: str


@dataclass(frozen=True)
class LiteralEntry:
    label: str
    iri: str | None = None


@dataclass(frozen=True)
class LiteralList:
    entries: tuple[LiteralEntry, ...]


ConstraintSource = Union[OntologyBranch, ValueSetRef, LiteralList]


@dataclass(frozen=True)
class ValueConstraintSet:
    sources: tuple[ConstraintSource, ...]


@dataclass(frozen=True)
class TextConstraints:
    min_length: int | None = None
    max_length: int | None = None
    pattern: str | None = None

    def is_empty(self) -> bool:
        return self.min_length is None and self.max_length is None and self.pattern is None


@dataclass(frozen=True)
class NumberConstraints:
    minimum: int | float | str | None = None
    maximum: int | float | str | None = None
    decimal_places: int | None = None

    def is_empty(self) -> bool:
        return self.minimum is None and self.maximum is None and self.decimal_places is None


FieldConstraints = Union[TextConstraints, NumberConstraints, ValueConstraintSet, None]


@dataclass(frozen=True)
class FieldSpec:
    name: str
    field_type: str
    required: bool = False
    cardinality: Cardinality = Cardinality(0, 1)
    property_iri: str | None = None
    constraints: FieldConstraints = None
    description: str | None = None
    annotations: tuple[Annotation, ...] = ()


@dataclass(frozen=True)
class Reference:
    ref_id: str
    cardinality: Cardinality | None = None  # None = referenced resource's default


@dataclass(frozen=True)
class Template:
    id: str
    kind: str
    name: str
    description: str | None = None
    property_iri: str | None = None  # predicate used when an element is nested
    annotations: tuple[Annotation, ...] = ()
    children: tuple["TemplateChild", ...] = ()
    field: FieldSpec | None = None  # payload for kind="field"
    version: int = 0


TemplateChild = Union[FieldSpec, Template, Reference]


@dataclass(frozen=True)
class ResolvedElement:
    """An element inlined into a resolved tree, with the effective cardinality."""

    name: str
    property_iri: str | None
    cardinality: Cardinality
    description: str | None = None
    annotations: tuple[Annotation, ...] = ()
    children: tuple["ResolvedChild", ...] = ()


ResolvedChild = Union[FieldSpec, ResolvedElement]


@dataclass(frozen=True)
class ResolvedTemplate:
    id: str
    name: str
    description: str | None = None
    annotations: tuple[Annotation, ...] = ()
    children: tuple[ResolvedChild, ...] = ()

    @property
    def template_iri(self) -> str:
        return TEMPLATE_IRI_PREFIX + self.id


@dataclass(frozen=True)
class LiteralValue:
    value: str | int | float
    datatype: str = "string"  # string | number | date


@dataclass(frozen=True)
class TermValue:
    iri: str
    label: str = ""


# Instance value trees: leaf values, ordered lists, or nested element dicts.
InstanceValue = Union[LiteralValue, TermValue, list, dict]


@dataclass(frozen=True, eq=False)
class MetadataInstance:
    context_map: dict
    instance_id: str
    template_id: str
    values: dict

    def __eq__(self, other):
        if not isinstance(other, MetadataInstance):
            return NotImplemented
        return (
            self.context_map == other.context_map
            and self.instance_id == other.instance_id
            and self.template_id == other.template_id
            and self.values == other.values
        )


@dataclass(frozen=True)
class FlatPair:
    path: str
    value_key: str
    display: str


# ---------------------------------------------------------------------------
# template parsing
# ---------------------------------------------------------------------------

def _err(message: str, path: str) -> ModelViolation:
    return ModelViolation(message, path=path)


def _require_str(obj: dict, key: str, path: str, optional: bool = False) -> str | None:
    if key not in obj:
        if optional:
            return None
        raise _err(f"missing required key {key!r}", path)
    value = obj[key]
    if not isinstance(value, str):
        raise _err(f"{key!r} must be a string", f"{path}/{key}")
    return value


def _check_name(name, path: str) -> str:
    if not isinstance(name, str) or not name:
        raise _err("name must be a non-empty string", path)
    if "/" in name or name.startswith("@"):
        raise _err(f"illegal name {name!r}: '/' and a leading '@' are reserved", path)
    return name


def _parse_annotations(obj: dict, path: str) -> tuple[Annotation, ...]:
    raw = obj.get("annotations", [])
    if not isinstance(raw, list):
        raise _err("annotations must be a list", f"{path}/annotations")
    out = []
    for i, entry in enumerate(raw):
        epath = f"{path}/annotations/{i}"
        if not isinstance(entry, dict):
            raise _err("annotation must be an object", epath)
        prop = _require_str(entry, "propertyIri", epath)
        term = _require_str(entry, "termIri", epath)
        label = _require_str(entry, "termLabel", epath)
        if not is_iri(prop):
            raise _err(f"propertyIri is not an absolute IRI: {prop!r}", f"{epath}/propertyIri")
        if not is_iri(term):
            raise _err(f"termIri is not an absolute IRI: {term!r}", f"{epath}/termIri")
        out.append(Annotation(prop, term, label))
    return tuple(out)


def _parse_cardinality(raw, path: str) -> Cardinality:
    if not isinstance(raw, dict):
        raise _err("cardinality must be an object", path)
    extra = set(raw) - {"min", "max"}
    if extra:
        raise _err(f"unexpected cardinality keys: {sorted(extra)}", path)
    mn = raw.get("min", 0)
    mx = raw.get("max", 1)
    if not isinstance(mn, int) or isinstance(mn, bool) or mn < 0:
        raise _err("cardinality.min must be a non-negative integer", f"{path}/min")
    if mx is not None and (not isinstance(mx, int) or isinstance(mx, bool) or mx < 1):
        raise _err("cardinality.max must be a positive integer or null", f"{path}/max")
    if mx is not None and mn > mx:
        raise _err("cardinality.min must not exceed max", path)
    return Cardinality(mn, mx)


def _parse_bound(raw, key: str, path: str):
    if not isinstance(raw, (int, float)) or isinstance(raw, bool):
        raise _err(f"{key} must be a number", f"{path}/{key}")
    return raw


_ALLOWED_CONSTRAINT_KEYS = {
    "text": {"minLength", "maxLength", "pattern"},
    "paragraph": {"minLength", "maxLength"},
    "number": {"minimum", "maximum", "decimalPlaces"},
    "date": set(),
    "term": {"sources"},
}


def _parse_constraint_source(raw, path: str) -> ConstraintSource:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise _err("constraint source must be an object with a 'kind'", path)
    kind = raw["kind"]
    if kind == "ontologyBranch":
        extra = set(raw) - {"kind", "source", "rootIri", "includeRoot"}
        if extra:
            raise _err(f"unexpected keys in ontologyBranch source: {sorted(extra)}", path)
        source = _require_str(raw, "source", path)
        root = _require_str(raw, "rootIri", path)
        if not is_iri(root):
            raise _err(f"rootIri is not an absolute IRI: {root!r}", f"{path}/rootIri")
        include = raw.get("includeRoot", False)
        if not isinstance(include, bool):
            raise _err("includeRoot must be a boolean", f"{path}/includeRoot")
        return OntologyBranch(source, root, include)
    if kind == "valueSet":
        extra = set(raw) - {"kind", "valueSetId"}
        if extra:
            raise _err(f"unexpected keys in valueSet source: {sorted(extra)}", path)
        vsid = _require_str(raw, "valueSetId", path)
        if not is_resource_id(vsid):
            raise _err(f"valueSetId is not a resource id: {vsid!r}", f"{path}/valueSetId")
        return ValueSetRef(vsid)
    if kind == "literalList":
        extra = set(raw) - {"kind", "entries"}
        if extra:
            raise _err(f"unexpected keys in literalList source: {sorted(extra)}", path)
        raw_entries = raw.get("entries")
        if not isinstance(raw_entries, list):
            raise _err("literalList.entries must be a list", f"{path}/entries")
        entries = []
        seen = set()
        for i, e in enumerate(raw_entries):
            epath = f"{path}/entries/{i}"
            if not isinstance(e, dict):
                raise _err("literalList entry must be an object", epath)
            if set(e) - {"label", "iri"}:
                raise _err("literalList entry allows only 'label' and 'iri'", epath)
            label = _require_str(e, "label", epath)
            if label in seen:
                raise _err(f"duplicate literalList label {label!r}", epath)
            seen.add(label)
            iri = _require_str(e, "iri", epath, optional=True)
            if iri is not None and not is_iri(iri):
                raise _err(f"iri is not an absolute IRI: {iri!r}", f"{epath}/iri")
            entries.append(LiteralEntry(label, iri))
        return LiteralList(tuple(entries))
    raise _err(f"unknown constraint source kind {kind!r}", path)


def _parse_constraints(field_type: str, raw, path: str) -> FieldConstraints:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise _err("constraints must be an object", path)
    allowed = _ALLOWED_CONSTRAINT_KEYS[field_type]
    illegal = set(raw) - allowed
    if illegal:
        raise _err(
            f"constraint keys {sorted(illegal)} are illegal for fieldType {field_type!r}", path
        )
    if field_type in ("text", "paragraph"):
        mn = raw.get("minLength")
        mx = raw.get("maxLength")
        for key, v in (("minLength", mn), ("maxLength", mx)):
            if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 0):
                raise _err(f"{key} must be a non-negative integer", f"{path}/{key}")
        if mn is not None and mx is not None and mn > mx:
            raise _err("minLength must not exceed maxLength", path)
        pattern = raw.get("pattern")
        if pattern is not None:
            if not isinstance(pattern, str):
                raise _err("pattern must be a string", f"{path}/pattern")
            if not (pattern.startswith("^") and pattern.endswith("$")):
                raise _err("pattern must be anchored (^...$)", f"{path}/pattern")
            try:
                re.compile(pattern)
            except re.error as exc:
                raise _err(f"invalid pattern: {exc}", f"{path}/pattern")
        c = TextConstraints(mn, mx, pattern)
        return None if c.is_empty() else c
    if field_type == "number":
        mn = raw.get("minimum")
        mx = raw.get("maximum")
        if mn is not None:
            mn = _parse_bound(mn, "minimum", path)
        if mx is not None:
            mx = _parse_bound(mx, "maximum", path)
        if mn is not None and mx is not None and mn > mx:
            raise _err("minimum must not exceed maximum", path)
        dp = raw.get("decimalPlaces")
        if dp is not None and (not isinstance(dp, int) or isinstance(dp, bool) or dp < 0):
            raise _err("decimalPlaces must be a non-negative integer", f"{path}/decimalPlaces")
        c = NumberConstraints(mn, mx, dp)
        return None if c.is_empty() else c
    if field_type == "date":
        return None
    # term
    raw_sources = raw.get("sources")
    if not isinstance(raw_sources, list) or not raw_sources:
        raise _err("a term field needs at least one constraint source", f"{path}/sources")
    sources = tuple(
        _parse_constraint_source(s, f"{path}/sources/{i}") for i, s in enumerate(raw_sources)
    )
    return ValueConstraintSet(sources)


_FIELD_KEYS = {
    "name", "fieldType", "required", "cardinality", "propertyIri",
    "constraints", "description", "annotations",
}


def _parse_field_spec(obj: dict, path: str) -> FieldSpec:
    extra = set(obj) - _FIELD_KEYS
    if extra:
        raise _err(f"unexpected field keys: {sorted(extra)}", path)
    name = _check_name(obj.get("name"), f"{path}/name")
    field_type = obj.get("fieldType")
    if field_type not in FIELD_TYPES:
        raise _err(f"fieldType must be one of {FIELD_TYPES}", f"{path}/fieldType")
    required = obj.get("required", False)
    if not isinstance(required, bool):
        raise _err("required must be a boolean", f"{path}/required")
    if "cardinality" in obj:
        cardinality = _parse_cardinality(obj["cardinality"], f"{path}/cardinality")
    else:
        cardinality = Cardinality.single_required() if required else Cardinality.single_optional()
    prop = _require_str(obj, "propertyIri", path, optional=True)
    if prop is not None and not is_iri(prop):
        raise _err(f"propertyIri is not an absolute IRI: {prop!r}", f"{path}/propertyIri")
    constraints = _parse_constraints(field_type, obj.get("constraints"), f"{path}/constraints")
    if field_type == "term" and constraints is None:
        raise _err("a term field needs at least one constraint source", f"{path}/constraints")
    description = _require_str(obj, "description", path, optional=True)
    annotations = _parse_annotations(obj, path)
    return FieldSpec(name, field_type, required, cardinality, prop, constraints,
                     description, annotations)


_TEMPLATE_KEYS = {
    "id", "kind", "name", "description", "propertyIri", "annotations",
    "children", "field", "version",
}


def _check_sibling_names(names: list[tuple[str, str]]) -> None:
    """names: (name, path-of-name) pairs; duplicates are model violations."""
    seen: dict[str, str] = {}
    for name, path in names:
        if name in seen:
            raise _err(f"duplicate sibling name {name!r}", path)
        seen[name] = path


def _parse_reference(obj: dict, path: str) -> Reference:
    extra = set(obj) - {"ref", "cardinality"}
    if extra:
        raise _err(f"unexpected reference keys: {sorted(extra)}", path)
    ref_id = _require_str(obj, "ref", path)
    if not is_resource_id(ref_id):
        raise _err(f"ref is not a resource id: {ref_id!r}", f"{path}/ref")
    cardinality = None
    if "cardinality" in obj:
        cardinality = _parse_cardinality(obj["cardinality"], f"{path}/cardinality")
    return Reference(ref_id, cardinality)


def _parse_template_obj(obj, path: str, embedded: bool) -> Template:
    if not isinstance(obj, dict):
        raise _err("template must be a JSON object", path)
    extra = set(obj) - _TEMPLATE_KEYS
    if extra:
        raise _err(f"unexpected template keys: {sorted(extra)}", path)
    tid = _require_str(obj, "id", path)
    if not is_resource_id(tid):
        raise _err(f"id is not a resource id: {tid!r}", f"{path}/id")
    kind = obj.get("kind")
    if kind not in RESOURCE_KINDS:
        raise _err(f"kind must be one of {RESOURCE_KINDS}", f"{path}/kind")
    if embedded and kind != "element":
        raise _err("embedded template children must have kind 'element'", f"{path}/kind")
    name = _check_name(obj.get("name"), f"{path}/name")
    description = _require_str(obj, "description", path, optional=True)
    prop = _require_str(obj, "propertyIri", path, optional=True)
    if prop is not None and not is_iri(prop):
        raise _err(f"propertyIri is not an absolute IRI: {prop!r}", f"{path}/propertyIri")
    annotations = _parse_annotations(obj, path)
    version = obj.get("version", 0)
    if not isinstance(version, int) or isinstance(version, bool) or version < 0:
        raise _err("version must be a non-negative integer", f"{path}/version")

    if kind == "field":
        if "children" in obj:
            raise _err("a field resource carries a 'field' payload, not 'children'", f"{path}/children")
        payload = obj.get("field")
        if not isinstance(payload, dict):
            raise _err("a field resource needs a 'field' payload object", f"{path}/field")
        spec = _parse_field_spec(payload, f"{path}/field")
        return Template(tid, kind, name, description, prop, annotations, (), spec, version)

    if "field" in obj:
        raise _err("only kind 'field' resources carry a 'field' payload", f"{path}/field")
    raw_children = obj.get("children")
    if raw_children is None:
        raw_children = []
    if not isinstance(raw_children, list):
        raise _err("children must be a list", f"{path}/children")
    children: list[TemplateChild] = []
    names: list[tuple[str, str]] = []
    for i, child in enumerate(raw_children):
        cpath = f"{path}/children/{i}"
        if not isinstance(child, dict):
            raise _err("child must be an object", cpath)
        if "ref" in child:
            children.append(_parse_reference(child, cpath))
        elif "fieldType" in child:
            spec = _parse_field_spec(child, cpath)
            names.append((spec.name, f"{cpath}/name"))
            children.append(spec)
        elif "kind" in child:
            sub = _parse_template_obj(child, cpath, embedded=True)
            names.append((sub.name, f"{cpath}/name"))
            children.append(sub)
        else:
            raise _err("child must be a field, an embedded element, or a reference", cpath)
    _check_sibling_names(names)
    return Template(tid, kind, name, description, prop, annotations,
                    tuple(children), None, version)


def parse_template(doc: str) -> Template:
    try:
        obj = json.loads(doc)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"not parseable JSON: {exc}")
    return _parse_template_obj(obj, "", embedded=False)


# ---------------------------------------------------------------------------
# template serialization
# ---------------------------------------------------------------------------

def _cardinality_doc(c: Cardinality) -> dict:
    return {"min": c.min, "max": c.max}


def _annotations_doc(annotations: tuple[Annotation, ...]) -> list:
    return [
        {"propertyIri": a.property_iri, "termIri": a.term_iri, "termLabel": a.term_label}
        for a in annotations
    ]


def _constraints_doc(spec: FieldSpec) -> dict | None:
    c = spec.constraints
    if c is None:
        return None
    if isinstance(c, TextConstraints):
        out: dict = {}
        if c.min_length is not None:
            out["minLength"] = c.min_length
        if c.max_length is not None:
            out["maxLength"] = c.max_length
        if c.pattern is not None:
            out["pattern"] = c.pattern
        return out or None
    if isinstance(c, NumberConstraints):
        out = {}
        if c.minimum is not None:
            out["minimum"] = c.minimum
        if c.maximum is not None:
            out["maximum"] = c.maximum
        if c.decimal_places is not None:
            out["decimalPlaces"] = c.decimal_places
        return out or None
    sources = []
    for s in c.sources:
        if isinstance(s, OntologyBranch):
            sources.append({"kind": "ontologyBranch", "source": s.source,
                            "rootIri": s.root_iri, "includeRoot": s.include_root})
        elif isinstance(s, ValueSetRef):
            sources.append({"kind": "valueSet", "valueSetId": s.value_set_id})
        else:
            entries = []
            for e in s.entries:
                entry = {"label": e.label}
                if e.iri is not None:
                    entry["iri"] = e.iri
                entries.append(entry)
            sources.append({"kind": "literalList", "entries": entries})
    return {"sources": sources}


def _field_spec_doc(spec: FieldSpec) -> dict:
    out: dict = {
        "name": spec.name,
        "fieldType": spec.field_type,
        "required": spec.required,
        "cardinality": _cardinality_doc(spec.cardinality),
    }
    if spec.property_iri is not None:
        out["propertyIri"] = spec.property_iri
    constraints = _constraints_doc(spec)
    if constraints is not None:
        out["constraints"] = constraints
    if spec.description is not None:
        out["description"] = spec.description
    if spec.annotations:
        out["annotations"] = _annotations_doc(spec.annotations)
    return out


def _template_doc(t: Template) -> dict:
    out: dict = {"id": t.id, "kind": t.kind, "name": t.name}
    if t.description is not None:
        out["description"] = t.description
    if t.property_iri is not None:
        out["propertyIri"] = t.property_iri
    if t.annotations:
        out["annotations"] = _annotations_doc(t.annotations)
    if t.kind == "field":
        out["field"] = _field_spec_doc(t.field)
    else:
        children = []
        for child in t.children:
            if isinstance(child, FieldSpec):
                children.append(_field_spec_doc(child))
            elif isinstance(child, Template):
                children.append(_template_doc(child))
            else:
                ref: dict = {"ref": child.ref_id}
                if child.cardinality is not None:
                    ref["cardinality"] = _cardinality_doc(child.cardinality)
                children.append(ref)
        out["children"] = children
    out["version"] = t.version
    return out


def _dump_canonical(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def serialize_template(t: Template) -> str:
    return _dump_canonical(_template_doc(t))


# ---------------------------------------------------------------------------
# composition resolution
# ---------------------------------------------------------------------------

_DEFAULT_ELEMENT_CARDINALITY = Cardinality(0, 1)

TemplateLookup = Callable[[str], "Template | None"]


def _resolve_children(children, lookup: TemplateLookup, stack: list[str], path: str):
    out: list[ResolvedChild] = []
    names: list[tuple[str, str]] = []
    for i, child in enumerate(children):
        cpath = f"{path}/children/{i}"
        if isinstance(child, FieldSpec):
            resolved: ResolvedChild = child
        elif isinstance(child, ResolvedElement):
            resolved = ResolvedElement(
                child.name, child.property_iri, child.cardinality, child.description,
                child.annotations,
                _resolve_children(child.children, lookup, stack, cpath),
            )
        elif isinstance(child, Template):
            resolved = ResolvedElement(
                child.name, child.property_iri, _DEFAULT_ELEMENT_CARDINALITY,
                child.description, child.annotations,
                _resolve_children(child.children, lookup, stack, cpath),
            )
        elif isinstance(child, Reference):
            resolved = _resolve_reference(child, lookup, stack, cpath)
        else:  # pragma: no cover - guarded by parse
            raise _err(f"unsupported child node {type(child).__name__}", cpath)
        names.append((resolved.name, f"{cpath}/name"))
        out.append(resolved)
    _check_sibling_names(names)
    return tuple(out)


def _resolve_reference(ref: Reference, lookup: TemplateLookup, stack: list[str],
                       path: str) -> ResolvedChild:
    if ref.ref_id in stack:
        cycle = stack[stack.index(ref.ref_id):]
        raise CycleDetected(
            f"reference cycle: {' -> '.join(cycle + [ref.ref_id])}", cycle
        )
    target = lookup(ref.ref_id)
    if target is None:
        raise UnresolvedReference(f"referenced resource {ref.ref_id} not found", path=path)
    if target.kind == "template":
        raise _err("references may only point to elements or fields, not templates", path)
    if target.kind == "field":
        spec = target.field
        if ref.cardinality is not None:
            spec = replace(spec, cardinality=ref.cardinality)
        return spec
    stack.append(ref.ref_id)
    try:
        children = _resolve_children(target.children, lookup, stack, path)
    finally:
        stack.pop()
    cardinality = ref.cardinality if ref.cardinality is not None else _DEFAULT_ELEMENT_CARDINALITY
    return ResolvedElement(target.name, target.property_iri, cardinality,
                           target.description, target.annotations, children)


def resolve_composition(t: Template | ResolvedTemplate,
                        lookup: TemplateLookup | None = None) -> ResolvedTemplate:
    """Inline every reference; depth-first, left-to-right.

    Accepts an already-resolved tree, in which case the result is an equal
    tree (resolution is idempotent).
    """
    if lookup is None:
        lookup = lambda _rid: None
    if isinstance(t, ResolvedTemplate):
        children = _resolve_children(t.children, lookup, [], "")
        return ResolvedTemplate(t.id, t.name, t.description, t.annotations, children)
    if t.kind != "template":
        raise _err(f"only kind 'template' resources can be resolved, got {t.kind!r}", "/kind")
    children = _resolve_children(t.children, lookup, [], "")
    return ResolvedTemplate(t.id, t.name, t.description, t.annotations, children)


# ---------------------------------------------------------------------------
# instance parsing / serialization
# ---------------------------------------------------------------------------

_JSONLD_KEYS = {"@context", "@id", "@type"}


def _parse_literal(obj: dict, path: str) -> LiteralValue:
    extra = set(obj) - {"@value", "@type"}
    if extra:
        raise _err(f"unexpected keys in value object: {sorted(extra)}", path)
    value = obj["@value"]
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise _err("@value must be a string or a number", f"{path}/@value")
    marker = obj.get("@type")
    if marker is not None:
        if marker not in _TYPE_MARKERS:
            raise _err(f"unsupported @type marker {marker!r}", f"{path}/@type")
        datatype = _TYPE_MARKERS[marker]
    elif isinstance(value, (int, float)):
        datatype = "number"
    else:
        datatype = "string"
    return LiteralValue(value, datatype)


def _parse_term(obj: dict, path: str) -> TermValue:
    extra = set(obj) - {"@id", _LABEL_KEY}
    if extra:
        raise _err(f"unexpected keys in term object: {sorted(extra)}", path)
    iri = obj["@id"]
    if not is_iri(iri):
        raise _err(f"@id is not an absolute IRI: {iri!r}", f"{path}/@id")
    label = obj.get(_LABEL_KEY, "")
    if not isinstance(label, str):
        raise _err("rdfs:label must be a string", f"{path}/{_LABEL_KEY}")
    return TermValue(iri, label)


def _parse_value(raw, path: str, in_list: bool = False):
    if isinstance(raw, list):
        if in_list:
            raise _err("nested arrays are not part of the instance profile", path)
        return [_parse_value(v, f"{path}/{i}", in_list=True) for i, v in enumerate(raw)]
    if isinstance(raw, dict):
        if "@value" in raw:
            return _parse_literal(raw, path)
        if "@id" in raw:
            return _parse_term(raw, path)
        if _LABEL_KEY in raw:
            raise _err("term value object is missing '@id'", path)
        return {
            _check_value_key(k, f"{path}/{k}"): _parse_value(v, f"{path}/{k}")
            for k, v in raw.items()
        }
    raise _err("values must be JSON-LD value objects, arrays, or nested elements", path)


def _check_value_key(key: str, path: str) -> str:
    if key.startswith("@"):
        raise _err(f"unexpected JSON-LD keyword {key!r} inside values", path)
    return key


def parse_instance(doc: str) -> MetadataInstance:
    try:
        obj = json.loads(doc)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"not parseable JSON: {exc}")
    if not isinstance(obj, dict):
        raise _err("instance must be a JSON object", "")
    raw_context = obj.get("@context")
    if not isinstance(raw_context, dict):
        raise _err("instance needs an '@context' object", "/@context")
    context_map = {}
    for key, value in raw_context.items():
        if key == "rdfs":
            continue
        if not isinstance(value, str) or not is_iri(value):
            raise _err(f"@context entries must be absolute IRIs, got {value!r}",
                       f"/@context/{key}")
        context_map[key] = value
    instance_id = obj.get("@id")
    if not is_iri(instance_id):
        raise _err("instance needs an absolute '@id' IRI", "/@id")
    type_iri = obj.get("@type")
    if not isinstance(type_iri, str) or not type_iri.startswith(TEMPLATE_IRI_PREFIX):
        raise _err(f"'@type' must be a {TEMPLATE_IRI_PREFIX}<id> IRI", "/@type")
    template_id = type_iri[len(TEMPLATE_IRI_PREFIX):]
    if not is_resource_id(template_id):
        raise _err(f"'@type' does not carry a resource id: {type_iri!r}", "/@type")
    values = {}
    for key, value in obj.items():
        if key in _JSONLD_KEYS:
            continue
        if key.startswith("@"):
            raise _err(f"unsupported JSON-LD keyword {key!r}", f"/{key}")
        values[key] = _parse_value(value, f"/{key}")
    return MetadataInstance(context_map, instance_id, template_id, values)


def _value_doc(value):
    if isinstance(value, LiteralValue):
        out: dict = {"@value": value.value}
        if value.datatype == "number":
            out["@type"] = "xsd:decimal"
        elif value.datatype == "date":
            out["@type"] = "xsd:date"
        return out
    if isinstance(value, TermValue):
        return {"@id": value.iri, _LABEL_KEY: value.label}
    if isinstance(value, list):
        return [_value_doc(v) for v in value]
    if isinstance(value, dict):
        return {k: _value_doc(v) for k, v in value.items()}
    raise TypeError(f"not an instance value: {value!r}")


def instance_doc(m: MetadataInstance) -> dict:
    context = {"rdfs": RDFS_NS}
    for key in sorted(m.context_map):
        context[key] = m.context_map[key]
    out = {"@context": context, "@id": m.instance_id,
           "@type": TEMPLATE_IRI_PREFIX + m.template_id}
    for key, value in m.values.items():
        out[key] = _value_doc(value)
    return out


def serialize_instance(m: MetadataInstance) -> str:
    return _dump_canonical(instance_doc(m))


# ---------------------------------------------------------------------------
# flattening
# ---------------------------------------------------------------------------

def literal_value_key(value, datatype: str) -> str:
    """Normalized match key: canonical decimal for numbers, else
    trimmed + casefolded text."""
    if datatype == "number":
        try:
            return canonical_decimal(str(value))
        except (InvalidOperation, ValueError):
            pass
    return str(value).strip().casefold()


def _flatten(values: dict, prefix: str, out: list[FlatPair]) -> None:
    for name, value in values.items():
        path = f"{prefix}/{name}" if prefix else name
        _flatten_value(value, path, out)


def _flatten_value(value, path: str, out: list[FlatPair]) -> None:
    if isinstance(value, list):
        for entry in value:
            _flatten_value(entry, path, out)
    elif isinstance(value, dict):
        _flatten(value, path, out)
    elif isinstance(value, TermValue):
        out.append(FlatPair(path, value.iri, value.label))
    elif isinstance(value, LiteralValue):
        out.append(FlatPair(path, literal_value_key(value.value, value.datatype),
                            str(value.value)))
    else:  # pragma: no cover - guarded by parse
        raise TypeError(f"not an instance value: {value!r}")


def flatten_instance(m: MetadataInstance) -> list[FlatPair]:
    """Depth-first document-order leaf list; array indices are elided so
    repeated values pool on one path."""
    out: list[FlatPair] = []
    _flatten(m.values, "", out)
    return out
