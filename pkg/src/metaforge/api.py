"""HTTP service: every capability behind `/api/v1` with API-key auth.

Error bodies are always ``{"error": <code>, "message": <text>, "path"?: ...}``
and module error codes map onto HTTP statuses in one table.  The bodies of
validate / recommend / export responses come from the same canonical
renderers the CLI uses, so both surfaces emit identical bytes.
"""

from __future__ import annotations

import json

from fastapi import Depends, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from .errors import MetaforgeError, NotFound
from .model import is_resource_id, new_resource_id, parse_instance, parse_template
from .repository import AclEntry, Principal, ResourceRecord, ROOT_FOLDER_ID, SearchQuery
from .service import MetaforgeService, canonical_json
from .terminology import SkosMapping

_STATUS_BY_CODE = {
    "UNAUTHENTICATED": 401,
    "PERMISSION_DENIED": 403,
    "NOT_FOUND": 404,
    "VERSION_CONFLICT": 409,
    "INVALID_PAYLOAD": 422,
    "MODEL_VIOLATION": 422,
    "NOT_VALIDATED": 422,
    "TERMINOLOGY_UNAVAILABLE": 502,
    "VALIDATOR_UNAVAILABLE": 502,
    "SUBMISSION_UNAVAILABLE": 502,
}

_GENERIC_CODES = {404: "NOT_FOUND", 405: "METHOD_NOT_ALLOWED", 401: "UNAUTHENTICATED"}


class Unauthenticated(MetaforgeError):
    code = "UNAUTHENTICATED"


class BadRequest(MetaforgeError):
    code = "BAD_REQUEST"


def status_for(code: str) -> int:
    return _STATUS_BY_CODE.get(code, 400)


def create_app(service: MetaforgeService) -> FastAPI:
    app = FastAPI(title="metaforge", version="0.1.0",
                  openapi_url="/openapi.json", docs_url="/docs")

    # -- error shaping ---------------------------------------------------------

    @app.exception_handler(MetaforgeError)
    async def metaforge_error(_request: Request, exc: MetaforgeError):
        return JSONResponse(status_code=status_for(exc.code), content=exc.to_dict())

    @app.exception_handler(StarletteHTTPException)
    async def http_error(_request: Request, exc: StarletteHTTPException):
        code = _GENERIC_CODES.get(exc.status_code, "BAD_REQUEST")
        return JSONResponse(status_code=exc.status_code,
                            content={"error": code, "message": str(exc.detail)})

    @app.exception_handler(RequestValidationError)
    async def request_error(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"error": "BAD_REQUEST", "message": str(exc.errors())})

    @app.exception_handler(ValueError)
    async def value_error(_request: Request, exc: ValueError):
        return JSONResponse(status_code=400,
                            content={"error": "BAD_REQUEST", "message": str(exc)})

    # -- auth -------------------------------------------------------------------

    def actor(request: Request) -> Principal:
        header = request.headers.get("Authorization", "")
        principal = None
        if header.startswith("apikey token="):
            token = header[len("apikey token="):].strip()
            if token:
                principal = service.authenticate_token(token)
        if principal is None:
            raise Unauthenticated("authentication required")
        return principal

    # -- helpers -----------------------------------------------------------------

    def record_json(record: ResourceRecord, status: int = 200) -> Response:
        return Response(content=canonical_json(record.to_dict()), status_code=status,
                        media_type="application/json")

    def records_json(records: list[ResourceRecord]) -> Response:
        return Response(content=canonical_json([r.to_dict() for r in records]),
                        media_type="application/json")

    def default_parent(body: dict, who: Principal) -> str:
        parent = body.get("parentFolder")
        if parent is None:
            return service.store.ensure_user_home(who.id).id
        return parent

    async def read_body(request: Request) -> dict:
        raw = await request.body()
        try:
            body = json.loads(raw) if raw else {}
        except json.JSONDecodeError as exc:
            raise BadRequest(f"request body is not JSON: {exc}")
        if not isinstance(body, dict):
            raise BadRequest("request body must be a JSON object")
        return body

    # -- resource creation ----------------------------------------------------------

    def create_model_resource(resource_type: str, body: dict, who: Principal) -> Response:
        document = body.get("document")
        if not isinstance(document, dict):
            raise BadRequest("body needs a 'document' object")
        template = parse_template(json.dumps(document))
        record = ResourceRecord(
            id=template.id, resource_type=resource_type,
            parent_folder=default_parent(body, who), owner=who,
            payload=document, name=template.name, description=template.description,
            annotations=template.annotations,
        )
        return record_json(service.store.put_resource(record, None, who), status=201)

    @app.post("/api/v1/templates")
    async def create_template(request: Request, who: Principal = Depends(actor)):
        return create_model_resource("template", await read_body(request), who)

    @app.post("/api/v1/elements")
    async def create_element(request: Request, who: Principal = Depends(actor)):
        return create_model_resource("element", await read_body(request), who)

    @app.post("/api/v1/fields")
    async def create_field(request: Request, who: Principal = Depends(actor)):
        return create_model_resource("field", await read_body(request), who)

    @app.post("/api/v1/instances")
    async def create_instance(request: Request, who: Principal = Depends(actor)):
        body = await read_body(request)
        document = body.get("document")
        if not isinstance(document, dict):
            raise BadRequest("body needs a 'document' object")
        m = parse_instance(json.dumps(document))
        record = ResourceRecord(
            id=new_resource_id(), resource_type="instance",
            parent_folder=default_parent(body, who), owner=who,
            payload=document, name=body.get("name") or m.instance_id,
        )
        stored, _report = service.save_instance(record, None, who,
                                                force=bool(body.get("force")))
        return record_json(stored, status=201)

    @app.post("/api/v1/folders")
    async def create_folder(request: Request, who: Principal = Depends(actor)):
        body = await read_body(request)
        name = body.get("name")
        if not name:
            raise BadRequest("folders need a 'name'")
        record = ResourceRecord(
            id=new_resource_id(), resource_type="folder",
            parent_folder=default_parent(body, who), owner=who,
            name=name, description=body.get("description"),
        )
        return record_json(service.store.put_resource(record, None, who), status=201)

    @app.post("/api/v1/value-sets")
    async def create_value_set(request: Request, who: Principal = Depends(actor)):
        body = await read_body(request)
        members = [(m.get("iri"), m.get("label", "")) for m in body.get("members", [])]
        value_set = service.terminology.create_value_set(
            body.get("name", ""), members, who, parent_folder=body.get("parentFolder"))
        record = service.store.get_resource(value_set.id, who)
        return record_json(record, status=201)

    # -- generic resource access -------------------------------------------------------

    @app.get("/api/v1/resources/{resource_id}")
    async def get_resource(resource_id: str, who: Principal = Depends(actor)):
        return record_json(service.store.get_resource(resource_id, who))

    @app.put("/api/v1/resources/{resource_id}")
    async def put_resource(resource_id: str, request: Request,
                           who: Principal = Depends(actor)):
        if_match = request.headers.get("If-Match")
        if if_match is None or not if_match.strip().isdigit():
            raise BadRequest("PUT requires an If-Match header carrying the version")
        expected_version = int(if_match.strip())
        body = await read_body(request)
        existing = service.store.get_resource(resource_id, who)
        if existing.resource_type == "instance":
            document = body.get("document")
            if not isinstance(document, dict):
                raise BadRequest("body needs a 'document' object")
            record = ResourceRecord(
                id=resource_id, resource_type="instance",
                parent_folder=existing.parent_folder, owner=existing.owner,
                payload=document, name=body.get("name") or existing.name,
            )
            stored, _report = service.save_instance(record, expected_version, who,
                                                    force=bool(body.get("force")))
            return record_json(stored)
        if existing.resource_type in ("template", "element", "field"):
            document = body.get("document")
            if not isinstance(document, dict):
                raise BadRequest("body needs a 'document' object")
            template = parse_template(json.dumps(document))
            record = ResourceRecord(
                id=resource_id, resource_type=existing.resource_type,
                parent_folder=existing.parent_folder, owner=existing.owner,
                payload=document, name=template.name, description=template.description,
                annotations=template.annotations,
            )
            return record_json(service.store.put_resource(record, expected_version, who))
        # folders, value sets, provisional terms: name/description edits
        record = ResourceRecord(
            id=resource_id, resource_type=existing.resource_type,
            parent_folder=existing.parent_folder, owner=existing.owner,
            payload=body.get("document", existing.payload),
            name=body.get("name", existing.name),
            description=body.get("description", existing.description),
            annotations=existing.annotations,
        )
        return record_json(service.store.put_resource(record, expected_version, who))

    @app.delete("/api/v1/resources/{resource_id}", status_code=204)
    async def delete_resource(resource_id: str, who: Principal = Depends(actor)):
        service.delete_resource(resource_id, who)
        return Response(status_code=204)

    @app.post("/api/v1/resources/{resource_id}/move")
    async def move_resource(resource_id: str, request: Request,
                            who: Principal = Depends(actor)):
        body = await read_body(request)
        destination = body.get("parentFolder")
        if not destination:
            raise BadRequest("body needs a 'parentFolder'")
        return record_json(service.store.move_resource(resource_id, destination, who))

    @app.get("/api/v1/folders/{folder_id}/children")
    async def folder_children(folder_id: str, who: Principal = Depends(actor)):
        return records_json(service.store.list_children(folder_id, who))

    @app.get("/api/v1/search")
    async def search(request: Request, who: Principal = Depends(actor)):
        params = request.query_params
        query = SearchQuery(
            text=params.get("q") or None,
            resource_type=params.get("type") or None,
            annotated_with=params.get("annotatedWith") or None,
            folder=params.get("folder") or None,
        )
        return records_json(service.store.search(query, who))

    @app.get("/api/v1/me")
    async def me(who: Principal = Depends(actor)):
        home = service.store.ensure_user_home(who.id)
        return {"userId": who.id, "homeFolder": home.id, "rootFolder": ROOT_FOLDER_ID}

    # -- validation / schema / export ------------------------------------------------

    @app.post("/api/v1/templates/{template_id}/validate")
    async def validate_instance(template_id: str, request: Request,
                                who: Principal = Depends(actor)):
        raw = await request.body()
        rt = service.resolved_template(template_id, who)
        m = parse_instance(raw.decode("utf-8"))
        report = service.validate_instance(rt, m)
        return Response(content=canonical_json(report.to_dict()),
                        media_type="application/json")

    @app.get("/api/v1/templates/{template_id}/schema")
    async def template_schema(template_id: str, who: Principal = Depends(actor)):
        schema = service.compile_template(template_id, who)
        return Response(content=schema.schema_doc, media_type="application/json")

    @app.get("/api/v1/instances/{instance_id}")
    async def get_instance(instance_id: str, format: str = "jsonld",
                           who: Principal = Depends(actor)):
        if format == "ntriples":
            return Response(content=service.instance_ntriples(instance_id, who),
                            media_type="application/n-triples")
        if format == "jsonld":
            return Response(content=service.instance_document(instance_id, who),
                            media_type="application/ld+json")
        raise BadRequest(f"unknown format {format!r}; use jsonld or ntriples")

    # -- recommender --------------------------------------------------------------------

    @app.post("/api/v1/recommend")
    async def recommend(request: Request, who: Principal = Depends(actor)):
        body = await read_body(request)
        template_id = body.get("templateId", "")
        if not is_resource_id(template_id):
            raise BadRequest("body needs a 'templateId'")
        target_path = body.get("targetPath")
        if not target_path:
            raise BadRequest("body needs a 'targetPath'")
        context = [
            (entry.get("path", ""), str(entry.get("value", "")))
            for entry in body.get("context", [])
        ]
        k = body.get("k", 8)
        suggestions = service.recommend(template_id, target_path, context, k, who,
                                        min_support=body.get("minSupport", 1))
        return Response(
            content=canonical_json([s.to_dict() for s in suggestions]),
            media_type="application/json")

    # -- terminology -----------------------------------------------------------------------

    @app.get("/api/v1/terminology/search")
    async def terminology_search(request: Request, who: Principal = Depends(actor)):
        params = request.query_params
        limit = int(params.get("limit", "20"))
        result = service.terminology.search_terms(
            params.get("q", ""), params.get("source") or None, limit)
        return {
            "terms": [t.to_dict() for t in result.terms],
            "degraded": result.degraded,
        }

    @app.get("/api/v1/terminology/branch")
    async def terminology_branch(request: Request, who: Principal = Depends(actor)):
        params = request.query_params
        source = params.get("source")
        root = params.get("root")
        if not source or not root:
            raise BadRequest("branch expansion needs 'source' and 'root'")
        include_root = params.get("includeRoot", "false").lower() == "true"
        iris = service.terminology.expand_branch(source, root, include_root)
        return {"iris": sorted(iris)}

    @app.post("/api/v1/terminology/provisional-terms", status_code=201)
    async def create_provisional_term(request: Request, who: Principal = Depends(actor)):
        body = await read_body(request)
        mappings = [
            SkosMapping(m.get("relation", ""), m.get("targetIri", ""))
            for m in body.get("mappings", [])
        ]
        term = service.terminology.create_provisional_term(
            body.get("label", ""), mappings, who,
            parent_folder=body.get("parentFolder"), force=bool(body.get("force")))
        return term.to_doc()

    # -- submission --------------------------------------------------------------------------

    @app.post("/api/v1/instances/{instance_id}/submit", status_code=201)
    async def submit_instance(instance_id: str, request: Request,
                              who: Principal = Depends(actor)):
        body = await read_body(request)
        target = body.get("target")
        if not target:
            raise BadRequest("body needs a 'target' name")
        receipt = service.submit_instance(instance_id, target, who,
                                          force=bool(body.get("force")))
        return receipt.to_dict()

    @app.get("/api/v1/instances/{instance_id}/receipts")
    async def list_receipts(instance_id: str, who: Principal = Depends(actor)):
        return records_json(service.list_receipts(instance_id, who))

    # -- sharing -----------------------------------------------------------------------------

    @app.put("/api/v1/resources/{resource_id}/permissions")
    async def set_permissions(resource_id: str, request: Request,
                              who: Principal = Depends(actor)):
        body = await read_body(request)
        entries = []
        for raw in body.get("acl", []):
            principal = raw.get("principal", {})
            entries.append(AclEntry(
                Principal(principal.get("kind", ""), principal.get("id")),
                raw.get("level", "")))
        return record_json(service.store.set_permissions(resource_id, entries, who))

    @app.post("/api/v1/groups", status_code=201)
    async def create_group(request: Request, who: Principal = Depends(actor)):
        body = await read_body(request)
        name = body.get("name")
        if not name:
            raise BadRequest("groups need a 'name'")
        return service.store.create_group(name, who).to_dict()

    @app.put("/api/v1/groups/{group_id}/members")
    async def update_members(group_id: str, request: Request,
                             who: Principal = Depends(actor)):
        body = await read_body(request)
        group = service.store.update_members(
            group_id, body.get("add", []), body.get("remove", []), who)
        return group.to_dict()

    return app
