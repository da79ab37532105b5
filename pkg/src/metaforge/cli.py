"""Command-line front door: compile, validate, export, recommend, serve.

Exit codes: 0 success / instance valid, 1 validation errors found,
2 usage error, 3 I/O or model error.  Machine-readable failures land on
stderr as one JSON object; validate / recommend / export write the same
bytes to stdout that the REST endpoints put on the wire.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .compiler import compile as compile_schema, export_ntriples, validate
from .errors import MetaforgeError, TerminologyUnavailable
from .model import (
    parse_instance,
    parse_template,
    resolve_composition,
    serialize_instance,
)
from .recommender import ContextPair, index_corpus, normalize_context_value, suggest
from .service import DEFAULT_PORT, MetaforgeService, canonical_json
from .terminology import TerminologyClient, TerminologyService

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_USAGE = 2
EXIT_ERROR = 3


def _fail(error: Exception, exit_code: int = EXIT_ERROR):
    if isinstance(error, MetaforgeError):
        body = error.to_dict()
    else:
        body = {"error": "IO_ERROR", "message": str(error)}
    sys.stderr.write(json.dumps(body, ensure_ascii=False) + "\n")
    raise SystemExit(exit_code)


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(exc)


def _load_resolved_template(path: str):
    template = parse_template(_read_text(path))
    return resolve_composition(template, lookup=None)


def _terminology_from_env() -> TerminologyService:
    url = os.environ.get("METAFORGE_TERMINOLOGY_URL")
    client = None
    if url:
        client = TerminologyClient(url, os.environ.get("METAFORGE_TERMINOLOGY_APIKEY"))
    store = None
    data_dir = os.environ.get("METAFORGE_DATA_DIR")
    if data_dir and Path(data_dir).is_dir():
        from .repository import ResourceStore

        store = ResourceStore(data_dir)
    return TerminologyService(store, client)


def _membership(offline: bool, warnings: list[str]):
    if offline:
        def skip(_constraints, iri: str) -> bool:
            warnings.append(f"offline mode: membership of {iri} not checked")
            return True
        return skip
    terminology = _terminology_from_env()

    def check(constraints, iri: str) -> bool:
        return terminology.is_member(constraints, iri)
    return check


@click.group()
def main():
    """metaforge: templates, metadata instances, validation, suggestions."""


@main.command("compile")
@click.argument("template_file")
@click.option("-o", "--output", default=None, help="write the schema here instead of stdout")
def compile_command(template_file, output):
    """Compile a template document into its validation schema."""
    try:
        schema = compile_schema(_load_resolved_template(template_file))
    except MetaforgeError as exc:
        _fail(exc)
    if output:
        Path(output).write_text(schema.schema_doc, encoding="utf-8")
    else:
        sys.stdout.write(schema.schema_doc)


@main.command("validate")
@click.option("--template", "template_file", required=True)
@click.option("--offline", is_flag=True,
              help="skip ontology membership checks (reported as warnings)")
@click.argument("instance_files", nargs=-1, required=True)
def validate_command(template_file, offline, instance_files):
    """Validate instances against a template; the report lands on stdout."""
    warnings: list[str] = []
    try:
        rt = _load_resolved_template(template_file)
        membership = _membership(offline, warnings)
        reports = []
        for path in instance_files:
            m = parse_instance(_read_text(path))
            reports.append((path, validate(rt, m, membership)))
    except MetaforgeError as exc:
        _fail(exc)
    for warning in warnings:
        sys.stderr.write(f"warning: {warning}\n")
    if len(reports) == 1:
        sys.stdout.write(canonical_json(reports[0][1].to_dict()))
    else:
        sys.stdout.write(canonical_json(
            [{"file": path, "report": report.to_dict()} for path, report in reports]))
    if any(not report.valid for _, report in reports):
        raise SystemExit(EXIT_INVALID)


@main.command("export")
@click.option("--format", "format_", type=click.Choice(["ntriples", "jsonld"]),
              default="ntriples")
@click.option("--template", "template_file", required=True)
@click.argument("instance_file")
def export_command(format_, template_file, instance_file):
    """Export an instance as N-Triples or canonical JSON-LD."""
    try:
        rt = _load_resolved_template(template_file)
        m = parse_instance(_read_text(instance_file))
        if format_ == "ntriples":
            sys.stdout.write(export_ntriples(rt, m))
        else:
            sys.stdout.write(serialize_instance(m))
    except MetaforgeError as exc:
        _fail(exc)


@main.command("recommend")
@click.option("--corpus", "corpus_dir", required=True)
@click.option("--template", "template_file", required=True)
@click.option("--target", "target_path", required=True)
@click.option("--context", "context_options", multiple=True,
              help="filled field as path=value; repeatable")
@click.option("-k", "top_k", default=8, show_default=True)
@click.option("--min-support", default=1, show_default=True)
def recommend_command(corpus_dir, template_file, target_path, context_options,
                      top_k, min_support):
    """Rank value suggestions for a field from a corpus directory."""
    try:
        template = parse_template(_read_text(template_file))
        rt = resolve_composition(template, lookup=None)
        corpus = []
        corpus_path = Path(corpus_dir)
        if not corpus_path.is_dir():
            _fail(FileNotFoundError(f"corpus directory {corpus_dir} does not exist"))
        for path in sorted(corpus_path.glob("*.json")):
            try:
                m = parse_instance(path.read_text(encoding="utf-8"))
            except MetaforgeError:
                continue  # templates or stray files in the corpus directory
            if m.template_id != template.id:
                sys.stderr.write(f"warning: {path.name} belongs to another template\n")
                continue
            corpus.append(m)
        index = index_corpus(template.id, corpus)
        context = []
        for option in context_options:
            if "=" not in option:
                raise click.UsageError(f"--context takes path=value, got {option!r}")
            path, _, value = option.partition("=")
            context.append(ContextPair(path, normalize_context_value(rt, path, value)))
        suggestions = suggest(index, target_path, context, top_k, min_support)
    except MetaforgeError as exc:
        _fail(exc)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    sys.stdout.write(canonical_json([s.to_dict() for s in suggestions]))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=None, type=int,
              help="defaults to METAFORGE_PORT or 9090")
def serve_command(host, port):
    """Start the REST service (uvicorn)."""
    import uvicorn

    from .api import create_app

    service = MetaforgeService.from_env()
    minted = service.bootstrap_admin()
    if minted:
        user_id, token = minted
        click.echo(f"created admin user {user_id}", err=True)
        click.echo(f"admin API key (store it now): {token}", err=True)
    if port is None:
        port = int(os.environ.get("METAFORGE_PORT", DEFAULT_PORT))
    uvicorn.run(create_app(service), host=host, port=port, log_level="info")


@main.command("mock-terminology")
@click.option("--taxonomy", "taxonomy_file", required=True)
@click.option("--port", default=8099, show_default=True)
def mock_terminology_command(taxonomy_file, port):
    """Serve the bundled mock terminology server (development helper)."""
    import time

    from .mockservers import MockTerminologyServer, load_taxonomy

    server = MockTerminologyServer(load_taxonomy(taxonomy_file))
    url = server.start(port)
    click.echo(f"mock terminology server on {url}", err=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
