"""Bundled mock servers: a BioPortal-shaped terminology server backed by a
taxonomy file, a submission endpoint, and an external validator.

All three run on ``ThreadingHTTPServer`` bound to an ephemeral port; tests
start them per fixture and the CLI can serve the terminology mock for local
experiments.
"""

from __future__ import annotations

import json
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path


def load_taxonomy(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


class _JsonServer:
    def __init__(self):
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self.fail_with: int | None = None  # force this status on every request
        self.requests: list[dict] = []

    def _make_handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # quiet test output
                pass

            def _reply(self, status: int, body: dict | str, content_type="application/json"):
                raw = (json.dumps(body) if isinstance(body, dict) else body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def _record(self, body: bytes | None):
                server.requests.append({
                    "method": self.command,
                    "path": self.path,
                    "headers": dict(self.headers),
                    "body": body.decode("utf-8", "replace") if body else None,
                })

            def do_GET(self):
                self._record(None)
                if server.fail_with is not None:
                    self._reply(server.fail_with, {"error": "mock failure"})
                    return
                server.handle_get(self, self.path)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length) if length else b""
                self._record(body)
                if server.fail_with is not None:
                    self._reply(server.fail_with, {"error": "mock failure"})
                    return
                server.handle_post(self, self.path, body)

        return Handler

    def start(self, port: int = 0) -> str:
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), self._make_handler())
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self.base_url

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def handle_get(self, handler, path: str) -> None:  # pragma: no cover - overridden
        handler._reply(404, {"error": "not found"})

    def handle_post(self, handler, path: str, body: bytes) -> None:  # pragma: no cover
        handler._reply(404, {"error": "not found"})


class MockTerminologyServer(_JsonServer):
    """Serves /search and /ontologies/{acr}/classes/{iri}/descendants over a
    taxonomy dict: {"source": ..., "terms": [{iri, label, parent, synonyms}]}."""

    def __init__(self, taxonomy: dict):
        super().__init__()
        self.taxonomy = taxonomy
        self._by_iri = {t["iri"]: t for t in taxonomy["terms"]}

    def _descendants(self, root_iri: str) -> list[dict]:
        children: dict[str, list[dict]] = {}
        for term in self.taxonomy["terms"]:
            if term.get("parent"):
                children.setdefault(term["parent"], []).append(term)
        out: list[dict] = []
        stack = list(children.get(root_iri, []))
        while stack:
            term = stack.pop(0)
            out.append(term)
            stack.extend(children.get(term["iri"], []))
        return out

    @staticmethod
    def _collection_entry(term: dict, source: str) -> dict:
        return {
            "@id": term["iri"],
            "prefLabel": term["label"],
            "synonym": term.get("synonyms", []),
            "ontology": source,
        }

    def handle_get(self, handler, path: str) -> None:
        parsed = urllib.parse.urlparse(path)
        params = urllib.parse.parse_qs(parsed.query)
        source = self.taxonomy["source"]
        if parsed.path == "/search":
            query = (params.get("q", [""])[0]).casefold()
            wanted = params.get("ontologies", [None])[0]
            if wanted and wanted != source:
                handler._reply(200, {"collection": [], "nextPage": None})
                return
            hits = [
                self._collection_entry(t, source) for t in self.taxonomy["terms"]
                if query in t["label"].casefold()
                or any(query in s.casefold() for s in t.get("synonyms", []))
            ]
            pagesize = int(params.get("pagesize", ["50"])[0])
            handler._reply(200, {"collection": hits[:pagesize], "nextPage": None})
            return
        parts = parsed.path.strip("/").split("/")
        if len(parts) == 5 and parts[0] == "ontologies" and parts[2] == "classes" \
                and parts[4] == "descendants":
            if parts[1] != source:
                handler._reply(404, {"error": f"unknown ontology {parts[1]}"})
                return
            iri = urllib.parse.unquote(parts[3])
            if iri not in self._by_iri:
                handler._reply(404, {"error": f"unknown term {iri}"})
                return
            descendants = [self._collection_entry(t, source) for t in self._descendants(iri)]
            pagesize = int(params.get("pagesize", ["500"])[0])
            page = int(params.get("page", ["1"])[0])
            start = (page - 1) * pagesize
            chunk = descendants[start:start + pagesize]
            next_page = None
            if start + pagesize < len(descendants):
                next_page = (f"{self.base_url}{parsed.path}"
                             f"?pagesize={pagesize}&page={page + 1}")
            handler._reply(200, {"collection": chunk, "nextPage": next_page})
            return
        handler._reply(404, {"error": "not found"})


class MockSubmissionServer(_JsonServer):
    """Accepts any POST and answers 201 with {"id": "MOCK-<n>"}."""

    def __init__(self):
        super().__init__()
        self.counter = 0
        self.next_status: int | None = None  # one-shot override

    def handle_post(self, handler, path: str, body: bytes) -> None:
        if self.next_status is not None:
            status, self.next_status = self.next_status, None
            handler._reply(status, {"error": "submission rejected by mock"})
            return
        self.counter += 1
        handler._reply(201, {"id": f"MOCK-{self.counter}"})


class MockExternalValidator(_JsonServer):
    """Returns a configurable external-validation verdict."""

    def __init__(self):
        super().__init__()
        self.result: dict = {"valid": True, "messages": []}
        self.raw_response: str | None = None  # overrides result when set

    def handle_post(self, handler, path: str, body: bytes) -> None:
        if self.raw_response is not None:
            handler._reply(200, self.raw_response)
            return
        handler._reply(200, self.result)
