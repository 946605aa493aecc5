"""HTTP prediction service.

Endpoints:
    POST /predict    {"sql": "..."} or {"extracted": {"af": "AVG(a1)", "meta": {"0": 1.5}}}
    GET  /health     liveness and load state
    GET  /catalogue  entry index of the loaded catalogue
    POST /reload     reload the catalogue directory and swap it in

Requests arriving before the catalogue has loaded get 503.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .catalogue import load
from .engine import Predictor
from .errors import (
    LengthMismatch,
    MissingCatalogueEntry,
    MlaqpError,
    SQLError,
    UnknownAggregate,
    WidthMismatch,
)

log = logging.getLogger(__name__)

MAX_BODY = 1 << 20
LISTEN_BACKLOG = 256


class _Server(ThreadingHTTPServer):
    # the stdlib default backlog of 5 resets connections under bursts
    request_queue_size = LISTEN_BACKLOG
    daemon_threads = True


class CatalogueHolder:
    """Current predictor; replaced wholesale so readers never see a partial swap."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.predictor: Predictor | None = None
        self.error: str | None = None
        self._reload_lock = threading.Lock()

    def load(self) -> None:
        with self._reload_lock:
            try:
                pred = Predictor(load(self.directory))
            except Exception as exc:
                self.error = str(exc)
                log.error("catalogue load failed: %s", exc)
                raise
            self.predictor = pred
            self.error = None

    def load_async(self) -> threading.Thread:
        def run():
            try:
                self.load()
            except Exception:
                pass
        t = threading.Thread(target=run, name="catalogue-loader", daemon=True)
        t.start()
        return t


class _ClientError(Exception):
    def __init__(self, status: int, message: str, **extra):
        super().__init__(message)
        self.status = status
        self.extra = extra


def handle_predict(predictor: Predictor, body: dict) -> dict:
    if not isinstance(body, dict):
        raise _ClientError(400, "request body must be a JSON object")
    has_sql, has_ex = "sql" in body, "extracted" in body
    if has_sql == has_ex:
        raise _ClientError(400, "give exactly one of 'sql' or 'extracted'")
    try:
        if has_sql:
            if not isinstance(body["sql"], str):
                raise _ClientError(400, "'sql' must be a string")
            return predictor.predict_sql(body["sql"])
        ex = body["extracted"]
        if not isinstance(ex, dict) or not isinstance(ex.get("af"), str) or "meta" not in ex:
            raise _ClientError(400, "'extracted' needs 'af' (string) and 'meta'")
        if not isinstance(ex["meta"], (dict, list)):
            raise _ClientError(400, "'meta' must be a slot map or a list")
        return predictor.predict_extracted(ex["af"], ex["meta"])
    except UnknownAggregate as exc:
        raise _ClientError(400, str(exc), known=exc.known) from exc
    except SQLError as exc:
        raise _ClientError(400, exc.message, position=exc.position) from exc
    except (WidthMismatch, LengthMismatch) as exc:
        raise _ClientError(422, str(exc)) from exc
    except MissingCatalogueEntry as exc:
        raise _ClientError(400, str(exc.args[0] if exc.args else exc)) from exc
    except (MlaqpError, ValueError) as exc:
        raise _ClientError(400, str(exc)) from exc


def make_handler(holder: CatalogueHolder):
    class Handler(BaseHTTPRequestHandler):
        server_version = "mlaqp"
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, doc: dict) -> None:
            data = json.dumps(doc, allow_nan=False).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _loading(self) -> bool:
            if holder.predictor is None:
                self._send(503, {"error": "catalogue not loaded", "detail": holder.error})
                return True
            return False

        def do_GET(self):
            if self.path == "/health":
                self._send(200, {"status": "ok" if holder.predictor else "loading",
                                 "catalogue": str(holder.directory), "error": holder.error})
            elif self.path == "/catalogue":
                if self._loading():
                    return
                cat = holder.predictor.catalogue
                self._send(200, {"entries": cat.index(), "width": cat.width,
                                 "schema": cat.schema.to_dict()})
            else:
                self._send(404, {"error": f"no route {self.path}"})

        def do_POST(self):
            n = int(self.headers.get("Content-Length") or 0)
            if n > MAX_BODY:
                self._send(413, {"error": "body too large"})
                return
            raw = self.rfile.read(n)
            if self.path == "/reload":
                try:
                    holder.load()
                except Exception as exc:
                    self._send(500, {"error": f"reload failed: {exc}"})
                    return
                self._send(200, {"status": "reloaded"})
                return
            if self.path != "/predict":
                self._send(404, {"error": f"no route {self.path}"})
                return
            if self._loading():
                return
            predictor = holder.predictor
            try:
                body = json.loads(raw or b"null")
            except ValueError as exc:
                self._send(400, {"error": f"malformed JSON: {exc}"})
                return
            try:
                self._send(200, handle_predict(predictor, body))
            except _ClientError as exc:
                self._send(exc.status, {"error": str(exc), **exc.extra})
            except Exception as exc:
                log.exception("prediction failed")
                self._send(500, {"error": str(exc)})

    return Handler


def make_server(catalogue_dir: str | Path, host: str = "127.0.0.1", port: int = 8080,
                background_load: bool = True) -> tuple[ThreadingHTTPServer, CatalogueHolder]:
    holder = CatalogueHolder(catalogue_dir)
    server = _Server((host, port), make_handler(holder))
    if background_load:
        holder.load_async()
    else:
        holder.load()
    return server, holder
