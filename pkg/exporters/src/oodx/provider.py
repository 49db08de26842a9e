"""Embedding provider service: POST {"texts": [...]} -> {"embeddings": [...]}."""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .embed import embed_texts
from .jobs import ExportError
from .models import load_encoder


def _make_handler(model, tokenizer, batch_size: int, device: str):
    class Handler(BaseHTTPRequestHandler):
        server_version = "oodx-provider/0.1"

        def log_message(self, format, *args):  # keep stdout quiet
            pass

        def _reply(self, status: int, doc: dict) -> None:
            body = json.dumps(doc).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self) -> None:
            try:
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                doc = json.loads(raw)
            except (ValueError, json.JSONDecodeError) as exc:
                self._reply(400, {"error": f"malformed JSON: {exc}"})
                return
            if not isinstance(doc, dict) or "texts" not in doc:
                self._reply(400, {"error": "body must be an object with a 'texts' list"})
                return
            texts = doc["texts"]
            if not isinstance(texts, list) or any(
                not isinstance(t, str) for t in texts
            ):
                self._reply(400, {"error": "'texts' must be a list of strings"})
                return
            if not texts:
                self._reply(200, {"embeddings": []})
                return
            vectors, _ = embed_texts(
                model, tokenizer, texts, batch_size=batch_size, device=device
            )
            self._reply(200, {"embeddings": [list(map(float, v)) for v in vectors]})

    return Handler


def build_provider(
    model_id: str,
    host: str = "127.0.0.1",
    port: int = 0,
    batch_size: int = 32,
    device: str = "cpu",
) -> ThreadingHTTPServer:
    """Load the encoder and return an unstarted HTTP server bound to
    ``host:port`` (port 0 picks a free one; read ``server_address``)."""
    model, tokenizer = load_encoder(model_id, device)
    handler = _make_handler(model, tokenizer, batch_size, device)
    try:
        return ThreadingHTTPServer((host, port), handler)
    except OSError as exc:
        raise ExportError(f"cannot bind {host}:{port}: {exc}") from exc


def serve_provider(
    model_id: str, bind: str, batch_size: int = 32, device: str = "cpu"
) -> None:
    """Serve forever on ``host:port``."""
    host, sep, port_text = bind.rpartition(":")
    if not sep or not host or not port_text.isdigit():
        raise ExportError(f"--bind must look like host:port, got {bind!r}")
    server = build_provider(
        model_id, host, int(port_text), batch_size=batch_size, device=device
    )
    try:
        server.serve_forever()
    finally:
        server.server_close()
