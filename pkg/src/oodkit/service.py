"""HTTP scoring service over a fitted model bundle, plus the client for
an external embedding provider.

Endpoints:

* ``POST /v1/score`` with exactly one of ``embedding`` (base-space vector),
  ``logprobs`` (token log-probs, mean-likelihood bundles only) or ``text``
  (requires a configured provider). Returns ood_score, is_ood, threshold.
* ``GET /v1/health`` -> {"status": "ok", "model_digest": sha256}.
* ``GET /v1/info`` -> config snapshot of the served bundle.

The provider wire contract is ``POST {"texts": [...]}`` returning
``{"embeddings": [[...], ...]}`` with one row per text.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .datamodel import EmbeddingSet, ModelBundle
from .density import GmmModel, decide_score, log_density
from .errors import DataError
from .replearn import EncoderState

_MAX_BODY_BYTES = 10 * 1024 * 1024


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str
    timeout_ms: int = 2000
    retries: int = 2
    expected_dim: int | None = None

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise DataError("provider timeout_ms must be > 0")
        if self.retries < 0:
            raise DataError("provider retries must be >= 0")


def fetch_embeddings(provider: ProviderConfig, texts: list[str]) -> EmbeddingSet:
    """POST the texts to the provider; retries transport failures with
    exponential backoff, then validates row count and dimension."""
    payload = json.dumps({"texts": list(texts)}).encode("utf-8")
    request = urllib.request.Request(
        provider.base_url,
        data=payload,
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    attempts = provider.retries + 1
    last_error: Exception | None = None
    for attempt in range(attempts):
        if attempt > 0:
            time.sleep(0.05 * (2 ** (attempt - 1)))
        try:
            with urllib.request.urlopen(
                request, timeout=provider.timeout_ms / 1000.0
            ) as response:
                body = response.read()
            break
        except (urllib.error.URLError, OSError) as exc:
            last_error = exc
    else:
        raise DataError(
            f"embedding provider unreachable after {attempts} attempts: {last_error}"
        )

    try:
        doc = json.loads(body)
        rows = doc["embeddings"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed provider response: {exc}")
    if len(rows) != len(texts):
        raise DataError(
            f"provider returned {len(rows)} embeddings for {len(texts)} texts"
        )
    if len(rows) == 0:
        raise DataError("cannot build an embedding set from zero texts")
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.ndim != 2:
        raise DataError("provider rows have inconsistent dimensions")
    if provider.expected_dim is not None and matrix.shape[1] != provider.expected_dim:
        raise DataError(
            f"provider embedding dim {matrix.shape[1]} does not match "
            f"expected {provider.expected_dim}"
        )
    ids = tuple(f"text-{i}" for i in range(len(texts)))
    return EmbeddingSet(ids, matrix)


def bundle_digest(bundle: ModelBundle) -> str:
    doc = {
        "format_version": bundle.format_version,
        "encoder_state": bundle.encoder_state,
        "gmm": bundle.gmm,
        "threshold": bundle.threshold,
        "config": bundle.config,
        "provenance": bundle.provenance,
    }
    canonical = json.dumps(doc, sort_keys=True).encode("utf-8")
    return hashlib.sha256(canonical).hexdigest()


class _ModelSnapshot:
    """Immutable parsed view of a bundle, shared by all request threads."""

    def __init__(self, bundle: ModelBundle, provider: ProviderConfig | None):
        self.bundle = bundle
        self.provider = provider
        self.digest = bundle_digest(bundle)
        self.encoder = (
            EncoderState.from_dict(bundle.encoder_state)
            if bundle.encoder_state is not None
            else None
        )
        self.gmm = GmmModel.from_dict(bundle.gmm) if bundle.gmm is not None else None
        self.threshold = bundle.threshold
        self.method = (bundle.config or {}).get("method")

    @property
    def embedding_dim(self) -> int | None:
        if self.encoder is not None:
            return self.encoder.head.base_dim
        if self.gmm is not None:
            return self.gmm.dim
        return None

    def score_embedding(self, vector: np.ndarray) -> float:
        if self.gmm is None:
            raise DataError("bundle has no density model; cannot score embeddings")
        if self.encoder is not None:
            vector = self.encoder.embed(vector)
        return float(-log_density(self.gmm, vector))

    def score_logprobs(self, logprobs: list[float]) -> float:
        if self.method != "ln":
            raise DataError(
                "bundle does not score token log-probs (config method is not 'ln')"
            )
        return float(-(sum(logprobs) / len(logprobs)))


def _parse_score_request(obj: dict) -> tuple[str, object]:
    variants = [key for key in ("embedding", "logprobs", "text") if key in obj]
    if len(variants) != 1:
        raise DataError(
            "request must carry exactly one of: embedding, logprobs, text"
        )
    kind = variants[0]
    value = obj[kind]
    if kind in ("embedding", "logprobs"):
        if not isinstance(value, list) or len(value) == 0:
            raise DataError(f"{kind} must be a nonempty array of numbers")
        try:
            floats = [float(v) for v in value]
        except (TypeError, ValueError):
            raise DataError(f"{kind} must contain only numbers")
        if not all(math.isfinite(v) for v in floats):
            raise DataError(f"{kind} must contain only finite numbers")
        if kind == "logprobs" and any(v > 0 for v in floats):
            raise DataError("logprobs must be <= 0")
        return kind, floats
    if not isinstance(value, str) or not value:
        raise DataError("text must be a nonempty string")
    return kind, value


def _handle_score(snapshot: _ModelSnapshot, obj: dict) -> dict:
    kind, value = _parse_score_request(obj)
    if snapshot.threshold is None:
        raise DataError("bundle has no calibrated threshold; cannot serve decisions")
    if kind == "logprobs":
        score = snapshot.score_logprobs(value)  # type: ignore[arg-type]
    else:
        if kind == "text":
            if snapshot.provider is None:
                raise DataError("text scoring requires a configured provider")
            embeddings = fetch_embeddings(snapshot.provider, [value])  # type: ignore[list-item]
            vector = embeddings.vectors[0]
        else:
            vector = np.asarray(value, dtype=np.float64)
        expected = snapshot.embedding_dim
        if expected is not None and vector.shape[0] != expected:
            raise DataError(
                f"embedding dim {vector.shape[0]} does not match model dim {expected}"
            )
        score = snapshot.score_embedding(vector)
    return {
        "ood_score": score,
        "is_ood": decide_score(score, snapshot.threshold),
        "threshold": snapshot.threshold,
    }


def _make_handler(snapshot: _ModelSnapshot) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args) -> None:
            pass

        def _send(self, status: int, doc: dict) -> None:
            body = json.dumps(doc).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self) -> None:
            if self.path == "/v1/health":
                self._send(200, {"status": "ok", "model_digest": snapshot.digest})
            elif self.path == "/v1/info":
                self._send(
                    200,
                    {
                        "format_version": snapshot.bundle.format_version,
                        "config": snapshot.bundle.config,
                        "threshold": snapshot.threshold,
                        "has_encoder": snapshot.encoder is not None,
                        "has_gmm": snapshot.gmm is not None,
                        "model_digest": snapshot.digest,
                    },
                )
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self) -> None:
            if self.path != "/v1/score":
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
            except ValueError:
                self._send(400, {"error": "bad Content-Length"})
                return
            if length <= 0 or length > _MAX_BODY_BYTES:
                self._send(400, {"error": "missing or oversized request body"})
                return
            try:
                obj = json.loads(self.rfile.read(length))
                if not isinstance(obj, dict):
                    raise DataError("request body must be a JSON object")
                self._send(200, _handle_score(snapshot, obj))
            except json.JSONDecodeError as exc:
                self._send(400, {"error": f"malformed JSON: {exc}"})
            except DataError as exc:
                self._send(400, {"error": str(exc)})
            except Exception as exc:  # pragma: no cover - defensive
                self._send(500, {"error": f"internal error: {exc}"})

    return Handler


def build_server(
    bundle: ModelBundle,
    host: str = "127.0.0.1",
    port: int = 0,
    provider: ProviderConfig | None = None,
) -> ThreadingHTTPServer:
    """Bind (but do not start) the scoring service; port 0 picks a free one."""
    snapshot = _ModelSnapshot(bundle, provider)
    if snapshot.gmm is None and snapshot.method != "ln":
        raise DataError(
            "bundle is incomplete for serving: needs a density model or "
            "a mean-likelihood method tag"
        )
    if snapshot.threshold is None:
        raise DataError("bundle is incomplete for serving: needs a threshold")
    return ThreadingHTTPServer((host, port), _make_handler(snapshot))


def serve(
    bundle: ModelBundle,
    bind: str = "127.0.0.1:8080",
    provider: ProviderConfig | None = None,
) -> None:
    """Run the service until interrupted."""
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise DataError(f"bind address must be host:port, got {bind!r}")
    server = build_server(bundle, host, int(port_text), provider)
    try:
        server.serve_forever()
    finally:
        server.server_close()
