"""
Serving a fitted detector over HTTP
====================================

A fitted bundle (encoder + mixture + calibrated threshold) can be served
as a small JSON-over-HTTP service. This demo starts the server on a free
port, checks its health, scores an embedding, and shows the strict
request validation.
"""

import json
import threading
import urllib.error
import urllib.request

from oodkit import TrainConfig, make_synthetic_benchmark, run_pipeline
from oodkit.service import build_server, bundle_digest

# ---------------------------------------------------------------------------
# fit a detector and wrap it into a serving bundle
dataset, embeddings = make_synthetic_benchmark(seed=0, n_per_cluster=60, dim=8)
result = run_pipeline(dataset, embeddings, TrainConfig(k=4, epochs=5, batch_size=32))
bundle = result.to_bundle(config={"method": "density"}, provenance={})
print(f"bundle digest: {bundle_digest(bundle)[:16]}...")

# port 0 asks the OS for a free port; serve_forever runs on a thread
server = build_server(bundle, port=0)
base = f"http://127.0.0.1:{server.server_address[1]}"
thread = threading.Thread(target=server.serve_forever, daemon=True)
thread.start()
print(f"serving on {base}")


def get(path):
    with urllib.request.urlopen(base + path, timeout=5) as resp:
        return json.loads(resp.read())


def score(payload):
    request = urllib.request.Request(
        base + "/v1/score",
        data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=5) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


# ---------------------------------------------------------------------------
# health and model info
print(f"\nGET /v1/health -> {get('/v1/health')}")
info = get("/v1/info")
print(f"GET /v1/info   -> threshold {info['threshold']:.3f}, "
      f"encoder: {info['has_encoder']}, mixture: {info['has_gmm']}")

# ---------------------------------------------------------------------------
# score one in-domain point and one far-away point
near = embeddings.vectors[0]
status, doc = score({"embedding": near.tolist()})
print(f"\nscore(train point)    -> {status}, is_ood={doc['is_ood']}, "
      f"ood_score={doc['ood_score']:.2f}")

status, doc = score({"embedding": (near + 40.0).tolist()})
print(f"score(displaced point) -> {status}, is_ood={doc['is_ood']}, "
      f"ood_score={doc['ood_score']:.2f}")
assert doc["is_ood"] is True

# ---------------------------------------------------------------------------
# bad requests are rejected with 400 and a reason, never a crash
for payload in ({"embedding": [1.0, 2.0]},           # wrong dimension
                {"embedding": [], "logprobs": []},    # two variants at once
                {"text": "hi"}):                      # no provider configured
    status, doc = score(payload)
    print(f"reject {str(payload)[:38]:<40s} -> {status}: {doc['error'][:48]}")
    assert status == 400

server.shutdown()
server.server_close()
print("\nserver stopped cleanly")
