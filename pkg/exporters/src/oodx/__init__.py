"""oodx — offline exporters for the oodkit file formats.

This package turns pretrained (or any locally saved) transformer models
into the two artifact kinds the detection toolkit consumes:

* binary embedding files (mean-pooled last-layer hidden states), and
* token log-prob JSONL files (teacher-forced causal-LM scores),

and can also run as a live embedding provider implementing the
``POST {"texts": [...]} -> {"embeddings": [...]}`` wire contract.

It deliberately has no dependency on the toolkit itself: the file
formats and the provider protocol *are* the interface.
"""

from .jobs import ExportError, ExportJob
from .embed import embed_texts, export_embeddings
from .logprob import export_logprobs, ln_score, token_logprobs
from .provider import build_provider, serve_provider

__all__ = [
    "ExportError",
    "ExportJob",
    "embed_texts",
    "export_embeddings",
    "export_logprobs",
    "ln_score",
    "token_logprobs",
    "build_provider",
    "serve_provider",
]

__version__ = "0.1.0"
