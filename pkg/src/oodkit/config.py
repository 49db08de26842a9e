"""Run configuration: one flat key=value file shared by every stage.

Unknown keys and badly typed values are rejected outright; command-line
flags override file values; the OODKIT_SEED environment variable is the
seed fallback when neither a flag nor the file sets one.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, asdict

from .errors import UsageError

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}
_NONE = {"none", "null", ""}


@dataclass
class RunConfig:
    # inputs / outputs
    dataset_path: str | None = None
    embeddings_path: str | None = None
    out_dir: str = "."
    seed: int | None = None
    threads: int = 1

    # split stage
    protocol: str = "coverage"
    coverage: float = 0.75
    n_ood_classes: int = 2
    n_splits: int = 5

    # likelihood stage
    method: str = "ln"
    p_noise: float = 0.5
    ngram_order: int = 2
    smoothing_k: float = 1.0

    # representation stage
    k: int = 4
    gamma: float = 1.0
    tau: float = 0.5
    alpha: float = 1.0
    batch_size: int = 64
    epochs: int = 15
    learning_rate: float = 1e-3
    dropout: float = 0.1
    optimizer: str = "adam"
    cluster_loss_on: bool = True
    cl_loss_on: bool = True
    deterministic_q: bool = False
    hidden_dim: int | None = None
    out_dim: int | None = None
    proj_hidden_dim: int | None = None
    proj_dim: int | None = None

    # density stage
    components: int = 1
    variance_floor: float = 1e-6

    # evaluation stage
    fpr_budget: float = 0.05
    tpr_level: float = 0.95

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get("OODKIT_SEED")
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise UsageError(f"OODKIT_SEED must be an integer, got {env!r}")
        return 0

    def to_dict(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str, type_text: str):
    raw = raw.strip()
    optional = "None" in type_text
    if optional and raw.lower() in _NONE:
        return None
    base = type_text.replace("| None", "").strip()
    try:
        if base == "int":
            return int(raw)
        if base == "float":
            return float(raw)
        if base == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r} as {base}")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; returns typed values."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise UsageError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise UsageError(f"{source}:{lineno}: duplicate config key {key!r}")
        values[key] = _coerce(key, raw, _FIELD_TYPES[key])
    return values


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then file values, then overrides (e.g. command-line flags)."""
    values: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config {path!r}: {exc}")
        values.update(parse_config_text(text, source=str(path)))
    for key, val in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise UsageError(f"unknown config key {key!r}")
        if val is not None:
            values[key] = val
    return RunConfig(**values)
