"""Run configuration: file parsing, precedence and the seed fallback."""
from __future__ import annotations

import pytest

from oodkit.config import RunConfig, load_config, parse_config_text
from oodkit.errors import UsageError


def test_defaults():
    cfg = RunConfig()
    assert cfg.k == 4 and cfg.gamma == 1.0 and cfg.tau == 0.5
    assert cfg.epochs == 15 and cfg.batch_size == 64
    assert cfg.protocol == "coverage" and cfg.coverage == 0.75
    assert cfg.components == 1 and cfg.fpr_budget == 0.05
    assert cfg.seed is None and cfg.hidden_dim is None


def test_parse_config_text_types_and_comments():
    text = """
    # a comment
    k = 8          # trailing comment
    gamma = 0.25
    cl_loss_on = false
    deterministic_q = YES
    hidden_dim = none
    method = nlr
    """
    values = parse_config_text(text)
    assert values == {
        "k": 8,
        "gamma": 0.25,
        "cl_loss_on": False,
        "deterministic_q": True,
        "hidden_dim": None,
        "method": "nlr",
    }


def test_parse_config_text_rejects_unknown_and_duplicate_keys():
    with pytest.raises(UsageError, match="unknown config key"):
        parse_config_text("not_a_key = 1")
    with pytest.raises(UsageError, match=":3: duplicate"):
        parse_config_text("k = 1\n\nk = 2")
    with pytest.raises(UsageError, match="expected key=value"):
        parse_config_text("just words")
    with pytest.raises(UsageError, match="cannot parse"):
        parse_config_text("k = not_an_int")
    with pytest.raises(UsageError, match="cannot parse"):
        parse_config_text("cl_loss_on = maybe")


def test_load_config_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("k = 8\ngamma = 0.5\n")
    cfg = load_config(str(path), overrides={"gamma": 2.0})
    assert cfg.k == 8          # file beats default
    assert cfg.gamma == 2.0    # flag beats file
    assert cfg.tau == 0.5      # default survives
    # a flag the user did not pass (None) must not mask the file value
    cfg = load_config(str(path), overrides={"k": None})
    assert cfg.k == 8


def test_load_config_errors(tmp_path):
    with pytest.raises(UsageError, match="cannot read config"):
        load_config(str(tmp_path / "missing.cfg"))
    with pytest.raises(UsageError, match="unknown config key"):
        load_config(None, overrides={"bogus": 1})


def test_resolved_seed_precedence(monkeypatch):
    monkeypatch.delenv("OODKIT_SEED", raising=False)
    assert RunConfig().resolved_seed() == 0
    assert RunConfig(seed=7).resolved_seed() == 7
    monkeypatch.setenv("OODKIT_SEED", "42")
    assert RunConfig().resolved_seed() == 42
    assert RunConfig(seed=7).resolved_seed() == 7  # explicit beats env
    monkeypatch.setenv("OODKIT_SEED", "not-a-number")
    with pytest.raises(UsageError, match="OODKIT_SEED"):
        RunConfig().resolved_seed()


def test_to_dict_round_trips_into_constructor():
    cfg = RunConfig(k=6, gamma=0.1, method="lr")
    again = RunConfig(**cfg.to_dict())
    assert again == cfg
