#!/usr/bin/env python3
"""
Tests for configuration lookup: defaults, environment overrides and type conversion.
"""

import pytest

from utils.config_utils import Config, get_config


def test_defaults():
    assert Config.get("NM_MAX_EVALS") == 4000
    assert Config.get("VALIDITY_TOL") == 1e-8
    assert Config.get("MISSING_SENTINEL") == "NA"
    assert Config.get("BOOTSTRAP_MAX_FAILURE") == 0.5


def test_prefixed_override_is_converted(monkeypatch):
    monkeypatch.setenv("MAXSTABLE_NM_MAX_EVALS", "250")
    monkeypatch.setenv("MAXSTABLE_FD_REL_STEP", "1e-3")
    assert get_config("NM_MAX_EVALS") == 250
    assert get_config("FD_REL_STEP") == pytest.approx(1e-3)


def test_unprefixed_key_is_a_fallback(monkeypatch):
    monkeypatch.delenv("MAXSTABLE_NM_RESTARTS", raising=False)
    monkeypatch.setenv("NM_RESTARTS", "5")
    assert get_config("NM_RESTARTS") == 5
    monkeypatch.setenv("MAXSTABLE_NM_RESTARTS", "2")
    assert get_config("NM_RESTARTS") == 2


def test_explicit_default_sets_the_type(monkeypatch):
    monkeypatch.setenv("MAXSTABLE_SOME_COUNT", "7.0")
    assert get_config("SOME_COUNT", 1) == 7
    assert get_config("UNSET_KEY_FOR_TESTS", 0.25) == 0.25


def test_bad_value_falls_back_to_default(monkeypatch):
    monkeypatch.setenv("MAXSTABLE_NM_MAX_EVALS", "lots")
    assert get_config("NM_MAX_EVALS") == 4000


def test_get_all_covers_every_default():
    values = Config.get_all()
    assert set(values) == set(Config.DEFAULTS)
    assert values["N_WORKERS"] == 1
