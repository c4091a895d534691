"""Configuration loading, validation, and template resolution."""

from __future__ import annotations

import json

import pytest

from alignrag.config import Config, ENV_CONFIG, load_config, resolve_config
from alignrag.errors import ConfigError
from alignrag.prompts import DEFAULT_TEMPLATES


class TestDefaults:
    def test_defaults_validate(self):
        Config().validate()

    def test_default_knobs(self):
        cfg = Config()
        assert cfg.alpha == 0.5
        assert cfg.base_size == 10
        assert cfg.mip_k == 5
        assert cfg.final_k == 5
        assert cfg.strategies == ((1, 1), (2, 1), (1, 2))
        assert cfg.scorer == "mock"
        assert cfg.provider == "hash"


class TestValidation:
    def test_unknown_provider(self):
        with pytest.raises(ConfigError, match="provider"):
            Config(provider="dense-api").validate()

    def test_file_provider_needs_vectors(self, tmp_path):
        with pytest.raises(ConfigError, match="vector_file"):
            Config(provider="file").validate()
        Config(provider="file", vector_file=str(tmp_path / "v.jsonl")).validate()

    def test_unknown_scorer(self):
        with pytest.raises(ConfigError, match="scorer"):
            Config(scorer="gpt").validate()

    def test_unit_interval_knobs(self):
        for name in ("alpha", "compat_w", "vote_lambda", "bm25_b"):
            with pytest.raises(ConfigError, match=name):
                Config(**{name: 1.5}).validate()

    def test_negative_k1(self):
        with pytest.raises(ConfigError, match="bm25_k1"):
            Config(bm25_k1=-0.1).validate()

    def test_positive_integer_knobs(self):
        for name in ("embed_dim", "base_size", "mip_k", "final_k", "jobs"):
            with pytest.raises(ConfigError, match=name):
                Config(**{name: 0}).validate()
        with pytest.raises(ConfigError, match="beam_width"):
            Config(beam_width=2.5).validate()  # non-integer rejected too

    def test_strategies(self):
        with pytest.raises(ConfigError, match="strategies"):
            Config(strategies=()).validate()
        with pytest.raises(ConfigError, match="strategy"):
            Config(strategies=((0, 1),)).validate()
        with pytest.raises(ConfigError, match="strategy"):
            Config(strategies=((1, 2, 3),)).validate()

    def test_unknown_template_name(self):
        with pytest.raises(ConfigError, match="template"):
            Config(template_files={"mystery": "x.txt"}).validate()


class TestLoadConfig:
    def write(self, tmp_path, payload) -> str:
        path = tmp_path / "config.json"
        path.write_text(
            payload if isinstance(payload, str) else json.dumps(payload)
        )
        return str(path)

    def test_round_trip(self, tmp_path):
        path = self.write(
            tmp_path,
            {"alpha": 0.25, "base_size": 4, "strategies": [[1, 1], [3, 2]]},
        )
        cfg = load_config(path)
        assert cfg.alpha == 0.25
        assert cfg.base_size == 4
        assert cfg.strategies == ((1, 1), (3, 2))  # lists become tuples

    def test_unknown_key(self, tmp_path):
        path = self.write(tmp_path, {"alpa": 0.25})
        with pytest.raises(ConfigError, match="alpa"):
            load_config(path)

    def test_invalid_json(self, tmp_path):
        path = self.write(tmp_path, "{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_non_object(self, tmp_path):
        path = self.write(tmp_path, [1, 2])
        with pytest.raises(ConfigError, match="object"):
            load_config(path)

    def test_values_validated_on_load(self, tmp_path):
        path = self.write(tmp_path, {"alpha": 2.0})
        with pytest.raises(ConfigError, match="alpha"):
            load_config(path)


class TestResolveConfig:
    def test_explicit_path_wins(self, tmp_path, monkeypatch):
        explicit = tmp_path / "a.json"
        explicit.write_text(json.dumps({"alpha": 0.1}))
        fallback = tmp_path / "b.json"
        fallback.write_text(json.dumps({"alpha": 0.9}))
        monkeypatch.setenv(ENV_CONFIG, str(fallback))
        assert resolve_config(str(explicit)).alpha == 0.1

    def test_environment_fallback(self, tmp_path, monkeypatch):
        fallback = tmp_path / "b.json"
        fallback.write_text(json.dumps({"alpha": 0.9}))
        monkeypatch.setenv(ENV_CONFIG, str(fallback))
        assert resolve_config(None).alpha == 0.9

    def test_defaults_when_unset(self, monkeypatch):
        monkeypatch.delenv(ENV_CONFIG, raising=False)
        assert resolve_config(None).alpha == 0.5

    def test_empty_environment_value_ignored(self, monkeypatch):
        monkeypatch.setenv(ENV_CONFIG, "")
        assert resolve_config(None).alpha == 0.5


class TestTemplates:
    def test_defaults_cover_all_stages(self):
        assert set(DEFAULT_TEMPLATES) == {
            "keyword",
            "align",
            "verify",
            "decompose",
            "react",
        }
        assert Config().templates() == DEFAULT_TEMPLATES

    def test_file_override(self, tmp_path):
        override = tmp_path / "keyword.txt"
        override.write_text("custom {user_question} keywords:\n")
        cfg = Config(template_files={"keyword": str(override)})
        cfg.validate()
        resolved = cfg.templates()
        assert resolved["keyword"] == "custom {user_question} keywords:"
        assert resolved["align"] == DEFAULT_TEMPLATES["align"]
