import textwrap
from pathlib import Path

import pytest

from worldcache.config import CliConfig, RunConfig, apply_overrides, coerce_value, load_config, parse_override
from worldcache.errors import ConfigError
from worldcache.policy import AtsMode, OfaOperator
from worldcache.sim import ScenarioKind
from worldcache.types import TensorShape


def test_defaults_keep_step_counts_aligned():
    config = CliConfig()
    assert config.scenario.total_steps == config.policy.total_steps == 35
    shorter = config.with_value("policy.total_steps", 12)
    assert shorter.scenario.total_steps == 12
    assert config.policy.total_steps == 35


def test_load_toml_and_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        textwrap.dedent(
            """
            [policy]
            tau0 = 0.1
            ats_mode = "linear"

            [flow]
            window_radius = 3

            [scenario]
            kind = "curved"
            shape = [1, 2, 16, 16, 4]

            [run]
            closed_loop = false
            """
        ),
        encoding="utf-8",
    )
    config = load_config(path, ["policy.alpha=0.5", "--scenario.seed=4", "policy.ofa_operator=osi"])
    assert config.policy.tau0 == 0.1 and config.policy.alpha == 0.5
    assert config.policy.ats_mode is AtsMode.LINEAR
    assert config.policy.ofa_operator is OfaOperator.OSI
    assert config.flow.window_radius == 3
    assert config.scenario.kind is ScenarioKind.CURVED and config.scenario.seed == 4
    assert config.scenario.shape == TensorShape(1, 2, 16, 16, 4)
    assert config.run.closed_loop is False


def test_unknown_keys_and_sections(tmp_path):
    with pytest.raises(ConfigError, match="Unknown key 'policy.tau'"):
        load_config(None, ["policy.tau=0.1"])
    with pytest.raises(ConfigError):
        load_config(None, ["model.depth=4"])
    path = tmp_path / "bad.toml"
    path.write_text("[engine]\nworkers = 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_bad_values_are_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(None, ["policy.tau0=fast"])
    with pytest.raises(ConfigError):
        load_config(None, ["policy.warmup_steps=1"])
    with pytest.raises(ConfigError):
        load_config(None, ["scenario.kind=spiral"])
    with pytest.raises(ConfigError):
        load_config(None, ["scenario.total_steps=10"])
    with pytest.raises(ConfigError):
        load_config(None, ["run.workers=0"])
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    broken = tmp_path / "broken.toml"
    broken.write_text("[policy\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)


def test_coerce_value():
    assert coerce_value(bool, "yes", "x") is True
    assert coerce_value(bool, "0", "x") is False
    assert coerce_value(int, "7", "x") == 7
    assert coerce_value(float, "1e-3", "x") == 0.001
    assert coerce_value(TensorShape, "1x2x8x8x4", "x") == TensorShape(1, 2, 8, 8, 4)
    assert coerce_value(AtsMode, "off", "x") is AtsMode.OFF
    with pytest.raises(ConfigError):
        coerce_value(int, 2.5, "x")
    with pytest.raises(ConfigError):
        coerce_value(bool, "maybe", "x")


def test_optional_scale_accepts_none():
    config = apply_overrides(CliConfig(), {"scenario.base_scale": "0.1"})
    assert config.scenario.resolved_base_scale == 0.1
    config = apply_overrides(config, {"scenario.base_scale": "none"})
    assert config.scenario.base_scale is None


def test_parse_override():
    assert parse_override("--run.out_dir=out/a=b") == ("run.out_dir", "out/a=b")
    with pytest.raises(ConfigError):
        parse_override("policy.tau0")


def test_to_dict_is_plain_data():
    document = CliConfig(run=RunConfig(workers=2)).to_dict()
    assert document["policy"]["ats_mode"] == "quadratic"
    assert document["scenario"]["shape"] == [1, 4, 32, 32, 16]
    assert document["run"]["workers"] == 2


def test_shipped_config_matches_defaults():
    path = Path(__file__).resolve().parents[1] / "configs" / "default.toml"
    assert load_config(path).to_dict() == CliConfig().to_dict()
