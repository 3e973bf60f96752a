import json

import pytest
from pydantic import ValidationError

from lanczos_kn.config import PhiPolicy, RunConfig, StateSpec, load_run_config, save_run_config
from lanczos_kn.errors import ConfigError


def test_defaults():
    cfg = RunConfig()
    assert cfg.m_max == 40
    assert cfg.checkpoints() == [10, 20, 30, 40]
    assert cfg.fixed_m == 40
    assert cfg.variants == ["gauss", "radau", "average"]
    assert cfg.problem is None


def test_checkpoints_keep_m_max():
    assert RunConfig(m_max=25, m_stride=10).checkpoints() == [10, 20, 25]
    assert RunConfig(m_max=5, m_stride=10).checkpoints() == [5]


def test_kn_needs_phi_policy():
    with pytest.raises(ValidationError):
        RunConfig(variants=["gauss", "kn"])
    cfg = RunConfig(variants=["kn"], phi_policy={"fixed": 2.0})
    assert cfg.phi_policy.fixed == 2.0


def test_phi_policy_exactly_one():
    with pytest.raises(ValidationError):
        PhiPolicy()
    with pytest.raises(ValidationError):
        PhiPolicy(fixed=1.0, optimize={})
    assert PhiPolicy(optimize={}).optimize.average_window == 5


def test_unknown_variant():
    with pytest.raises(ValidationError):
        RunConfig(variants=["lobatto"])


def test_state_damping():
    assert StateSpec().damping() == pytest.approx(0.3 / 200)
    assert StateSpec(epsilon=0.1).damping() == 0.1


def test_load_with_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"m_max": 12, "threads": 2, "output_dir": "a"}))
    cfg = load_run_config(path, {"threads": 3, "output_dir": None, "seed": 9})
    assert cfg.m_max == 12
    assert cfg.threads == 3
    assert cfg.output_dir == "a"
    assert cfg.seed == 9


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(bad)
    invalid = tmp_path / "invalid.json"
    invalid.write_text(json.dumps({"m_max": 0}))
    with pytest.raises(ConfigError):
        load_run_config(invalid)


def test_save_round_trip(tmp_path):
    cfg = RunConfig(m_max=7, shifts=[(1.0, 0.5)], phi_policy={"optimize": {"every": 2}})
    path = save_run_config(cfg, tmp_path)
    assert load_run_config(path) == cfg
