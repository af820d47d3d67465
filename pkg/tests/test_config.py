import json

import pytest

from prandtl_blowup.config import ConfigError, load_run_config, save_run_config
from prandtl_blowup.models import Formulation, RunConfig, Scheme, WeightSpec


def test_empty_config_gives_defaults():
    config = RunConfig.from_dict({})
    assert config == RunConfig()
    assert config.kappa == 1.0
    assert config.amplitude == 10.0
    assert config.weight == "paper-default"
    assert config.lift_times == [0.0, 0.1, 1.0, 5.0, 10.0]


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="'kapa'"):
        RunConfig.from_dict({"kapa": 1.0})


@pytest.mark.parametrize(
    "data",
    [
        {"kappa": -1.0},
        {"kappa": "one"},
        {"kappa": True},
        {"n": 10.5},
        {"amplitude": "big"},
        {"amplitude": -2.0},
        {"scheme": "rk4"},
        {"formulation": "c"},
        {"weight": "custom"},
        {"probes": 0.5},
        {"threshold_margin": 0.5},
        {"y_max": float("inf")},
    ],
)
def test_invalid_values_rejected(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_types_are_coerced():
    config = RunConfig.from_dict({"kappa": 2, "n": 800.0, "amplitudes": [1, 2.5], "amplitude": "auto"})
    assert isinstance(config.kappa, float)
    assert config.n == 800 and isinstance(config.n, int)
    assert config.amplitudes == [1.0, 2.5]
    assert config.amplitude == "auto"


def test_solver_config_view():
    config = RunConfig.from_dict({"scheme": "imex1", "formulation": "a", "y_max": 20.0, "n": 500, "probes": [1.0]})
    solver = config.solver_config(t_max=3.0)
    assert solver.scheme is Scheme.IMEX1
    assert solver.formulation is Formulation.A
    assert solver.t_max == 3.0
    assert solver.probes == (1.0,)
    assert solver.to_dict()["scheme"] == "imex1"


def test_solver_config_errors_become_config_errors():
    config = RunConfig.from_dict({"dt_min": 1e-2, "dt_init": 1e-3})
    with pytest.raises(ConfigError, match="dt_min"):
        config.solver_config()


def test_weight_spec_view():
    assert RunConfig.from_dict({"weight": None}).weight_spec() is None
    spec = RunConfig.from_dict({"weight_B": 60.0}).weight_spec()
    assert spec == WeightSpec(B=60.0)
    assert spec.r == 2.0


def test_lift_params_view():
    config = RunConfig.from_dict({"kappa": 0.5})
    assert config.lift_params().kappa == 0.5
    assert config.lift_params(kappa=2.0).kappa == 2.0


def test_save_and_load(tmp_path):
    path = tmp_path / "run.json"
    config = RunConfig.from_dict({"kappa": 0.5, "amplitudes": [1.0, 2.0], "weight": None, "profile": "bump.csv"})
    save_run_config(config, path)
    assert json.loads(path.read_text(encoding="utf-8"))["kappa"] == 0.5
    assert load_run_config(path) == config


def test_load_defaults_without_path():
    assert load_run_config(None) == RunConfig()


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_run_config(broken)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON object"):
        load_run_config(listed)
