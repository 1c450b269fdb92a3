import json

import pytest

from core.config import Config, load_config, load_constants
from core.errors import ConfigError
from core.partition import MultilevelPartition


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("BMO_SPLINES_SEED", raising=False)


def test_defaults_are_valid():
    config = load_config()
    assert config.k == 2
    assert config.window == (-1.0, 2.0)
    assert config.alpha == [0.5, 1.0]


def test_hash_is_stable_and_short():
    a, b = Config(), Config()
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 16
    int(a.config_hash(), 16)


def test_hash_ignores_output_and_workers():
    base = Config().config_hash()
    assert Config(output_dir="elsewhere", n_jobs=4).config_hash() == base
    assert Config(k=3).config_hash() != base
    assert Config(seed=1).config_hash() != base


@pytest.mark.parametrize(
    "overrides",
    [{"k": 5}, {"jitter": 0.3}, {"n_grid": [4, 4]}, {"alpha": [0.0]}, {"eps_grid": [0.1]}, {"colour": "red"}],
)
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides=overrides)


def test_precedence(tmp_path, monkeypatch):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 3, "L": 5, "k": 3}))
    assert load_config(str(path)).seed == 3
    monkeypatch.setenv("BMO_SPLINES_SEED", "7")
    config = load_config(str(path), {"L": 6, "seed": None})
    assert (config.seed, config.L, config.k) == (7, 6, 3)
    assert load_config(str(path), {"seed": 11}).seed == 11


def test_bad_seed_env(monkeypatch):
    monkeypatch.setenv("BMO_SPLINES_SEED", "seven")
    with pytest.raises(ConfigError, match="BMO_SPLINES_SEED"):
        load_config()


def test_unreadable_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(path))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


def test_build_partition():
    P = Config(L=3, partition="perturbed", jitter=0.1, seed=2).build_partition()
    assert isinstance(P, MultilevelPartition)
    assert P.L == 3 and P.k == 2
    Q = Config(L=3, partition="perturbed", jitter=0.1, seed=2).build_partition()
    assert (P.knots(3) == Q.knots(3)).all()


def test_constants_are_versioned():
    constants = load_constants()
    assert constants["version"] == 1
    assert constants["near_best_A"] == 6
