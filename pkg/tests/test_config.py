import pytest
import yaml

from scalent.config import ConfigError, load_config, parse_config
from scalent.dynamics import BernoulliShift, CyclicRotation, ProductSystem

BASE = {
    "system": {"kind": "cyclic_rotation", "q": 5},
    "semimetric": {"kind": "cut", "breaks": [0.5]},
    "n_grid": [1, 2],
    "eps_grid": [0.3, 0.1],
    "enumerate": True,
}


def with_(**kw):
    return {**BASE, **kw}


def error_of(data) -> str:
    with pytest.raises(ConfigError) as e:
        parse_config(data)
    return str(e.value)


def test_minimal_config_and_defaults():
    cfg = parse_config(BASE)
    assert cfg.build_system() == CyclicRotation(5)
    assert cfg.estimator == "exact" and cfg.oracle_limit == 15 and cfg.workers == 1 and cfg.cache
    assert cfg.output.dir == "out" and cfg.output.name == "profile"


def test_unknown_keys_are_rejected_with_their_path():
    assert error_of(with_(colour="red")).startswith("colour:")
    msg = error_of(with_(system={"kind": "cyclic_rotation", "q": 5, "r": 1}))
    assert msg.startswith("system.r:")


def test_nested_field_path():
    data = with_(system={"kind": "product", "components": [
        {"kind": "cyclic_rotation", "q": 2}, {"kind": "bernoulli_shift", "L": 0}]},
        semimetric={"kind": "zero"})
    assert "system.components.1.L:" in error_of(data)


def test_unknown_kind():
    assert error_of(with_(system={"kind": "horseshoe"})).startswith("system")


@pytest.mark.parametrize("key,value", [
    ("n_grid", [2, 1]), ("n_grid", [0, 1]), ("n_grid", []),
    ("eps_grid", [0.1, 0.3]), ("eps_grid", [0.3, -0.1]),
])
def test_bad_grids(key, value):
    assert error_of(with_(**{key: value})).startswith(key)


def test_sampling_needs_N_and_seed():
    data = with_(enumerate=False, system={"kind": "torus_rotation"})
    assert error_of(data).startswith("N:")
    assert error_of({**data, "N": 10}).startswith("seed:")
    assert parse_config({**data, "N": 10, "seed": 0}).seed == 0


def test_enumerate_rules():
    assert error_of(with_(N=6)).startswith("N:")
    assert parse_config(with_(N=5)).N == 5
    msg = error_of(with_(system={"kind": "torus_rotation"}, semimetric={"kind": "arc"}))
    assert msg.startswith("enumerate:")


def test_coprime_step_and_probabilities():
    assert "coprime" in error_of(with_(system={"kind": "cyclic_rotation", "q": 6, "p": 2}))
    assert "probs" in error_of(with_(system={"kind": "bernoulli_shift", "probs": [0.5, 0.6]}))


def test_cut_needs_exactly_one_labeling():
    assert "exactly one" in error_of(with_(semimetric={"kind": "cut"}))
    assert "exactly one" in error_of(with_(semimetric={"kind": "cut", "breaks": [0.5], "position": 0}))


def test_weighted_sum_needs_matching_product():
    assert error_of(with_(semimetric={"kind": "weighted_sum", "components": [
        {"weight": 1.0, "semimetric": {"kind": "arc"}}]})).startswith("semimetric:")
    prod = {"kind": "product", "components": [{"kind": "cyclic_rotation", "q": 2},
                                              {"kind": "bernoulli_shift", "L": 3}]}
    one = {"kind": "weighted_sum", "components": [{"weight": 0.5, "semimetric": {"kind": "arc"}}]}
    assert error_of(with_(system=prod, semimetric=one)).startswith("semimetric.components:")
    two = {"kind": "weighted_sum", "components": [
        {"weight": 0.5, "semimetric": {"kind": "arc"}},
        {"weight": 0.25, "semimetric": {"kind": "cut", "position": 0}}]}
    cfg = parse_config(with_(system=prod, semimetric=two, n_grid=[1, 3]))
    assert cfg.build_system() == ProductSystem((CyclicRotation(2), BernoulliShift(2, None, 3)))


def test_n_beyond_orbit_depth():
    data = with_(system={"kind": "bernoulli_shift", "L": 4, "cyclic": False},
                 semimetric={"kind": "cut", "position": 0}, n_grid=[1, 5],
                 enumerate=False, N=10, seed=0)
    assert error_of(data).startswith("n_grid:")


def test_root_must_be_mapping():
    assert error_of([1, 2]).startswith("<root>")


def test_load_config_reads_yaml_and_applies_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({**BASE, "enumerate": False, "N": 5}))
    with pytest.raises(ConfigError, match="seed"):
        load_config(p)
    cfg = load_config(p, {"seed": 3, "workers": None, "estimator": "greedy"})
    assert cfg.seed == 3 and cfg.workers == 1 and cfg.estimator == "greedy"


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("system: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(bad)


def test_shipped_configs_parse():
    from pathlib import Path

    for p in sorted((Path(__file__).parent.parent / "configs").glob("*.yaml")):
        load_config(p)
