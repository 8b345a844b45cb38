import pytest

from nesr.config import RunConfig, parse_pairs


def test_default_settings():
    c = RunConfig()
    assert (c.popsize, c.stages, c.generations) == (10, 3, 20)
    assert (c.n_newborn, c.n_tune, c.n_finetune, c.budget) == (10, 100, 50, 90000)
    assert c.n_offspring == 20
    assert c.adam.lr == 0.01 and c.loss.reg_knot == 0.01 and c.theta_a == 0.01


def test_text_roundtrip():
    c = RunConfig(problem="magic", seed=7, reg_weight=0.002)
    assert RunConfig.from_text(c.to_text()) == c


def test_parse_pairs():
    text = "# comment\nproblem = magman\n\n popsize=4  # inline\n"
    assert parse_pairs(text) == {"problem": "magman", "popsize": "4"}
    with pytest.raises(ValueError):
        parse_pairs("popsize 4")
    with pytest.raises(ValueError):
        parse_pairs("a = 1\na = 2")
    with pytest.raises(ValueError):
        parse_pairs(" = 3")


def test_overrides_and_validation(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("problem = magic\nruns = 3\n")
    c = RunConfig.from_file(path, runs="5")
    assert c.problem == "magic" and c.runs == 5
    with pytest.raises(KeyError):
        RunConfig.from_mapping({"popsize_": "3"})
    with pytest.raises(ValueError):
        RunConfig.from_mapping({"popsize": "three"})
    with pytest.raises(ValueError):
        RunConfig(p_h=1.5)
    with pytest.raises(ValueError):
        RunConfig(popsize=0)
    with pytest.raises(ValueError):
        RunConfig(archive_objectives="all")
