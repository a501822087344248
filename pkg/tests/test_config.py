import numpy as np
import pytest

from diffattack.config import RunConfig, dump_config, load_run_config, parse_config_text, substream


def test_parse_basic_keys():
    values = parse_config_text("seed=3\nbudget=25.5\nstrategy=pagerank\n\n# comment\n")
    assert values == {"seed": 3, "budget": 25.5, "strategy": "pagerank"}


def test_parse_tuples():
    values = parse_config_text("budgets=10,20,30\nhidden_dims=8,4\n")
    assert values["budgets"] == (10.0, 20.0, 30.0)
    assert values["hidden_dims"] == (8, 4)


def test_parse_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config_text("budgett=5\n")


def test_parse_rejects_bad_line():
    with pytest.raises(ValueError, match="key=value"):
        parse_config_text("just some words\n")


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed=1\nbudget=10\n")
    cfg = load_run_config(path, {"budget": 99.0})
    assert cfg.seed == 1
    assert cfg.budget == 99.0


def test_require_missing_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("data=/nonexistent/speeds.csv\n")
    with pytest.raises(ValueError, match="not found"):
        load_run_config(path, require=("data",))


def test_require_unset_key():
    with pytest.raises(ValueError, match="required"):
        load_run_config(None, require=("adjacency",))


def test_dump_round_trips():
    cfg = RunConfig(seed=7, budgets=(5.0, 10.0), hidden_dims=(3, 2), strategy="spsa")
    rebuilt = RunConfig(**parse_config_text(dump_config(cfg)))
    assert rebuilt == cfg


def test_substream_deterministic_and_label_separated():
    a1 = substream(42, "spsa").integers(0, 1000, size=5)
    a2 = substream(42, "spsa").integers(0, 1000, size=5)
    b = substream(42, "selection").integers(0, 1000, size=5)
    c = substream(43, "spsa").integers(0, 1000, size=5)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)
