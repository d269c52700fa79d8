import json
from pathlib import Path

import pytest

from yieldcast.cli import main
from yieldcast.config import RunConfig, load_config, parse_config_text
from yieldcast.errors import ConfigError
from yieldcast.persist import load
from yieldcast.train import read_trial_log

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TINY = CONFIGS / "tiny.cfg"


# ---------------------------------------------------------------- config


def test_defaults_round_trip_through_text():
    cfg = RunConfig()
    again = load_config(None, parse_config_text(cfg.to_text()))
    assert again == cfg and again.digest() == cfg.digest()


def test_overrides_and_parsing():
    cfg = load_config(TINY, {"hidden": "16,8", "test_years": "2013-2014", "augment_strict": "yes"})
    assert cfg.hidden == (16, 8) and cfg.test_years == (2013, 2014) and cfg.augment_strict
    assert cfg.hyperparams().hidden_sizes == (16, 8)
    assert cfg.search_space().max_epochs == 2
    assert cfg.path("yields") == Path("runs/tiny/data/yield.csv")
    assert load_config(TINY, {"data_dir": "/d"}).path("pdsi") == Path("/d/pdsi.csv")
    assert cfg.digest() != load_config(TINY).digest()


@pytest.mark.parametrize(
    "overrides,field",
    [
        ({"colour": "red"}, "colour"),
        ({"hidden": "eight"}, "hidden"),
        ({"trend": "linear"}, "trend"),
        ({"time_len": "100"}, "time_len"),
        ({"test_years": "2010-2014"}, "test_years"),
        ({"base_year": "2013"}, "base_year"),
        ({"train_years": "2012-2008"}, "train_years"),
        ({"learning_rate": "0.5"}, "hyperparameters"),
    ],
)
def test_bad_config_names_field(overrides, field):
    with pytest.raises(ConfigError, match=field):
        load_config(TINY, overrides)


def test_config_text_errors():
    with pytest.raises(ConfigError):
        parse_config_text("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")
    assert parse_config_text("# comment\n\nseed = 3\n") == {"seed": "3"}


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.cfg")):
        load_config(path)


# ---------------------------------------------------------------- command line


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["fly"]) == 2
    assert main(["train", "--config", str(TINY), "--set", "nonsense"]) == 2
    assert main(["train", "--config", str(TINY), "--set", "colour=red"]) == 2
    err = capsys.readouterr().err
    assert "colour" in err and err.startswith("yieldcast:")


def test_missing_data_exit_3(tmp_path):
    assert main(["ingest", "--config", str(TINY), "--out", str(tmp_path)]) == 3
    assert main(["train", "--config", str(TINY), "--out", str(tmp_path)]) == 3


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--models", "2"]) == 0
    assert "0 of 2 above" in capsys.readouterr().out


def test_end_to_end_on_tiny_config(tmp_path, capsys):
    out = tmp_path / "run"
    base = ["--config", str(TINY), "--out", str(out)]
    for cmd in ("synth", "ingest", "featurize", "select", "train", "predict", "evaluate"):
        assert main([cmd, *base]) == 0, cmd
    assert main(["predict", *base, "--month", "aug"]) == 0
    assert main(["predict", *base, "--month", "jan"]) == 2
    ckpt = load(out / "model.yldc")
    assert ckpt.time_len == 214 and ckpt.feature_set.name == "best10"
    summary = json.loads((out / "eval_final" / "summary.json").read_text())
    assert summary["state_weighting"] == "acres" and summary["usda_comparison"] == []
    manifest = json.loads((out / "manifest_train.json").read_text())
    assert set(manifest["artifacts"]) == {"model.yldc", "train_log.csv"}
    assert manifest["config_hash"] == load_config(TINY, {"output_dir": str(out)}).digest()
    assert len((out / "ranking.csv").read_text().splitlines()) == 11
    assert len((out / "predictions_final.csv").read_text().splitlines()) == 1 + 6 * 4
    # rerunning with the same config reproduces the same artifacts
    first = manifest["artifacts"]
    assert main(["train", *base]) == 0
    assert json.loads((out / "manifest_train.json").read_text())["artifacts"] == first


def test_search_command_writes_trial_log(tmp_path):
    out = tmp_path / "run"
    base = ["--config", str(TINY), "--out", str(out)]
    for cmd in ("synth", "featurize"):
        assert main([cmd, *base]) == 0
    assert main(["search", *base, "--trials", "3", "--seed", "5"]) == 0
    rows = read_trial_log(out / "trials.csv")
    assert len(rows) == 3
    assert load(out / "model.yldc").hyperparams.max_epochs == 2
