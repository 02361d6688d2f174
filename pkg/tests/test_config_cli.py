import json

import pytest

from pcsqkd.cli import main
from pcsqkd.config import DEFAULTS, ExperimentConfig, load_config, parse_assignment
from pcsqkd.errors import ConfigError

PINNED = ["--set", "constellation.nu=0.0198", "--set", "security.eps_prep=1e-9"]


def test_defaults_are_typed():
    cfg = ExperimentConfig()
    assert cfg["constellation.cardinality"] == 1024
    assert cfg["channel.eta"] == 0.6
    assert cfg["dsp.cma_taps"] == 9
    assert set(dict(cfg.items())) == set(DEFAULTS)


def test_overrides_are_coerced():
    cfg = load_config(assignments=["run.blocks=5", "channel.eta = 0.55", "channel.shot_noise=off",
                                   "run.symbols_per_block=2e4"])
    assert cfg["run.blocks"] == 5 and cfg["channel.eta"] == 0.55
    assert cfg["channel.shot_noise"] is False
    assert cfg["run.symbols_per_block"] == 20000


@pytest.mark.parametrize("bad", ["nope.key=1", "run.blocks=1.5", "channel.eta=abc", "channel.shot_noise=maybe"])
def test_bad_assignments_raise(bad):
    with pytest.raises(ConfigError):
        load_config(assignments=[bad])


def test_parse_assignment():
    assert parse_assignment("a.b = c=d") == ("a.b", "c=d")
    with pytest.raises(ConfigError):
        parse_assignment("novalue")


def test_config_file_with_comments(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# link\nchannel.eta = 0.5  # detector\n\nrun.blocks = 3\n")
    cfg = load_config(path, ["run.blocks=4"])
    assert cfg["channel.eta"] == 0.5 and cfg["run.blocks"] == 4
    path.write_text("channel.eta\n")
    with pytest.raises(ConfigError, match="run.cfg:1"):
        load_config(path)


def test_validate_surfaces_parameter_errors():
    with pytest.raises(ConfigError):
        load_config(assignments=["channel.eta=1.5"]).validate()
    with pytest.raises(ConfigError):
        load_config(assignments=["dsp.cma_taps=8"]).validate()
    with pytest.raises(ConfigError):
        load_config(assignments=["keyrate.hold=T"]).validate()
    assert load_config().validate()["run.blocks"] == 20


def test_config_hash_tracks_values():
    a = load_config(assignments=["run.blocks=3"])
    assert a.config_hash == load_config(assignments=["run.blocks=3"]).config_hash
    assert a.config_hash != load_config().config_hash
    assert a.with_overrides(run__blocks=3).config_hash == a.config_hash


@pytest.mark.parametrize("argv", [
    ["keyrate", "--set", "bogus.key=1"],
    ["keyrate", "--set", "channel.eta=2"],
    ["keyrate", "--config", "/nonexistent/file.cfg"],
    ["keyrate", "--set", "constellation.nu=fast"],
])
def test_cli_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_keyrate_json(capsys):
    assert main(["keyrate", *PINNED]) == 0
    out = json.loads(capsys.readouterr().out)
    fin, asy = out["finite-size"], out["asymptotic"]
    assert fin["secret_fraction"] < asy["secret_fraction"]
    assert fin["xi_B_used"] > asy["xi_B_used"] == pytest.approx(0.012)
    assert out["anchors"]["reach_in_window"] and out["anchors"]["skr_window_overlap"]
    assert out["eps_prep"] == 1e-9


def test_cli_distance_sweep(tmp_path, capsys):
    assert main(["distance-sweep", *PINNED, "--set", "keyrate.distances_km=0:20:5",
                 "--output-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "distance_sweep.csv").read_text().splitlines()
    assert lines[0].startswith("# ")
    assert len(lines) == 2 + 5


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
