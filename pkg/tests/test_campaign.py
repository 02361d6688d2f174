import numpy as np
import pytest

from pcsqkd.campaign import BLOCK_COLUMNS, block_seeds, run_b2b_snr, run_block_campaign, run_sweeps
from pcsqkd.cli import main
from pcsqkd.config import load_config

SMALL = ["constellation.nu=0.0198", "security.eps_prep=1e-9", "run.symbols_per_block=20000", "run.blocks=3"]


def small(*extra):
    return load_config(assignments=SMALL + list(extra)).validate()


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    out = tmp_path_factory.mktemp("campaign")
    rows, summary = run_block_campaign(small(), out)
    return out, rows, summary


def test_block_seeds_independent_and_stable():
    a = block_seeds(7, 0)
    assert a == block_seeds(7, 0)
    assert a != block_seeds(7, 1) and a != block_seeds(8, 0)
    assert len({a.symbols, a.pilots, a.channel, a.calibration}) == 4


def test_campaign_outputs(campaign):
    out, rows, summary = campaign
    assert [r["block"] for r in rows] == [0, 1, 2]
    assert all(r["status"] == "ok" for r in rows)
    lines = (out / "blocks.csv").read_text().splitlines()
    assert lines[0].startswith("# pcsqkd=") and "config_hash=" in lines[0]
    assert lines[1].split(",") == BLOCK_COLUMNS
    assert summary["blocks_ok"] == 3 and summary["failed_blocks"] == []
    assert 0 < summary["xi_B_hat"]["mean"] < 0.04
    assert summary["T_hat"]["mean"] == pytest.approx(10 ** -0.22, abs=0.03)
    assert "timestamp" not in (out / "summary.json").read_text()


def test_campaign_byte_identical_rerun(campaign, tmp_path):
    out, _, _ = campaign
    run_block_campaign(small(), tmp_path)
    for name in ("blocks.csv", "summary.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_campaign_independent_of_worker_count(campaign, tmp_path):
    out, _, _ = campaign
    run_block_campaign(small(), tmp_path, workers=2)
    assert (tmp_path / "blocks.csv").read_bytes() == (out / "blocks.csv").read_bytes()


def test_master_seed_changes_results(campaign, tmp_path):
    _, rows, _ = campaign
    other, _ = run_block_campaign(small("run.blocks=1", "run.master_seed=1"), tmp_path)
    assert other[0]["xi_B_hat"] != rows[0]["xi_B_hat"]


def test_hostile_block_isolated(tmp_path, capsys):
    argv = ["campaign", "--output-dir", str(tmp_path), "--set", "run.hostile_blocks=1", "--blocks", "2"]
    for kv in SMALL[:-1]:
        argv += ["--set", kv]
    assert main(argv) == 3
    text = (tmp_path / "blocks.csv").read_text()
    assert "EqualizerDivergenceError" in text
    rows = text.splitlines()[2:]
    assert rows[0].split(",")[1] == "ok"


def test_b2b_penalty_small():
    rows = run_b2b_snr(small(), snr_grid=[0.0, 10.0])
    for r in rows[:2]:
        assert abs(r["penalty_db"]) < 0.5
    assert rows[-1]["snr_target_db"] == "off" and rows[-1]["snr_dsp_db"] > 30


def test_rolloff_sweep_trend(tmp_path):
    rows = run_sweeps(small("sweep.rolloffs=0,0.4"), "rolloff", tmp_path)
    assert rows[0]["xi_B_hat"] > rows[1]["xi_B_hat"]
    assert (tmp_path / "rolloff_sweep.csv").exists()


def test_distance_sweep_rows(tmp_path):
    rows = run_sweeps(small("keyrate.distances_km=0:30:2"), "distance", tmp_path)
    assert len(rows) == 16
    lines = (tmp_path / "distance_sweep.csv").read_text().splitlines()
    header = lines[1].split(",")
    assert header[0] == "distance_km"
    sf = [float(line.split(",")[header.index("SF_finite")]) for line in lines[2:]]
    assert sf[0] > sf[5] >= sf[-1]


def test_prep_error_sweeps():
    rows = run_sweeps(small("constellation.cardinality=16", "sweep.V_As=1,3,5"), "VA")
    eps = [r["eps_prep"] for r in rows]
    assert eps == sorted(eps)
    rows = run_sweeps(small("sweep.cardinalities=4,16,64"), "cardinality")
    eps = [r["eps_prep"] for r in rows]
    assert eps == sorted(eps, reverse=True)
    assert all(r["truncation_bound"] < r["eps_prep"] for r in rows)
