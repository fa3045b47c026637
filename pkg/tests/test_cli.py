"""Command-line interface: subcommands, artifacts, exit codes."""

import json

import pytest
import yaml

from urasim.cli import main

TINY_YAML = {
    "m_v": 2,
    "m_h": 4,
    "n": 40,
    "j_bits": 6,
    "payload_bits": 12,
    "k_active": 3,
    "snr_db": [22.0, 28.0],
    "trials": 2,
    "master_seed": 11,
    "channel_mode": "planted",
    "normalize_user_energy": True,
    "gamp": {"t_max": 15, "t_mrf": 2},
}


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(TINY_YAML))
    return path


def test_trial_subcommand(tmp_path, config_path, capsys):
    out = tmp_path / "out"
    code = main(["trial", "--config", str(config_path), "--out", str(out), "--trace"])
    assert code == 0
    assert (out / "trial_record.csv").exists()
    assert (out / "trial_record.jsonl").exists()
    assert (out / "trial_trace.csv").exists()
    assert "p_e=" in capsys.readouterr().out


def test_trial_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("bogus_key: 3\n")
    assert main(["trial", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_trial_unparsable_yaml_exit_code(tmp_path):
    bad = tmp_path / "broken.yaml"
    bad.write_text("snr_db: [1, 2\n")
    assert main(["trial", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_sweep_report_round_trip(tmp_path, config_path, capsys):
    out = tmp_path / "sweep_out"
    code = main(["sweep", "--config", str(config_path), "--out", str(out)])
    assert code == 0
    table = out / "sweep.csv"
    assert table.exists()
    sidecar = json.loads((out / "sweep_config.json").read_text())
    assert sidecar["axis"] == "snr_db"
    records = (out / "sweep_records.jsonl").read_text().strip().splitlines()
    assert len(records) == 4  # 2 SNR points x 2 trials

    # resume: a second run adds nothing new
    code = main(["sweep", "--config", str(config_path), "--out", str(out)])
    assert code == 0
    records_after = (out / "sweep_records.jsonl").read_text().strip().splitlines()
    assert len(records_after) == 4

    code = main(["report", "--input", str(table)])
    assert code == 0
    assert (out / "sweep_error_rates.png").exists()
    assert (out / "sweep_nmse.png").exists()


def test_oracle_subcommand_subset(capsys):
    code = main(["oracle", "--suite", "hungarian"])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("[PASS]") == 1


def test_oracle_unknown_suite():
    assert main(["oracle", "--suite", "nonsense"]) == 1


def test_report_rejects_non_sweep_file(tmp_path):
    path = tmp_path / "not_a_sweep.csv"
    path.write_text("a,b\n1,2\n")
    assert main(["report", "--input", str(path)]) == 1
