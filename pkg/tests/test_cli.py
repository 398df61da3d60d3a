import json

import numpy as np
import pytest

from ticketbench.cli import main, read_config
from ticketbench.harness import read_tsv


def test_missing_task_is_usage_error(capsys):
    assert main(["prune", "--depth", "5"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert main(["theory", "--task", "relu", "--bogus"]) != 0
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["prune", "--task", "relu", "--method", "obd"],
    ["prune", "--task", "relu", "--strategy", "lottery"],
    ["prune", "--task", "relu", "--sparsity", "2"],
    ["prune", "--task", "torus"],
    ["frobnicate"],
])
def test_bad_values(argv, capsys):
    assert main(argv) == 2


def test_theory_table(capsys):
    assert main(["theory", "--task", "relu", "--depth", "5", "--width", "100", "--eps", "0.1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("layer\t")
    assert len([l for l in out if l[:1].isdigit()]) == 5
    assert any("relu path probability" in l for l in out)


def test_plant_report(tmp_path, capsys):
    out = tmp_path / "p.json"
    net = tmp_path / "net.json"
    assert main(["plant", "--task", "circle", "--seed", "3", "--out", str(out), "--net-out", str(net)]) == 0
    doc = json.loads(out.read_text())
    assert doc["roundtrip_max_error"] < 1e-9
    assert doc["mother_widths"] == [2, 100, 100, 100, 100, 4]
    assert net.exists()


def test_data_csv(tmp_path):
    p = tmp_path / "h.csv"
    assert main(["data", "--task", "helix", "--samples", "50", "--out", str(p)]) == 0
    arr = np.genfromtxt(p, delimiter=",", skip_header=1)
    assert arr.shape == (50, 4)


def test_prune_rows(tmp_path):
    p = tmp_path / "r.tsv"
    argv = ["prune", "--task", "circle", "--depth", "4", "--width", "40", "--method", "synflow",
            "--sparsity", "0.1", "--reps", "3", "--samples", "300", "--train-epochs", "1", "--out", str(p)]
    assert main(argv) == 0
    rows = read_tsv(p)
    assert len(rows) == 3 and [r.seed for r in rows] == [0, 1, 2]
    assert (tmp_path / "r.summary.tsv").exists()


def test_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# experiment\ntask = relu\nmethod = magnitude, random\nsparsity = 0.5, planted\n"
                   "depth = 3\nwidth = 10\nsamples = 200\ntrain_epochs = 1\n")
    p = tmp_path / "r.tsv"
    assert main(["prune", "--config", str(cfg), "--method", "snip", "--out", str(p)]) == 0
    rows = read_tsv(p)
    assert {r.method for r in rows} == {"snip"}
    assert [r.sparsity_label for r in rows] == ["0.5", "planted"]


def test_read_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(ValueError):
        read_config(bad)
    bad.write_text("depth five\n")
    with pytest.raises(ValueError):
        read_config(bad)


def test_bad_config_is_usage_error(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("width = wide\n")
    assert main(["theory", "--task", "relu", "--config", str(bad)]) == 2
