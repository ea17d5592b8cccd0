import csv
import io

import numpy as np
import pytest

from zubovroa.cli import ConfigError, RunConfig, main, parse_config
from zubovroa.net import MlpNetwork, dumps, load


def rows(path):
    return list(csv.reader(io.StringIO(path.read_text())))


def test_label_counts_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["label", "--system", "vdp", "--n", "10000", "--seed", "1", "--out", str(a)]) == 0
    assert main(["label", "--system", "vdp", "--n", "10000", "--seed", "1", "--out", str(b)]) == 0
    data = rows(a / "dataset.csv")
    assert data[0] == ["x_1", "x_2", "w_hat", "status"]
    assert len(data) == 10002
    assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()
    assert (a / "label_stats.csv").read_bytes() == (b / "label_stats.csv").read_bytes()
    stats = dict(rows(a / "label_stats.csv")[1:])
    assert float(stats["mu"]) == pytest.approx(40 / float(stats["c_max"]))


def test_power4d_labels_have_no_unsafe_rows(tmp_path):
    assert main(["label", "--system", "power4d", "--n", "300", "--out", str(tmp_path)]) == 0
    data = rows(tmp_path / "dataset.csv")
    assert len(data[0]) == 6
    assert all(r[-1] != "unsafe" for r in data[1:])


def test_train_history_and_zero_epochs(tmp_path):
    out = str(tmp_path)
    main(["label", "--system", "vdp", "--n", "200", "--out", out])
    assert main(["train", "--system", "vdp", "--out", out, "--epochs", "0",
                 "--hidden", "8,8"]) == 0
    init = MlpNetwork.init([2, 8, 8, 1], seed=0)
    assert (tmp_path / "weights.mlp").read_text() == dumps(init)
    assert main(["train", "--system", "vdp", "--out", out, "--epochs", "4", "--hidden", "8,8",
                 "--n-collocation", "300"]) == 0
    hist = rows(tmp_path / "history.csv")
    assert hist[0] == ["epoch", "residual", "data", "total"]
    assert len(hist) - 1 == 5
    assert "\r" not in (tmp_path / "history.csv").read_text()


def test_train_without_dataset_fails(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path)]) == 3
    assert "label" in capsys.readouterr().err


def test_certify_two_machine(tmp_path):
    code = main(["certify", "--system", "two_machine", "--out", str(tmp_path)])
    assert code == 0
    report = (tmp_path / "certificate.txt").read_text()
    c2 = float(next(l for l in report.splitlines() if l.startswith("c2 =")).split()[2])
    assert 0.7 <= c2 <= 1.1
    assert "a1 =" in report and "c2 upper bound" in report


def _report_value(path, key):
    line = next(l for l in path.read_text().splitlines() if l.startswith(key + " ="))
    return float(line.split("=")[1].split()[0])


def test_certify_power4d_c2(tmp_path):
    # roughly two minutes: the 4-D annulus needs about a million boxes near the boundary
    assert main(["certify", "--system", "power4d", "--out", str(tmp_path)]) == 0
    c2 = _report_value(tmp_path / "certificate.txt", "c2")
    assert abs(c2 - 140.625) <= 0.15 * 140.625


def test_certify_with_explicit_b_radius(tmp_path):
    assert main(["certify", "--system", "vdp", "--out", str(tmp_path),
                 "--b-radius", "0.2,0.3"]) == 0
    report = (tmp_path / "certificate.txt").read_text()
    assert "B radius = 0.2 0.3" in report
    assert main(["certify", "--system", "vdp", "--out", str(tmp_path),
                 "--b-radius", "0.2"]) == 3


def test_certify_unstable_system_exits_3(tmp_path, capsys):
    sys_file = tmp_path / "unstable.txt"
    sys_file.write_text("n 1\ndt 0.1\nlo -1\nhi 1\nf1 (mul 1.5 x1)\n")
    assert main(["certify", "--system", str(sys_file), "--out", str(tmp_path)]) == 3
    assert "not exponentially stable" in capsys.readouterr().err


def test_export_levelset(tmp_path):
    out = str(tmp_path)
    assert main(["export-levelset", "--system", "vdp", "--out", out]) == 0
    data = rows(tmp_path / "levelset.csv")
    assert data[0] == ["x_1", "x_2", "v_p"] and len(data) == 10202
    vals = np.array(data[1:], dtype=float)
    origin = vals[np.all(vals[:, :2] == 0, axis=1)]
    assert len(origin) == 1 and origin[0, 2] == 0


def test_export_levelset_slices(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["export-levelset", "--system", "power4d", "--out", out]) == 3
    assert "--slice" in capsys.readouterr().err
    (tmp_path / "w.mlp").write_text(dumps(MlpNetwork.init([4, 5, 1], seed=0)))
    assert main(["export-levelset", "--system", "power4d", "--out", out, "--slice", "0,2",
                 "--resolution", "11", "--weights", str(tmp_path / "w.mlp")]) == 0
    data = rows(tmp_path / "levelset.csv")
    assert data[0][-2:] == ["v_p", "w_n"] and len(data) == 122
    vals = np.array(data[1:], dtype=float)
    assert np.all(vals[:, [1, 3]] == 0)


def test_config_parsing(tmp_path):
    cfg = parse_config("[run]\nsystem = two_machine\nseed = 4\n[train]\nepochs = 7\n"
                       "hidden = 10, 10\n[verify]\neps_decrease = 1e-5\ncentered = no\n"
                       "[label]\nc_max = auto\n")
    assert cfg.system == "two_machine" and cfg.seed == 4
    assert cfg.train.epochs == 7 and cfg.train.hidden == (10, 10)
    assert cfg.verify.eps_decrease == 1e-5 and cfg.verify.centered is False
    assert cfg.label.c_max is None and cfg.verify.b_radius is None
    assert parse_config("[verify]\nb_radius = 0.5, 0.25\n").verify.b_radius == (0.5, 0.25)
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("[train]\nepochs = 7\nepoch = 8\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("[train]\nepochs = seven\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("[extras]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[train]\nlambda_d = -1\n")
    assert parse_config("") == RunConfig()


def test_flags_override_config(tmp_path):
    conf = tmp_path / "run.ini"
    conf.write_text("[run]\nsystem = power4d\n[label]\nn = 5\n")
    out = tmp_path / "o"
    assert main(["label", "--config", str(conf), "--n", "7", "--out", str(out)]) == 0
    data = rows(out / "dataset.csv")
    assert len(data) == 9 and len(data[0]) == 6


def test_bad_config_key_exits_3(tmp_path, capsys):
    conf = tmp_path / "bad.ini"
    conf.write_text("[label]\nn = 5\nsize = 3\n")
    assert main(["label", "--config", str(conf), "--out", str(tmp_path)]) == 3
    assert "line 3" in capsys.readouterr().err
