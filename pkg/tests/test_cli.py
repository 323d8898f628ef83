import csv
import json
import subprocess
import sys

import pytest

from nisqnet import cli
from nisqnet.config import ConfigError, default_config, load_config, parse_text
from nisqnet.experiments import RUNNERS, make_backend, session_streams

TINY = {
    "train.epochs": 10,
    "sessions": 2,
    "qaoa.layers": 2,
    "data.n_train_grid": "1,2",
    "noise.k_grid": "0,1",
    "stop.max_epochs": 20,
}


def _cfg(tmp_path, experiment, **extra):
    over = dict(TINY, experiment=experiment, out=str(tmp_path))
    over.update(extra)
    return load_config(None, over)


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline()
        assert header.startswith("# config: ")
        cfg = json.loads(header[len("# config: "):])
        return cfg, list(csv.DictReader(fh))


def test_defaults():
    cfg = default_config()
    cfg.validate()
    assert cfg["dqnn.eta"] == 0.5 and cfg["dqnn.epsilon"] == 0.25
    assert cfg["qaoa.eta"] == 0.075 and cfg["qaoa.epsilon"] == 0.05
    assert cfg["qaoa.layers"] == 8 and cfg["dqnn.widths"] == (2, 2)
    assert cfg["train.validation_every"] == 5
    assert cfg["noise.k_grid"] == (0, 0.25, 0.5, 1, 2, 4)
    assert cfg.networks() == ["dqnn", "qaoa"]


def test_config_file_and_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\nnoise.k = 0.5\ndata.n_train_grid = 1, 3\nnetwork.type = qaoa\n")
    cfg = load_config(f, {"noise.k": "2"})
    assert cfg["noise.k"] == 2.0
    assert cfg["data.n_train_grid"] == (1, 3)
    assert cfg.networks() == ["qaoa"]
    assert parse_text("seed = 7  # trailing\n") == {"seed": "7"}


@pytest.mark.parametrize(
    "overrides",
    [
        {"nope": 1},
        {"sessions": "0"},
        {"noise.k_grid": ""},
        {"backend.mode": "magic"},
        {"seed": "-1"},
        {"seed": str(2**64)},
        {"train.epochs": "ten"},
        {"dqnn.widths": "2,3"},
        {"qaoa.m": "1"},
    ],
)
def test_invalid_config(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_bad_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
    f = tmp_path / "bad.cfg"
    f.write_text("just words\n")
    with pytest.raises(ConfigError):
        load_config(f)


def test_exact_backend_refuses_noise():
    cfg = load_config(None, {"backend.mode": "exact"})
    with pytest.raises(ConfigError):
        make_backend(cfg, 1.0, session_streams(0, 0))


def test_session_streams_are_independent_and_reproducible():
    a = session_streams(3, 1)
    b = session_streams(3, 1)
    c = session_streams(3, 2)
    assert a["data"].random() == b["data"].random()
    assert a["qaoa"].random() != c["qaoa"].random()


def test_single_training_files(tmp_path):
    cfg = _cfg(tmp_path, "single-training", **{"train.epochs": 100, "network.type": "qaoa"})
    RUNNERS["single-training"](cfg)
    meta, rows = _read_csv(tmp_path / "single_training_qaoa.csv")
    assert meta["seed"] == 0 and meta["train.epochs"] == 100
    assert len(rows) == 100
    assert sum(r["C_V"] != "" for r in rows) == 20
    assert sum(r["C_id"] != "" for r in rows) == 20
    summary = json.loads((tmp_path / "single_training_qaoa.json").read_text())
    assert summary["config"]["seed"] == 0 and summary["epochs_run"] == 100


def test_single_training_zero_eta_is_flat(tmp_path):
    cfg = _cfg(tmp_path, "single-training", **{"dqnn.eta": 0.0, "network.type": "dqnn"})
    RUNNERS["single-training"](cfg)
    _, rows = _read_csv(tmp_path / "single_training_dqnn.csv")
    assert len({r["C_T"] for r in rows}) == 1


def test_generalization_rows_and_summary(tmp_path):
    cfg = _cfg(tmp_path, "generalization", **{"noise.k": 1.0})
    out = RUNNERS["generalization"](cfg)
    assert len(out["rows"]) == 2 * 2 * 2
    _, rows = _read_csv(tmp_path / "generalization.csv")
    assert [r["network"] for r in rows] == ["dqnn"] * 4 + ["qaoa"] * 4
    _, summary = _read_csv(tmp_path / "generalization_summary.csv")
    assert {(r["network"], r["n_train"]) for r in summary} == {
        ("dqnn", "1"), ("dqnn", "2"), ("qaoa", "1"), ("qaoa", "2")
    }
    assert all(r["sessions"] == "2" for r in summary)
    # the identity cost depends on the session only, not on N_T
    by = {(r["network"], r["session"], r["n_train"]): r["identity_cost"] for r in rows}
    assert by[("dqnn", "0", "1")] == by[("dqnn", "0", "2")]


def test_noise_sweep_and_identity_cost(tmp_path):
    cfg = _cfg(tmp_path, "noise-sweep")
    out = RUNNERS["noise-sweep"](cfg)
    for r in out["rows"]:
        if r["k"] == 0:
            assert abs(r["identity_cost"] - 1) < 1e-10
        assert r["epochs_run"] <= 20
    cfg = _cfg(tmp_path, "identity-cost", **{"noise.k_grid": "0,0.5,1,2"})
    rows = RUNNERS["identity-cost"](cfg)["rows"]
    for net in ("dqnn", "qaoa"):
        for s in range(2):
            vals = [r["identity_cost"] for r in rows if r["network"] == net and r["session"] == s]
            assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_transpile_report(tmp_path):
    cfg = _cfg(tmp_path, "transpile-report", **{"qaoa.layers": 8})
    rep = RUNNERS["transpile-report"](cfg)
    assert rep["dqnn"]["total_counts"]["CNOT"] == 16
    assert rep["qaoa"]["total_counts"]["CNOT"] == 52
    assert rep["dqnn"]["stage_counts"]["swap_test"]["CNOT"] == 2
    assert rep["dqnn"]["stage_counts"]["network"]["CNOT"] == 12
    assert rep["qaoa"]["stage_counts"]["network"]["CNOT"] == 48
    assert rep["dqnn"]["num_params"] == 24 and rep["qaoa"]["num_params"] == 16
    for r in rep.values():
        assert r["full_residual"] <= 1e-8 and r["network_residual"] <= 1e-8
    body = json.loads((tmp_path / "transpile_report.json").read_text())
    assert body["config"]["experiment"] == "transpile-report"


@pytest.mark.parametrize("mode", ["exact", "expectation"])
def test_rerun_is_bit_identical(tmp_path, mode):
    k = "0" if mode == "exact" else "1"
    outs = []
    for run in ("a", "b"):
        cfg = _cfg(tmp_path / run, "generalization", **{"backend.mode": mode, "noise.k": k})
        RUNNERS["generalization"](cfg)
        outs.append(tmp_path / run)
    for name in ("generalization.csv", "generalization_summary.csv", "generalization.json"):
        a = (outs[0] / name).read_bytes().replace(b"/a", b"")
        b = (outs[1] / name).read_bytes().replace(b"/b", b"")
        assert a == b


def test_cli_main_success(tmp_path, capsys):
    code = cli.main(["transpile-report", "--out", str(tmp_path), "--network.type", "dqnn"])
    assert code == 0
    status = json.loads(capsys.readouterr().out)
    assert status["status"] == "ok" and status["experiment"] == "transpile-report"
    assert (tmp_path / "transpile_report.json").exists()


def test_cli_main_overrides_with_equals(tmp_path, capsys):
    code = cli.main(["train", f"--out={tmp_path}", "--train.epochs=5", "--network.type=qaoa",
                     "--qaoa.layers", "2", "--seed", "4"])
    assert code == 0
    meta, rows = _read_csv(tmp_path / "single_training_qaoa.csv")
    assert meta["seed"] == 4 and len(rows) == 5


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--bogus.key", "1"],
        ["train", "--sessions", "0"],
        ["train", "--noise.k"],
        ["train", "stray"],
        ["train", "--config", "/nonexistent/file.cfg"],
        ["sweep-noise", "--backend.mode", "exact", "--noise.k_grid", "1", "--train.epochs", "1"],
    ],
)
def test_cli_errors_emit_json_line(tmp_path, capsys, argv):
    code = cli.main(argv + ["--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG
    err = capsys.readouterr().err.strip().splitlines()[-1]
    body = json.loads(err)
    assert body["error"] == "config" and body["message"]


def test_cli_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = cli.main(["transpile-report", "--out", str(blocker / "sub")])
    assert code != 0
    assert "error" in json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "nisqnet.cli", "transpile-report", "--out", str(tmp_path),
         "--network.type", "dqnn"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["status"] == "ok"
    proc = subprocess.run(
        [sys.executable, "-m", "nisqnet.cli", "train", "--sessions", "-2"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip())["error"] == "config"
