import json

import pytest

from lanczos_kn import storage
from lanczos_kn.jobs import RUN_FILE
from lanczos_kn.main import build_parser, main

PROBLEM = {"interior": [10, 10], "n_opt": 3, "sources": [[3.0, 5.0]]}


def _config(tmp_path, name="run.json", **fields):
    data = {"problem": PROBLEM, "m_max": 6, "m_stride": 3, "shifts": [[0.01, 0.0], [0.0, 0.01]], "variants": ["gauss"]}
    data.update(fields)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_parser_commands():
    parser = build_parser()
    args = parser.parse_args(["sweep", "--threads", "2", "--seed", "4"])
    assert (args.command, args.threads, args.seed) == ("sweep", 2, 4)
    with pytest.raises(SystemExit):
        parser.parse_args(["lobatto"])


def test_convergence(tmp_path):
    out = tmp_path / "out"
    assert main(["convergence", "--config", str(_config(tmp_path)), "--output", str(out)]) == 0

    rows = storage.read_csv_rows(out / "convergence.csv")
    assert len(rows) == 4
    assert {r["variant"] for r in rows} == {"gauss"}
    assert [r["m"] for r in rows] == ["3", "3", "6", "6"]
    assert all(r["phi_used"] == "" and r["wall_ms"] == "0.0" for r in rows)

    run = storage.read_json(out / RUN_FILE)
    assert run["status"] == "complete"
    assert run["checkpoints"] == [3, 6]
    assert run["outputs"] == ["convergence.csv"]
    assert storage.read_json(out / "config.json")["m_max"] == 6


def test_convergence_rerun_is_identical(tmp_path):
    config = str(_config(tmp_path, variants=["gauss", "radau", "kn"], phi_policy={"fixed": 1.0}))
    assert main(["convergence", "--config", config, "--output", str(tmp_path / "a"), "--threads", "3"]) == 0
    assert main(["convergence", "--config", config, "--output", str(tmp_path / "b")]) == 0
    for name in ("convergence.csv", RUN_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep(tmp_path):
    config = _config(tmp_path, m=6, sweep={"real_decades": [-2, -1], "imag_decades": None, "points": 2})
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(config), "--output", str(out)]) == 0
    rows = storage.read_csv_rows(out / "sweep.csv")
    assert [(r["m"], float(r["shift_re"])) for r in rows] == [("6", 0.01), ("6", 0.1)]


def test_optimize_warns_on_short_run(tmp_path):
    config = _config(tmp_path, validation_shifts=[[0.01, 0.0]], phi_policy={"optimize": {"n_pts": 16}})
    out = tmp_path / "out"
    assert main(["optimize", "--config", str(config), "--output", str(out)]) == 0
    report = storage.read_json(out / "optimize.json")
    assert [c["m"] for c in report["checkpoints"]] == [3, 6]
    assert all("warning" in c for c in report["checkpoints"])
    assert len(storage.read_json(out / RUN_FILE)["warnings"]) == 2


def test_state_files(tmp_path):
    config = _config(tmp_path, m=6, state={"times": [0.0, 2.0], "variants": ["gauss", "average"]})
    out = tmp_path / "out"
    assert main(["state", "--config", str(config), "--output", str(out)]) == 0
    for variant in ("gauss", "average"):
        assert (out / f"snapshot_{variant}_t0.csv").exists()
        assert (out / f"snapshot_{variant}_t1.csv").exists()
        section = storage.read_csv_rows(out / f"cross_section_{variant}.csv")
        assert [float(r["t"]) for r in section] == [0.0, 2.0]
        assert len(section[0]) == 1 + 16
    snap = storage.read_csv_rows(out / "snapshot_gauss_t0.csv")
    assert len(snap) == 16 * 16
    assert set(snap[0]) == {"x", "y", "exterior", "value"}


def test_bad_config(tmp_path):
    assert main(["convergence", "--config", str(tmp_path / "missing.json")]) == 1


def test_failure_marks_run(tmp_path):
    config = _config(tmp_path, problem={"matrix": "none.mtx", "rhs": "none_b.mtx"})
    out = tmp_path / "out"
    assert main(["convergence", "--config", str(config), "--output", str(out)]) == 1
    run = storage.read_json(out / RUN_FILE)
    assert run["status"] == "error"
    assert run["error"]


def test_selftest_exit_codes():
    assert main(["selftest"]) == 0
    assert main(["selftest", "--inject-fault"]) == 1
