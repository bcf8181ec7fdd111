import json

import pytest

from gridseg import cli
from gridseg.case import adjacency
from gridseg.config import ENV_VAR

from conftest import fixture_path

TS1 = str(fixture_path("ts1.json"))

ALL_OUTPUTS = {
    "pf": ["pf.csv"],
    "linearize": ["A.csv", "C_v.csv", "C_f.csv", "C_i.csv"],
    "modes": ["modes.csv"],
    "shape": ["shape.csv", "obs_v.csv", "obs_f.csv", "obs_i.csv"],
    "path": ["path.csv", "path_branches.csv"],
    "segment": ["plan.json"],
}


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_segment_prints_cut(tmp_path, capsys):
    code, out, _ = run(capsys, "segment", TS1, "--out", str(tmp_path))
    assert code == 0
    assert "cut: 35-40" in out
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert [c["branch"] for c in plan["cuts"]] == ["35-40"]
    assert plan["meta"]["command"] == "segment"


def test_modes_table(tmp_path, capsys):
    code, out, _ = run(capsys, "modes", TS1, "--out", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "modes.csv").read_text().splitlines()
    assert lines[0].startswith("# ")
    rows = lines[2:]
    assert len(rows) == 5
    first = dict(zip(lines[1].split(","), rows[0].split(",")))
    assert float(first["damping_pct"]) == pytest.approx(5.5, abs=1.5)
    assert float(first["frequency_hz"]) == pytest.approx(0.83, abs=0.05)
    assert "G1,G2,G3//G4,G5,G6" in out


def test_missing_file_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "pf", str(tmp_path / "missing.json"))
    assert code == 2
    assert "file not found" in err


@pytest.mark.parametrize("argv", [[], ["bogus", TS1], ["pf"], ["shape", TS1, "--mode", "x"]])
def test_usage_errors_exit_2(argv, capsys):
    code, _, _ = run(capsys, *argv)
    assert code == 2


def test_bad_case_and_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "pf", str(bad))[0] == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_knob": 1}))
    assert run(capsys, "pf", TS1, "--config", str(cfg))[0] == 2
    assert run(capsys, "shape", TS1, "--mode", "99", "--out", str(tmp_path))[0] == 2


def test_divergence_exit_1(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"pf_max_iter": 1}))
    code, _, err = run(capsys, "pf", TS1, "--config", str(cfg), "--out", str(tmp_path))
    assert code == 1
    assert "DivergenceError" in err
    assert not (tmp_path / "pf.csv").exists()


def test_path_on_split_grid_exit_1(tmp_path, capsys, monkeypatch):
    # the mode still spans both areas but the network is already split
    def split(case):
        return {b: [(br, j) for br, j in nb if br != "35-40"] for b, nb in adjacency(case).items()}

    monkeypatch.setattr(cli, "adjacency", split)
    code, _, err = run(capsys, "path", TS1, "--out", str(tmp_path))
    assert code == 1
    assert "NoAcPathError" in err


@pytest.mark.parametrize("command", sorted(ALL_OUTPUTS))
def test_reruns_are_byte_identical(command, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, command, TS1, "--out", str(a))[0] == 0
    assert run(capsys, command, TS1, "--out", str(b))[0] == 0
    for name in ALL_OUTPUTS[command]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert sorted(p.name for p in a.iterdir()) == sorted(ALL_OUTPUTS[command])


def test_path_roles(tmp_path, capsys):
    code, out, _ = run(capsys, "path", TS1, "--out", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "path.csv").read_text().splitlines()[2:]
    roles = {row.split(",")[0]: row.split(",")[-1] for row in lines}
    assert [r.split(",")[0] for r in lines] == ["1", "10", "20", "30", "35", "40", "50", "60", "6"]
    assert roles == {"1": "E1", "10": "", "20": "", "30": "", "35": "PB", "40": "A", "50": "", "60": "", "6": "E2"}


def test_csv_number_format(tmp_path, capsys):
    run(capsys, "linearize", TS1, "--out", str(tmp_path))
    body = (tmp_path / "A.csv").read_text().splitlines()[2:]
    for cell in (c for row in body for c in row.split(",")[1:]):
        float(cell)
        digits = cell.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
        assert len(digits) <= 9


def test_config_override_echoed(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"group_phase_deg": 40.0, "tie_tol": 1e-10}))
    out = tmp_path / "out"
    assert run(capsys, "segment", TS1, "--config", str(cfg), "--out", str(out))[0] == 0
    assert run(capsys, "modes", TS1, "--config", str(cfg), "--out", str(out))[0] == 0
    meta = json.loads((out / "plan.json").read_text())["meta"]
    assert meta["config"] == {"group_phase_deg": 40.0, "tie_tol": 1e-10}
    header = json.loads((out / "modes.csv").read_text().splitlines()[0][2:])
    assert header == {"command": "modes", "config": {"group_phase_deg": 40.0, "tie_tol": 1e-10}}


def test_config_from_environment(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"out_dir": str(tmp_path / "env_out"), "suppression_window_hz": 0.2}))
    monkeypatch.setenv(ENV_VAR, str(cfg))
    assert run(capsys, "modes", TS1)[0] == 0
    header = (tmp_path / "env_out" / "modes.csv").read_text().splitlines()[0]
    assert json.loads(header[2:])["config"] == {"suppression_window_hz": 0.2}


def test_evaluate_from_plan_and_cut(tmp_path, capsys):
    assert run(capsys, "segment", TS1, "--out", str(tmp_path))[0] == 0
    code, out, _ = run(capsys, "evaluate", TS1, "--plan", str(tmp_path / "plan.json"), "--out", str(tmp_path / "p"))
    assert code == 0
    assert out.rstrip().endswith("suppressed") and "not suppressed" not in out
    code, out, _ = run(capsys, "evaluate", TS1, "--cut", "40-50", "--out", str(tmp_path / "c"))
    assert code == 0
    assert out.rstrip().endswith("not suppressed")
    rows = (tmp_path / "c" / "eval.csv").read_text().splitlines()[2:]
    assert {r.split(",")[-1] for r in rows} == {"not suppressed"}
    assert sum(r.startswith("after,") for r in rows) == 4
    # --cut accepts several branches, and an unknown branch is a usage error
    assert run(capsys, "evaluate", TS1, "--cut", "35-40", "--cut", "2-20", "--out", str(tmp_path / "m"))[0] == 0
    assert run(capsys, "evaluate", TS1, "--cut", "nope")[0] == 2
    assert run(capsys, "evaluate", TS1)[0] == 2
