import json

import pytest

from balloc.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_and_report(tmp_path, capsys):
    code, out, _ = run(capsys, "run", "--process", "memory", "--n", "32", "--m-mult", "20",
                       "--trials", "3", "--out", str(tmp_path / "r"))
    assert code == 0 and json.loads(out)["trials"] == 3
    code, out, _ = run(capsys, "report", "--summary", str(tmp_path / "r/summary.csv"),
                       "--kind", "gap-vs-m")
    assert code == 0 and out.startswith("process,")


def test_run_from_config_file(tmp_path, capsys):
    (tmp_path / "p.json").write_text(json.dumps([0.5, 0.25, 0.25]))
    (tmp_path / "c.json").write_text(json.dumps(
        {"process": "twochoice", "n": 3, "m": 30, "dist": "biased:@p.json"}))
    code, _, err = run(capsys, "run", "--config", str(tmp_path / "c.json"),
                       "--out", str(tmp_path / "o"))
    assert code == 0, err


def test_sweep(tmp_path, capsys):
    (tmp_path / "g.json").write_text(json.dumps(
        {"base": {"process": "memory", "trials": 2}, "axes": {"n": [8, 16], "m_mult": [2]}}))
    code, out, _ = run(capsys, "sweep", "--grid", str(tmp_path / "g.json"),
                       "--out", str(tmp_path / "s"))
    assert code == 0 and json.loads(out)["rows"] == 4


def test_invalid_input_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "run", "--process", "memory", "--n", "10", "--m", "10",
                       "--dist", "step:a=2,b=2", "--out", str(tmp_path))
    assert code == 2 and "not an integer" in err
    code, _, _ = run(capsys, "run", "--process", "memory", "--out", str(tmp_path))
    assert code == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--process", "fifo", "--out", "x"])
    assert exc.value.code == 2


def test_alloc_vector(capsys):
    code, out, _ = run(capsys, "alloc-vector", "--dist", "uniform", "--n", "2", "--d", "2",
                       "--mode", "exact")
    rows = [line.split(",") for line in out.strip().splitlines()]
    assert code == 0 and rows[0][-1] == "proxy"
    assert [float(r[-1]) for r in rows[1:]] == [0.375, 0.625]
    code, out, _ = run(capsys, "alloc-vector", "--dist", "step:a=2,b=2", "--n", "12",
                       "--d", "2", "--mode", "mc:20000")
    assert code == 0 and len(out.strip().splitlines()) == 13


def test_c1(capsys):
    code, out, _ = run(capsys, "c1", "--vector", "twochoice:64", "--delta", "0.25",
                       "--eps", "0.5", "--assert")
    assert code == 0 and json.loads(out)["passed"] is True
    code, out, _ = run(capsys, "c1", "--vector", "proxy:4:step:a=2,b=2", "--n", "12",
                       "--delta", str(1 / 3), "--assert")
    assert code == 3 and json.loads(out)["passed"] is False


def test_verify_drop(tmp_path, capsys):
    code, out, _ = run(capsys, "verify-drop", "--process", "memory", "--dist", "uniform",
                       "--n", "8", "--alpha", "0.3", "--d", "3", "--states", "random:4,5",
                       "--assert")
    rep = json.loads(out)
    assert code == 0 and rep["all_decrease"] and len(rep["states"]) == 4
    (tmp_path / "s.json").write_text(json.dumps([{"loads": [9, 0, 0, 0], "cache": 1}]))
    code, out, _ = run(capsys, "verify-drop", "--process", "weak-memory", "--dist", "uniform",
                       "--n", "4", "--alpha", "0.5", "--d", "2", "--states",
                       str(tmp_path / "s.json"), "--mode", "mc:20000")
    assert code == 0 and json.loads(out)["mode"] == "mc"


def test_fold(tmp_path, capsys):
    run(capsys, "run", "--process", "memory", "--n", "64", "--m", "3000", "--full-trace",
        "--out", str(tmp_path))
    code, out, _ = run(capsys, "fold", "--trace", str(tmp_path / "trace.jsonl"), "--j", "1",
                       "--v", "2", "--alpha2", "0.5", "--assert", "--rounds")
    rep = json.loads(out)
    assert code == 0 and rep["violation_count"] == 0 and rep["valid_partition"]
    assert rep["rounds"][0]["start"] == 0


def test_fold_needs_full_trace(tmp_path, capsys):
    run(capsys, "run", "--process", "memory", "--n", "8", "--m", "30", "--out", str(tmp_path))
    code, _, err = run(capsys, "fold", "--trace", str(tmp_path / "trace.jsonl"), "--j", "1",
                       "--v", "2", "--alpha2", "0.5")
    assert code == 2 and "full-step" in err


def test_potentials(tmp_path, capsys):
    (tmp_path / "l.json").write_text("[2, 0]")
    code, out, _ = run(capsys, "potentials", "--loads", str(tmp_path / "l.json"),
                       "--alpha", "0.6931471805599453")
    assert code == 0 and json.loads(out)[0]["gamma"] == pytest.approx(5)
    run(capsys, "run", "--process", "memory", "--n", "16", "--m", "64", "--record-loads",
        "--out", str(tmp_path / "r"))
    code, _, _ = run(capsys, "potentials", "--trace", str(tmp_path / "r/trace.jsonl"),
                     "--alpha", "0.5", "--layered", "v=2,alpha2=0.5", "--out",
                     str(tmp_path / "p.csv"))
    header = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert code == 0 and "phi_1" in header and header.startswith("trial,step,gamma")
