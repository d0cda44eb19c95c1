import csv
import hashlib
import json

import pytest

from teamcoord import cli, efgdesc
from teamcoord.games import benchmark


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_csv(path):
    with open(path) as f:
        return list(csv.reader(f))


def test_build_round_trip(capsys, tmp_path):
    code, out, _ = run(capsys, "build", "--game", "coord-2")
    assert code == 0
    assert efgdesc.parse_game(out).fingerprint == benchmark("coord-2").fingerprint
    code, out, _ = run(capsys, "--out-dir", tmp_path, "build", "--game", "coord-2", "--K", 10, "--out", "g.efg")
    assert code == 0 and "g.efg" in out
    g = efgdesc.parse_game((tmp_path / "g.efg").read_text())
    assert max(n.payoffs[0] for n in g.nodes if n.is_terminal) == 10


def test_refine_reports_one_split(capsys, tmp_path):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "refine", "--game", "coord-2", "--report", "r.json",
                       "--out", "refined.efg")
    assert code == 0 and "splits=1" in out
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["refinement"]["splits"] == 1
    assert doc["recall"]["a_loss_recall"] is True
    refined = efgdesc.parse_game((tmp_path / "refined.efg").read_text())
    assert len(list(refined.infostates_of("T"))) == 3


def test_solve_bruteforce_value(capsys, tmp_path):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "solve", "--game", "coord-2", "--method", "bruteforce",
                       "--out", "s.json")
    assert code == 0
    value = float(out.split()[0].split("=")[1])
    assert value == pytest.approx(50.0, abs=0.2)
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["method"] == "bruteforce" and doc["value"] == pytest.approx(value, abs=1e-6)


def test_solve_game_file(capsys, tmp_path):
    path = tmp_path / "imb.efg"
    path.write_text(efgdesc.dump_game(benchmark("coord-2-imb")))
    code, out, _ = run(capsys, "solve", "--game", path)
    assert code == 0
    assert float(out.split()[0].split("=")[1]) == pytest.approx(100 / 3, abs=0.2)


def _pipeline(capsys, out_dir, seed=5):
    base = ["--seed", seed, "--out-dir", out_dir]
    assert run(capsys, *base, "sample", "--game", "coord-2", "--episodes", 3000, "--capacity", 2000,
               "--out", "buf.jsonl")[0] == 0
    assert run(capsys, *base, "train", "--game", "coord-2", "--buffer", out_dir / "buf.jsonl", "--iters", 300,
               "--out", "sms.json", "--log", "log.csv")[0] == 0
    assert run(capsys, *base, "eval", "--game", "coord-2", "--sms", out_dir / "sms.json", "--episodes", 200,
               "--out", "eval.csv")[0] == 0
    return {name: digest(out_dir / name) for name in ("buf.jsonl", "sms.json", "log.csv", "eval.csv")}


def test_pipeline_is_deterministic(capsys, tmp_path):
    a = _pipeline(capsys, tmp_path / "a")
    b = _pipeline(capsys, tmp_path / "b")
    assert a == b
    c = _pipeline(capsys, tmp_path / "c", seed=6)
    assert c["buf.jsonl"] != a["buf.jsonl"]
    log = read_csv(tmp_path / "a" / "log.csv")
    assert log[0] == list(cli.LOG_HEADER)
    assert [int(r[0]) for r in log[1:]] == list(range(50, 301, 50))
    ev = read_csv(tmp_path / "a" / "eval.csv")
    assert ev[0] == list(cli.EVAL_HEADER)
    assert {r[0] for r in ev[1:]} >= {"reward", "exploitability", "kl", "tmecor_value"}


def test_sample_equilibrium_to_stdout(capsys):
    code, out, _ = run(capsys, "sample", "--game", "coord-2", "--method", "equilibrium", "--episodes", 10)
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 10
    assert set(json.loads(lines[0])) == {"o", "t", "r"}


def test_env_output_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path))
    assert run(capsys, "build", "--game", "coord-2", "--out", "g.efg")[0] == 0
    assert (tmp_path / "g.efg").is_file()


def test_missing_input_file(capsys, tmp_path):
    missing = tmp_path / "nope.jsonl"
    code, _, err = run(capsys, "train", "--game", "coord-2", "--buffer", missing)
    assert code == cli.EXIT_INVALID
    assert str(missing) in err and "[sampling]" in err
    code, _, err = run(capsys, "solve", "--game", tmp_path / "absent.efg")
    assert code == cli.EXIT_INVALID and "absent.efg" in err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        cli.main(["solve"])
    assert e.value.code == cli.EXIT_USAGE
    assert run(capsys, "sample", "--game", "coord-2", "--episodes", 0)[0] == cli.EXIT_USAGE
    assert run(capsys, "--seed", -1, "build", "--game", "coord-2")[0] == cli.EXIT_USAGE
    assert run(capsys, "--tol", 0, "solve", "--game", "coord-2")[0] == cli.EXIT_USAGE


def test_validation_errors(capsys, tmp_path):
    assert run(capsys, "build", "--game", "patrolling_4_3", "--grid-side", 1)[0] == cli.EXIT_INVALID
    code, _, err = run(capsys, "refine", "--game", "coord-2", "--team", "T1,X")
    assert code == cli.EXIT_INVALID and "[refinement]" in err
    assert run(capsys, "--out-dir", tmp_path, "sample", "--game", "coord-2", "--episodes", 100,
               "--out", "b.jsonl")[0] == 0
    assert run(capsys, "--out-dir", tmp_path, "train", "--game", "coord-2", "--buffer", tmp_path / "b.jsonl",
               "--iters", 10, "--out", "s.json")[0] == 0
    code, _, err = run(capsys, "--out-dir", tmp_path, "eval", "--game", "coord-2", "--sms", tmp_path / "s.json",
                       "--heatmaps", "h_")
    assert code == cli.EXIT_INVALID and "patrolling" in err


def test_reproduce_threshold_failure_and_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "reproduce", "coord2", "--seeds", 2, "--iters", 100,
                       "--episodes", 500)
    assert code == cli.EXIT_THRESHOLD
    assert "FAIL" in out and "PASS pipeline_vs_bruteforce" in out
    d = tmp_path / "coord2"
    names = {p.relative_to(d).as_posix() for p in d.rglob("*") if p.is_file()}
    assert {"config.json", "metrics.csv", "final.csv", "summary.csv", "solve.csv", "acceptance.csv",
            "strategies/sms_seed0.json", "strategies/sms_seed1.json"} <= names
    metrics = read_csv(d / "metrics.csv")
    assert metrics[0] == ["seed_index", *cli.LOG_HEADER]
    assert len(metrics) == 1 + 2 * 2
    assert json.loads((d / "config.json").read_text())["params"]["buffer"] == "fsp"


def test_reproduce_imbalanced_passes(capsys, tmp_path):
    code, out, _ = run(capsys, "--out-dir", tmp_path, "reproduce", "coord2-imb", "--seeds", 2, "--iters", 4000,
                       "--buffer", "equilibrium")
    assert code == cli.EXIT_OK, out
    solve = read_csv(tmp_path / "coord2-imb" / "solve.csv")
    assert solve[0] == ["method", "value", "epsilon", "iterations"]
    assert all(abs(float(r[1]) - 100 / 3) <= 0.1 for r in solve[1:])


def test_reproduce_parallel_matches_serial(capsys, tmp_path):
    args = ("reproduce", "coord2", "--seeds", 2, "--iters", 100, "--episodes", 500)
    run(capsys, "--out-dir", tmp_path / "serial", *args)
    run(capsys, "--out-dir", tmp_path / "par", *args, "--jobs", 2)
    files = sorted(p.relative_to(tmp_path / "serial") for p in (tmp_path / "serial").rglob("*") if p.is_file())
    assert files
    assert all(digest(tmp_path / "serial" / f) == digest(tmp_path / "par" / f) for f in files)
