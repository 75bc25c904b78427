import json

import pytest

from chernlab import snapshot
from chernlab.cli import main


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


SOLVE = {"domain.kind": "Disk", "domain.N": 24, "target.id": "FSProduct", "initial.map": "holomorphic",
         "flow.tol": 1e-8}


def test_solve_writes_snapshot_and_results(tmp_path):
    cfg = write(tmp_path, "c.json", SOLVE)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    res = json.loads((tmp_path / "o" / "results.json").read_text())
    assert res["report"]["converged"]
    ms = snapshot.load(tmp_path / "o" / "solution.clsn")
    assert ms.domain.N == 24
    assert main(["snapshot-info", str(tmp_path / "o" / "solution.clsn")]) == 0


def test_resolution_override(tmp_path):
    cfg = write(tmp_path, "c.json", SOLVE)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o"), "--resolution-override", "16"]) == 0
    assert snapshot.info(tmp_path / "o" / "solution.clsn")["domain"]["N"] == 16


def test_environment_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CHERNLAB_OUT", str(tmp_path / "env"))
    assert main(["solve", "--config", write(tmp_path, "c.json", SOLVE)]) == 0
    assert (tmp_path / "env" / "results.json").exists()


@pytest.mark.parametrize("argv", [["solve", "--config", "/nonexistent.json"], ["verify", "nosuch"],
                                  ["frobnicate"], ["snapshot-info", "/nonexistent.clsn"]])
def test_config_errors_exit_1(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] == "verify" else argv) == 1


def test_unknown_and_missing_keys_exit_1(tmp_path):
    assert main(["solve", "--config", write(tmp_path, "a.json", {**SOLVE, "flow.tolerance": 1})]) == 1
    assert main(["solve", "--config", write(tmp_path, "b.json", {"domain.kind": "Disk"})]) == 1


def test_divergence_exits_2(tmp_path):
    cfg = write(tmp_path, "c.json", {**SOLVE, "initial.map": "random_trig", "initial.params": {"amplitude": 0.5},
                                     "flow.scheme": "Explicit", "flow.dt": 1.0, "flow.max_steps": 200})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_verify_pass_and_failure(tmp_path):
    cfg = write(tmp_path, "c.json", {"domain.N": 32, "verify.resolutions": [32, 64]})
    assert main(["verify", "monotonicity", "--config", cfg, "--out", str(tmp_path / "m")]) == 0
    assert (tmp_path / "m" / "tables" / "monotonicity.csv").exists()
    # too coarse a grid for the first-order operator tolerance
    assert main(["verify", "operators", "--config", cfg, "--out", str(tmp_path / "op")]) == 3
    assert json.loads((tmp_path / "op" / "results.json").read_text())["failures"]


def test_repeated_runs_are_byte_identical(tmp_path):
    cfg = write(tmp_path, "c.json", {**SOLVE, "initial.map": "random_trig", "flow.max_steps": 20})
    out = tmp_path / "o"
    blobs = []
    for _ in range(2):
        assert main(["solve", "--config", cfg, "--out", str(out), "--seed", "4"]) == 0
        blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert blobs[0] == blobs[1]
