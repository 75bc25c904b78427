"""Acceptance criteria, one test per criterion.

Criteria 1 and 4 to 9 run through the command-line front end so that their
artifacts can be compared byte for byte in criterion 10.  Each test records a
single pass/fail line shown in the terminal summary.
"""
import csv
import json
import time

import numpy as np
import pytest

from chernlab.cli import main
from chernlab.corpus import holomorphic_maps
from chernlab.domains import DomainChart
from chernlab.pullback import max_residual, tension_from_jet
from chernlab.targets import make_target

from conftest import disk_map, random_points
from oracles import levi_civita_tension

pytestmark = pytest.mark.acceptance

SEED = "7"
RUNS = {
    "torsion": (["verify", "torsion"], {"verify.resolutions": [64, 128, 256], "verify.corpus_size": 10}),
    "bochner": (["verify", "bochner"], {"domain.N": 128, "verify.resolutions": [64, 128, 256]}),
    "conformal": (["verify", "conformal"], {"domain.N": 128, "verify.resolutions": [64, 128, 256]}),
    "isoperimetric": (["verify", "isoperimetric"], {"domain.N": 128}),
    "monotonicity": (["verify", "monotonicity"], {"domain.N": 128}),
    "regularity": (["verify", "regularity"], {"verify.resolutions": [128, 256], "bubble.k_values": [8, 16, 32, 64]}),
    "bubble": (["bubble"], {"domain.N": 256, "bubble.family": "FSProductBubble", "bubble.k_values": [8, 16, 32, 64]}),
    "tree": (["bubble"], {"domain.N": 256, "bubble.family": "TwoScale", "bubble.k_values": [8, 16, 32, 64]}),
}
BUDGET = {"torsion": 120, "bochner": 300, "conformal": 60, "isoperimetric": 90, "monotonicity": 90,
          "regularity": 300, "bubble": 600, "tree": 600}


def _run(root, name):
    argv, cfg = RUNS[name]
    out = root / name
    cfg_path = root / f"{name}.json"
    cfg_path.write_text(json.dumps(cfg))
    t = time.perf_counter()
    code = main(argv + ["--config", str(cfg_path), "--out", str(out), "--seed", SEED])
    return {"out": out, "code": code, "seconds": time.perf_counter() - t}


def _files(out):
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


class Artifacts:
    def __init__(self, root):
        self.root = root
        self.runs = {}

    def __getitem__(self, name):
        if name not in self.runs:
            self.runs[name] = _run(self.root, name)
        return self.runs[name]

    def results(self, name):
        return json.loads((self[name]["out"] / "results.json").read_text())

    def table(self, name):
        with open(self[name]["out"] / "tables" / f"{name}.csv") as fh:
            return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    return Artifacts(tmp_path_factory.mktemp("acceptance"))


def _timed(run, name):
    return run["seconds"] <= BUDGET[name], f"{run['seconds']:.0f}s/{BUDGET[name]}s"


def test_criterion_01_torsion_identity(artifacts, acceptance_line):
    run = artifacts["torsion"]
    res = artifacts.results("torsion")
    rows = artifacts.table("torsion")
    orders = [float(r["order"]) for r in rows if r["status"] == "order"]
    hopf = max(float(r["residual_N256"]) for r in rows if r["target"] == "Hopf")
    fast, t = _timed(run, "torsion")
    ok = len(rows) == 30 and res["passed"] and min(orders) >= 3.5 and hopf < 1e-6 and fast
    assert acceptance_line(1, ok, f"min order {min(orders):.2f} over {len(orders)} fitted maps, "
                                  f"Hopf residual at N=256 {hopf:.2e}, {t}")


def _holomorphic_residuals():
    return np.array([max_residual(disk_map(fn, tid, N=128))
                     for tid in ("FlatC2", "FSProduct", "Hopf") for fn in holomorphic_maps(tid)])


def test_criterion_02_holomorphic_maps_are_harmonic(acceptance_line):
    t = time.perf_counter()
    res = _holomorphic_residuals()
    dt = time.perf_counter() - t
    ok = res.size == 15 and res.max() < 1e-6 and dt < 60
    assert acceptance_line(2, ok, f"max residual {res.max():.2e} over {res.size} maps at N=128, {dt:.0f}s/60s")


def _oracle_deviation(tid):
    rng = np.random.default_rng(int(SEED))
    z = random_points(rng, 1000, tid)
    fx, fxb, fxxb = rng.standard_normal((3, 1000, 2)) + 1j * rng.standard_normal((3, 1000, 2))
    ours = tension_from_jet(make_target(tid), 0, z, fx, fxb, fxxb)
    ref = levi_civita_tension(tid, z, fx, fxb, fxxb)
    return np.linalg.norm(ours - ref, axis=-1) / np.linalg.norm(ref, axis=-1)


def test_criterion_03_kahler_oracle(acceptance_line):
    t = time.perf_counter()
    worst = max(_oracle_deviation(tid).max() for tid in ("FlatC2", "FSProduct"))
    dt = time.perf_counter() - t
    assert acceptance_line(3, worst < 1e-10 and dt < 60, f"max relative deviation {worst:.2e}, {dt:.0f}s/60s")


def test_criterion_04_bochner(artifacts, acceptance_line):
    run = artifacts["bochner"]
    res = artifacts.results("bochner")
    ratios = res["summary"]["hopf_ratios"]
    flat = res["summary"]["flat_defect"]
    fast, t = _timed(run, "bochner")
    in_band = all(2.5 <= q <= 6 for q in ratios)
    ok = in_band and flat < 1e-8 and fast
    assert acceptance_line(4, ok, f"Hopf reduction factors {', '.join(f'{q:.1f}' for q in ratios)} "
                                  f"(band 2.5-6), flat defect {flat:.1e}, {t}")


def test_criterion_05_conformal_invariance(artifacts, acceptance_line):
    run = artifacts["conformal"]
    res = artifacts.results("conformal")
    s = res["summary"]
    fast, t = _timed(run, "conformal")
    ok = res["passed"] and s["max_constant_mu"] < 1e-8 and s["min_order"] >= 3.5 and fast
    assert acceptance_line(5, ok, f"constant mu {s['max_constant_mu']:.1e}, "
                                  f"variable mu order {s['min_order']:.2f}, {t}")


def test_criterion_06_isoperimetric_and_monotonicity(artifacts, acceptance_line):
    iso, mono = artifacts["isoperimetric"], artifacts["monotonicity"]
    ri, rm = artifacts.results("isoperimetric"), artifacts.results("monotonicity")
    ratios = [float(r["ratio"]) for r in artifacts.table("isoperimetric") if r["flags"] != "flat_reference"]
    finite = np.isfinite(ratios).all()
    seconds = iso["seconds"] + mono["seconds"]
    ok = (ri["passed"] and rm["passed"] and finite and ri["summary"]["disks"] >= 20
          and ri["summary"]["flat_deviation"] < 0.01 and rm["summary"]["C5"] > 0 and seconds < 180)
    assert acceptance_line(6, ok, f"{ri['summary']['disks']} disks, A/L^2 <= {ri['summary']['C4']:.4f}, "
                                  f"flat deviation {ri['summary']['flat_deviation']:.1e}, "
                                  f"min A(r)/r^2 {rm['summary']['C5']:.3f}, {seconds:.0f}s/180s")


def test_criterion_07_epsilon_regularity(artifacts, acceptance_line):
    run = artifacts["regularity"]
    s = artifacts.results("regularity")["summary"]
    fast, t = _timed(run, "regularity")
    c3 = s["C3"]
    ok = np.isfinite(list(c3.values())).all() and s["C3_drift"] <= 0.10 and fast
    assert acceptance_line(7, ok, f"C3 at N=128/256: {c3['128']:.4f}/{c3['256']:.4f}, "
                                  f"drift {100 * s['C3_drift']:.1f}%, {t}")


def test_criterion_08_bubble_pipeline(artifacts, acceptance_line):
    run = artifacts["bubble"]
    data = json.loads((run["out"] / "tree.json").read_text())
    h = DomainChart("SpherePair", 256).h
    kids = data["tree"]["children"]
    checks = {"one point": len(kids) == 1}
    if kids:
        b = kids[0]
        rd = b["renormalization"]
        necks = [n["energy"] for n in b["necks"]]
        checks["point within a cell"] = abs(complex(*b["point"])) <= h
        checks["mass 4pi"] = abs(b["mass_in"] / (4 * np.pi) - 1) <= 0.02
        checks["neck monotone"] = all(b2 < a2 for a2, b2 in zip(necks, necks[1:]))
        checks["neck small at k=64"] = necks[-1] < 0.05 * 4 * np.pi
        checks["center bound"] = all(rd["center_bound"])
        checks["scale bound"] = all(rd["scale_bound"])
    checks["identity"] = data["energy_identity"]["relative"] <= 0.02
    checks["mismatch"] = data["distance_mismatch"] < 3 * h
    checks["runtime"] = _timed(run, "bubble")[0]
    failed = [k for k, v in checks.items() if not v]
    detail = (f"identity {data['energy_identity']['relative']:.1e}, mismatch {data['distance_mismatch']:.1e}, "
              f"neck energies {[round(e, 3) for e in necks] if kids else []}, {_timed(run, 'bubble')[1]}"
              + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert acceptance_line(8, not failed, detail)


def test_criterion_09_tree_iteration(artifacts, acceptance_line):
    run = artifacts["tree"]
    data = json.loads((run["out"] / "tree.json").read_text())
    rows = data["mass_accounting"]
    worst = max((r["relative"] for r in rows), default=np.inf)
    fast, t = _timed(run, "tree")
    ok = data["depth"] == 2 and worst <= 0.03 and fast
    assert acceptance_line(9, ok, f"depth {data['depth']}, {data['node_count']} nodes, "
                                  f"worst accounting gap {100 * worst:.3f}%, {t}")


def test_criterion_10_determinism(artifacts, acceptance_line):
    first = {name: _files(artifacts[name]["out"]) for name in RUNS}
    arrays = (_holomorphic_residuals().tobytes(), _oracle_deviation("FSProduct").tobytes())
    differing = []
    for name in RUNS:
        again = _run(artifacts.root, name)
        if _files(again["out"]) != first[name]:
            differing.append(name)
    if arrays != (_holomorphic_residuals().tobytes(), _oracle_deviation("FSProduct").tobytes()):
        differing.append("in-process")
    n_files = sum(len(f) for f in first.values())
    assert acceptance_line(10, not differing, f"{n_files} artifact files compared"
                                              + (f"; differing: {', '.join(differing)}" if differing else ""))
