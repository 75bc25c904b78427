"""Command-line front end.

Commands::

    chernlab solve            [--config C] [--out DIR] [--seed S] [--resolution-override N]
    chernlab verify SUITE     ...
    chernlab bubble           ...
    chernlab snapshot-info PATH

Exit codes: 0 success, 1 configuration error, 2 diverged solve, 3 invariant failure.
The output directory may also be set with ``CHERNLAB_OUT``; ``--out`` wins.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

from . import snapshot
from .bubbles import (BubbleConfig, build_tree, distance_bubbling_check, energy_identity_check, mass_accounting,
                      tree_to_dict, _clean)
from .config import ExperimentConfig
from .corpus import named_map
from .domains import DomainChart
from .errors import ChernLabError, ConfigError, Diverged, StepTooLarge
from .flow import FAMILIES, FlowConfig, concentrating_family, family_function, flow_to_harmonic, sphere_map
from .pullback import MapState, max_residual, pullback
from .regularity import write_csv
from .suites import SUITES, run_suite
from .targets import make_target

log = logging.getLogger("chernlab")

EXIT_CONFIG, EXIT_DIVERGED, EXIT_INVARIANT = 1, 2, 3
REQUIRED = {"solve": ("domain.kind", "domain.N", "target.id"), "bubble": ("bubble.family",), "verify": ()}


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def load_config(args, command: str) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config, REQUIRED.get(command, ()))
    else:
        cfg = ExperimentConfig()
    out = args.out or os.environ.get("CHERNLAB_OUT")
    return cfg.with_overrides(**{"seed": args.seed, "domain.N": args.resolution_override, "output.dir": out})


def _out_dir(cfg) -> Path:
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def initial_state(cfg: ExperimentConfig) -> MapState:
    if cfg["initial.snapshot"]:
        try:
            return snapshot.load(cfg["initial.snapshot"])
        except OSError as exc:
            raise ConfigError(f"initial.snapshot: {exc}") from None
    dom = DomainChart(cfg["domain.kind"], cfg["domain.N"], size=cfg["domain.size"],
                      background=cfg["domain.background"])
    tgt = make_target(cfg["target.id"])
    name, params = cfg["initial.map"], dict(cfg["initial.params"])
    if name in FAMILIES:
        if dom.kind != "SpherePair" or tgt.id != "FSProduct":
            raise ConfigError(f"initial.map {name!r} needs a SpherePair domain and the FSProduct target")
        return MapState.from_function(dom, tgt, sphere_map(family_function(name, float(params.get("k", 1.0)))))
    if dom.kind == "SpherePair":
        raise ConfigError("SpherePair domains take a family map (initial.map one of "
                          + ", ".join(FAMILIES) + ")")
    params.setdefault("seed", cfg["seed"])
    return MapState.from_function(dom, tgt, named_map(name, tgt.id, **params))


def cmd_solve(cfg: ExperimentConfig) -> int:
    ms = initial_state(cfg)
    fc = FlowConfig(dt=cfg["flow.dt"], scheme=cfg["flow.scheme"], tol=cfg["flow.tol"],
                    max_steps=cfg["flow.max_steps"])
    try:
        ms, report = flow_to_harmonic(ms, fc)
    except (Diverged, StepTooLarge) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = _out_dir(cfg)
    snapshot.save(ms, out / "solution.clsn", meta={"command": "solve", "seed": cfg["seed"]})
    pb = pullback(ms)
    result = {"command": "solve", "config": cfg.values, "report": asdict(report),
              "final_residual": max_residual(ms, pb), "energy": ms.domain.integrate(pb.energy_density),
              "snapshot": "solution.clsn"}
    _dump(result, out / "results.json")
    if not report.converged:
        print(f"warning: not converged after {report.steps_taken} steps "
              f"(residual {report.residual_history[-1]:.3e})", file=sys.stderr)
    print(f"solve: converged={report.converged} steps={report.steps_taken} "
          f"residual={report.residual_history[-1]:.3e}")
    return 0


def cmd_verify(cfg: ExperimentConfig, suite: str) -> int:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    res = run_suite(suite, cfg)
    out = _out_dir(cfg)
    (out / "tables").mkdir(exist_ok=True)
    write_csv(res.rows, out / "tables" / f"{suite}.csv")
    _dump({"command": "verify", "suite": suite, "config": cfg.values, "passed": res.passed,
           "summary": res.summary, "failures": res.failures}, out / "results.json")
    print(f"verify {suite}: {'pass' if res.passed else 'FAIL'} ({len(res.rows)} rows)")
    for row in res.failures:
        print(f"failing row: {json.dumps(_clean(row), sort_keys=True)}", file=sys.stderr)
    return 0 if res.passed else EXIT_INVARIANT


def cmd_bubble(cfg: ExperimentConfig) -> int:
    kind = cfg["bubble.family"]
    if kind not in FAMILIES:
        raise ConfigError(f"bubble.family: unknown family {kind!r}")
    try:
        bcfg = BubbleConfig(epsilon1=cfg["bubble.epsilon1_candidate"], C0=cfg["bubble.C0"])
    except ValueError as exc:
        raise ConfigError(f"bubble: {exc}") from None
    family = concentrating_family(kind, cfg["bubble.k_values"], N=cfg["domain.N"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tree = build_tree(family, bcfg)
    identity = energy_identity_check(tree)
    mismatch = distance_bubbling_check(tree)
    accounting = mass_accounting(tree)
    out = _out_dir(cfg)
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    for node in tree.walk():
        snapshot.save(node.map, snaps / f"node_{node.label}.clsn",
                      meta={"command": "bubble", "family": kind, "node": node.label})
    summary = {"family": kind, "k_values": cfg["bubble.k_values"], "depth": tree.depth,
               "node_count": tree.node_count, "energy_identity": identity, "distance_mismatch": mismatch,
               "mass_accounting": accounting, "warnings": sorted({str(w.message) for w in caught}),
               "identity_tol": cfg["bubble.identity_tol"]}
    _dump({"tree": tree_to_dict(tree), **summary}, out / "tree.json")
    passed = identity["relative"] <= cfg["bubble.identity_tol"]
    _dump({"command": "bubble", "config": cfg.values, "passed": passed, **summary}, out / "results.json")
    print(f"bubble {kind}: depth={tree.depth} nodes={tree.node_count} "
          f"identity={identity['relative']:.2e} mismatch={mismatch:.2e}")
    if not passed:
        print(f"energy identity misses tolerance: relative {identity['relative']:.3e} "
              f"> {cfg['bubble.identity_tol']}", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


def cmd_snapshot_info(path) -> int:
    try:
        head = snapshot.info(path)
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot {path}: {exc}") from None
    print(json.dumps(head, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with dotted keys")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed (non-negative)")
    common.add_argument("--resolution-override", type=int, metavar="N", help="replace domain.N")
    p = argparse.ArgumentParser(prog="chernlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="flow a map to a Chern-harmonic map")
    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("suite", help=", ".join(SUITES))
    sub.add_parser("bubble", parents=[common], help="build the bubble tree of a family")
    s = sub.add_parser("snapshot-info", help="print a snapshot header")
    s.add_argument("path")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "snapshot-info":
            return cmd_snapshot_info(args.path)
        if args.command == "verify" and args.suite not in SUITES:
            raise ConfigError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
        cfg = load_config(args, args.command)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite)
        return cmd_bubble(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChernLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
