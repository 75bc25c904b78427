"""Verification suites driven by an :class:`ExperimentConfig`.

Each suite returns a :class:`SuiteResult` whose rows become a CSV table and
whose summary goes into ``results.json``.  A row with ``passed == False``
fails the suite.

Refinement studies fit an order only over levels whose error is above a
rounding floor; a study whose finest levels all sit on the floor passes with
status ``"floor"``.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .config import ExperimentConfig
from .corpus import holomorphic_maps, nonholomorphic_hopf, polynomial, random_trig
from .domains import DomainChart
from .errors import BoundaryIntersected, ConfigError
from .flow import FlowConfig, concentrating_family, flow_to_harmonic
from .pullback import (MapState, check_mask, conformal_change_check, max_residual, pullback,
                       torsion_identity_residual)
from .regularity import (bochner_check, bochner_fields, epsilon_regularity_check,
                         fit_differential_inequality, interior_mask, isoperimetric_check,
                         monotonicity_check)
from .targets import make_target

TARGETS = ("FlatC2", "FSProduct", "Hopf")
SUITES = ("torsion", "bochner", "conformal", "operators", "isoperimetric", "monotonicity", "regularity")

TORSION_ORDER = 3.5
TORSION_FLOOR = 1e-10
HOPF_TORSION_TOL = 1e-6
HOLOMORPHIC_TOL = 1e-6
SECOND_ORDER_MIN = 2.5
SECOND_ORDER_FLOOR = 1e-8
BOCHNER_BAND = (2.5, 6.0)
FLAT_BOCHNER_TOL = 1e-8
CONSTANT_MU_TOL = 1e-8
CONFORMAL_ORDER = 3.5
CONFORMAL_FLOOR = 1e-12
FLAT_ISO_TOL = 0.01
C3_STABILITY = 0.10
CONFORMAL_MAPS = 2


@dataclasses.dataclass
class SuiteResult:
    name: str
    rows: list
    summary: dict

    @property
    def failures(self) -> list:
        return [r for r in self.rows if not r.get("passed", True)]

    @property
    def passed(self) -> bool:
        return not self.failures


def refinement_order(hs, errors, floor: float):
    """Least-squares order of ``errors ~ h^p`` over the levels above ``floor``.

    Returns
    -------
    order : float
        nan when fewer than two levels lie above the floor.
    status : str
        ``"order"`` or ``"floor"``.
    """
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    keep = errors > floor
    if keep.sum() < 2:
        return math.nan, "floor"
    return float(np.polyfit(np.log(hs[keep]), np.log(errors[keep]), 1)[0]), "order"


def _disk(N, cfg: ExperimentConfig, background=None) -> DomainChart:
    return DomainChart("Disk", N, size=cfg["domain.size"], background=background or cfg["domain.background"])


def _n(cfg):
    return cfg["domain.N"]


# ----------------------------------------------------------------------

def torsion_suite(cfg: ExperimentConfig) -> SuiteResult:
    """Torsion identity on random trigonometric maps under refinement."""
    resolutions = cfg["verify.resolutions"]
    rows = []
    for tid in TARGETS:
        tgt = make_target(tid)
        for i in range(cfg["verify.corpus_size"]):
            fn = random_trig(tid, seed=cfg["seed"] * 1000 + i)
            errs, hs = [], []
            for N in resolutions:
                dom = _disk(N, cfg)
                ms = MapState.from_function(dom, tgt, fn)
                errs.append(float(torsion_identity_residual(ms)[check_mask(dom)].max()))
                hs.append(dom.h)
            order, status = refinement_order(hs, errs, TORSION_FLOOR)
            ok = status == "floor" or order >= TORSION_ORDER
            if tid == "Hopf" and resolutions[-1] >= 256:
                ok = ok and errs[-1] < HOPF_TORSION_TOL
            row = {"target": tid, "map": i}
            row.update({f"residual_N{N}": e for N, e in zip(resolutions, errs)})
            row.update({"order": order, "status": status, "passed": bool(ok)})
            rows.append(row)
    orders = [r["order"] for r in rows if r["status"] == "order"]
    summary = {"maps": len(rows), "min_order": min(orders) if orders else math.nan,
               "max_final_residual": max(r[f"residual_N{resolutions[-1]}"] for r in rows)}
    return SuiteResult("torsion", rows, summary)


def operators_suite(cfg: ExperimentConfig) -> SuiteResult:
    """Holomorphic maps: harmonic residual, first- and second-order operator defects."""
    N = _n(cfg)
    resolutions = cfg["verify.resolutions"]
    rows = []
    for tid in TARGETS:
        tgt = make_target(tid)
        for i, fn in enumerate(holomorphic_maps(tid)):
            dom = _disk(N, cfg)
            ms = MapState.from_function(dom, tgt, fn)
            pb = pullback(ms)
            res = max_residual(ms, pb)
            first = float(pb.first_order_defect[check_mask(dom)].max())
            second, hs = [], []
            for M in resolutions:
                d = _disk(M, cfg)
                second.append(float(pullback(MapState.from_function(d, tgt, fn))
                                    .second_order_defect[interior_mask(d)].max()))
                hs.append(d.h)
            order, status = refinement_order(hs, second, SECOND_ORDER_FLOOR)
            ok = res < HOLOMORPHIC_TOL and first < HOLOMORPHIC_TOL
            ok = ok and (status == "floor" or order >= SECOND_ORDER_MIN)
            rows.append({"target": tid, "map": i, "N": N, "harmonic_residual": res,
                         "first_order_defect": first, "second_order_defect": second[-1],
                         "second_order_order": order, "status": status, "passed": bool(ok)})
    summary = {"max_harmonic_residual": max(r["harmonic_residual"] for r in rows),
               "max_first_order_defect": max(r["first_order_defect"] for r in rows)}
    return SuiteResult("operators", rows, summary)


def solved_hopf(N: int, cfg: ExperimentConfig, tol: float | None = None) -> MapState:
    """Chern-harmonic map into the Hopf surface with the boundary values of a nonholomorphic map."""
    ms = MapState.from_function(_disk(N, cfg), make_target("Hopf"), nonholomorphic_hopf())
    fc = FlowConfig(tol=tol or cfg["flow.tol"], max_steps=cfg["flow.max_steps"], scheme=cfg["flow.scheme"],
                    dt=cfg["flow.dt"])
    ms, report = flow_to_harmonic(ms, fc)
    if not report.converged:
        raise RuntimeError(f"Hopf solve at N={N} stalled at residual {report.residual_history[-1]:.3e}")
    return ms


def bochner_suite(cfg: ExperimentConfig) -> SuiteResult:
    """Bochner formula on a solved Hopf map under refinement and on a flat polynomial."""
    resolutions = cfg["verify.resolutions"]
    states = [solved_hopf(N, cfg) for N in resolutions]
    rep = bochner_check(states, harmonic_threshold=10 * cfg["flow.tol"])
    rows = []
    for i, (N, d) in enumerate(zip(resolutions, rep.defects)):
        ratio = rep.ratios[i - 1] if i else math.nan
        ok = i == 0 or BOCHNER_BAND[0] <= ratio <= BOCHNER_BAND[1]
        rows.append({"case": "hopf_solved", "N": N, "defect": d, "ratio": ratio, "passed": bool(ok)})
    # flat holomorphic polynomial: e = |P'|^2 and Delta e = 2 |P''|^2
    dom = DomainChart("Disk", _n(cfg), size=cfg["domain.size"])
    ms = MapState.from_function(dom, make_target("FlatC2"), polynomial("FlatC2", [0, 0.5, 0.3, 0.2j], [0]))
    lhs, rhs = bochner_fields(ms)
    flat = float(np.abs(lhs - rhs)[interior_mask(dom)].max())
    rows.append({"case": "flat_polynomial", "N": dom.N, "defect": flat, "ratio": math.nan,
                 "passed": bool(flat < FLAT_BOCHNER_TOL)})
    summary = {"hopf_order": rep.order, "hopf_ratios": rep.ratios, "flat_defect": flat}
    return SuiteResult("bochner", rows, summary)


def conformal_suite(cfg: ExperimentConfig) -> SuiteResult:
    """Second-form mixed blocks under constant and variable conformal changes."""
    resolutions = cfg["verify.resolutions"]
    rows = []
    for tid in TARGETS:
        tgt = make_target(tid)
        for i in range(min(cfg["verify.corpus_size"], CONFORMAL_MAPS)):
            fn = random_trig(tid, seed=cfg["seed"] * 1000 + 500 + i)
            const, var, hs = [], [], []
            for N in resolutions:
                dom = _disk(N, cfg)
                ms = MapState.from_function(dom, tgt, fn)
                const.append(conformal_change_check(ms, 2.0))
                # ratio of the flat and spherical conformal factors
                var.append(conformal_change_check(ms, (1 + np.abs(dom.x) ** 2) / 2))
                hs.append(dom.h)
            order, status = refinement_order(hs, var, CONFORMAL_FLOOR)
            ok = max(const) < CONSTANT_MU_TOL and (status == "floor" or order >= CONFORMAL_ORDER)
            rows.append({"target": tid, "map": i, "constant_mu": max(const), "variable_mu": var[-1],
                         "order": order, "status": status, "passed": bool(ok)})
    summary = {"max_constant_mu": max(r["constant_mu"] for r in rows),
               "min_order": min((r["order"] for r in rows if r["status"] == "order"), default=math.nan)}
    return SuiteResult("conformal", rows, summary)


def _disk_corpus(cfg: ExperimentConfig):
    """Holomorphic maps into every target, the flat inclusion, and a solved Hopf map."""
    N = _n(cfg)
    out = []
    for tid in TARGETS:
        tgt = make_target(tid)
        for i, fn in enumerate(holomorphic_maps(tid)):
            out.append((f"{tid}:holomorphic{i}", MapState.from_function(_disk(N, cfg), tgt, fn)))
    inc = polynomial("FlatC2", [0, 1], [0])
    out.append(("FlatC2:inclusion", MapState.from_function(DomainChart("Disk", N, size=cfg["domain.size"]),
                                                           make_target("FlatC2"), inc)))
    out.append(("Hopf:solved", solved_hopf(N, cfg)))
    return out


ISO_DISKS = ((0.0, 0.4), (0.0, 0.7), (0.2 + 0.2j, 0.3))


def isoperimetric_suite(cfg: ExperimentConfig) -> SuiteResult:
    """Area against squared boundary length over coordinate disks of the corpus."""
    half = cfg["domain.size"]
    rows = []
    for name, ms in _disk_corpus(cfg):
        for c, frac in ISO_DISKS:
            res = isoperimetric_check(ms, c * half / 0.5, frac * half, epsilon2=cfg["analysis.epsilon2_candidate"])
            rows.append({"map": name, "center_re": float(np.real(c)), "center_im": float(np.imag(c)),
                         "radius": frac * half, "area": res.area, "length": res.length, "ratio": res.ratio,
                         "conformality": res.conformality, "flags": ";".join(res.flags),
                         "passed": bool(res.degenerate or np.isfinite(res.ratio))})
    flat = [r["ratio"] for r in rows if r["map"] == "FlatC2:inclusion"]
    flat_dev = max(abs(4 * np.pi * v - 1) for v in flat)
    rows.append({"map": "FlatC2:inclusion", "center_re": 0.0, "center_im": 0.0, "radius": math.nan,
                 "area": math.nan, "length": math.nan, "ratio": 1 / (4 * np.pi), "conformality": math.nan,
                 "flags": "flat_reference", "passed": bool(flat_dev < FLAT_ISO_TOL)})
    ratios = [r["ratio"] for r in rows[:-1] if np.isfinite(r["ratio"])]
    summary = {"disks": len(rows) - 1, "C4": max(ratios), "flat_deviation": flat_dev}
    return SuiteResult("isoperimetric", rows, summary)


def monotonicity_suite(cfg: ExperimentConfig) -> SuiteResult:
    """``A(r) / r^2`` in extrinsic balls about the image of the disk center."""
    rows = []
    for name, ms in _disk_corpus(cfg):
        tgt, dom = ms.target, ms.domain
        i = np.argmin(np.abs(dom.x[0]))
        p = ms.points[0].reshape(-1, 2)[i]
        chart = int(ms.chart_ids[0].flat[i])
        edge = np.zeros(dom.shape, dtype=bool)
        edge[:, [0, -1], :] = edge[:, :, [0, -1]] = True
        reach = float(np.min(tgt.distance(ms.points, ms.chart_ids, p, chart)[edge]))
        radii = reach * np.geomspace(0.1, 0.8, 6)
        try:
            curve = monotonicity_check(ms, p, radii, point_chart=chart)
        except BoundaryIntersected as exc:
            rows.append({"map": name, "reach": reach, "C5": math.nan, "max_normalized": math.nan,
                         "error": str(exc), "passed": False})
            continue
        rows.append({"map": name, "reach": reach, "C5": curve.C5, "max_normalized": float(curve.normalized.max()),
                     "error": "", "passed": bool(curve.positive)})
    summary = {"curves": len(rows), "C5": min(r["C5"] for r in rows)}
    return SuiteResult("monotonicity", rows, summary)


def _centers(n=7, extent=0.6):
    g = np.linspace(-extent, extent, n)
    return (g[:, None] + 1j * g[None, :]).ravel()


def regularity_suite(cfg: ExperimentConfig) -> SuiteResult:
    """Empirical epsilon-regularity constant on the bubbling family at the two finest grids.

    Family members whose bubble scale ``1/k`` is below the patch width over the
    coarser resolution (about one cell) are skipped.  The differential-inequality constants of the holomorphic
    Hopf corpus are reported alongside.
    """
    resolutions = sorted(cfg["verify.resolutions"])[-2:]
    if len(resolutions) < 2:
        raise ConfigError("verify.resolutions needs two entries for the regularity suite")
    ks = [k for k in cfg["bubble.k_values"] if 4 * k <= resolutions[0]]
    eps1 = cfg["analysis.epsilon1_candidate"] if cfg["bubble.epsilon1_candidate"] is None \
        else cfg["bubble.epsilon1_candidate"]
    rows, C3 = [], {}
    for N in resolutions:
        best = 0.0
        for ms in concentrating_family("FSProductBubble", ks, N=N):
            for r in cfg["analysis.radii_ladder"]:
                table, c3 = epsilon_regularity_check(ms, _centers(), r, eps1)
                ok = [t["ratio"] for t in table if t["status"] == "ok"]
                rows.append({"N": N, "k": ms.family[1], "r": r, "admissible": len(ok),
                             "C3": c3, "passed": True})
                if ok:
                    best = max(best, c3)
        C3[N] = best
    lo, hi = C3[resolutions[0]], C3[resolutions[1]]
    drift = abs(hi / lo - 1) if lo > 0 else math.inf
    rows.append({"N": resolutions[1], "k": math.nan, "r": math.nan, "admissible": math.nan,
                 "C3": hi, "passed": bool(drift <= C3_STABILITY)})
    tgt = make_target("Hopf")
    fit = fit_differential_inequality([MapState.from_function(_disk(_n(cfg), cfg), tgt, fn)
                                       for fn in holomorphic_maps("Hopf")])
    summary = {"C3": {str(k): v for k, v in C3.items()}, "C3_drift": drift, "k_values": ks,
               "epsilon1_candidate": eps1, "C1": fit.C1, "C2": fit.C2,
               "scaling_deviation": fit.scaling_deviation}
    return SuiteResult("regularity", rows, summary)


_SUITES = {"torsion": torsion_suite, "bochner": bochner_suite, "conformal": conformal_suite,
           "operators": operators_suite, "isoperimetric": isoperimetric_suite,
           "monotonicity": monotonicity_suite, "regularity": regularity_suite}


def run_suite(name: str, cfg: ExperimentConfig) -> SuiteResult:
    try:
        fn = _SUITES[name]
    except KeyError:
        raise ConfigError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    return fn(cfg)
