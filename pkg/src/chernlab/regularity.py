"""Numerical checks of the analytic estimates for Chern-harmonic maps.

Everything here is read-only over :class:`~chernlab.pullback.MapState`
objects.  The checks return small dataclasses (or lists of table rows) that can
be written out with :func:`write_csv` and :func:`write_json`.

Conventions
-----------
``Delta`` is ``2 d dbar / lambda^2``, half the Laplace-Beltrami operator, and
the domain curvature entering the Bochner formula is half the Gauss curvature.
"""
from __future__ import annotations

import csv
import dataclasses
import json
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .domains import DomainChart, boundary_length, circle_loop
from .errors import BoundaryIntersected, EmptySuite, InsufficientRadii, RadiusTooLarge
from .pullback import (MapState, check_mask, curvature_contraction, pullback,
                       require_harmonic, rescaled_domain)

__all__ = [
    "AnalysisConfig", "BochnerReport", "InequalityFit", "IsoperimetricResult", "MonotonicityCurve",
    "MorreyFit", "curvature_contraction", "laplacian", "interior_mask", "bochner_fields", "bochner_check",
    "fit_differential_inequality", "epsilon_regularity_check", "isoperimetric_check",
    "monotonicity_check", "morrey_decay_fit", "write_csv", "write_json",
]

# Bochner defects on Dirichlet grids are read on the central square of this
# relative half-width, a region fixed under refinement; one-sided stencils
# leave a boundary layer that does not converge pointwise.
BOCHNER_INTERIOR = 0.5
# Inequality fits drop this many rings next to a Dirichlet boundary.
FIT_DEPTH = 6


@dataclasses.dataclass
class AnalysisConfig:
    """Radii and smallness candidates for the regularity checks.

    The smallness thresholds of the estimates are not known constructively, so
    they enter as candidates and the checks report where the estimates hold.
    Fitted constants are collected in ``constants``.
    """

    radii_ladder: list = dataclasses.field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4])
    epsilon1_candidate: float = 1.0
    epsilon2_candidate: float = 1.0
    constants: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.radii_ladder, dtype=float)
        if r.size and (np.any(r <= 0) or np.any(np.diff(r) <= 0)):
            raise ValueError("radii_ladder must be positive and increasing")


# ----------------------------------------------------------------------
# Bochner formula

@dataclasses.dataclass
class BochnerReport:
    lhs: np.ndarray
    rhs: np.ndarray
    defect: float
    order: float
    fit_residual: float
    resolutions: list
    defects: list

    @property
    def ratios(self) -> list:
        """Defect reduction factors between consecutive resolutions."""
        d = self.defects
        return [d[i] / d[i + 1] if d[i + 1] > 0 else np.inf for i in range(len(d) - 1)]


def laplacian(domain: DomainChart, f) -> np.ndarray:
    """``2 d dbar f / lambda^2`` for a real scalar field."""
    df, _ = domain.d_complex(f)
    _, ddf = domain.d_complex(df)
    return (2.0 * ddf / domain.lam**2).real


def bochner_fields(ms: MapState, pb=None):
    """Both sides of the Bochner formula for a Chern-harmonic map.

    Returns
    -------
    lhs, rhs : real arrays of shape (P, N, N)
        ``Delta e`` from grid differentiation and the assembled right side.
    """
    pb = pb or pullback(ms)
    fc, sf = pb.frame_coefficients, pb.second_form
    a1, ab = fc.a1, fc.a1bar
    e = pb.energy_density
    c = pb.curvature_contraction
    X, Y = pb.XY
    conj = np.conj
    rhs = (2 * sf.A2 + ms.domain.K * e
           - 2 * np.einsum("...i,...j,...ij->...", conj(a1), a1, c).real
           + 2 * np.einsum("...i,...j,...ji->...", ab, conj(ab), c).real
           - 4 * np.sum(a1 * conj(X), axis=-1).real
           + 4 * np.sum(ab * conj(Y), axis=-1).real)
    return laplacian(ms.domain, e), rhs


def interior_mask(domain: DomainChart, fraction: float = BOCHNER_INTERIOR) -> np.ndarray:
    """Owned points, restricted on a Dirichlet grid to a central square of fixed physical size."""
    own = check_mask(domain)
    if domain.kind == "Disk":
        half = fraction * domain.axis.max()
        own &= np.maximum(np.abs(domain.x.real), np.abs(domain.x.imag)) <= half
    return own


def bochner_check(maps, resolutions: Sequence[int] | None = None, harmonic_threshold=None,
                  fraction: float = BOCHNER_INTERIOR) -> BochnerReport:
    """Bochner defect of a Chern-harmonic map under grid refinement.

    Parameters
    ----------
    maps : MapState, sequence of MapState, or callable
        A callable is invoked as ``maps(N)`` for every entry of ``resolutions``.
    harmonic_threshold : float, optional
        Overrides the default harmonicity threshold of each grid.

    Raises
    ------
    NotHarmonic
        If any map fails the harmonicity precondition.
    """
    if callable(maps):
        if not resolutions:
            raise ValueError("resolutions are required with a map builder")
        states = [maps(N) for N in resolutions]
    elif isinstance(maps, MapState):
        states = [maps]
    else:
        states = list(maps)
    defects, hs = [], []
    for ms in states:
        pb = pullback(ms)
        require_harmonic(ms, pb, harmonic_threshold)
        lhs, rhs = bochner_fields(ms, pb)
        mask = interior_mask(ms.domain, fraction)
        defects.append(float(np.abs(lhs - rhs)[mask].max()))
        hs.append(ms.domain.h)
    order, resid = np.nan, np.nan
    good = [(h, d) for h, d in zip(hs, defects) if d > 0]
    if len(good) >= 2:
        lh, ld = np.log(np.array(good)).T
        coef, res, *_ = np.polyfit(lh, ld, 1, full=True)
        order = float(coef[0])
        resid = float(np.sqrt(res[0] / len(good))) if res.size else 0.0
    return BochnerReport(lhs, rhs, defects[-1], order, resid,
                         [ms.domain.N for ms in states], defects)


# ----------------------------------------------------------------------
# Differential inequality

@dataclasses.dataclass
class InequalityFit:
    """Least constants with ``Delta e >= -C1 e - C2 e^2`` over a suite."""

    C1: float
    C2: float
    scale: float = np.nan
    C1_scaled: float = np.nan
    C2_scaled: float = np.nan
    n_points: int = 0

    def __iter__(self):
        return iter((self.C1, self.C2))

    @property
    def scaling_deviation(self) -> float:
        """Worst relative deviation from ``C1 -> C1 / s^2`` and ``C2 -> C2``."""
        s2 = self.scale**2
        dev1 = abs(self.C1_scaled * s2 - self.C1) / max(abs(self.C1), 1e-12)
        dev2 = abs(self.C2_scaled - self.C2) / max(abs(self.C2), 1e-12)
        return float(max(dev1, dev2))


def _inequality_samples(suite, depth):
    lap, en = [], []
    for ms in suite:
        pb = pullback(ms)
        mask = check_mask(ms.domain, depth)
        lap.append(laplacian(ms.domain, pb.energy_density)[mask])
        en.append(pb.energy_density[mask])
    return np.concatenate(lap), np.concatenate(en)


def _least_constants(lap, e, slack):
    # minimise mean(C1 e + C2 e^2) subject to C1 e + C2 e^2 >= -lap - slack
    w = np.array([e.mean(), (e**2).mean()])
    if not np.all(w > 0):
        return 0.0, 0.0
    A = -np.stack([e, e**2], axis=1) / w
    res = linprog(np.ones(2), A_ub=A, b_ub=lap + slack, bounds=[(0, None)] * 2, method="highs")
    if not res.success:
        raise RuntimeError(f"linear program failed: {res.message}")
    return float(res.x[0] / w[0]), float(res.x[1] / w[1])


def fit_differential_inequality(suite: Iterable[MapState], scale: float = 2.0, slack: float = 1e-10,
                                depth: int = FIT_DEPTH) -> InequalityFit:
    """Fit ``C1, C2 >= 0`` and repeat the fit on the domain metric scaled by ``scale``.

    Raises
    ------
    EmptySuite
    """
    suite = list(suite)
    if not suite:
        raise EmptySuite("no maps to fit")
    lap, e = _inequality_samples(suite, depth)
    C1, C2 = _least_constants(lap, e, slack)
    fit = InequalityFit(C1, C2, n_points=int(e.size))
    if scale is not None:
        scaled = [MapState(rescaled_domain(ms.domain, 1.0 / scale), ms.target, ms.points, ms.chart_ids)
                  for ms in suite]
        lap_s, e_s = _inequality_samples(scaled, depth)
        fit.scale = float(scale)
        fit.C1_scaled, fit.C2_scaled = _least_constants(lap_s, e_s, slack / scale**4)
    return fit


# ----------------------------------------------------------------------
# epsilon-regularity

def _sampler(domain: DomainChart, field, patch):
    if domain.kind == "PeriodicTorus":
        return lambda x: _torus_sample(domain, field[..., None], x)[..., 0].real
    ev = domain.interpolator(field, patch)
    lim = domain.axis.max()
    return lambda x: ev(x[(np.abs(x.real) <= lim) & (np.abs(x.imag) <= lim)]).real


def _disk_sup(domain: DomainChart, field, center, r, patch, sample, n=256):
    """Supremum of a smooth field over a closed geodesic disk.

    The grid maximum is refined by interpolation around its location and along
    the boundary circle, where a steep field is poorly sampled by the grid.
    """
    d = domain.distance(center, patch)[patch]
    inside = d <= r
    best = float(field[patch][inside].max()) if np.any(inside) else -np.inf
    if np.any(inside):
        i = np.argmax(np.where(inside, field[patch], -np.inf))
        x0 = domain.x[patch].flat[i]
        g = np.linspace(-1, 1, 9) * domain.h
        local = (x0 + g[:, None] + 1j * g[None, :]).ravel()
        local = local[domain.point_distance(center, local, patch) <= r]
        if local.size:
            best = max(best, float(np.max(sample(local), initial=-np.inf)))
    edge = domain.geodesic_circle(center, r, n, patch)
    return max(best, float(np.max(sample(edge), initial=-np.inf)))


def epsilon_regularity_check(ms: MapState, centers, r: float, epsilon1: float, patch: int = 0,
                             energy_density=None):
    """Rows comparing ``sup_{D_r} e`` against ``E(2r) / r^2`` around each center.

    Each row has ``status`` ``"ok"``, ``"degenerate"`` (no energy) or
    ``"above_epsilon"`` (``E(2r)`` exceeds ``epsilon1``); only ``"ok"`` rows
    enter the empirical constant.

    Returns
    -------
    rows : list of dict
    C3 : float
        Largest ``sup e * r^2 / E(2r)`` over the ``"ok"`` rows (nan if none).

    Raises
    ------
    RadiusTooLarge
        If ``D_{2r}`` does not fit in the domain around some center.
    """
    dom = ms.domain
    e = pullback(ms).energy_density if energy_density is None else energy_density
    rows = []
    sample = _sampler(dom, e, patch)
    for c in np.atleast_1d(centers):
        outer = dom.geodesic_disk_mask(c, 2 * r, patch)
        sup_e = max(_disk_sup(dom, e, c, r, patch, sample), 0.0)
        E2 = dom.integrate(e, outer)
        row = {"center_re": float(np.real(c)), "center_im": float(np.imag(c)), "r": float(r),
               "sup_e": sup_e, "E_2r": E2, "E_2r_over_r2": E2 / r**2, "ratio": np.nan}
        if E2 <= 1e-14 or sup_e <= 1e-14:
            row["status"] = "degenerate"
        elif E2 > epsilon1:
            row["status"] = "above_epsilon"
        else:
            row["status"] = "ok"
            row["ratio"] = sup_e * r**2 / E2
        rows.append(row)
    ok = [row["ratio"] for row in rows if row["status"] == "ok"]
    return rows, (float(max(ok)) if ok else np.nan)


# ----------------------------------------------------------------------
# Isoperimetric inequality

@dataclasses.dataclass
class IsoperimetricResult:
    area: float
    length: float
    ratio: float
    conformality: float
    flags: list

    @property
    def degenerate(self) -> bool:
        return "degenerate" in self.flags


def _torus_sample(domain: DomainChart, values, x):
    """Trigonometric interpolation of a periodic grid field (last axis = components)."""
    N, L = domain.N, domain.size
    F = np.fft.fft2(values[0], axes=(0, 1)) / N**2
    k = np.fft.fftfreq(N, d=1.0 / N) * 2 * np.pi / L
    x0 = domain.x[0, 0, 0]
    dx = np.asarray(x) - x0
    ex = np.exp(1j * np.outer(dx.real, k))
    ey = np.exp(1j * np.outer(dx.imag, k))
    return np.einsum("mk,mj,kj...->m...", ex, ey, F)


def _loop_image(ms: MapState, loop, patch):
    """Image of a domain loop in a single target chart."""
    tgt = ms.target
    if ms.evaluator is not None:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            img = np.asarray(ms.evaluator(loop, patch), dtype=complex)
        chart = tgt.best_chart(img[np.all(np.isfinite(img), axis=-1)], 0) if len(tgt.charts) > 1 else 0
        return tgt.transition(0, chart, img) if chart else img, chart
    ids = ms.chart_ids[patch]
    vals, counts = np.unique(ids, return_counts=True)
    chart = int(vals[np.argmax(counts)])
    pts, _ = ms.in_chart(chart)
    if ms.domain.kind == "PeriodicTorus":
        return _torus_sample(ms.domain, pts, loop), chart
    img = np.stack([ms.domain.interpolator(pts[..., i], patch)(loop) for i in range(2)], axis=-1)
    return img, chart


def _smooth_coordinate_disk(domain: DomainChart, center, r, patch):
    m = np.zeros(domain.shape)
    m[patch] = np.clip(0.5 - (np.abs(domain.x[patch] - center) - r) / domain.h, 0.0, 1.0)
    return m


def isoperimetric_check(ms: MapState, center, radius: float, patch: int = 0, n_loop: int = 512,
                        epsilon2: float = np.inf, conformal_tol: float = 1e-2) -> IsoperimetricResult:
    """Image area of a coordinate disk against the squared length of its boundary image.

    A map that is not conformal to ``conformal_tol`` on the disk (relative to
    the energy density) is flagged ``"non_conformal"`` rather than rejected.
    """
    dom = ms.domain
    if dom.kind != "PeriodicTorus":
        edge = np.zeros(dom.shape, dtype=bool)
        edge[patch, [0, -1], :] = edge[patch, :, [0, -1]] = True
        if np.min(np.abs(dom.x - center)[edge]) <= radius:
            raise RadiusTooLarge(f"coordinate disk of radius {radius} leaves the chart")
    pb = pullback(ms)
    mask = _smooth_coordinate_disk(dom, center, radius, patch)
    area = dom.integrate(pb.area_density, mask)
    loop = circle_loop(center, radius, n_loop)
    img, chart = _loop_image(ms, loop, patch)
    length = boundary_length(img, ms.target, chart=chart, loop=loop)
    inside = mask > 0
    conf = float(np.max(pb.conformality_defect[inside]))
    flags = []
    if length < 1e-12 or area < 1e-14:
        return IsoperimetricResult(area, length, np.nan, conf, ["degenerate"])
    if conf > conformal_tol:
        flags.append("non_conformal")
    if area > epsilon2:
        flags.append("above_epsilon")
    return IsoperimetricResult(area, length, area / length**2, conf, flags)


# ----------------------------------------------------------------------
# Monotonicity

@dataclasses.dataclass
class MonotonicityCurve:
    radii: np.ndarray
    areas: np.ndarray

    @property
    def normalized(self) -> np.ndarray:
        return self.areas / self.radii**2

    @property
    def C5(self) -> float:
        return float(self.normalized.min())

    @property
    def positive(self) -> bool:
        return self.C5 > 0


def monotonicity_check(ms: MapState, image_point, radii, point_chart: int = 0) -> MonotonicityCurve:
    """Image area inside extrinsic target balls ``B_r(image_point)``.

    Raises
    ------
    BoundaryIntersected
        If the image of the domain boundary enters the largest ball.
    """
    radii = np.asarray(radii, dtype=float)
    dom, tgt = ms.domain, ms.target
    pb = pullback(ms)
    d = tgt.distance(ms.points, ms.chart_ids, np.asarray(image_point), point_chart)
    if dom.kind == "Disk":
        edge = np.zeros(dom.shape, dtype=bool)
        edge[:, [0, -1], :] = edge[:, :, [0, -1]] = True
        if np.min(d[edge]) <= radii.max():
            raise BoundaryIntersected(f"boundary image is within {np.min(d[edge]):.3g} of the point")
    # ramp the ball indicator over the image size of one grid cell
    step = np.sqrt(2 * pb.energy_density) * dom.lam * dom.h + 1e-300
    dens = pb.area_density
    areas = [dom.integrate(dens, np.clip(0.5 - (d - r) / step, 0.0, 1.0)) for r in radii]
    return MonotonicityCurve(radii, np.array(areas))


# ----------------------------------------------------------------------
# Morrey decay

@dataclasses.dataclass
class MorreyFit:
    alpha: float
    residual: float
    radii: np.ndarray
    areas: np.ndarray
    degenerate: bool = False

    @property
    def positive(self) -> bool:
        return bool(self.alpha > 0)


def morrey_decay_fit(ms: MapState, center, radii, patch: int = 0) -> MorreyFit:
    """Power-law fit ``A(f(D_r)) ~ r^alpha`` of image areas of shrinking disks.

    Non-finite densities (a synthetic puncture) are dropped from the integrals.

    Raises
    ------
    InsufficientRadii
        With fewer than four radii.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 4:
        raise InsufficientRadii(f"need at least 4 radii, got {radii.size}")
    dens = pullback(ms).area_density
    dens = np.where(np.isfinite(dens), dens, 0.0)
    areas = np.array([ms.domain.integrate(dens, ms.domain.geodesic_disk_mask(center, r, patch))
                      for r in radii])
    if np.all(areas <= 1e-14):
        return MorreyFit(np.nan, np.nan, radii, areas, degenerate=True)
    good = areas > 0
    coef, res, *_ = np.polyfit(np.log(radii[good]), np.log(areas[good]), 1, full=True)
    resid = float(np.sqrt(res[0] / good.sum())) if res.size else 0.0
    return MorreyFit(float(coef[0]), resid, radii, areas)


# ----------------------------------------------------------------------
# Output

def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def write_csv(rows: Sequence[dict], path) -> None:
    """Write table rows with a header taken from the first row."""
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: _plain(v) for k, v in row.items()})


def write_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump({k: _plain(v) for k, v in summary.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
