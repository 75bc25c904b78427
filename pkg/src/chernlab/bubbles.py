"""Concentration, renormalization and bubble trees of concentrating families.

A family is a list of sphere maps (``MapState`` on a ``SpherePair``) ordered by
increasing concentration parameter ``k``.  Energies of small disks are taken
from closed-form evaluators when a member carries one (attribute ``fz``: a
function of the patch-0 coordinate) and from a bicubic resampling of the grid
otherwise; either way they are integrated in log-polar coordinates so that
scales far below the grid spacing are resolved.

Limits of the form ``lim_{delta -> 0} lim_{k -> oo}`` are estimated from the
last three family members: the inner limit by polynomial extrapolation in
``1/k^2``, accepted where its error estimate is small, and the outer one by a least-squares fit in
``delta^2``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.optimize import brentq

from .domains import DomainChart
from .errors import (AmbiguousPoints, AnnulusTooThin, DepthCapHit, EnergyBelowC0, NoFamily,
                     ResampleOutOfDomain, ZeroEnergyRegion)
from .logpolar import (annulus_integral, circle_values, disk_energy, disk_profile, flat_density,
                       loop_length)
from .pullback import MapState
from .targets import HermitianTarget

__all__ = [
    "BubbleConfig", "DoubleLimit", "ConcentrationReport", "RenormalizationData", "NeckReport",
    "BubbleTreeNode", "evaluator", "double_limit", "detect_concentration", "center_of_mass",
    "scale_mu", "renormalize", "neck_diagnostics", "energy_identity_check",
    "distance_bubbling_check", "mass_accounting", "loop_decay_exponent", "build_tree", "tree_to_dict", "write_tree",
]


@dataclass
class BubbleConfig:
    """Parameters of the bubble pipeline.

    ``C0`` defaults to a quarter of ``epsilon1``.  Radii of the mass ladder are
    geometric with ratio ``sqrt(2)`` between ``r_min`` and ``r_max``.
    """

    epsilon1: float = 4.0
    C0: float | None = None
    r_min: float = 0.0125
    r_max: float = 0.5
    limit_tol: float = 2e-3
    fit_points: int = 5
    max_depth: int | None = None
    neck_samples: int = 64

    def __post_init__(self):
        if self.C0 is None:
            self.C0 = 0.25 * self.epsilon1
        if not 0 < self.C0 < self.epsilon1 / 2:
            raise ValueError("need 0 < C0 < epsilon1 / 2")
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")

    def ladder(self, cap: float = np.inf) -> np.ndarray:
        n = int(np.floor(np.log(self.r_max / self.r_min) / np.log(np.sqrt(2)) + 1e-9)) + 1
        r = self.r_min * np.sqrt(2) ** np.arange(n)
        return r[r <= cap * (1 + 1e-12)]


# ---------------------------------------------------------------------------
# evaluators and limits

def evaluator(ms: MapState) -> Callable:
    """Closed-form or resampled map ``x -> f(x)`` in patch-0 coordinates of the domain."""
    fz = getattr(ms, "fz", None)
    if fz is not None:
        return fz
    dom = ms.domain
    if dom.kind != "SpherePair":
        raise ResampleOutOfDomain("grid resampling needs a sphere domain")
    # each patch is resampled in the chart holding most of its points
    charts, parts = [], []
    for p in range(2):
        vals, counts = np.unique(ms.chart_ids[p], return_counts=True)
        c = int(vals[np.argmax(counts)])
        pts, _ = ms.in_chart(c)
        charts.append(c)
        parts.append([dom.interpolator(pts[..., j], patch=p) for j in range(2)])

    def fn(x):
        x = np.asarray(x, dtype=complex)
        inner = np.abs(x) <= 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            y = np.where(inner, 0.0, 1.0 / np.where(inner, 1.0, x))
        out = np.empty(x.shape + (2,), dtype=complex)
        for p, src in ((0, x), (1, y)):
            use = inner if p == 0 else ~inner
            if not np.any(use):
                continue
            vals = np.stack([parts[p][j](src[use]) for j in range(2)], axis=-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                out[use] = ms.target.transition(charts[p], 0, vals) if charts[p] else vals
        return out
    return fn


def _extrapolate(ks, seq):
    """Limit ``k -> oo`` of the last three values, assuming an expansion in ``1/k^2``.

    Returns the quadratic extrapolant and, as its error estimate, the gap to
    the linear extrapolant through the last two values.
    """
    h = 1.0 / np.asarray(ks[-3:], dtype=float) ** 2
    s = np.asarray(seq[-3:], dtype=float)
    quad = np.polyval(np.polyfit(h, s, 2), 0.0)
    lin = np.polyval(np.polyfit(h[1:], s[1:], 1), 0.0)
    return float(quad), float(abs(quad - lin))


@dataclass
class DoubleLimit:
    """``lim_{delta -> 0} lim_k`` of a table ``values[k, delta]``."""

    value: float
    residual: float
    radii: np.ndarray
    inner: np.ndarray
    accepted: np.ndarray
    coeffs: np.ndarray

    def as_dict(self):
        return {"value": self.value, "fit_residual": self.residual,
                "radii": self.radii.tolist(), "inner_limits": self.inner.tolist(),
                "accepted": self.accepted.tolist(), "coeffs": self.coeffs.tolist()}


def double_limit(table, radii, ks, tol: float = 2e-3, floor: float = 1.0, fit_points: int = 5) -> DoubleLimit:
    """Limit in ``k`` over the rows of ``table`` per radius, then a fit in ``delta^2``.

    A radius is accepted when the error estimate of the ``k``-limit is at most
    ``tol`` times ``max(|value|, floor)``.  The fit ``m0 + a d^2 + b d^4`` uses the smallest
    ``fit_points`` accepted radii (fewer terms when fewer radii survive).
    """
    table = np.atleast_2d(np.asarray(table, dtype=float))
    radii = np.asarray(radii, dtype=float)
    if table.shape[0] < 3:
        raise NoFamily("need at least three family members")
    inner = np.empty(len(radii))
    ok = np.zeros(len(radii), dtype=bool)
    for j in range(len(radii)):
        lim, corr = _extrapolate(ks, table[:, j])
        inner[j] = lim
        ok[j] = np.isfinite(lim) and corr <= tol * max(abs(lim), floor)
    return _delta_fit(radii, inner, ok, fit_points)


def _delta_fit(radii, values, ok, fit_points=5) -> DoubleLimit:
    """Fit ``m0 + a d^2 + b d^4`` on the smallest ``fit_points`` usable radii."""
    radii, values = np.asarray(radii, dtype=float), np.asarray(values, dtype=float)
    idx = np.flatnonzero(ok)[:fit_points]
    if len(idx) == 0:
        return DoubleLimit(float("nan"), float("nan"), radii, values, ok, np.zeros(0))
    d2 = radii[idx] ** 2
    deg = min(len(idx) - 1, 2)
    V = np.stack([d2**p for p in range(deg + 1)], axis=1)
    coef, *_ = np.linalg.lstsq(V, values[idx], rcond=None)
    res = float(np.sqrt(np.mean((V @ coef - values[idx]) ** 2))) if len(idx) > deg + 1 else 0.0
    return DoubleLimit(float(coef[0]), res, radii, values, ok, coef)


def _tail(family, n=3):
    if len(family) < 3:
        raise NoFamily("a family needs at least three members")
    return family[-n:]


def _k_of(ms, default):
    fam = getattr(ms, "family", None)
    return float(fam[1]) if fam else float(default)


def _point_scale(x):
    return max(1.0, abs(x) ** 2)


# ---------------------------------------------------------------------------
# concentration

@dataclass
class ConcentrationReport:
    """Bubble points (patch-0 coordinates), their masses and the diffuse density."""

    bubble_points: list
    masses: list
    background_density: np.ndarray
    mass_fits: list = field(default_factory=list)
    radii_caps: list = field(default_factory=list)
    merged: int = 0


def _grid_density(fn, target, domain: DomainChart):
    """Flat density of ``fn`` on both sphere patches (patch 1 in ``y = 1/x``)."""
    step = 1e-3 * domain.h
    d0 = flat_density(fn, target, domain.x[0], step)

    def fn1(y):
        with np.errstate(divide="ignore", invalid="ignore"):
            return fn(1.0 / y)
    y = np.where(domain.x[1] == 0, 1e-300, domain.x[1])
    d1 = flat_density(fn1, target, y, step)
    return np.stack([d0, d1])


def detect_concentration(family: Sequence[MapState], radii_ladder=None, epsilon1_candidate: float | None = None,
                         config: BubbleConfig | None = None, region: Callable | None = None) -> ConcentrationReport:
    """Points where the energy of the family concentrates.

    Candidates are local maxima of the last member's density above
    ``epsilon1 / (pi (4 h)^2)``; they are moved to the centre of mass of a
    two-cell disk and their mass is the double limit of disk energies.  Points
    with mass at most ``epsilon1`` are dropped.

    Parameters
    ----------
    region : callable, optional
        Predicate on patch-0 coordinates restricting where points may lie.
    """
    cfg = config or BubbleConfig()
    eps1 = cfg.epsilon1 if epsilon1_candidate is None else float(epsilon1_candidate)
    if not family:
        raise NoFamily("empty family")
    tail = _tail(family)
    last = tail[-1]
    dom, target = last.domain, last.target
    if dom.kind != "SpherePair":
        raise NoFamily("families live on the sphere")
    fns = [evaluator(ms) for ms in tail]
    dens = _grid_density(fns[-1], target, dom)
    ladder = np.asarray(radii_ladder, dtype=float) if radii_ladder is not None else cfg.ladder()
    thresh = eps1 / (np.pi * (4 * dom.h) ** 2)
    peaks = (dens == maximum_filter(dens, size=(1, 3, 3), mode="nearest")) & (dens >= thresh)
    peaks &= dom.owned_mask
    xs = dom.x.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        xs[1] = np.where(dom.x[1] == 0, np.inf, 1.0 / np.where(dom.x[1] == 0, 1.0, dom.x[1]))
    peaks &= np.isfinite(xs)
    if region is not None:
        peaks &= region(xs)
    cand = sorted(zip(dens[peaks], xs[peaks]), key=lambda t: -t[0])
    kept, merged = [], 0
    for _, x in cand:
        near = [abs(x - y) / _point_scale(y) for y in kept]
        if any(d < 2 * dom.h for d in near):
            # neighbours on a plateau are one peak, not an ambiguity
            merged += any(1.5 * dom.h <= d < 2 * dom.h for d in near)
            continue
        kept.append(complex(x))
    if merged:
        warnings.warn(AmbiguousPoints(f"{merged} candidate(s) within two cells of another were merged"))
    kept = [_settle(fns[-1], target, x, 2 * dom.h * _point_scale(x)) for x in kept]

    points, masses, fits, caps = [], [], [], []
    for i, p in enumerate(kept):
        others = [abs(p - q) for j, q in enumerate(kept) if j != i]
        rho = min([1.0] + [0.5 * d for d in others])
        radii = ladder[ladder <= rho * (1 + 1e-12)]
        if len(radii) == 0:
            continue
        table = [disk_profile(fn, target, p, radii) for fn in fns]
        fit = double_limit(table, radii, [_k_of(ms, i + 1) for i, ms in enumerate(tail)], cfg.limit_tol, floor=cfg.C0, fit_points=cfg.fit_points)
        if np.isfinite(fit.value) and fit.value > eps1:
            points.append(p)
            masses.append(fit.value)
            fits.append(fit)
            caps.append(rho)
    background = dens.copy()
    for p in points:
        background[0][np.abs(dom.x[0] - p) < 4 * dom.h] = 0.0
    return ConcentrationReport(points, masses, background, fits, caps, merged)


def _settle(fn, target, x, radius, iters=20):
    """Fixed point of the centre of mass over ``B_radius``."""
    for _ in range(iters):
        y = center_of_mass(fn, target, x, radius)
        if abs(y - x) <= 1e-10 * radius:
            return y
        x = y
    return x


def center_of_mass(ms, target: HermitianTarget | None, center, radius: float) -> complex:
    """Energy-weighted mean of the coordinate over ``B_radius(center)``."""
    fn = ms if callable(ms) else evaluator(ms)
    target = target if target is not None else ms.target
    vals, _ = annulus_integral(fn, target, center, 0.0, radius, weight=lambda x: x)
    e, m = vals[0].real, vals[1]
    if not e > 0:
        raise ZeroEnergyRegion("no energy in the disk")
    return complex(m / e)


def scale_mu(ms, x_tilde, r: float, C0: float, target: HermitianTarget | None = None,
             center=None, rtol: float = 1e-8) -> float:
    """Largest ``mu`` with ``E(B_2r(center) minus B_mu(x_tilde)) >= C0``.

    ``ms`` is a ``MapState``, a closed-form evaluator (with ``target``) or a
    callable ``energy(center, radius)``.
    """
    if target is None and not isinstance(ms, MapState):
        energy = ms
    else:
        fn = ms if callable(ms) and not isinstance(ms, MapState) else evaluator(ms)
        tgt = target if target is not None else ms.target

        def energy(c, s):
            return disk_energy(fn, tgt, c, s)
    c = x_tilde if center is None else center
    total = energy(c, 2 * r)
    if total < C0:
        raise EnergyBelowC0(f"disk energy {total:.4g} below C0={C0}")

    def g(mu):
        return total - energy(x_tilde, mu) - C0
    hi = 2 * r + abs(x_tilde - c)
    lo = hi * 1e-8
    if g(lo) < 0:
        raise EnergyBelowC0("energy sits in a point mass")
    return float(brentq(g, lo, hi, xtol=1e-14, rtol=rtol))


# ---------------------------------------------------------------------------
# renormalization

@dataclass
class RenormalizationData:
    """Per-member renormalization scales around one bubble point.

    ``r`` is the working radius used for every member; ``r_k`` is the radius
    with the ``k``-dependent threshold, reported alongside.  ``neck_annulus``
    holds ``(inner, outer)`` radii about ``x_tilde_k``.
    """

    point: complex
    k: list
    r: float
    r_k: list
    x_tilde_k: list
    mu_k: list
    C0: float
    neck_annulus: list
    base_coeffs: np.ndarray
    base_range: float = float("inf")

    def T(self, i: int, x):
        """Dilation ``x -> (x - x_tilde) / mu`` of member ``i``."""
        return (np.asarray(x) - self.x_tilde_k[i]) / self.mu_k[i]

    @property
    def center_bound(self) -> list:
        """``|x_tilde_k - p| <= r_k / (4 k^2)`` per member."""
        return [bool(abs(x - self.point) <= r / (4 * k * k)) for x, r, k in zip(self.x_tilde_k, self.r_k, self.k)]

    @property
    def scale_bound(self) -> list:
        """``mu_k <= r_k / k^2`` per member."""
        return [bool(m <= r / (k * k)) for m, r, k in zip(self.mu_k, self.r_k, self.k)]

    @property
    def separated(self) -> list:
        """``k mu_k < r``: the neck annulus with inner radius ``k mu_k`` is nonempty."""
        return [bool(k * m < self.r) for m, k in zip(self.mu_k, self.k)]

    def as_dict(self):
        return {"point": [self.point.real, self.point.imag], "k": self.k, "r": self.r,
                "r_k": self.r_k, "x_tilde_k": [[x.real, x.imag] for x in self.x_tilde_k],
                "mu_k": self.mu_k, "C0": self.C0, "neck_annulus": self.neck_annulus,
                "center_bound": self.center_bound, "scale_bound": self.scale_bound,
                "separated": self.separated}


def _base_energy(coeffs, s):
    """Diffuse energy in ``B_s`` from the mass fit ``m0 + a s^2 + b s^4``."""
    return sum(c * s ** (2 * p) for p, c in enumerate(coeffs) if p > 0)


def _threshold_radius(coeffs, mass, cap, factor):
    """``sup {r <= cap : base(2 r) <= mass * factor}``."""
    f = lambda r: _base_energy(coeffs, 2 * r) - mass * factor
    rs = np.geomspace(cap * 1e-8, cap, 400)
    bad = np.flatnonzero(np.array([f(r) for r in rs]) > 0)
    if len(bad) == 0:
        return float(cap)
    if bad[0] == 0:
        return float(rs[0])
    return float(brentq(f, rs[bad[0] - 1], rs[bad[0]]))


def renormalization_data(family, point: complex, fit: DoubleLimit, cap: float,
                         config: BubbleConfig | None = None) -> RenormalizationData:
    """Scales ``r``, ``x_tilde_k``, ``mu_k`` of every member around ``point``."""
    cfg = config or BubbleConfig()
    target = family[-1].target
    mass = fit.value
    coeffs = fit.coeffs if len(fit.coeffs) > 1 else np.array([mass, 0.0])
    ks = [_k_of(ms, i + 1) for i, ms in enumerate(family)]
    used = fit.radii[np.flatnonzero(fit.accepted)[:cfg.fit_points]]
    reach = min(cap, float(used.max())) if len(used) else cap
    # B_2r must stay isolated and inside the range where the diffuse fit holds
    r_cap = 0.5 * reach
    r = _threshold_radius(coeffs, mass, r_cap, 1.0 / 32)
    r_k = [_threshold_radius(coeffs, mass, r_cap, 1.0 / (32 * k * k)) for k in ks]
    xs, mus, necks = [], [], []
    for ms, k in zip(family, ks):
        fn = evaluator(ms)
        x = center_of_mass(fn, target, point, 2 * r)
        mu = scale_mu(fn, x, r, cfg.C0, target=target, center=point)
        R = min(k, math.sqrt(r / mu))
        xs.append(x)
        mus.append(mu)
        necks.append((R * mu, r))
    return RenormalizationData(complex(point), ks, r, r_k, xs, mus, float(cfg.C0), necks,
                               np.asarray(coeffs), reach)


def renormalize(ms: MapState, x_tilde, mu: float, domain: DomainChart | None = None) -> MapState:
    """Sphere map ``w -> f(x_tilde + mu w)`` (patch 1: ``y -> f(x_tilde + mu / y)``)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    F = evaluator(ms)
    fz = lambda w: F(x_tilde + mu * np.asarray(w))

    def fn(x, patch):
        x = np.asarray(x, dtype=complex)
        if patch == 0:
            return fz(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(x == 0, np.inf, 1.0 / np.where(x == 0, 1.0, x))
            out = F(x_tilde + mu * w)
        far = F(np.array([np.inf + 0j]))[0] if getattr(ms, "fz", None) is not None else None
        if far is not None:
            out[x == 0] = far
        return out
    dom = domain or DomainChart("SpherePair", ms.domain.N)
    with np.errstate(all="ignore"):
        out = MapState.from_function(dom, ms.target, fn)
    out.fz = fz
    out.family = ("renormalized", _k_of(ms, 0))
    out.dilation = (complex(x_tilde), float(mu))
    return out


# ---------------------------------------------------------------------------
# necks

@dataclass
class NeckReport:
    """Energy, loop lengths and image diameter of a neck annulus."""

    k: float
    inner: float
    outer: float
    energy: float
    t: np.ndarray
    loop_lengths: np.ndarray
    diameter: float
    empty: bool = False

    def as_dict(self):
        return {"k": self.k, "inner": self.inner, "outer": self.outer, "energy": self.energy,
                "t": self.t.tolist(), "loop_lengths": self.loop_lengths.tolist(),
                "diameter": self.diameter, "empty": self.empty}


def _pairwise_max(target, z, ids, chunk=256):
    best = 0.0
    for i in range(0, len(z), chunk):
        d = target.distance(z[i:i + chunk, None, :], ids[i:i + chunk, None], z[None, :, :], ids[None, :])
        best = max(best, float(np.nanmax(d)))
    return best


def neck_diagnostics(ms, center, inner: float, outer: float, target: HermitianTarget | None = None,
                     n_t: int = 9, samples: int = 64, k: float = float("nan")) -> NeckReport:
    """Energy, loop lengths ``L(gamma_t)`` and image diameter over ``inner < |x - center| < outer``.

    Loops are the circles of radius ``outer * exp(-t)`` for ``t`` in
    ``[0, log(outer / inner)]``.
    """
    fn = ms if callable(ms) and not isinstance(ms, MapState) else evaluator(ms)
    target = target if target is not None else ms.target
    if not 0 < inner < outer:
        raise AnnulusTooThin(f"annulus ({inner:.3g}, {outer:.3g}) is empty")
    energy = float(annulus_integral(fn, target, center, inner, outer)[0][0])
    T = math.log(outer / inner)
    t = np.linspace(0.0, T, n_t)
    L = np.array([loop_length(fn, target, center, outer * math.exp(-s)) for s in t])
    z, ids = circle_values(fn, target, center, inner, outer, n_r=samples, n_t=samples)
    ok = np.all(np.isfinite(z), axis=-1)
    diam = _pairwise_max(target, z[ok], ids[ok]) if np.any(ok) else 0.0
    return NeckReport(float(k), float(inner), float(outer), energy, t, L, diam)


def _empty_neck(k, inner, outer):
    return NeckReport(float(k), float(inner), float(outer), 0.0, np.zeros(0), np.zeros(0), 0.0, empty=True)


def loop_decay_exponent(necks: Sequence[NeckReport]) -> float:
    """Slope ``-d log max(L_0, L_T) / d log k`` over nonempty necks."""
    pts = [(n.k, max(n.loop_lengths[0], n.loop_lengths[-1])) for n in necks if not n.empty]
    if len(pts) < 2:
        return float("nan")
    k, L = np.array(pts).T
    return float(-np.polyfit(np.log(k), np.log(np.maximum(L, 1e-300)), 1)[0])


# ---------------------------------------------------------------------------
# point values

def mean_point(target: HermitianTarget, z, ids):
    """Chart-consistent average of target points; returns ``(point, chart)``."""
    if hasattr(target, "sphere_points"):
        p = target.sphere_points(z, ids).mean(axis=0)
        p /= np.linalg.norm(p, axis=-1, keepdims=True)
        chart = 0
        w = np.empty(2, dtype=complex)
        for j in range(2):
            q = p[j]
            if q[2] < 0:
                chart |= 1 << j
                q = q * np.array([1.0, -1.0, -1.0])
            w[j] = (q[0] + 1j * q[1]) / (1.0 + q[2])
        return w, chart
    vals, counts = np.unique(ids, return_counts=True)
    chart = int(vals[np.argmax(counts)])
    return target.express(z, np.full(len(z), chart)).mean(axis=0), chart


def annulus_mean(fn, target, center, r_in, r_out):
    z, ids = circle_values(fn, target, center, r_in, r_out, n_r=8, n_t=64)
    ok = np.all(np.isfinite(z), axis=-1)
    return mean_point(target, z[ok], ids[ok])


# ---------------------------------------------------------------------------
# tree

@dataclass
class BubbleTreeNode:
    """One map of the bubble tree.

    ``index`` is ``()`` for the base map and ``(i1, ..., il)`` for bubbles.
    ``energy`` is the limit map energy, ``mass_in`` the concentrated mass the
    parent attributes to this node (total energy for the root).
    """

    index: tuple
    map: MapState
    children: list
    mass_in: float
    south_pole_value: tuple | None = None
    parent_value: tuple | None = None
    energy: float = float("nan")
    energy_fit: DoubleLimit | None = None
    point: complex | None = None
    renormalization: RenormalizationData | None = None
    necks: list = field(default_factory=list)
    south_mass: float = float("nan")
    bubble_limit: float = float("nan")
    bubble_fits: list = field(default_factory=list, repr=False)
    family: list = field(default_factory=list, repr=False)
    flags: list = field(default_factory=list)

    @property
    def label(self) -> str:
        return "0" if not self.index else "".join(str(i) for i in self.index)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    @property
    def depth(self) -> int:
        return 1 + max((c.depth for c in self.children), default=-1)

    @property
    def node_count(self) -> int:
        return sum(1 for _ in self.walk())


def _sphere_total(fn, target):
    inv = lambda y: fn(1.0 / np.asarray(y))
    return disk_energy(fn, target, 0.0, 1.0) + disk_energy(inv, target, 0.0, 1.0)


def _root_energy(tail_fns, ks, target, points, cfg, cap):
    """``lim_delta lim_k [E_k(sphere) - sum_i E_k(B_delta(p_i))]``."""
    radii = cfg.ladder(cap)
    table = []
    for fn in tail_fns:
        whole = np.full(len(radii), _sphere_total(fn, target))
        holes = sum(disk_profile(fn, target, p, radii) for p in points) if points else 0.0
        table.append(whole - holes)
    # the error of a difference scales with the energies subtracted
    floor = max(cfg.C0, abs(whole[0]))
    return double_limit(table, radii, ks, cfg.limit_tol, floor=floor, fit_points=cfg.fit_points)


def _limit_over_k(ks, values, cfg):
    """Extrapolated limit of the last three values; the last value if the estimate is unreliable."""
    lim, corr = _extrapolate(ks, values)
    if np.isfinite(lim) and corr <= cfg.limit_tol * max(abs(lim), cfg.C0):
        return float(lim), True
    return float(values[-1]), False


def _bubble_limit(tail_fns, target, rd: RenormalizationData, cfg, n_radii: int = 6):
    """``lim_{R -> oo} lim_k [E_k(B_{mu_k R}(x_k)) - base(mu_k R)]``.

    For each member the limit in ``delta = 1/R`` is fitted over
    ``R <= reach / mu_k``, where the diffuse fit of the parent is valid; the
    limit in ``k`` is taken afterwards.
    """
    per_k, fits = [], []
    for i, fn in zip(range(-3, 0), tail_fns):
        x, mu = rd.x_tilde_k[i], rd.mu_k[i]
        R = rd.base_range / mu * np.sqrt(0.5) ** np.arange(n_radii)[::-1]
        vals = disk_profile(fn, target, x, mu * R) - _base_energy(rd.base_coeffs, mu * R)
        delta = 1.0 / R[::-1]
        fit = _delta_fit(delta, vals[::-1], np.ones(len(R), dtype=bool), cfg.fit_points)
        per_k.append(fit.value)
        fits.append(fit)
    value, converged = _limit_over_k(rd.k, per_k, cfg)
    return value, converged, fits


def _south_mass(tail_fns, target, rd: RenormalizationData, limit, cfg):
    """Concentrated energy of ``B_2r`` not captured by the bubble limit."""
    vals = [disk_energy(fn, target, rd.x_tilde_k[i], 2 * rd.r) - _base_energy(rd.base_coeffs, 2 * rd.r)
            for i, fn in zip(range(-3, 0), tail_fns)]
    return _limit_over_k(rd.k, vals, cfg)[0] - limit


def _build(index, family, cfg, region, depth, cap_depth, root):
    last = family[-1]
    target = last.target
    tail_fns = [evaluator(ms) for ms in _tail(family)]
    node = BubbleTreeNode(index, last, [], float("nan"), family=list(family))
    if depth > cap_depth:
        warnings.warn(DepthCapHit(f"depth cap {cap_depth} reached at node {node.label}"))
        node.flags.append("depth_cap")
        return node
    rep = detect_concentration(family, config=cfg, region=region)
    if root:
        cap = min(rep.radii_caps + [1.0])
        ks = [_k_of(ms, i + 1) for i, ms in enumerate(_tail(family))]
        node.energy_fit = _root_energy(tail_fns, ks, target, rep.bubble_points, cfg, cap)
        node.energy = node.energy_fit.value
    for i, (p, m, fit, rho) in enumerate(zip(rep.bubble_points, rep.masses, rep.mass_fits, rep.radii_caps)):
        rd = renormalization_data(family, p, fit, rho, cfg)
        necks = []
        for ms, k, (a, b), x in zip(family, rd.k, rd.neck_annulus, rd.x_tilde_k):
            if a < b:
                necks.append(neck_diagnostics(ms, x, a, b, k=k, samples=cfg.neck_samples))
            else:
                necks.append(_empty_neck(k, a, b))
        kids = [renormalize(ms, x, mu, ms.domain) for ms, x, mu in zip(family, rd.x_tilde_k, rd.mu_k)]
        R_last = 2 * rd.r / rd.mu_k[-1]
        child = _build(index + (i + 1,), kids, cfg, lambda w, R=R_last: np.abs(w) < R,
                       depth + 1, cap_depth, root=False)
        limit, converged, fits = _bubble_limit(tail_fns, target, rd, cfg)
        child.bubble_limit = limit
        child.bubble_fits = fits
        if not converged:
            child.flags.append("k_limit_unconverged")
        child.energy = limit - sum(c.mass_in for c in child.children)
        child.mass_in = m
        child.point = p
        child.renormalization = rd
        child.necks = necks
        child.south_mass = _south_mass(tail_fns, target, rd, limit, cfg)
        R = math.sqrt(rd.r / rd.mu_k[-1])
        child.south_pole_value = annulus_mean(evaluator(kids[-1]), target, 0.0, R, 2 * R)
        child.parent_value = annulus_mean(tail_fns[-1], target, rd.x_tilde_k[-1], rd.r / 2, rd.r)
        node.children.append(child)
    return node


def build_tree(family: Sequence[MapState], config: BubbleConfig | None = None) -> BubbleTreeNode:
    """Detect, renormalize and recurse until no concentration is left.

    The depth is capped at ``ceil(A0 / C0)`` with ``A0`` the limit total
    energy; hitting the cap issues a ``DepthCapHit`` warning.
    """
    cfg = config or BubbleConfig()
    tail = _tail(family)
    target = tail[-1].target
    totals = [_sphere_total(evaluator(ms), target) for ms in tail]
    A0, _ = _extrapolate([_k_of(ms, i + 1) for i, ms in enumerate(tail)], totals)
    cap = cfg.max_depth if cfg.max_depth is not None else max(1, math.ceil(A0 / cfg.C0))
    root = _build((), list(family), cfg, None, 0, cap, root=True)
    root.mass_in = float(A0)
    return root


# ---------------------------------------------------------------------------
# checks

def energy_identity_check(tree: BubbleTreeNode, family=None) -> dict:
    """Compare the limit energy with the base energy plus all bubble energies."""
    limit = tree.mass_in
    if family is not None:
        tail = _tail(family)
        totals = [_sphere_total(evaluator(ms), tail[-1].target) for ms in tail]
        limit, _ = _extrapolate([_k_of(ms, i + 1) for i, ms in enumerate(tail)], totals)
    bubbles = {n.label: n.energy for n in tree.walk() if n.index}
    total = tree.energy + sum(bubbles.values())
    return {"limit_energy": float(limit), "base_energy": float(tree.energy), "bubble_energies": bubbles,
            "sum": float(total), "absolute": float(abs(limit - total)),
            "relative": float(abs(limit - total) / max(abs(limit), 1e-300))}


def distance_bubbling_check(tree: BubbleTreeNode) -> float:
    """Largest target distance between a bubble's south-pole value and its parent's value at the point."""
    worst = 0.0
    target = tree.map.target
    for n in tree.walk():
        if n.index and n.south_pole_value is not None:
            (a, ca), (b, cb) = n.south_pole_value, n.parent_value
            worst = max(worst, float(target.distance(a, ca, b, cb)))
    return worst


def mass_accounting(tree: BubbleTreeNode) -> list:
    """Per bubble node: ``mass_in - energy - sum(children mass_in)`` and its relative size."""
    rows = []
    for n in tree.walk():
        if not n.index:
            continue
        kids = sum(c.mass_in for c in n.children)
        gap = n.mass_in - n.energy - kids
        rows.append({"node": n.label, "mass_in": n.mass_in, "energy": n.energy, "children": kids,
                     "south_mass": n.south_mass, "gap": gap, "relative": abs(gap) / n.mass_in})
    return rows


# ---------------------------------------------------------------------------
# export

def _value(v):
    if v is None:
        return None
    z, c = v
    return {"chart": int(c), "re": np.real(z).tolist(), "im": np.imag(z).tolist()}


def tree_to_dict(node: BubbleTreeNode) -> dict:
    out = {"index": node.label, "mass_in": node.mass_in, "energy": node.energy,
           "energy_fit": node.energy_fit.as_dict() if node.energy_fit else None,
           "point": None if node.point is None else [node.point.real, node.point.imag],
           "south_pole_value": _value(node.south_pole_value), "parent_value": _value(node.parent_value),
           "south_mass": node.south_mass, "bubble_limit": node.bubble_limit,
           "bubble_fits": [f.as_dict() for f in node.bubble_fits], "flags": node.flags,
           "renormalization": node.renormalization.as_dict() if node.renormalization else None,
           "necks": [n.as_dict() for n in node.necks],
           "children": [tree_to_dict(c) for c in node.children]}
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_tree(tree: BubbleTreeNode, path, extra: dict | None = None) -> None:
    data = {"tree": tree_to_dict(tree)}
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)
