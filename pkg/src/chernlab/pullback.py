"""Pullback calculus of a map from a gridded surface into a Hermitian target.

Everything is expressed against the domain coframe ``phi = lambda dx`` and the
target unitary coframe. Field arrays have leading axes ``(patch, ix, iy)`` and a
trailing target-frame index.
"""
from __future__ import annotations

import copy
import dataclasses
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.ndimage import binary_dilation

from .domains import DomainChart
from .errors import ChartTear, NotHarmonic, ZeroConformalFactor
from .targets import (ConnectionData, HermitianTarget, _coordinate_torsion, _gamma, _rotate3,
                      chern_connection, curvature, torsion_jet)

# grid points a chart must stay valid around the points that use it; covers the
# two nested stencils of the second-order quantities
CHART_HALO = 4


class MapState:
    """A map sampled on a domain grid.

    Parameters
    ----------
    domain : DomainChart
    target : HermitianTarget
    points : complex array of shape (P, N, N, 2)
        Target coordinates of every grid point, each in its own chart.
    chart_ids : int, per-patch sequence, or int array of shape (P, N, N)
    evaluator : callable, optional
        ``evaluator(x, patch)`` returning the map in closed form (coordinates of
        target chart 0, infinite entries allowed) at arbitrary domain points.
    """

    def __init__(self, domain: DomainChart, target: HermitianTarget, points, chart_ids=0,
                 evaluator: Callable | None = None):
        pts = np.asarray(points, dtype=complex)
        if pts.shape != domain.shape + (2,):
            raise ValueError(f"points must have shape {domain.shape + (2,)}, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ChartTear("map has non-finite target coordinates")
        ids = np.asarray(chart_ids, dtype=int)
        if ids.ndim == 1:
            if ids.shape != (domain.n_patches,):
                raise ValueError("one chart id per patch expected")
            ids = ids[:, None, None]
        ids = np.broadcast_to(ids, domain.shape).copy()
        self.domain = domain
        self.target = target
        self.points = pts
        self.chart_ids = ids
        self.evaluator = evaluator

    @classmethod
    def from_function(cls, domain, target, fn, chart_ids=None):
        """Sample ``fn(x, patch)`` on every patch.

        Without ``chart_ids`` the values are read as chart-0 coordinates and each
        point is moved to the chart where its coordinates are bounded.
        """
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            raw = np.stack([fn(domain.x[p], p) for p in range(domain.n_patches)])
        if chart_ids is None:
            pts, ids = _assign_per_patch(target, raw, 0)
        else:
            pts, ids = raw, chart_ids
        return cls(domain, target, pts, ids, evaluator=fn)

    @property
    def uniform(self) -> bool:
        flat = self.chart_ids.reshape(self.domain.n_patches, -1)
        return bool(np.all(flat == flat[:, :1]))

    def with_points(self, points, chart_ids=None) -> "MapState":
        ids = self.chart_ids if chart_ids is None else chart_ids
        return MapState(self.domain, self.target, points, ids)

    def rechart(self) -> "MapState":
        """Move every point into the chart where its coordinates are bounded."""
        pts, ids = _assign_per_patch(self.target, self.points, self.chart_ids)
        return MapState(self.domain, self.target, pts, ids, self.evaluator)

    def in_chart(self, chart: int):
        """All points expressed in one chart, with a validity mask."""
        return self.target.chart_view(self.points, self.chart_ids, chart)

    def __repr__(self):
        return f"MapState({self.domain!r}, {self.target!r}, charts={np.unique(self.chart_ids).tolist()})"


def _assign_per_patch(target, z, ids):
    ids = np.broadcast_to(np.asarray(ids, dtype=int), z.shape[:-1])
    out = [target.assign_charts(z[p], ids[p]) for p in range(z.shape[0])]
    return np.stack([o[0] for o in out]), np.stack([o[1] for o in out])


@dataclasses.dataclass
class FrameCoefficients:
    a1: np.ndarray
    a1bar: np.ndarray


@dataclasses.dataclass
class SecondForm:
    a11: np.ndarray
    a11bar: np.ndarray
    a1bar1: np.ndarray
    a1bar1bar: np.ndarray

    @property
    def A2(self) -> np.ndarray:
        """``|A|^2``, half the squared norm of the second fundamental form."""
        return np.sum(np.abs(self.a11) ** 2 + 2 * np.abs(self.a11bar) ** 2
                      + np.abs(self.a1bar1bar) ** 2, axis=-1)


@dataclasses.dataclass
class EnergyField:
    density: np.ndarray
    total: float


def _stack(items, attr):
    return np.stack([getattr(it, attr) for it in items])


def curvature_contraction(fc: FrameCoefficients, R) -> np.ndarray:
    """Contract the curvature blocks ``R = (holomorphic, mixed, antiholomorphic)`` with the frame coefficients."""
    Rh, Rm, Ra = R
    a1, ab = fc.a1, fc.a1bar
    conj = np.conj
    return (2 * np.einsum("...ijkl,...k,...l->...ij", Rh, a1, ab)
            + np.einsum("...ijkl,...k,...l->...ij", Rm, a1, conj(a1))
            - np.einsum("...ijkl,...k,...l->...ij", Rm, ab, conj(ab))
            + 2 * np.einsum("...ijkl,...k,...l->...ij", Ra, conj(ab), conj(a1)))


class Pullback:
    """Lazily evaluated pullback quantities of a map with one target chart per patch."""

    def __init__(self, ms: MapState):
        if not ms.uniform:
            raise ChartTear("use pullback() for maps with pointwise charts")
        self.ms = ms
        self.patch_charts = [int(ms.chart_ids[p, 0, 0]) for p in range(ms.domain.n_patches)]

    def _per_patch(self, fn):
        return [fn(self.ms.target, c, self.ms.points[p]) for p, c in enumerate(self.patch_charts)]

    @cached_property
    def connection(self) -> ConnectionData:
        items = self._per_patch(chern_connection)
        return ConnectionData(*(_stack(items, f.name) for f in dataclasses.fields(ConnectionData)))

    @cached_property
    def torsion(self):
        items = self._per_patch(torsion_jet)
        return _stack(items, "L"), _stack(items, "L1"), _stack(items, "L1bar")

    @cached_property
    def torsion_L(self):
        """Torsion coefficients alone, without their derivatives."""
        if "torsion" in self.__dict__:
            return self.torsion[0]
        c = self.connection
        return 0.5 * _rotate3(c.coframe, c.frame, _coordinate_torsion(c.gamma))

    @cached_property
    def curvature(self):
        items = self._per_patch(curvature)
        return _stack(items, "R_hol"), _stack(items, "R_mixed"), _stack(items, "R_anti")

    @cached_property
    def dmap(self):
        # subtracting a reference value makes constant maps differentiate to exact zeros
        pts = self.ms.points
        return self.ms.domain.d_complex(pts - pts[:, :1, :1])

    @property
    def lam(self):
        return self.ms.domain.lam[..., None]

    @cached_property
    def frame_coefficients(self) -> FrameCoefficients:
        fx, fxb = self.dmap
        P = self.connection.coframe
        a1 = np.einsum("...ai,...i->...a", P, fx) / self.lam
        a1bar = np.einsum("...ai,...i->...a", P, fxb) / self.lam
        return FrameCoefficients(a1, a1bar)

    @cached_property
    def pulled_omega(self):
        """Connection matrices evaluated on d/dx and d/dxbar."""
        fx, fxb = self.dmap
        c = self.connection
        return c.omega_pullback(fx, np.conj(fxb)), c.omega_pullback(fxb, np.conj(fx))

    def cov1(self, s, weight: int = 0):
        """``phi`` and ``phibar`` components of the covariant derivative of a section.

        ``weight`` is +1 for coefficients against ``phi`` (like ``a_1``), -1 for
        coefficients against ``phibar`` and 0 for sections without a form index.
        """
        d = self.ms.domain
        ds, dbs = d.d_complex(s)
        Wx, Wxb = self.pulled_omega
        dl = d.dloglam[..., None]
        s1 = ds - weight * dl * s + np.einsum("...ab,...b->...a", Wx, s)
        s1b = dbs + weight * np.conj(dl) * s + np.einsum("...ab,...b->...a", Wxb, s)
        return s1 / self.lam, s1b / self.lam

    @cached_property
    def second_form(self) -> SecondForm:
        fc = self.frame_coefficients
        a11, a11bar = self.cov1(fc.a1, +1)
        a1bar1, a1bar1bar = self.cov1(fc.a1bar, -1)
        return SecondForm(a11, a11bar, a1bar1, a1bar1bar)

    @cached_property
    def harmonic_residual(self):
        sf = self.second_form
        return sf.a11bar + sf.a1bar1

    @cached_property
    def tension(self):
        """Chern tension ``2 Q r`` in target coordinates (flat case ``4 f_{x xbar} / lambda^2``)."""
        return 2.0 * np.einsum("...ia,...a->...i", self.connection.frame, self.harmonic_residual)

    @staticmethod
    def L_contract(L, u, v):
        return np.einsum("...ajk,...j,...k->...a", L, u, v)

    @cached_property
    def torsion_identity_residual(self):
        sf, fc = self.second_form, self.frame_coefficients
        res = -sf.a11bar + sf.a1bar1 - 2 * self.L_contract(self.torsion_L, fc.a1, fc.a1bar)
        return np.abs(res).max(axis=-1)

    @cached_property
    def energy_density(self):
        fc = self.frame_coefficients
        return np.sum(np.abs(fc.a1) ** 2 + np.abs(fc.a1bar) ** 2, axis=-1)

    @cached_property
    def area_density(self):
        """Jacobian of the map against the domain area form; equals ``e`` for conformal maps."""
        fc = self.frame_coefficients
        s = np.abs(np.sum(fc.a1 * np.conj(fc.a1bar), axis=-1))
        return np.sqrt(np.maximum(self.energy_density**2 - 4 * s**2, 0.0))

    @cached_property
    def conformality_defect(self):
        fc = self.frame_coefficients
        e = self.energy_density
        hopf = np.abs(np.sum(fc.a1 * np.conj(fc.a1bar), axis=-1))
        return np.where(e > 1e-300, 2 * hopf / np.maximum(e, 1e-300), 0.0)

    @cached_property
    def mean_curvature(self):
        """(1,0) components ``H^i`` of the mean curvature vector along the map."""
        fc = self.frame_coefficients
        Lb = np.conj(self.torsion_L)
        t1 = np.einsum("...j,...jki,...k->...i", fc.a1bar, Lb, np.conj(fc.a1bar))
        t2 = np.einsum("...j,...kji,...k->...i", np.conj(fc.a1), Lb, fc.a1)
        return 2 * (t1 + t2)

    @cached_property
    def XY(self):
        """``X``, ``Y``: halves of the phi and phibar lines of the second-order right-hand side."""
        fc, sf = self.frame_coefficients, self.second_form
        L, L1, L1b = self.torsion
        a1, ab = fc.a1, fc.a1bar
        dLx = np.einsum("...ijkl,...l->...ijk", L1, a1) + np.einsum("...ijkl,...l->...ijk", L1b, np.conj(ab))
        dLy = np.einsum("...ijkl,...l->...ijk", L1, ab) + np.einsum("...ijkl,...l->...ijk", L1b, np.conj(a1))
        X = (self.L_contract(dLx, a1, ab)
             + self.L_contract(L, sf.a11, ab) + self.L_contract(L, a1, sf.a1bar1))
        Y = (self.L_contract(dLy, a1, ab)
             + self.L_contract(L, sf.a11bar, ab) + self.L_contract(L, a1, sf.a1bar1bar))
        return X, Y

    @cached_property
    def curvature_contraction(self):
        """``c[i, j]``: coefficient of the pulled back ``Omega^i_j`` against ``phi ^ phibar``."""
        return curvature_contraction(self.frame_coefficients, self.curvature)

    @cached_property
    def first_order_defect(self):
        sf, fc = self.second_form, self.frame_coefficients
        p = 2 * self.L_contract(self.torsion_L, fc.a1, fc.a1bar)
        d_part = -sf.a11bar + sf.a1bar1
        return np.maximum(np.abs(d_part - p).max(axis=-1),
                          np.abs(self.harmonic_residual).max(axis=-1))

    @cached_property
    def second_order_defect(self):
        sf = self.second_form
        B = sf.a1bar1 - sf.a11bar
        B1, B1b = self.cov1(B)
        r1, r1b = self.cov1(self.harmonic_residual)
        X, Y = self.XY
        return np.maximum(np.abs(B1 - r1 - 2 * X).max(axis=-1),
                          np.abs(-B1b - r1b + 2 * Y).max(axis=-1))


class MixedPullback:
    """Pullback of a map whose target chart varies from point to point.

    Each chart in use gets a full :class:`Pullback` of the map expressed in that
    chart; results are assembled by taking every point from its own chart.
    Frame-dependent fields are therefore only smooth inside constant-chart
    regions, while invariants (densities, norms, defects) are global.
    """

    def __init__(self, ms: MapState):
        if ms.domain.kind == "PeriodicTorus":
            raise ChartTear("pointwise charts are not supported with spectral differentiation")
        self.ms = ms
        self.parts = []
        struct = np.ones((3, 3), dtype=bool)
        for c in np.unique(ms.chart_ids):
            pts, valid = ms.in_chart(int(c))
            sel = ms.chart_ids == c
            for p in range(ms.domain.n_patches):
                halo = binary_dilation(sel[p], structure=struct, iterations=CHART_HALO)
                if np.any(halo & ~valid[p]):
                    raise ChartTear(f"chart {c} is not valid on the stencil support of its points")
            self.parts.append((sel, Pullback(MapState(ms.domain, ms.target, pts, int(c)))))

    def _select(self, values):
        first = values[0]
        if isinstance(first, np.ndarray):
            out = np.zeros_like(first)
            for (sel, _), v in zip(self.parts, values):
                m = sel.reshape(sel.shape + (1,) * (v.ndim - 3))
                out = np.where(m, v, out)
            return out
        if isinstance(first, tuple):
            return tuple(self._select([v[i] for v in values]) for i in range(len(first)))
        if dataclasses.is_dataclass(first):
            return type(first)(**{f.name: self._select([getattr(v, f.name) for v in values])
                                  for f in dataclasses.fields(first)})
        return first

    def __getattr__(self, name):
        if name.startswith("_") or name in ("ms", "parts"):
            raise AttributeError(name)
        vals = [getattr(pb, name) for _, pb in self.parts]
        if callable(vals[0]):
            raise AttributeError(f"{name} is not available for maps with pointwise charts")
        out = self._select(vals)
        self.__dict__[name] = out
        return out

    @staticmethod
    def L_contract(L, u, v):
        return Pullback.L_contract(L, u, v)


def pullback(ms: MapState):
    return Pullback(ms) if ms.uniform else MixedPullback(ms)


# ---------------------------------------------------------------------------
# module level operations

def frame_coefficients(ms: MapState) -> FrameCoefficients:
    return pullback(ms).frame_coefficients


def second_form(ms: MapState) -> SecondForm:
    return pullback(ms).second_form


def torsion_identity_residual(ms: MapState) -> np.ndarray:
    return pullback(ms).torsion_identity_residual


def harmonic_residual(ms: MapState) -> np.ndarray:
    return pullback(ms).harmonic_residual


def tension_field(ms: MapState) -> np.ndarray:
    return pullback(ms).tension


def max_residual(ms: MapState, pb=None) -> float:
    """Max of ``|r|`` over the points each patch owns."""
    pb = pb or pullback(ms)
    r = np.abs(pb.harmonic_residual).max(axis=-1)
    return float(r[ms.domain.owned_mask].max())


def energy(ms: MapState, region_mask=None) -> EnergyField:
    e = pullback(ms).energy_density
    return EnergyField(e, ms.domain.integrate(e, region_mask))


def mean_curvature(ms: MapState):
    """Return ``(H, |H|, conformality_defect)`` pointwise."""
    pb = pullback(ms)
    H = pb.mean_curvature
    return H, np.sqrt(np.sum(np.abs(H) ** 2, axis=-1)), pb.conformality_defect


def tension_from_jet(target: HermitianTarget, chart: int, z, fx, fxb, fxxb, lam=1.0):
    """Chern tension at single points from the map's 2-jet.

    ``fx``, ``fxb`` are the Wirtinger derivatives of the coordinates and
    ``fxxb`` the mixed second derivative; all have trailing axis 2.
    """
    jet = target.metric_jet(z, chart)
    G = _gamma(jet, np.linalg.inv(jet.H))
    quad = (np.einsum("...kij,...i,...j->...k", G, fx, fxb)
            + np.einsum("...kij,...i,...j->...k", G, fxb, fx))
    lam = np.asarray(lam)[..., None] if np.ndim(lam) else lam
    return 2.0 * (2.0 * fxxb + quad) / lam**2


def rescaled_domain(domain: DomainChart, mu) -> DomainChart:
    """Copy of ``domain`` with coframe ``theta = phi / mu`` for a positive grid field ``mu``."""
    mu = np.broadcast_to(np.asarray(mu, dtype=float), domain.shape)
    if np.any(np.abs(mu) < 1e-12):
        raise ZeroConformalFactor("conformal factor vanishes")
    new = copy.copy(domain)
    new.lam = domain.lam / mu
    dlogmu, _ = domain.d_complex(np.log(np.abs(mu)))
    new.dloglam = domain.dloglam - dlogmu
    return new


def conformal_change_check(ms: MapState, mu) -> float:
    """Relative deviation of the mixed second-form blocks from the ``mu^2`` law."""
    mu = np.broadcast_to(np.asarray(mu, dtype=float), ms.domain.shape)
    dom2 = rescaled_domain(ms.domain, mu)
    ms2 = MapState(dom2, ms.target, ms.points, ms.chart_ids)
    s1, s2 = second_form(ms), second_form(ms2)
    m2 = (mu**2)[..., None]
    own = ms.domain.owned_mask
    diff = max(np.abs(s2.a11bar - m2 * s1.a11bar)[own].max(),
               np.abs(s2.a1bar1 - m2 * s1.a1bar1)[own].max())
    scale = max(np.abs(m2 * s1.a11bar)[own].max(), np.abs(m2 * s1.a1bar1)[own].max())
    return float(diff / scale) if scale > 1e-12 else float(diff)


# Reference truncation error of the harmonic residual on stencil grids,
# err(h) = REFERENCE_C h^4, fitted on closed-form holomorphic maps
# (see tests/test_pullback.py::test_reference_error_table). Spectral grids use
# the rounding floor.
REFERENCE_C = 5.0
REFERENCE_FLOOR = 1e-10


def reference_error(domain: DomainChart) -> float:
    if domain.kind == "PeriodicTorus":
        return REFERENCE_FLOOR
    return max(REFERENCE_C * domain.h**4, REFERENCE_FLOOR)


def harmonic_threshold(domain: DomainChart, factor: float = 10.0) -> float:
    return factor * reference_error(domain)


def require_harmonic(ms: MapState, pb=None, threshold: float | None = None) -> float:
    pb = pb or pullback(ms)
    thr = harmonic_threshold(ms.domain) if threshold is None else threshold
    r = max_residual(ms, pb)
    if r > thr:
        raise NotHarmonic(f"max|r| = {r:.3e} exceeds harmonicity threshold {thr:.3e}")
    return r


def check_mask(domain: DomainChart, depth: int = 2) -> np.ndarray:
    """Owned points, minus ``depth`` rings of one-sided stencils on a Dirichlet grid."""
    own = domain.owned_mask.copy()
    if domain.kind == "Disk" and depth > 2:
        own[:, :depth, :] = own[:, -depth:, :] = False
        own[:, :, :depth] = own[:, :, -depth:] = False
    return own


def first_order_operator_check(ms: MapState, threshold: float | None = None) -> float:
    """Defect of ``(d* + d) df = p(df, df)`` for a Chern-harmonic map.

    The ``phi ^ phibar`` part of ``d df`` is ``-a_{1 1bar} + a_{1bar 1}``; the
    codifferential part is the harmonic residual.
    """
    pb = pullback(ms)
    require_harmonic(ms, pb, threshold)
    return float(pb.first_order_defect[check_mask(ms.domain)].max())


def second_order_operator_check(ms: MapState, threshold: float | None = None) -> float:
    """Defect of ``(d d* + d* d) df = q(nabla df, df, df, df)`` for a Chern-harmonic map."""
    pb = pullback(ms)
    require_harmonic(ms, pb, threshold)
    return float(pb.second_order_defect[check_mask(ms.domain, 4)].max())
