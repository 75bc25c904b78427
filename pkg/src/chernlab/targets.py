"""Hermitian target surfaces with closed-form Chern connection data.

Points of a target are complex pairs ``z = (z1, z2)`` stored in the last axis of
an array of shape ``(..., 2)``. All evaluators broadcast over the leading axes.

Index conventions (leading ``...`` omitted):

* ``H[j, l] = h_{j lbar}``, the Hermitian metric in the holomorphic coordinate frame.
* ``gamma[k, i, j] = Gamma^k_{ij}`` with ``nabla_{d_i} d_j = Gamma^k_{ij} d_k``.
* ``coframe[a, i] = P^a_i`` so that the unitary coframe is ``omega^a = P^a_i dz^i``
  and ``H = P^T conj(P)``. ``P`` is the transpose of the lower Cholesky factor of ``H``.
* ``frame[i, a] = Q^i_a`` with ``Q = P^{-1}``; ``e_a = Q^i_a d_i``.
* ``omega_dz[k, a, b]`` and ``omega_dzbar[k, a, b]`` are the ``dz^k`` and
  ``dzbar^k`` coefficients of the unitary connection forms ``omega^a_b``.

Torsion and curvature tensors are returned in the unitary frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotInOverlap, OutOfChart, SingularMetric

PD_TOL = 1e-12


@dataclass(frozen=True)
class TargetChart:
    index: int
    name: str


@dataclass(frozen=True)
class MetricJet:
    H: np.ndarray
    dH: np.ndarray  # [k, j, l] = d_k h_{j lbar}
    ddH: np.ndarray  # [k, m, j, l] = d_k d_m h_{j lbar}
    dbdH: np.ndarray  # [k, m, j, l] = d_k dbar_m h_{j lbar}


@dataclass(frozen=True)
class ConnectionData:
    gamma: np.ndarray
    sqrt_h: np.ndarray
    coframe: np.ndarray
    frame: np.ndarray
    omega_dz: np.ndarray
    omega_dzbar: np.ndarray

    def omega_pullback(self, dz: np.ndarray, dzbar: np.ndarray) -> np.ndarray:
        """Evaluate ``omega^a_b`` on a tangent vector with ``dz^k(v) = dz[k]``."""
        return (np.einsum("...kab,...k->...ab", self.omega_dz, dz)
                + np.einsum("...kab,...k->...ab", self.omega_dzbar, dzbar))


@dataclass(frozen=True)
class TorsionJet:
    L: np.ndarray  # [a, b, c]
    L1: np.ndarray | None = None  # [a, b, c, e], derivative along omega^e
    L1bar: np.ndarray | None = None  # [a, b, c, e], derivative along conj(omega^e)


@dataclass(frozen=True)
class CurvatureTensor:
    R_hol: np.ndarray  # R^a_{b c d}
    R_mixed: np.ndarray  # R^a_{b c dbar}
    R_anti: np.ndarray  # R^a_{b cbar dbar}


class HermitianTarget:
    """Base class: a complex surface covered by charts with a closed-form metric.

    Subclasses implement :meth:`metric_jet` and the chart bookkeeping.
    """

    id = "base"

    def __init__(self, self_test: bool = False):
        if self_test:
            err = jet_self_test(self)
            if err > 1e-5:
                raise AssertionError(f"{self.id}: closed-form metric jet disagrees with "
                                     f"finite differences (max err {err:.3e})")

    @property
    def charts(self) -> list[TargetChart]:
        raise NotImplementedError

    @property
    def is_kahler(self) -> bool:
        raise NotImplementedError

    def check_in_chart(self, z: np.ndarray, chart: int) -> None:
        if not 0 <= chart < len(self.charts):
            raise OutOfChart(f"{self.id} has no chart {chart}")
        if not np.all(np.isfinite(z)):
            raise OutOfChart("non-finite target point")

    def metric_jet(self, z: np.ndarray, chart: int = 0) -> MetricJet:
        raise NotImplementedError

    def metric(self, z: np.ndarray, chart: int = 0) -> np.ndarray:
        return self.metric_jet(z, chart).H

    def transition(self, from_chart: int, to_chart: int, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def best_chart(self, z: np.ndarray, chart: int) -> int:
        """Chart in which the coordinates of ``z`` (given in ``chart``) are smallest."""
        return chart

    def assign_charts(self, z: np.ndarray, chart: int = 0):
        """Pointwise chart choice for coordinates ``z`` given in ``chart``.

        Entries may be infinite where the map leaves the chart. Returns the
        converted coordinates and an integer chart array of shape ``z.shape[:-1]``.
        """
        z = np.asarray(z, dtype=complex)
        return z.copy(), np.broadcast_to(np.asarray(chart, dtype=int), z.shape[:-1]).copy()

    def pointwise_charts(self, z: np.ndarray):
        """Per-point chart choice for chart-0 coordinates, without smoothness bookkeeping."""
        z = np.asarray(z, dtype=complex)
        return z.copy(), np.zeros(z.shape[:-1], dtype=int)

    def express(self, z: np.ndarray, ids: np.ndarray) -> np.ndarray:
        """Convert chart-0 coordinates into the per-point charts ``ids``."""
        return np.asarray(z, dtype=complex).copy()

    def chart_view(self, z: np.ndarray, ids: np.ndarray, chart: int, bound: float = 1e4):
        """Coordinates of every point in ``chart`` plus a validity mask.

        Invalid points (outside the chart or beyond ``bound``) are replaced by a
        harmless sentinel so that closed-form evaluators stay finite.
        """
        z = np.asarray(z, dtype=complex)
        if np.all(ids == chart):
            return z.copy(), np.ones(ids.shape, dtype=bool)
        raise NotInOverlap(f"{self.id} has a single chart")

    def norm(self, z: np.ndarray, v: np.ndarray, chart: int = 0) -> np.ndarray:
        """Length of the real tangent vector with (1,0) components ``v`` at ``z``."""
        H = self.metric(z, chart)
        q = np.einsum("...j,...jl,...l->...", v, H, np.conj(v)).real
        return np.sqrt(np.maximum(q, 0.0))

    def distance(self, z, chart, w, w_chart: int = 0) -> np.ndarray:
        """Geodesic distance from the points ``z`` (charts ``chart``) to one point ``w``."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


def _zeros_jet(z):
    shape = z.shape[:-1]
    H = np.broadcast_to(np.eye(2, dtype=complex), shape + (2, 2)).copy()
    dH = np.zeros(shape + (2, 2, 2), dtype=complex)
    ddH = np.zeros(shape + (2, 2, 2, 2), dtype=complex)
    return MetricJet(H, dH, ddH, ddH.copy())


class FlatC2(HermitianTarget):
    id = "FlatC2"

    @property
    def charts(self):
        return [TargetChart(0, "C2")]

    @property
    def is_kahler(self):
        return True

    def metric_jet(self, z, chart=0):
        z = np.asarray(z, dtype=complex)
        self.check_in_chart(z, chart)
        return _zeros_jet(z)

    def transition(self, from_chart, to_chart, z):
        self.check_in_chart(np.asarray(z), from_chart)
        self.check_in_chart(np.asarray(z), to_chart)
        return np.asarray(z, dtype=complex).copy()

    def distance(self, z, chart, w, w_chart=0):
        return np.linalg.norm(np.asarray(z) - np.asarray(w), axis=-1)


def _fs_factor(w):
    s = np.abs(w) ** 2
    u = 1.0 + s
    g = 4.0 / u**2
    dg = -8.0 * np.conj(w) / u**3
    ddg = 24.0 * np.conj(w) ** 2 / u**4
    dbdg = (16.0 * s - 8.0) / u**4
    return g, dg, ddg, dbdg


def _roughness(w):
    """Largest second difference of a sampled coordinate along its last two axes."""
    if w.ndim < 2 or not np.all(np.isfinite(w)) or min(w.shape[-2:]) < 3:
        return np.inf if not np.all(np.isfinite(w)) else 0.0
    dx = np.abs(w[..., 2:, :] - 2 * w[..., 1:-1, :] + w[..., :-2, :]).max()
    dy = np.abs(w[..., :, 2:] - 2 * w[..., :, 1:-1] + w[..., :, :-2]).max()
    return float(max(dx, dy))


def _factor_sphere_point(w, inverted):
    """Unit-sphere point of a factor coordinate; inverted charts use ``1/w``."""
    s = np.abs(w) ** 2
    p = np.stack([2 * w.real, 2 * w.imag, 1.0 - s], axis=-1) / (1.0 + s)[..., None]
    flip = np.asarray(inverted, dtype=bool)[..., None]
    return np.where(flip, p * np.array([1.0, -1.0, -1.0]), p)


class FSProduct(HermitianTarget):
    """CP^1 x CP^1, each factor with ``4|dw|^2 / (1 + |w|^2)^2`` (area 4 pi).

    Chart ``c`` uses the inverted coordinate ``1/w`` on factor ``f`` when bit
    ``f`` of ``c`` is set.
    """

    id = "FSProduct"

    @property
    def charts(self):
        return [TargetChart(c, f"({'1/w' if c & 1 else 'w'}, {'1/w' if c & 2 else 'w'})")
                for c in range(4)]

    @property
    def is_kahler(self):
        return True

    def metric_jet(self, z, chart=0):
        z = np.asarray(z, dtype=complex)
        self.check_in_chart(z, chart)
        shape = z.shape[:-1]
        H = np.zeros(shape + (2, 2), dtype=complex)
        dH = np.zeros(shape + (2, 2, 2), dtype=complex)
        ddH = np.zeros(shape + (2, 2, 2, 2), dtype=complex)
        dbdH = np.zeros(shape + (2, 2, 2, 2), dtype=complex)
        for k in range(2):
            g, dg, ddg, dbdg = _fs_factor(z[..., k])
            H[..., k, k] = g
            dH[..., k, k, k] = dg
            ddH[..., k, k, k, k] = ddg
            dbdH[..., k, k, k, k] = dbdg
        return MetricJet(H, dH, ddH, dbdH)

    def metric(self, z, chart=0):
        z = np.asarray(z, dtype=complex)
        self.check_in_chart(z, chart)
        H = np.zeros(z.shape[:-1] + (2, 2), dtype=complex)
        for k in range(2):
            H[..., k, k] = 4.0 / (1.0 + np.abs(z[..., k]) ** 2) ** 2
        return H

    def transition(self, from_chart, to_chart, z):
        z = np.asarray(z, dtype=complex)
        self.check_in_chart(z, from_chart)
        self.check_in_chart(z, to_chart)
        out = z.copy()
        flip = from_chart ^ to_chart
        for k in range(2):
            if flip >> k & 1:
                w = z[..., k]
                if np.any(w == 0):
                    raise NotInOverlap(f"factor {k} coordinate is 0; not in the overlap")
                out[..., k] = 1.0 / w
        return out

    def sphere_points(self, z, chart):
        """Pair of unit-sphere points, shape ``(..., 2, 3)``."""
        z = np.asarray(z, dtype=complex)
        chart = np.broadcast_to(np.asarray(chart), z.shape[:-1])
        return np.stack([_factor_sphere_point(z[..., k], chart >> k & 1) for k in range(2)], axis=-2)

    def distance(self, z, chart, w, w_chart=0):
        p = self.sphere_points(z, chart)
        q = self.sphere_points(np.asarray(w), w_chart)
        ang = np.arccos(np.clip(np.sum(p * q, axis=-1), -1.0, 1.0))
        return np.sqrt(np.sum(ang**2, axis=-1))

    def best_chart(self, z, chart):
        z = np.asarray(z)
        c = chart
        for k in range(2):
            m = np.max(np.abs(z[..., k]))
            mi = np.min(np.abs(z[..., k]))
            if m > 1.0 and mi > 0 and 1.0 / mi < m:
                c ^= 1 << k
        return c

    # A factor keeps one chart over a whole sample when the coordinates in that
    # chart are smooth on the grid (largest second difference below
    # SMOOTH_BOUND); otherwise the chart is chosen pointwise with the inversion
    # at |w| = 1. Chart views are trusted up to VIEW_BOUND, where the factor
    # metric is still about 1e-8.
    SMOOTH_BOUND = 1.0
    VIEW_BOUND = 100.0

    def assign_charts(self, z, chart=0):
        z = np.array(z, dtype=complex)
        ids = np.broadcast_to(np.asarray(chart, dtype=int), z.shape[:-1]).copy()
        for k in range(2):
            w = z[..., k]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                inv = np.where(np.isfinite(w), 1.0 / np.where(w == 0, 1.0, w), 0.0)
                inv = np.where(w == 0, np.inf, inv)
                s_keep, s_flip = _roughness(w), _roughness(inv)
            if min(s_keep, s_flip) <= self.SMOOTH_BOUND:
                flip = np.full(w.shape, s_flip < s_keep)
            else:
                flip = ~(np.abs(w) <= 1.0)  # also catches inf and nan
            z[..., k] = np.where(flip, inv, w)
            ids = np.where(flip, ids ^ (1 << k), ids)
        if not np.all(np.isfinite(z)):
            raise OutOfChart("undefined target point")
        return z, ids

    def pointwise_charts(self, z):
        z = np.asarray(z, dtype=complex)
        ids = np.zeros(z.shape[:-1], dtype=int)
        for k in range(2):
            ids |= (~(np.abs(z[..., k]) <= 1.0)).astype(int) << k
        return self.express(z, ids), ids

    def express(self, z, ids):
        z = np.asarray(z, dtype=complex)
        out = z.copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            for k in range(2):
                flip = (np.asarray(ids) >> k & 1).astype(bool)
                out[..., k] = np.where(flip, 1.0 / z[..., k], z[..., k])
        return out

    def chart_view(self, z, ids, chart, bound=None):
        bound = self.VIEW_BOUND if bound is None else bound
        z = np.asarray(z, dtype=complex)
        out = z.copy()
        valid = np.ones(ids.shape, dtype=bool)
        for k in range(2):
            flip = ((ids ^ chart) >> k & 1).astype(bool)
            w = z[..., k]
            ok = ~flip | (np.abs(w) >= 1.0 / bound)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / np.where(ok, w, 1.0)
            v = np.where(flip, np.where(ok, inv, 0.0), w)
            good = ok & (np.abs(v) <= bound)
            out[..., k] = np.where(good, v, 0.0)
            valid &= good
        return out, valid


class HopfSurface(HermitianTarget):
    """(C^2 minus 0) / (z ~ 2z) with the metric ``delta_ij / |z|^2``.

    The metric is invariant under the identification, so the single chart is
    all of ``C^2 \\ {0}``; :meth:`transition` returns the representative in the
    fundamental annulus ``1 <= |z| < 2``.
    """

    id = "Hopf"

    @property
    def charts(self):
        return [TargetChart(0, "C2 minus origin")]

    @property
    def is_kahler(self):
        return False

    def check_in_chart(self, z, chart):
        super().check_in_chart(z, chart)
        if np.any(np.sum(np.abs(z) ** 2, axis=-1) < 1e-300):
            raise OutOfChart("Hopf surface chart excludes z = 0")

    def metric_jet(self, z, chart=0):
        z = np.asarray(z, dtype=complex)
        self.check_in_chart(z, chart)
        shape = z.shape[:-1]
        s = np.sum(np.abs(z) ** 2, axis=-1)
        zb = np.conj(z)
        eye = np.eye(2)
        H = (1.0 / s)[..., None, None] * eye
        dH = (-zb / s[..., None] ** 2)[..., :, None, None] * eye
        ddH = (2.0 * zb[..., :, None] * zb[..., None, :] / s[..., None, None] ** 3)[..., None, None] * eye
        dbd = (-eye / s[..., None, None] ** 2
               + 2.0 * zb[..., :, None] * z[..., None, :] / s[..., None, None] ** 3)
        dbdH = dbd[..., None, None] * eye
        assert H.shape == shape + (2, 2)
        return MetricJet(H.astype(complex), dH, ddH, dbdH)

    def transition(self, from_chart, to_chart, z):
        z = np.asarray(z, dtype=complex)
        self.check_in_chart(z, from_chart)
        r = np.sqrt(np.sum(np.abs(z) ** 2, axis=-1))
        n = np.floor(np.log2(r))
        out = z * (2.0 ** -n)[..., None]
        # guard against log2 rounding at the annulus edges
        r2 = np.sqrt(np.sum(np.abs(out) ** 2, axis=-1))
        out = np.where((r2 >= 2.0)[..., None], out / 2, out)
        out = np.where((r2 < 1.0)[..., None], out * 2, out)
        return out


def _hopf_distance(z, w):
    """Distance in the cylinder metric of C^2 minus 0, isometric to R x S^3."""
    rz = np.linalg.norm(z, axis=-1)
    rw = np.linalg.norm(w, axis=-1)
    inner = np.real(np.sum(z * np.conj(w), axis=-1)) / (rz * rw)
    ang = np.arccos(np.clip(inner, -1.0, 1.0))
    t = np.log(rz / rw)
    # the identification z ~ 2z shifts t by log 2
    t = (t + 0.5 * np.log(2.0)) % np.log(2.0) - 0.5 * np.log(2.0)
    return np.sqrt(t**2 + ang**2)


HopfSurface.distance = lambda self, z, chart, w, w_chart=0: _hopf_distance(np.asarray(z), np.asarray(w))

TARGETS = {"FlatC2": FlatC2, "FSProduct": FSProduct, "Hopf": HopfSurface}


def make_target(name: str, self_test: bool = False) -> HermitianTarget:
    try:
        return TARGETS[name](self_test=self_test)
    except KeyError:
        raise KeyError(f"unknown target id {name!r}; expected one of {sorted(TARGETS)}") from None


def transition(target: HermitianTarget, from_chart: int, to_chart: int, z) -> np.ndarray:
    return target.transition(from_chart, to_chart, z)


# ---------------------------------------------------------------------------
# frames and connection

def _cholesky(H):
    herm = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    eig = np.linalg.eigvalsh(herm)
    if np.any(eig[..., 0] < PD_TOL):
        raise SingularMetric(f"metric not positive definite (min eigenvalue {eig[..., 0].min():.3e})")
    return np.linalg.cholesky(herm)


def _chol_derivative(Lc, Linv, dHv):
    """Directional derivative of the lower Cholesky factor along a real direction."""
    X = Linv @ dHv @ np.conj(np.swapaxes(Linv, -1, -2))
    phi = np.tril(X, -1) + 0.5 * np.einsum("...ii->...i", X).real[..., None] * np.eye(2)
    return Lc @ phi


def unitary_frame(jet: MetricJet):
    """Coframe ``P``, frame ``Q`` and their Wirtinger derivatives ``d_k P``, ``dbar_k P``."""
    Lc = _cholesky(jet.H)
    Linv = np.linalg.inv(Lc)
    P = np.swapaxes(Lc, -1, -2)
    Q = np.linalg.inv(P)
    dP = np.empty(jet.dH.shape, dtype=complex)
    dbP = np.empty(jet.dH.shape, dtype=complex)
    for k in range(2):
        dk = jet.dH[..., k, :, :]
        dkb = np.conj(np.swapaxes(dk, -1, -2))
        dLx = _chol_derivative(Lc, Linv, dk + dkb)
        dLy = _chol_derivative(Lc, Linv, 1j * (dk - dkb))
        dP[..., k, :, :] = np.swapaxes(0.5 * (dLx - 1j * dLy), -1, -2)
        dbP[..., k, :, :] = np.swapaxes(0.5 * (dLx + 1j * dLy), -1, -2)
    return Lc, P, Q, dP, dbP


def _gamma(jet: MetricJet, Hinv):
    return np.einsum("...ijl,...lk->...kij", jet.dH, Hinv)


def chern_connection(target: HermitianTarget, chart: int, z) -> ConnectionData:
    """Chern connection in the coordinate frame and in the Cholesky unitary frame."""
    jet = target.metric_jet(np.asarray(z, dtype=complex), chart)
    Lc, P, Q, dP, dbP = unitary_frame(jet)
    Hinv = np.linalg.inv(jet.H)
    gamma = _gamma(jet, Hinv)
    # omega = (-dP + P theta) Q with theta[p, j] = Gamma^p_{kj} dz^k
    gk = np.moveaxis(gamma, -2, -3)  # [k, p, j]
    omega_dz = (-dP + P[..., None, :, :] @ gk) @ Q[..., None, :, :]
    omega_dzbar = -dbP @ Q[..., None, :, :]
    return ConnectionData(gamma, Lc, P, Q, omega_dz, omega_dzbar)


def _rotate3(P, Q, T):
    """Rotate a (1,2) coordinate tensor T[k, i, j] into the unitary frame."""
    return np.einsum("...ak,...kij,...ib,...jc->...abc", P, T, Q, Q, optimize=True)


def _coordinate_torsion(gamma):
    return gamma - np.swapaxes(gamma, -1, -2)


def torsion(target: HermitianTarget, chart: int, z) -> TorsionJet:
    """Torsion coefficients ``L^a_{bc}`` with ``Theta^a = L^a_{bc} omega^b ^ omega^c``."""
    conn = chern_connection(target, chart, z)
    T = _coordinate_torsion(conn.gamma)
    return TorsionJet(0.5 * _rotate3(conn.coframe, conn.frame, T))


def _gamma_derivatives(jet: MetricJet, Hinv):
    """Holomorphic and antiholomorphic derivatives of Gamma: [m, k, i, j]."""
    dHinv = -np.einsum("...lp,...mpq,...qk->...mlk", Hinv, jet.dH, Hinv)
    dbH = np.conj(np.swapaxes(jet.dH, -1, -2))  # [m, j, l] = dbar_m h_{j lbar}
    dbHinv = -np.einsum("...lp,...mpq,...qk->...mlk", Hinv, dbH, Hinv)
    dG = (np.einsum("...mijl,...lk->...mkij", jet.ddH, Hinv)
          + np.einsum("...ijl,...mlk->...mkij", jet.dH, dHinv))
    dbG = (np.einsum("...imjl,...lk->...mkij", jet.dbdH, Hinv)
           + np.einsum("...ijl,...mlk->...mkij", jet.dH, dbHinv))
    return dG, dbG


def torsion_jet(target: HermitianTarget, chart: int, z) -> TorsionJet:
    """Torsion with its covariant derivatives along ``omega^e`` and ``conj(omega^e)``."""
    z = np.asarray(z, dtype=complex)
    jet = target.metric_jet(z, chart)
    _, P, Q, _, _ = unitary_frame(jet)
    Hinv = np.linalg.inv(jet.H)
    G = _gamma(jet, Hinv)
    dG, dbG = _gamma_derivatives(jet, Hinv)
    T = _coordinate_torsion(G)
    dT = dG - np.swapaxes(dG, -1, -2)
    dbT = dbG - np.swapaxes(dbG, -1, -2)
    # covariant derivative along d_m; the Chern connection has no d_mbar component
    nT = (dT
          + np.einsum("...kmp,...pij->...mkij", G, T)
          - np.einsum("...pmi,...kpj->...mkij", G, T)
          - np.einsum("...pmj,...kip->...mkij", G, T))
    L = 0.5 * _rotate3(P, Q, T)
    L1 = 0.5 * np.einsum("...ak,...mkij,...ib,...jc,...me->...abce", P, nT, Q, Q, Q, optimize=True)
    L1bar = 0.5 * np.einsum("...ak,...mkij,...ib,...jc,...me->...abce", P, dbT, Q, Q, np.conj(Q), optimize=True)
    return TorsionJet(L, L1, L1bar)


def curvature(target: HermitianTarget, chart: int, z) -> CurvatureTensor:
    """Curvature of the Chern connection split into (2,0), (1,1), (0,2) blocks."""
    z = np.asarray(z, dtype=complex)
    jet = target.metric_jet(z, chart)
    _, P, Q, _, _ = unitary_frame(jet)
    Hinv = np.linalg.inv(jet.H)
    G = _gamma(jet, Hinv)
    dG, dbG = _gamma_derivatives(jet, Hinv)
    # (2,0): A[k, j, m, i] dz^m ^ dz^i with A = d_m Gamma^k_{ij} + Gamma^k_{mp} Gamma^p_{ij}
    A = np.einsum("...mkij->...kjmi", dG) + np.einsum("...kmp,...pij->...kjmi", G, G)
    A = 0.5 * (A - np.swapaxes(A, -1, -2))
    R_hol = np.einsum("...ak,...kjmi,...jb,...mc,...id->...abcd", P, A, Q, Q, Q, optimize=True)
    # (1,1): dbar_m Gamma^k_{ij} dzbar^m ^ dz^i = -dbar_m Gamma^k_{ij} dz^i ^ dzbar^m
    R_mixed = -np.einsum("...ak,...mkij,...jb,...ic,...md->...abcd", P, dbG, Q, Q, np.conj(Q), optimize=True)
    return CurvatureTensor(R_hol, R_mixed, np.zeros_like(R_hol))


def metric_compatibility_residual(target: HermitianTarget, chart: int, z) -> np.ndarray:
    """max |nabla h| in the coordinate frame, per point."""
    z = np.asarray(z, dtype=complex)
    jet = target.metric_jet(z, chart)
    G = _gamma(jet, np.linalg.inv(jet.H))
    # nabla_i h_{j lbar} = d_i h_{j lbar} - Gamma^p_{ij} h_{p lbar}
    res = jet.dH - np.einsum("...pij,...pl->...ijl", G, jet.H)
    # nabla_ibar h_{j lbar} = dbar_i h_{j lbar} - conj(Gamma^q_{il}) h_{j qbar}
    dbH = np.conj(np.swapaxes(jet.dH, -1, -2))
    resb = dbH - np.einsum("...qil,...jq->...ijl", np.conj(G), jet.H)
    return np.maximum(np.abs(res).max(axis=(-1, -2, -3)), np.abs(resb).max(axis=(-1, -2, -3)))


def jet_self_test(target: HermitianTarget, step: float = 1e-4, seed: int = 0) -> float:
    """Max discrepancy between closed-form metric jets and centered differences."""
    rng = np.random.default_rng(seed)
    z = 0.5 + 0.4 * (rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2)))
    return jet_fd_error(target, z, step)


def jet_fd_error(target: HermitianTarget, z, step: float, chart: int = 0) -> float:
    z = np.asarray(z, dtype=complex)
    jet = target.metric_jet(z, chart)
    err = 0.0
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1.0
        Hx = (target.metric(z + step * e, chart) - target.metric(z - step * e, chart)) / (2 * step)
        Hy = (target.metric(z + 1j * step * e, chart) - target.metric(z - 1j * step * e, chart)) / (2 * step)
        err = max(err, np.abs(0.5 * (Hx - 1j * Hy) - jet.dH[..., k, :, :]).max())
        dHx = (target.metric_jet(z + step * e, chart).dH - target.metric_jet(z - step * e, chart).dH) / (2 * step)
        dHy = (target.metric_jet(z + 1j * step * e, chart).dH
               - target.metric_jet(z - 1j * step * e, chart).dH) / (2 * step)
        dd = 0.5 * (dHx - 1j * dHy)  # d_k applied to d_i H: [i, j, l]
        dbd = 0.5 * (dHx + 1j * dHy)
        err = max(err, np.abs(dd - jet.ddH[..., :, k, :, :]).max())
        err = max(err, np.abs(dbd - jet.dbdH[..., :, k, :, :]).max())
    return float(err)
