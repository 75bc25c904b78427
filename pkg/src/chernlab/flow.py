"""Relaxation of maps towards Chern-harmonic maps, and concentrating map families.

The Chern-harmonic equation is not known to be the Euler-Lagrange equation of
a functional, so the evolution ``df/dt = tau(f)`` is a pseudo-gradient flow: on
Kähler targets it is the harmonic map heat flow, on the Hopf surface energy is
only monitored.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .domains import DomainChart
from .errors import ChartTear, ConfigError, Diverged, OutOfChart, StepTooLarge
from .pullback import MapState, max_residual, pullback
from .targets import HermitianTarget

log = logging.getLogger(__name__)

BLOWUP = 1e6
SCHEMES = ("Explicit", "SemiImplicit")


@dataclass
class FlowConfig:
    """Time stepping parameters.

    ``dt=None`` picks ``cfl_safety * h^2 / 4 * min(lambda^2)`` for the explicit
    scheme and ``10 * size^2`` for the semi-implicit one, which then behaves
    like a Picard iteration on the flat Laplacian. Two-patch spheres use a
    smaller default since the patches are coupled only between steps.
    """

    dt: float | None = None
    scheme: str = "SemiImplicit"
    tol: float = 1e-8
    max_steps: int = 5000
    cfl_safety: float = 0.25

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if not 0 < self.cfl_safety < 1:
            raise ConfigError("cfl_safety must lie in (0, 1)")

    def time_step(self, domain: DomainChart) -> float:
        if self.dt is not None:
            return self.dt
        if self.scheme == "Explicit":
            return self.cfl_safety * domain.h**2 / 4 * float(np.min(domain.lam) ** 2)
        if domain.kind == "SpherePair":
            # the two patches only talk through the overlap after each step
            return 0.25 * domain.size**2
        return 10.0 * domain.size**2


@dataclass
class SolveReport:
    residual_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    converged: bool = False
    steps_taken: int = 0
    dt: float = 0.0
    scheme: str = ""
    energy_increases: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


# ---------------------------------------------------------------------------
# preconditioners

class _FlatPreconditioner:
    """Solves ``(I - dt Lap) u = b`` with the flat Laplacian of the chart.

    Spectral on the torus. On square patches the Laplacian is the tensor
    square of the grid's own second-difference stencil restricted to the
    interior, with ``u = 0`` on the boundary frame, and is inverted by
    diagonalizing the 1-D block once.
    """

    def __init__(self, domain: DomainChart, dt: float):
        self.domain = domain
        N, h = domain.N, domain.h
        if domain.kind == "PeriodicTorus":
            k = 2 * np.pi * np.fft.fftfreq(N, d=h)
            self.denom = 1.0 + dt * (k[:, None] ** 2 + k[None, :] ** 2)
        else:
            D = domain._D
            mu, V = np.linalg.eig((D @ D)[1:-1, 1:-1])
            self.V, self.Vinv = V, np.linalg.inv(V)
            self.denom = 1.0 - dt * (mu[:, None] + mu[None, :])

    def solve(self, b):
        d = self.domain
        shp = self.denom.shape + (1,) * (b.ndim - 3)
        if d.kind == "PeriodicTorus":
            return np.fft.ifft2(np.fft.fft2(b, axes=(1, 2)) / self.denom.reshape(shp), axes=(1, 2))
        out = np.zeros_like(b)
        t = np.einsum("ij,pjk...->pik...", self.Vinv, b[:, 1:-1, 1:-1])
        t = np.einsum("pik...,jk->pij...", t, self.Vinv)
        t = t / self.denom.reshape(shp)
        t = np.einsum("ij,pjk...->pik...", self.V, t)
        out[:, 1:-1, 1:-1] = np.einsum("pik...,jk->pij...", t, self.V)
        return out


# ---------------------------------------------------------------------------
# two-patch sphere bookkeeping

def _sync_sphere(ms: MapState) -> MapState:
    """Overwrite the part of each patch outside |x| <= 1 from the other patch."""
    d = ms.domain
    pts = ms.points.copy()
    ids = ms.chart_ids.copy()
    for p in (0, 1):
        q = 1 - p
        dest = np.abs(d.x[p]) > 1.0
        with np.errstate(divide="ignore"):
            y = 1.0 / d.x[p][dest]
        # nearest source grid point decides the chart used for interpolation
        ii = np.clip(np.rint((y.real + 2.0) / d.h).astype(int), 0, d.N - 1)
        jj = np.clip(np.rint((y.imag + 2.0) / d.h).astype(int), 0, d.N - 1)
        src_ids = ms.chart_ids[q][ii, jj]
        new_pts = np.empty((y.size, 2), dtype=complex)
        for c in np.unique(src_ids):
            view, _ = ms.target.chart_view(ms.points[q], ms.chart_ids[q], int(c))
            use = src_ids == c
            for comp in range(2):
                re = RectBivariateSpline(d.axis, d.axis, view[..., comp].real, kx=3, ky=3)
                im = RectBivariateSpline(d.axis, d.axis, view[..., comp].imag, kx=3, ky=3)
                new_pts[use, comp] = re.ev(y[use].real, y[use].imag) + 1j * im.ev(y[use].real, y[use].imag)
        pts[p][dest] = new_pts
        ids[p][dest] = src_ids
    return MapState(d, ms.target, pts, ids).rechart()


# ---------------------------------------------------------------------------

def tension_field(ms: MapState) -> np.ndarray:
    """Chern tension ``2 Q (a_{1 1bar} + a_{1bar 1})`` in target coordinates."""
    return pullback(ms).tension


def _fixed_mask(domain: DomainChart) -> np.ndarray:
    if domain.kind == "Disk":
        return domain.boundary_mask
    return np.zeros(domain.shape, dtype=bool)


def flow_to_harmonic(ms: MapState, config: FlowConfig | None = None,
                     callback: Callable | None = None):
    """Evolve ``ms`` until ``max|r| <= tol`` on the owned points.

    Returns
    -------
    (MapState, SolveReport)
    """
    cfg = config or FlowConfig()
    d = ms.domain
    dt = cfg.time_step(d)
    report = SolveReport(dt=dt, scheme=cfg.scheme)
    pre = _FlatPreconditioner(d, dt) if cfg.scheme == "SemiImplicit" else None
    fixed = _fixed_mask(d)[..., None]
    rising = 0
    kahler = ms.target.is_kahler
    for step in range(cfg.max_steps + 1):
        try:
            pb = pullback(ms)
            r = max_residual(ms, pb)
        except (ChartTear, OutOfChart) as exc:
            if step == 0:
                raise
            # an unstable step throws the image across chart boundaries
            raise Diverged(f"step {step}: {exc}") from exc
        e = d.integrate(pb.energy_density)
        if not np.isfinite(r) or not np.isfinite(e):
            raise Diverged(f"non-finite residual at step {step}")
        report.residual_history.append(r)
        report.energy_history.append(e)
        if step > 0 and e > report.energy_history[-2] * (1 + 1e-12) + 1e-14:
            report.energy_increases += 1
            rising += 1
            if kahler:
                log.debug("energy rose at step %d: %.3e", step, e - report.energy_history[-2])
        else:
            rising = 0
        if cfg.scheme == "Explicit" and rising >= 10:
            raise StepTooLarge(f"energy increased for 10 consecutive steps (dt={dt:.3e})")
        if r <= cfg.tol:
            report.converged = True
            break
        if step == cfg.max_steps:
            break
        tau = pb.tension
        if np.max(np.abs(tau)) > BLOWUP:
            raise Diverged(f"max|tau| exceeded {BLOWUP:g} at step {step}")
        if pre is None:
            delta = dt * tau
        else:
            delta = pre.solve(dt * (d.lam**2)[..., None] * tau)
        delta = np.where(fixed, 0.0, delta)
        pts = ms.points + delta
        if not np.all(np.isfinite(pts)) or np.max(np.abs(pts)) > BLOWUP:
            raise Diverged(f"map left every chart at step {step}")
        try:
            ms = MapState(d, ms.target, pts, ms.chart_ids).rechart()
        except (ChartTear, OutOfChart) as exc:
            raise Diverged(f"step {step}: {exc}") from exc
        if d.kind == "SpherePair":
            ms = _sync_sphere(ms)
        report.steps_taken = step + 1
        if callback is not None:
            callback(step, ms, r, e)
    return ms, report


# ---------------------------------------------------------------------------
# families and probes

def sphere_map(fz: Callable) -> Callable:
    """Wrap a map of the Riemann sphere coordinate ``z`` as a two-patch evaluator."""

    def fn(x, patch):
        x = np.asarray(x, dtype=complex)
        if patch == 0:
            return fz(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(x == 0, np.inf + 0j, 1.0 / np.where(x == 0, 1.0, x))
        return fz(z)
    return fn


def _pair(u, w):
    return np.stack(np.broadcast_arrays(u, w), axis=-1)


def family_function(kind: str, k: float, base: Callable | None = None, center: complex = 0.5,
                    offset: float = 0.25) -> Callable:
    """Closed form ``z -> f_k(z)`` (chart-0 coordinates of the product of spheres)."""
    if kind == "Constant":
        return lambda z: _pair(np.full(np.shape(z), 0.3 + 0.1j), np.full(np.shape(z), -0.2j))
    if kind == "FSProductBubble":
        return lambda z: _pair(z, k * z)
    if kind == "MoebiusComposed":
        g = base or (lambda z: _pair(z, z))
        return lambda z: g(k * z)
    if kind == "TwoCenter":
        return lambda z: _pair(k * (z - center), k * z)
    if kind == "TwoScale":
        return lambda z: _pair(k * k * (z - offset / k), k * z)
    raise ConfigError(f"unknown family {kind!r}")


FAMILIES = ("Constant", "FSProductBubble", "MoebiusComposed", "TwoCenter", "TwoScale")


def concentrating_family(kind: str, k_values: Sequence[float], N: int = 256,
                         target: HermitianTarget | None = None, domain: DomainChart | None = None,
                         **kw) -> list[MapState]:
    """Holomorphic maps ``S^2 -> CP^1 x CP^1`` concentrating as ``k`` grows.

    * ``Constant``: a fixed point, for checks that must find nothing.
    * ``FSProductBubble``: ``(z, k z)``.
    * ``MoebiusComposed``: ``g(k z)`` for a fixed ``g`` (default ``(z, z)``).
    * ``TwoCenter``: ``(k (z - c), k z)``, bubbles at 0 and ``c``.
    * ``TwoScale``: ``(k^2 (z - a/k), k z)``, a bubble at scale ``1/k`` with a
      second one on top of it at scale ``1/k^2``.
    """
    from .targets import FSProduct

    target = target or FSProduct()
    domain = domain or DomainChart("SpherePair", N)
    out = []
    for k in k_values:
        fz = family_function(kind, float(k), **kw)
        ms = MapState.from_function(domain, target, sphere_map(fz))
        ms.family = (kind, float(k))
        ms.fz = fz
        out.append(ms)
    return out


def image_diameter(ms: MapState) -> float:
    """Coordinate diameter of the image scaled by the metric at its centre (small images)."""
    pts, _ = ms.in_chart(int(ms.chart_ids.flat[0]))
    own = ms.domain.owned_mask
    z = pts[own]
    c = z.mean(axis=0)
    H = ms.target.metric(c, int(ms.chart_ids.flat[0]))
    scale = np.sqrt(np.linalg.eigvalsh(H).max())
    return float(2 * np.max(np.linalg.norm(z - c, axis=-1)) * scale)


def _base_point(target):
    return {"FlatC2": np.array([0.0, 0.0]), "FSProduct": np.array([0.1, -0.2j]),
            "Hopf": np.array([1.2, 0.4 + 0.3j])}[target.id]


def _bump_profile(domain: DomainChart):
    if domain.kind == "PeriodicTorus":
        t = 2 * np.pi * domain.x / domain.size
        return np.stack([np.cos(t.real) + 0.5j * np.sin(t.imag), np.sin(t.real + t.imag)], axis=-1)
    p = domain.sphere_points()
    return np.stack([p[..., 0] + 0.5j * p[..., 1], p[..., 2] * p[..., 0] + 1j * p[..., 1]], axis=-1)


@dataclass
class GapProbe:
    threshold: float
    energies: list
    collapsed: list
    final_diameters: list
    reports: list = field(repr=False, default_factory=list)


def energy_gap_probe(domain: DomainChart, target: HermitianTarget, energy_budget: float,
                     amplitudes: Sequence[float] | None = None, config: FlowConfig | None = None,
                     collapse_diameter: float = 1e-3) -> GapProbe:
    """Empirical lower bound for the energy below which harmonic maps are constant.

    Flows a ladder of perturbations of a constant map with initial energies up
    to ``energy_budget`` and reports the largest initial energy such that
    every run at or below it collapsed to a point.
    """
    if domain.kind not in ("PeriodicTorus", "SpherePair"):
        raise ConfigError("energy_gap_probe needs a closed domain")
    cfg = config or FlowConfig(tol=1e-9, max_steps=400)
    z0 = _base_point(target)
    prof = _bump_profile(domain)
    if amplitudes is None:
        amplitudes = np.geomspace(1e-3, 1.0, 12)
    energies, collapsed, diams, reports = [], [], [], []
    for a in amplitudes:
        ms = MapState(domain, target, z0 + a * prof, 0).rechart()
        e0 = domain.integrate(pullback(ms).energy_density)
        if e0 > energy_budget:
            break
        try:
            out, rep = flow_to_harmonic(ms, cfg)
            diam = image_diameter(out)
        except (Diverged, StepTooLarge) as exc:
            log.info("probe amplitude %.3g failed: %s", a, exc)
            rep, diam = None, np.inf
        energies.append(e0)
        collapsed.append(bool(diam < collapse_diameter))
        diams.append(diam)
        reports.append(rep)
    thr = 0.0
    for e, c in zip(energies, collapsed):
        if not c:
            break
        thr = e
    return GapProbe(thr, energies, collapsed, diams, reports)


def perturbed(ms: MapState, amplitude: float, seed: int = 0) -> MapState:
    """Add a smooth random perturbation vanishing on a Dirichlet boundary."""
    rng = np.random.default_rng(seed)
    d = ms.domain
    c = rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2))
    if d.kind == "Disk":
        u = (d.x.real + d.size) * (d.size - d.x.real) * (d.x.imag + d.size) * (d.size - d.x.imag) / d.size**4
        bump = u[..., None] * (c[0, 0] + c[0, 1] * d.x[..., None] + c[1, 0] * np.conj(d.x)[..., None])
    else:
        bump = _bump_profile(d) * c[0, 0]
    return MapState(d, ms.target, ms.points + amplitude * bump, ms.chart_ids).rechart()
