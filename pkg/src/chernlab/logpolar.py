"""Energy integrals of closed-form maps over disks and annuli.

A disk ``B_r(c)`` is parametrised by ``x = c + exp(s + i t)``.  The
substitution is conformal, so the energy is the integral of the cylinder
density ``(|g_s|^2 + |g_t|^2) / 2`` over ``s < log r``, whatever the domain
metric.  Integration is adaptive on a rectangle of ``(s, t)`` cells, each with
a tensor Gauss-Legendre rule; derivatives of ``g`` are Richardson-extrapolated
central differences in the cell's own units, so features far below the scale
of any fixed grid are resolved.

Target points are moved to per-point charts before differentiation, which keeps
poles of a factor coordinate harmless.
"""
from __future__ import annotations

import numpy as np

from .targets import HermitianTarget

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(6)
# Depth of the log-polar rectangle below log(r); the inner disk left over has
# radius r * exp(-DEPTH) and is approximated by a one-point rule.
DEPTH = 18.0


def _norm2(target: HermitianTarget, z, ids, v):
    out = np.zeros(z.shape[:-1])
    for c in np.unique(ids):
        sel = ids == c
        H = target.metric(z[sel], int(c))
        out[sel] = np.einsum("...j,...jl,...l->...", v[sel], H, np.conj(v[sel])).real
    return out


def _finite(z):
    return np.all(np.isfinite(z), axis=-1)


def cylinder_density(fn, target: HermitianTarget, center, s, t, step):
    """Energy density of ``g(s, t) = fn(center + exp(s + i t))`` per unit ``ds dt``.

    Also returns the point values (per-point charts) and the chart ids.
    """
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    step = np.broadcast_to(step, s.shape)

    def g(ds, dt):
        with np.errstate(all="ignore"):
            return fn(center + np.exp(s + ds + 1j * (t + dt)))

    with np.errstate(all="ignore"):
        z, ids = target.pointwise_charts(g(0.0, 0.0))

    def d(axis):
        def diff(h):
            a = (h, 0.0) if axis == 0 else (0.0, h)
            b = (-h, 0.0) if axis == 0 else (0.0, -h)
            hp = target.express(g(*a), ids)
            hm = target.express(g(*b), ids)
            return (hp - hm) / (2 * h[..., None])
        return (4 * diff(step / 2) - diff(step)) / 3

    with np.errstate(all="ignore"):
        gs, gt = d(0), d(1)
    ok = _finite(z) & _finite(gs) & _finite(gt)
    dens = np.zeros(s.shape)
    if np.any(ok):
        dens[ok] = 0.5 * (_norm2(target, z[ok], ids[ok], gs[ok]) + _norm2(target, z[ok], ids[ok], gt[ok]))
    return dens, z, ids


def _cells_nodes(cells):
    s0, s1, t0, t1 = cells.T
    a = 0.5 * (_NODES + 1)
    S = s0[:, None, None] + (s1 - s0)[:, None, None] * a[None, :, None]
    T = t0[:, None, None] + (t1 - t0)[:, None, None] * a[None, None, :]
    W = (0.25 * (s1 - s0) * (t1 - t0))[:, None, None] * (_WEIGHTS[:, None] * _WEIGHTS[None, :])
    return S, T, W


def _split(cells):
    s0, s1, t0, t1 = cells.T
    sm, tm = 0.5 * (s0 + s1), 0.5 * (t0 + t1)
    kids = np.stack([np.stack([s0, sm, t0, tm], 1), np.stack([sm, s1, t0, tm], 1),
                     np.stack([s0, sm, tm, t1], 1), np.stack([sm, s1, tm, t1], 1)], axis=1)
    return kids.reshape(-1, 4)


def _cell_integrals(fn, target, center, cells, weight):
    S, T, W = _cells_nodes(cells)
    step = 1e-2 * np.minimum(cells[:, 1] - cells[:, 0], cells[:, 3] - cells[:, 2])
    dens, _, _ = cylinder_density(fn, target, center, S, T, step[:, None, None])
    vals = [np.sum(dens * W, axis=(1, 2))]
    if weight is not None:
        x = center + np.exp(S + 1j * T)
        vals.append(np.sum(weight(x) * dens * W, axis=(1, 2)))
    return np.stack(vals, axis=-1)


def annulus_integral(fn, target: HermitianTarget, center, r_in: float, r_out: float, weight=None,
                     rtol: float = 1e-7, atol: float = 1e-12, s_cell: float = 0.5, n_t: int = 16,
                     max_level: int = 8, max_cells: int = 100_000):
    """Energy (and optionally ``int weight(x) e dA``) over ``r_in < |x - center| < r_out``.

    ``r_in = 0`` integrates the full disk.  A cell is accepted when its
    estimate and the sum over its four children agree within its area share of
    ``max(rtol * |total|, atol)``; refinement stops after ``max_level`` halvings
    or once ``max_cells`` cells would be active.

    Returns
    -------
    values : ndarray
        ``[energy]`` or ``[energy, weighted]``.
    refined_out : bool
        True if some cells hit ``max_level`` without meeting the tolerance.
    """
    hi = np.log(r_out)
    lo = hi - DEPTH if r_in <= 0 else np.log(r_in)
    if lo >= hi:
        return np.zeros(1 if weight is None else 2), False
    ns = max(int(np.ceil((hi - lo) / s_cell)), 1)
    se = np.linspace(lo, hi, ns + 1)
    te = np.linspace(0.0, 2 * np.pi, n_t + 1)
    cells = np.array([[se[i], se[i + 1], te[j], te[j + 1]] for i in range(ns) for j in range(n_t)])
    est = _cell_integrals(fn, target, center, cells, weight)
    area_total = (hi - lo) * 2 * np.pi
    scale = abs(est[:, 0].sum()) + 1e-300
    total = np.zeros(est.shape[1], dtype=complex)
    capped = False
    for level in range(max_level + 1):
        if len(cells) == 0:
            break
        kids = _split(cells)
        kest = _cell_integrals(fn, target, center, kids, weight)
        ksum = kest.reshape(len(cells), 4, -1).sum(axis=1)
        err = np.abs(ksum[:, 0] - est[:, 0])
        area = (cells[:, 1] - cells[:, 0]) * (cells[:, 3] - cells[:, 2])
        scale = max(scale, abs(total[0] + ksum[:, 0].sum()))
        done = err <= max(rtol * scale, atol) * area / area_total
        if level == max_level or 4 * np.count_nonzero(~done) > max_cells:
            capped = bool(np.any(~done))
            done[:] = True
        total += ksum[done].sum(axis=0)
        keep = np.repeat(~done, 4)
        cells, est = kids[keep], kest[keep]
    if r_in <= 0:
        # one-point rule on the leftover inner disk
        dens, _, _ = cylinder_density(fn, target, center, np.array([lo]), np.array([0.0]), 1e-2)
        inner = dens[0] * np.pi
        total[0] += inner
        if weight is not None:
            total[1] += weight(np.array([center]))[0] * inner
    out = total if weight is not None else total[:1]
    return (out.real if weight is None else out), capped


def disk_energy(fn, target, center, r, **kw) -> float:
    """Energy of ``fn`` over the coordinate disk ``|x - center| < r``."""
    return float(annulus_integral(fn, target, center, 0.0, r, **kw)[0][0])


def loop_length(fn, target: HermitianTarget, center, radius: float, n: int = 256) -> float:
    """Length of the image of the circle ``|x - center| = radius`` (periodic trapezoid rule)."""
    t = 2 * np.pi * np.arange(n) / n
    s = np.full(n, np.log(radius))
    step = np.full(n, 1e-2 * 2 * np.pi / n)

    def g(dt):
        with np.errstate(all="ignore"):
            return fn(center + np.exp(s + 1j * (t + dt)))

    with np.errstate(all="ignore"):
        z, ids = target.pointwise_charts(g(0.0))

        def diff(h):
            return (target.express(g(h), ids) - target.express(g(-h), ids)) / (2 * h[:, None])
        gt = (4 * diff(step / 2) - diff(step)) / 3
    ok = _finite(z) & _finite(gt)
    speed = np.zeros(n)
    speed[ok] = np.sqrt(_norm2(target, z[ok], ids[ok], gt[ok]))
    return float(speed.sum() * 2 * np.pi / n)


def flat_density(fn, target: HermitianTarget, x, step: float) -> np.ndarray:
    """Energy density ``(|f_u|^2 + |f_v|^2) / 2`` with respect to ``du dv`` at points ``x``."""
    x = np.asarray(x, dtype=complex)
    with np.errstate(all="ignore"):
        z, ids = target.pointwise_charts(fn(x))

        def d(e):
            def diff(h):
                return (target.express(fn(x + h * e), ids) - target.express(fn(x - h * e), ids)) / (2 * h)
            return (4 * diff(step / 2) - diff(step)) / 3
        fu, fv = d(1.0), d(1j)
    ok = _finite(z) & _finite(fu) & _finite(fv)
    out = np.zeros(x.shape)
    if np.any(ok):
        out[ok] = 0.5 * (_norm2(target, z[ok], ids[ok], fu[ok]) + _norm2(target, z[ok], ids[ok], fv[ok]))
    return out


def disk_profile(fn, target: HermitianTarget, center, radii, **kw) -> np.ndarray:
    """Energies ``E(B_r(center))`` for an increasing sequence of radii."""
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    edges = np.concatenate([[0.0], radii])
    parts = [annulus_integral(fn, target, center, a, b, **kw)[0][0] for a, b in zip(edges[:-1], edges[1:])]
    return np.cumsum(parts)


def circle_values(fn, target: HermitianTarget, center, r_in: float, r_out: float, n_r: int = 16,
                  n_t: int = 64):
    """Target values on a log-polar sample of an annulus, in per-point charts."""
    s = np.linspace(np.log(r_in), np.log(r_out), n_r)
    t = 2 * np.pi * np.arange(n_t) / n_t
    S, T = np.meshgrid(s, t, indexing="ij")
    with np.errstate(all="ignore"):
        return target.pointwise_charts(fn(center + np.exp(S + 1j * T)).reshape(-1, 2))
