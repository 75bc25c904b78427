"""Discretized conformal charts of Riemann surfaces.

A :class:`DomainChart` holds one or more square coordinate patches. Grid fields
are arrays whose first three axes are ``(patch, ix, iy)``; any trailing axes are
treated as components and carried through differentiation and quadrature.
The background metric on every patch is ``lambda^2 |dx|^2``.
"""
from __future__ import annotations

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import (ConfigError, EmptyRegion, OpenCurve, RadiusTooLarge,
                     ResolutionTooSmall)

MIN_N = 8
BACKGROUNDS = ("flat", "sphere", "hyperbolic")

# 4th-order first-derivative stencils (times 1/(12 h))
_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])


def stencil_matrix(n: int, h: float) -> np.ndarray:
    """Dense 4th-order first-derivative matrix with one-sided closures."""
    if n < MIN_N:
        raise ResolutionTooSmall(f"N={n} < {MIN_N}")
    D = np.zeros((n, n))
    for i in range(2, n - 2):
        D[i, i - 2:i + 3] = _INTERIOR
    D[0, 0:5] = _EDGE0
    D[1, 0:5] = _EDGE1
    D[n - 1, n - 5:] = -_EDGE0[::-1]
    D[n - 2, n - 5:] = -_EDGE1[::-1]
    return D / (12.0 * h)


def _apply(D, f, axis):
    return np.moveaxis(np.tensordot(D, f, axes=([1], [axis])), 0, axis)


def background_lambda(kind: str, x):
    s = np.abs(x) ** 2
    if kind == "flat":
        return np.ones_like(s)
    if kind == "sphere":
        return 2.0 / (1.0 + s)
    if kind == "hyperbolic":
        return 2.0 / (1.0 - s)
    raise ConfigError(f"unknown background {kind!r}")


def background_dloglam(kind: str, x):
    """Closed-form ``d log lambda / dx``."""
    xb = np.conj(x)
    if kind == "flat":
        return np.zeros_like(x, dtype=complex)
    if kind == "sphere":
        return -xb / (1.0 + np.abs(x) ** 2)
    if kind == "hyperbolic":
        return xb / (1.0 - np.abs(x) ** 2)
    raise ConfigError(f"unknown background {kind!r}")


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def sphere_weight(x):
    """Partition-of-unity weight of a stereographic patch: 1 for |x| <= 1/2, 0 for |x| >= 2.

    The weights of the two patches sum to one because ``t -> 1 - t`` under ``x -> 1/x``.
    """
    r = np.abs(x)
    with np.errstate(divide="ignore"):
        t = (np.log(np.maximum(r, 1e-300)) - np.log(0.5)) / np.log(4.0)
    t = np.clip(t, 0.0, 1.0)
    a, b = _bump(1.0 - t), _bump(t)
    return a / (a + b)


def sphere_point(x):
    """Unit-sphere embedding of a stereographic coordinate (``x = 0`` is the north pole)."""
    s = np.abs(x) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.stack([2 * x.real, 2 * x.imag, 1.0 - s], axis=-1) / (1.0 + s)[..., None]
    p = np.where(np.isinf(s)[..., None], np.array([0.0, 0.0, -1.0]), p)
    return p


class DomainChart:
    """Conformal grid chart.

    Parameters
    ----------
    kind : {"PeriodicTorus", "Disk", "SpherePair"}
    N : int
        Grid points per side of each patch.
    size : float
        Side length of the torus, or half-width ``R`` of the square ``[-R, R]^2``
        for a disk chart. Sphere patches always cover ``[-2, 2]^2``.
    background : {"flat", "sphere", "hyperbolic"}
        Conformal factor of a disk chart.
    """

    def __init__(self, kind: str, N: int, size: float = 1.0, background: str = "flat"):
        if N < MIN_N:
            raise ResolutionTooSmall(f"N={N} < {MIN_N}")
        self.kind = kind
        self.N = int(N)
        if kind == "PeriodicTorus":
            self.background = "flat"
            self.size = float(size)
            self.h = self.size / N
            ax = np.arange(N) * self.h
            cell = np.full(N, self.h)
        elif kind == "Disk":
            if background not in BACKGROUNDS:
                raise ConfigError(f"unknown background {background!r}")
            if background == "hyperbolic" and size * np.sqrt(2) >= 0.999:
                raise ConfigError("hyperbolic disk chart needs sqrt(2) R < 1")
            self.background = background
            self.size = float(size)
            ax = np.linspace(-size, size, N)
            self.h = ax[1] - ax[0]
            cell = np.full(N, self.h)
            cell[[0, -1]] *= 0.5
        elif kind == "SpherePair":
            self.background = "sphere"
            self.size = 2.0
            ax = np.linspace(-2.0, 2.0, N)
            self.h = ax[1] - ax[0]
            cell = np.full(N, self.h)
            cell[[0, -1]] *= 0.5
        else:
            raise ConfigError(f"unknown domain kind {kind!r}")
        self.axis = ax
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        xp = X + 1j * Y
        self.n_patches = 2 if kind == "SpherePair" else 1
        self.x = np.broadcast_to(xp, (self.n_patches, N, N)).copy()
        self.lam = background_lambda(self.background, self.x)
        self.dloglam = background_dloglam(self.background, self.x)
        self.cell = np.broadcast_to(np.outer(cell, cell), self.x.shape).copy()
        if kind == "SpherePair":
            self.weight = sphere_weight(self.x)
        else:
            self.weight = np.ones(self.x.shape)
        self.boundary_mask = np.zeros(self.x.shape, dtype=bool)
        if kind == "Disk":
            self.boundary_mask[:, [0, -1], :] = True
            self.boundary_mask[:, :, [0, -1]] = True
        if kind == "PeriodicTorus":
            k = 2j * np.pi * np.fft.fftfreq(N, d=self.h)
            if N % 2 == 0:
                k[N // 2] = 0.0
            self._k = k
        else:
            self._D = stencil_matrix(N, self.h)
        self.K = self.background_curvature()

    # ------------------------------------------------------------------
    def __repr__(self):
        return f"DomainChart({self.kind!r}, N={self.N}, size={self.size}, background={self.background!r})"

    @property
    def shape(self):
        return self.x.shape

    def background_curvature(self) -> np.ndarray:
        val = {"flat": 0.0, "sphere": 1.0, "hyperbolic": -1.0}[self.background]
        return np.full(self.x.shape, val)

    @property
    def owned_mask(self) -> np.ndarray:
        """Points where this patch is the authoritative representative."""
        if self.kind == "SpherePair":
            return np.abs(self.x) <= 1.0
        if self.kind == "Disk":
            m = np.ones(self.x.shape, dtype=bool)
            m[:, :2, :] = m[:, -2:, :] = False
            m[:, :, :2] = m[:, :, -2:] = False
            return m
        return np.ones(self.x.shape, dtype=bool)

    # ------------------------------------------------------------------
    def d_dx_dy(self, f):
        """Real partial derivatives along the two grid axes."""
        f = np.asarray(f)
        if self.kind == "PeriodicTorus":
            shp = (1, self.N, 1) + (1,) * (f.ndim - 3)
            F = np.fft.fft(f, axis=1)
            fx = np.fft.ifft(F * self._k.reshape(shp), axis=1)
            F = np.fft.fft(f, axis=2)
            fy = np.fft.ifft(F * self._k.reshape((1, 1, self.N) + (1,) * (f.ndim - 3)), axis=2)
            if not np.iscomplexobj(f):
                fx, fy = fx.real, fy.real
            return fx, fy
        return _apply(self._D, f, 1), _apply(self._D, f, 2)

    def d_complex(self, f):
        """Wirtinger derivatives ``(df/dx, df/dxbar)`` as coefficients of ``dx`` and ``dxbar``."""
        fx, fy = self.d_dx_dy(f)
        return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)

    def gauss_curvature(self) -> np.ndarray:
        """``-(4 / lambda^2) d dbar log lambda`` from grid differentiation."""
        ll = np.log(self.lam)
        dl, _ = self.d_complex(ll)
        _, ddb = self.d_complex(dl)
        return (-4.0 / self.lam**2 * ddb).real

    def expand(self, a, f):
        """Broadcast a grid scalar ``a`` against a field with trailing component axes."""
        return a.reshape(a.shape + (1,) * (np.ndim(f) - 3))

    # ------------------------------------------------------------------
    def integrate(self, field, region_mask=None) -> float:
        """Integral of a real field against the area form ``lambda^2 dx dy``."""
        w = self.lam**2 * self.weight * self.cell
        if region_mask is not None:
            m = np.asarray(region_mask, dtype=float)
            if not np.any(m * self.weight > 0):
                raise EmptyRegion("integration region contains no grid points")
            w = w * m
        field = np.asarray(field)
        if np.iscomplexobj(field):
            field = field.real
        return float(np.sum(field * self.expand(w, field)))

    def area(self, region_mask=None) -> float:
        return self.integrate(np.ones(self.shape), region_mask)

    # ------------------------------------------------------------------
    def distance(self, center, patch: int = 0) -> np.ndarray:
        """Geodesic distance of every grid point from ``center`` (given in patch coordinates)."""
        if self.background == "sphere" and self.kind != "PeriodicTorus":
            c = complex(center) if np.isfinite(center) else np.inf
            q = sphere_point(np.array(c if patch == 0 else (np.inf if c == 0 else 1.0 / c)))
            return np.arccos(np.clip(self.sphere_points() @ q, -1.0, 1.0))
        return self.point_distance(center, self.x, patch)

    def point_distance(self, center, x, patch: int = 0) -> np.ndarray:
        """Geodesic distance between ``center`` and points ``x``, both in ``patch`` coordinates."""
        x = np.asarray(x, dtype=complex)
        c = complex(center) if np.isfinite(center) else np.inf
        if self.kind == "PeriodicTorus":
            d = x - c
            L = self.size
            return np.hypot((d.real + L / 2) % L - L / 2, (d.imag + L / 2) % L - L / 2)
        if self.background == "flat":
            return np.abs(x - c)
        if self.background == "hyperbolic":
            s = np.abs(x) ** 2
            arg = 1.0 + 2 * np.abs(x - c) ** 2 / ((1 - s) * (1 - abs(c) ** 2))
            return np.arccosh(np.maximum(arg, 1.0))
        # the patch-1 inversion is an isometry of the round metric
        num = 2 * np.abs(x - c)
        den = np.sqrt((1 + np.abs(x) ** 2) * (1 + abs(c) ** 2))
        return 2 * np.arcsin(np.clip(num / den / 2, 0.0, 1.0))

    def geodesic_circle(self, center, r: float, n: int = 256, patch: int = 0) -> np.ndarray:
        """Coordinates of ``n`` points on the geodesic circle of radius ``r`` about ``center``."""
        dirs = np.exp(2j * np.pi * np.arange(n) / n)
        if self.kind == "PeriodicTorus" or self.background == "flat":
            return center + r * dirs
        lo, hi = np.zeros(n), np.full(n, 1.0)
        if self.background == "hyperbolic" and self.kind != "PeriodicTorus":
            # the unit circle is at infinite distance
            hi[:] = (1.0 - abs(center)) * (1 - 1e-15)
        # geodesic distance grows monotonically along a coordinate ray
        while np.any(self.point_distance(center, center + hi * dirs, patch) < r):
            hi *= 2
            if hi[0] > 1e6:
                raise RadiusTooLarge(f"no geodesic circle of radius {r} in the chart")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            inside = self.point_distance(center, center + mid * dirs, patch) < r
            lo, hi = np.where(inside, mid, lo), np.where(inside, hi, mid)
        return center + 0.5 * (lo + hi) * dirs

    def sphere_points(self) -> np.ndarray:
        """Unit-sphere images of all grid points (patch 1 uses ``x = 1/y``)."""
        xs = self.x.copy()
        if self.n_patches == 2:
            y = xs[1]
            with np.errstate(divide="ignore", invalid="ignore"):
                xs[1] = np.where(y == 0, np.inf, 1.0 / np.where(y == 0, 1.0, y))
        return sphere_point(xs)

    def geodesic_disk_mask(self, center, r: float, patch: int = 0, smooth: bool = True) -> np.ndarray:
        """Fractional indicator of the geodesic disk of radius ``r`` about ``center``.

        With ``smooth=True`` cells straddling the boundary get a linear ramp in
        signed distance over one local grid spacing, which makes the disk area
        converge at second order instead of first.
        """
        if r <= 0:
            raise RadiusTooLarge("radius must be positive")
        self._check_radius(center, r, patch)
        d = self.distance(center, patch)
        if not smooth:
            return (d < r).astype(float)
        hloc = self.h * self.lam
        return np.clip(0.5 - (d - r) / hloc, 0.0, 1.0)

    def _check_radius(self, center, r, patch):
        if self.kind == "PeriodicTorus":
            if r >= self.size / 2:
                raise RadiusTooLarge(f"r={r} exceeds half the torus side")
            return
        if self.kind == "SpherePair":
            if r > np.pi + 1e-12:
                raise RadiusTooLarge(f"r={r} exceeds the sphere diameter pi")
            return
        edge = np.zeros(self.shape, dtype=bool)
        edge[:, [0, -1], :] = edge[:, :, [0, -1]] = True
        if np.min(self.distance(center, patch)[edge]) < r:
            raise RadiusTooLarge(f"geodesic disk of radius {r} leaves the chart")

    # ------------------------------------------------------------------
    def interpolator(self, values, patch: int = 0):
        """Bicubic spline of a complex scalar grid field on one patch, callable on complex points."""
        if self.kind == "PeriodicTorus":
            raise NotImplementedError("use spectral evaluation on the torus")
        re = RectBivariateSpline(self.axis, self.axis, np.real(values[patch]), kx=3, ky=3)
        im = RectBivariateSpline(self.axis, self.axis, np.imag(values[patch]), kx=3, ky=3)

        def ev(x):
            x = np.asarray(x)
            return re.ev(x.real, x.imag) + 1j * im.ev(x.real, x.imag)
        return ev

    def coordinate_disk_mask(self, center, r, patch: int = 0) -> np.ndarray:
        m = np.zeros(self.shape)
        m[patch] = np.abs(self.x[patch] - center) < r
        return m


def make_domain(kind: str, N: int, **kw) -> DomainChart:
    return DomainChart(kind, N, **kw)


def circle_loop(center: complex, radius: float, n: int) -> np.ndarray:
    t = 2 * np.pi * np.arange(n) / n
    return center + radius * np.exp(1j * t)


def boundary_length(image, target, chart: int = 0, loop=None) -> float:
    """Length of a closed image curve in a Hermitian target.

    Parameters
    ----------
    image : array of shape (M, 2) or callable
        Target points sampled at uniform parameter values along a closed loop
        (first point not repeated), or a map evaluated on ``loop``.
    loop : array of complex domain points, optional
        Required when ``image`` is callable; also used to detect open curves.
    """
    if callable(image):
        if loop is None:
            raise OpenCurve("a loop is required to evaluate a map")
        image = image(np.asarray(loop))
    z = np.asarray(image, dtype=complex)
    M = z.shape[0]
    if loop is not None:
        loop = np.asarray(loop)
        steps = np.abs(np.diff(loop))
        gap = abs(loop[0] - loop[-1])
        if gap > 3 * np.mean(steps) or gap < 1e-14:
            raise OpenCurve("loop does not close up (or repeats its first point)")
    if M < 4:
        raise OpenCurve("too few points on the loop")
    # spectral derivative in the loop parameter t in [0, 2 pi)
    k = 1j * np.fft.fftfreq(M, d=1.0 / M)
    if M % 2 == 0:
        k[M // 2] = 0
    zt = np.fft.ifft(k[:, None] * np.fft.fft(z, axis=0), axis=0)
    speed = target.norm(z, zt, chart)
    return float(np.sum(speed) * 2 * np.pi / M)
