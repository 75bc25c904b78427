"""Closed-form test maps.

Every map is returned as an evaluator ``fn(x, patch) -> (..., 2)`` of
chart-0 target coordinates, ready for ``MapState.from_function``.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError

# a point of each target well inside chart 0 (away from the Hopf origin)
BASE_POINTS = {"FlatC2": (0.0, 0.0), "FSProduct": (0.1, -0.2j), "Hopf": (1.2, 0.4 + 0.3j)}


def _pair(u, w):
    return np.stack(np.broadcast_arrays(u, w), axis=-1)


def _base(target_id):
    try:
        return BASE_POINTS[target_id]
    except KeyError:
        raise ConfigError(f"unknown target {target_id!r}") from None


def constant(target_id: str) -> Callable:
    a, b = _base(target_id)
    return lambda x, patch=0: _pair(np.full(np.shape(x), a, dtype=complex), np.full(np.shape(x), b, dtype=complex))


def polynomial(target_id: str, coeffs1, coeffs2, conj1=(), conj2=()) -> Callable:
    """``base + sum c_n x^n (+ sum d_n xbar^n)`` per component; ``coeffs[n]`` multiplies ``x^n``."""
    a, b = _base(target_id)
    c1, c2 = np.asarray(coeffs1, dtype=complex), np.asarray(coeffs2, dtype=complex)
    d1, d2 = np.asarray(conj1, dtype=complex), np.asarray(conj2, dtype=complex)

    def fn(x, patch=0):
        x = np.asarray(x, dtype=complex)
        xb = np.conj(x)
        u = a + np.polyval(c1[::-1], x) + (np.polyval(d1[::-1], xb) if d1.size else 0)
        w = b + np.polyval(c2[::-1], x) + (np.polyval(d2[::-1], xb) if d2.size else 0)
        return _pair(u, w)
    return fn


def random_trig(target_id: str, seed: int, amplitude: float = 0.2, modes: int = 2, period: float = 1.0) -> Callable:
    """Smooth ``period``-periodic map: base point plus random Fourier modes ``|m|, |n| <= modes``."""
    rng = np.random.default_rng(seed)
    a, b = _base(target_id)
    m = np.arange(-modes, modes + 1)
    M, Nn = np.meshgrid(m, m, indexing="ij")
    decay = 1.0 / (1.0 + M**2 + Nn**2)
    coef = (rng.standard_normal((2,) + M.shape) + 1j * rng.standard_normal((2,) + M.shape)) * decay
    coef *= amplitude / np.abs(coef).sum(axis=(1, 2), keepdims=True)

    def fn(x, patch=0):
        x = np.asarray(x, dtype=complex)
        X, Y = 2 * np.pi * x.real / period, 2 * np.pi * x.imag / period
        ph = np.exp(1j * (X[..., None, None] * M + Y[..., None, None] * Nn))
        u = a + np.sum(ph * coef[0], axis=(-2, -1))
        w = b + np.sum(ph * coef[1], axis=(-2, -1))
        return _pair(u, w)
    return fn


def holomorphic_maps(target_id: str) -> list[Callable]:
    """Five holomorphic maps into the target, for disks of half-width at most 0.5."""
    polys = [([0, 1], [0, 0, 0.5]), ([0, 0.3, 0.2], [0, 0.5j]), ([0, 0, 0, 0.4], [0, 0.2, 0.1]),
             ([0, 0.5 + 0.2j], [0, 0.1, 0, 0.3]), ([0, 0.2, 0.3j, 0.1], [0, 0.3j, 0.2])]
    out = [polynomial(target_id, p, q) for p, q in polys]
    a, b = _base(target_id)
    out[-1] = lambda x, patch=0, a=a, b=b: _pair(a + 0.3 * np.sin(x), b + 0.2 * (np.exp(x) - 1))
    return out


def nonholomorphic_hopf() -> Callable:
    """Initial map for Hopf solves on a disk: holomorphic part plus ``xbar`` terms."""
    return lambda x, patch=0: _pair(1 + 0.3 * x + 0.1 * np.conj(x) ** 2, 0.5 * x**2 + 0.2j + 0.2 * np.conj(x))


def named_map(name: str, target_id: str, **params) -> Callable:
    """Look up a map by name: ``constant``, ``polynomial``, ``random_trig``,
    ``holomorphic`` (``index`` 0-4) or ``nonholomorphic_hopf``."""
    if name == "constant":
        return constant(target_id)
    if name == "polynomial":
        return polynomial(target_id, params.get("coeffs1", [0, 1]), params.get("coeffs2", [0]),
                          params.get("conj1", ()), params.get("conj2", ()))
    if name == "random_trig":
        return random_trig(target_id, int(params.get("seed", 0)), float(params.get("amplitude", 0.2)),
                           int(params.get("modes", 2)), float(params.get("period", 1.0)))
    if name == "holomorphic":
        return holomorphic_maps(target_id)[int(params.get("index", 0))]
    if name == "nonholomorphic_hopf":
        return nonholomorphic_hopf()
    raise ConfigError(f"unknown map {name!r}")
