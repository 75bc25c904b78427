import numpy as np
import pytest

from chernlab.domains import DomainChart, boundary_length, circle_loop
from chernlab.errors import ConfigError, RadiusTooLarge, ResolutionTooSmall


def _order(errs, hs):
    return np.polyfit(np.log(hs), np.log(errs), 1)[0]


@pytest.mark.parametrize("background", ["flat", "sphere", "hyperbolic"])
def test_disk_derivatives_are_fourth_order(background):
    errs, hs = [], []
    for N in (32, 64, 128):
        d = DomainChart("Disk", N, size=0.5, background=background)
        f = np.exp(d.x) * np.conj(d.x) ** 2
        fx, fxb = d.d_complex(f)
        errs.append(max(np.abs(fx - np.exp(d.x) * np.conj(d.x) ** 2).max(),
                        np.abs(fxb - 2 * np.exp(d.x) * np.conj(d.x)).max()))
        hs.append(d.h)
    assert _order(errs, hs) > 3.7


def test_torus_derivatives_are_spectral():
    d = DomainChart("PeriodicTorus", 32, size=1.0)
    f = np.sin(2 * np.pi * d.x.real) * np.cos(4 * np.pi * d.x.imag)
    fx, fy = d.d_dx_dy(f)
    assert np.allclose(fx, 2 * np.pi * np.cos(2 * np.pi * d.x.real) * np.cos(4 * np.pi * d.x.imag), atol=1e-11)
    assert np.allclose(fy, -4 * np.pi * np.sin(2 * np.pi * d.x.real) * np.sin(4 * np.pi * d.x.imag), atol=1e-11)


def test_sphere_area_and_curvature():
    d = DomainChart("SpherePair", 128)
    assert d.area() == pytest.approx(4 * np.pi, rel=1e-6)
    own = d.owned_mask
    assert np.abs(d.gauss_curvature()[own] - 1.0).max() < 1e-5


@pytest.mark.parametrize("kind,kw", [("Disk", {"size": 0.5}), ("PeriodicTorus", {"size": 1.0})])
def test_geodesic_disk_area(kind, kw):
    d = DomainChart(kind, 128, **kw)
    m = d.geodesic_disk_mask(0.05 + 0.02j if kind == "Disk" else 0.5 + 0.5j, 0.2)
    assert d.area(m) == pytest.approx(np.pi * 0.04, rel=1e-3)


def test_spherical_cap_area():
    d = DomainChart("SpherePair", 128)
    r = 0.7
    m = d.geodesic_disk_mask(0.3 - 0.1j, r)
    assert d.area(m) == pytest.approx(2 * np.pi * (1 - np.cos(r)), rel=1e-3)


@pytest.mark.parametrize("kind,bg", [("SpherePair", "sphere"), ("Disk", "flat"),
                                     ("Disk", "sphere"), ("Disk", "hyperbolic"), ("PeriodicTorus", "flat")])
def test_geodesic_circle_and_point_distance(kind, bg):
    d = DomainChart(kind, 32, size=0.5, background=bg) if kind != "SpherePair" else DomainChart(kind, 32)
    c = 0.1 + 0.05j
    assert np.allclose(d.distance(c)[0], d.point_distance(c, d.x[0]), atol=1e-13)
    circ = d.geodesic_circle(c, 0.15, 16)
    assert np.allclose(d.point_distance(c, circ), 0.15, atol=1e-12)


def test_radius_checks():
    d = DomainChart("Disk", 32, size=0.5)
    with pytest.raises(RadiusTooLarge):
        d.geodesic_disk_mask(0.0, 0.6)
    with pytest.raises(RadiusTooLarge):
        DomainChart("PeriodicTorus", 32).geodesic_disk_mask(0.5, 0.6)


def test_bad_construction():
    with pytest.raises(ResolutionTooSmall):
        DomainChart("Disk", 4)
    with pytest.raises(ConfigError):
        DomainChart("Annulus", 32)
    with pytest.raises(ConfigError):
        DomainChart("Disk", 32, size=0.9, background="hyperbolic")


def test_boundary_length_of_circle():
    from chernlab.targets import FlatC2
    loop = circle_loop(0.1, 0.3, 256)
    img = np.stack([loop, np.zeros_like(loop)], axis=-1)
    assert boundary_length(img, FlatC2(), loop=loop) == pytest.approx(2 * np.pi * 0.3, rel=1e-8)
