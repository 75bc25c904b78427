import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from chernlab.errors import OutOfChart, SingularMetric
from chernlab.targets import (FSProduct, HopfSurface, chern_connection, curvature, jet_self_test, make_target,
                              metric_compatibility_residual, torsion, torsion_jet, unitary_frame)

from conftest import random_points

TARGETS = ["FlatC2", "FSProduct", "Hopf"]


@pytest.mark.parametrize("tid", TARGETS)
def test_metric_jet_matches_finite_differences(tid):
    assert jet_self_test(make_target(tid)) < 1e-6


@pytest.mark.parametrize("tid", TARGETS)
def test_unitary_frame_is_orthonormal(tid, rng):
    z = random_points(rng, 20, tid)
    tgt = make_target(tid)
    jet = tgt.metric_jet(z)
    _, P, Q, _, _ = unitary_frame(jet)
    # Q^H H Q = I
    G = np.einsum("...ia,...ij,...jb->...ab", np.conj(Q), np.swapaxes(jet.H, -1, -2), Q)
    assert np.allclose(G, np.eye(2), atol=1e-12)
    assert np.allclose(P @ Q, np.eye(2), atol=1e-12)


@pytest.mark.parametrize("tid", TARGETS)
def test_chern_connection_is_metric(tid, rng):
    z = random_points(rng, 20, tid)
    assert metric_compatibility_residual(make_target(tid), 0, z).max() < 1e-12


@pytest.mark.parametrize("tid", ["FlatC2", "FSProduct"])
def test_kahler_targets_have_no_torsion(tid, rng):
    z = random_points(rng, 10, tid)
    tj = torsion_jet(make_target(tid), 0, z)
    assert np.abs(tj.L).max() < 1e-13
    assert np.abs(tj.L1).max() < 1e-12


def _hopf_symbolic():
    z = sp.symbols("z1 z2")
    zb = sp.symbols("zb1 zb2")
    s = z[0] * zb[0] + z[1] * zb[1]
    h = sp.Matrix(2, 2, lambda j, l: sp.KroneckerDelta(j, l) / s)
    hinv = h.inv()
    # Gamma^k_{ij} = h^{k lbar} d_i h_{j lbar}
    gamma = [[[sp.simplify(sum(sp.diff(h[j, l], z[i]) * hinv[l, k] for l in range(2)))
               for j in range(2)] for i in range(2)] for k in range(2)]
    return sp.lambdify((z, zb), gamma, "numpy")


def test_hopf_connection_matches_symbolic_oracle(rng):
    gamma_fn = _hopf_symbolic()
    z = random_points(rng, 12, "Hopf")
    conn = chern_connection(HopfSurface(), 0, z)
    for n in range(len(z)):
        ref = np.array(gamma_fn(tuple(z[n]), tuple(np.conj(z[n]))), dtype=complex)
        assert np.allclose(conn.gamma[n], ref, atol=1e-13)


def test_hopf_torsion_closed_form(rng):
    # coordinate torsion T^k_{ij} = (delta_ik zbar_j - delta_jk zbar_i) / |z|^2
    z = random_points(rng, 8, "Hopf")
    conn = chern_connection(HopfSurface(), 0, z)
    T = conn.gamma - np.swapaxes(conn.gamma, -1, -2)
    s = np.sum(np.abs(z) ** 2, axis=-1)
    eye = np.eye(2)
    zb = np.conj(z)
    ref = np.einsum("ki,nj->nkij", eye, zb) - np.einsum("kj,ni->nkij", eye, zb)
    ref /= s[:, None, None, None]
    assert np.allclose(T, ref, atol=1e-13)
    L = torsion(HopfSurface(), 0, z).L
    assert np.abs(L).max() > 0.1


def test_fs_factor_curvature_is_constant(rng):
    # unit round sphere factors; against omega ^ omegabar the coefficient is K_Gauss / 2
    z = random_points(rng, 10, "FSProduct")
    R = curvature(FSProduct(), 0, z)
    vals = R.R_mixed[:, 0, 0, 0, 0]
    assert np.allclose(vals, vals[0], atol=1e-12)
    assert np.isclose(abs(vals[0]), 0.5, atol=1e-12)
    assert np.abs(R.R_mixed[:, 0, 1, 0, 1]).max() < 1e-12
    assert np.abs(R.R_hol).max() < 1e-12


def test_fs_transitions_round_trip(rng):
    tgt = FSProduct()
    z = random_points(rng, 10, "FSProduct")
    for c in range(4):
        back = tgt.transition(c, 0, tgt.transition(0, c, z))
        assert np.allclose(back, z, rtol=1e-13)
        # the metric is a tensor: pullback through the transition preserves lengths
        w = tgt.transition(0, c, z)
        v = rng.standard_normal((10, 2)) + 1j * rng.standard_normal((10, 2))
        J = np.where(np.array([c & 1, c & 2]) > 0, -1.0 / z**2, 1.0)
        assert np.allclose(tgt.norm(w, J * v, c), tgt.norm(z, v, 0), rtol=1e-12)


def test_hopf_transition_lands_in_fundamental_annulus(rng):
    z = random_points(rng, 50, "Hopf") * 2.0 ** rng.integers(-5, 5, size=(50, 1))
    w = HopfSurface().transition(0, 0, z)
    r = np.linalg.norm(w, axis=-1)
    assert np.all((r >= 1) & (r < 2))
    # same point of the quotient: distance zero
    assert np.allclose(HopfSurface().distance(w, 0, z[0]), HopfSurface().distance(z, 0, z[0]), atol=1e-12)


coord = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.tuples(coord, coord, coord, coord).filter(lambda t: sum(v * v for v in t) > 1e-4),
       st.integers(-6, 6))
def test_hopf_quotient_is_scale_invariant(t, n):
    z = np.array([[t[0] + 1j * t[1], t[2] + 1j * t[3]]])
    tgt = HopfSurface()
    w, w2 = tgt.transition(0, 0, z), tgt.transition(0, 0, z * 2.0**n)
    assert np.allclose(w, w2, rtol=1e-12, atol=1e-300)
    assert np.allclose(tgt.metric(w, 0), tgt.metric(w2, 0), rtol=1e-12)


def test_hopf_rejects_origin():
    with pytest.raises(OutOfChart):
        HopfSurface().metric_jet(np.zeros((1, 2), dtype=complex))


def test_singular_metric_detected():
    from chernlab.targets import MetricJet
    H = np.zeros((1, 2, 2), dtype=complex)
    jet = MetricJet(H, np.zeros((1, 2, 2, 2)), np.zeros((1, 2, 2, 2, 2)), np.zeros((1, 2, 2, 2, 2)))
    with pytest.raises(SingularMetric):
        unitary_frame(jet)


def test_unknown_target():
    with pytest.raises(KeyError):
        make_target("K3")
