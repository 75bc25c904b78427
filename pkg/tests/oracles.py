"""Independent reference computations for the test suite."""
import functools

import numpy as np
import sympy as sp


@functools.lru_cache(maxsize=None)
def levi_civita_christoffel(target_id: str):
    """Christoffel symbols of the real metric, ``Gamma[a][b][c]`` as a numpy function of 4 real coordinates.

    The Hermitian metric ``h_{j lbar} dz^j dzbar^l`` is converted to the real
    quadratic form ``g(u, u) = Re h(v, v)`` with ``v_j = u_{2j} + i u_{2j+1}``.
    """
    u = sp.symbols("u0:4", real=True)
    if target_id == "FlatC2":
        conf = [sp.Integer(1), sp.Integer(1)]
    elif target_id == "FSProduct":
        conf = [4 / (1 + u[0] ** 2 + u[1] ** 2) ** 2, 4 / (1 + u[2] ** 2 + u[3] ** 2) ** 2]
    else:
        raise ValueError(target_id)
    g = sp.diag(conf[0], conf[0], conf[1], conf[1])
    ginv = g.inv()
    gam = [[[sp.simplify(sum(ginv[a, d] * (sp.diff(g[d, b], u[c]) + sp.diff(g[d, c], u[b])
                                          - sp.diff(g[b, c], u[d])) for d in range(4)) / 2)
             for c in range(4)] for b in range(4)] for a in range(4)]
    fn = sp.lambdify([u], gam, "numpy")
    return lambda x: np.array(fn(x), dtype=float)


def levi_civita_tension(target_id, z, fx, fxb, fxxb):
    """Harmonic map tension ``f_ss + f_tt + Gamma(f_s, f_s) + Gamma(f_t, f_t)`` of a flat-domain 2-jet.

    Inputs are complex target coordinates and their Wirtinger derivatives at
    single points; the result is returned as complex (1,0) components.
    """
    G = levi_civita_christoffel(target_id)
    out = np.empty(z.shape, dtype=complex)
    for n in range(len(z)):
        x = np.stack([z[n].real, z[n].imag], axis=-1).ravel()
        fs = fx[n] + fxb[n]
        ft = 1j * (fx[n] - fxb[n])
        rs = np.stack([fs.real, fs.imag], axis=-1).ravel()
        rt = np.stack([ft.real, ft.imag], axis=-1).ravel()
        lap = 4 * fxxb[n]
        rl = np.stack([lap.real, lap.imag], axis=-1).ravel()
        g = G(x)
        tau = rl + np.einsum("abc,b,c->a", g, rs, rs) + np.einsum("abc,b,c->a", g, rt, rt)
        out[n] = tau[0::2] + 1j * tau[1::2]
    return out


def hopf_mean_curvature_holomorphic(f, fx):
    """Mean curvature of a holomorphic map into the Hopf surface from its closed-form 1-jet (flat domain).

    Uses the unitary coframe ``dz / |z|``, for which the torsion is
    ``L^a_{bc} = (delta_ab zbar_c - delta_ac zbar_b) / (2 |z|)``; with
    ``a_{1bar} = 0`` only ``2 conj(a^j_1) conj(L^k_{ji}) a^k_1`` survives.
    """
    r = np.linalg.norm(f, axis=-1)
    a1 = fx / r[..., None]
    zb = np.conj(f) / r[..., None]
    eye = np.eye(2)
    L = 0.5 * (np.einsum("ab,...c->...abc", eye, zb) - np.einsum("ac,...b->...abc", eye, zb))
    return 2 * np.einsum("...j,...kji,...k->...i", np.conj(a1), np.conj(L), a1)
