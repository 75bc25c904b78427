import numpy as np
import pytest

from chernlab.corpus import constant, holomorphic_maps, polynomial
from chernlab.domains import DomainChart
from chernlab.errors import ConfigError, Diverged, StepTooLarge
from chernlab.flow import (FlowConfig, concentrating_family, energy_gap_probe, family_function,
                           flow_to_harmonic, perturbed)
from chernlab.pullback import MapState, energy, max_residual
from chernlab.targets import FSProduct, make_target

from conftest import disk_map


def test_holomorphic_boundary_data_relaxes_to_holomorphic_map():
    fn = polynomial("FlatC2", [0, 1, 0.3], [0, 0.5j, 0.1])
    exact = disk_map(fn, "FlatC2", N=32)
    start = perturbed(exact, 0.05, seed=3)
    assert max_residual(start) > 1e-2
    out, rep = flow_to_harmonic(start, FlowConfig(tol=1e-9, max_steps=500))
    assert rep.converged
    own = exact.domain.owned_mask
    assert np.abs(out.points - exact.points)[own].max() < 1e-7


def test_constant_map_on_torus_converges_immediately():
    d = DomainChart("PeriodicTorus", 16)
    ms = MapState.from_function(d, FSProduct(), constant("FSProduct"))
    out, rep = flow_to_harmonic(ms)
    assert rep.converged and rep.steps_taken == 0
    assert np.array_equal(out.points, ms.points)


def test_oversized_explicit_step_is_caught():
    ms = perturbed(disk_map(holomorphic_maps("FSProduct")[0], "FSProduct", N=32), 0.1)
    with pytest.raises((Diverged, StepTooLarge)):
        flow_to_harmonic(ms, FlowConfig(scheme="Explicit", dt=1.0, max_steps=200))


@pytest.mark.parametrize("scheme", ["Explicit", "SemiImplicit"])
def test_energy_decreases_on_kahler_target(scheme):
    ms = perturbed(disk_map(holomorphic_maps("FSProduct")[0], "FSProduct", N=24), 0.1, seed=1)
    cfg = FlowConfig(scheme=scheme, tol=1e-6, max_steps=300 if scheme == "Explicit" else 100)
    _, rep = flow_to_harmonic(ms, cfg)
    e = np.array(rep.energy_history)
    assert e[-1] < e[0]
    if scheme == "Explicit":
        assert rep.energy_increases == 0
    else:
        # the large-step iteration may overshoot the discrete minimum by O(h^4) amounts
        h = ms.domain.h
        assert np.max(np.diff(e)) < h**4 * e[0]


def test_hopf_flow_reduces_residual():
    ms = perturbed(disk_map(holomorphic_maps("Hopf")[0], "Hopf", N=24), 0.05, seed=2)
    out, rep = flow_to_harmonic(ms, FlowConfig(tol=1e-8, max_steps=300))
    assert rep.converged
    assert max_residual(out) <= 1e-8


@pytest.mark.parametrize("kw", [{"scheme": "Implicit"}, {"dt": -1.0}, {"tol": 0.0}, {"cfl_safety": 2.0}])
def test_flow_config_validation(kw):
    with pytest.raises(ConfigError):
        FlowConfig(**kw)


def test_fs_product_bubble_family_energy():
    coarse, fine = (concentrating_family("FSProductBubble", [1.0, 4.0], N=N) for N in (64, 128))
    for ms in coarse + fine:
        assert energy(ms).total == pytest.approx(8 * np.pi, rel=1e-3)
    assert max_residual(fine[0]) < 1e-10
    # concentrated members are resolved only as the grid refines
    assert max_residual(fine[1]) < max_residual(coarse[1]) / 8


def test_family_closed_forms():
    z = np.array([0.5 + 0.5j, 0.75])
    assert np.allclose(family_function("TwoCenter", 2.0)(z), np.stack([2 * (z - 0.5), 2 * z], -1))
    assert np.allclose(family_function("TwoScale", 2.0)(z), np.stack([4 * (z - 0.125), 2 * z], -1))
    with pytest.raises(ConfigError):
        family_function("Spiral", 1.0)


def test_gap_probe_finds_positive_threshold():
    d = DomainChart("PeriodicTorus", 16)
    probe = energy_gap_probe(d, make_target("FSProduct"), 0.5, amplitudes=[1e-3, 1e-2, 5e-2],
                             config=FlowConfig(tol=1e-9, max_steps=200))
    assert probe.threshold > 0
    assert all(probe.collapsed)


def test_gap_probe_rejects_boundary_domain():
    with pytest.raises(ConfigError):
        energy_gap_probe(DomainChart("Disk", 16), make_target("FSProduct"), 1.0)
