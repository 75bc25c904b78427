import numpy as np
import pytest

from chernlab.corpus import constant, holomorphic_maps, polynomial
from chernlab.domains import DomainChart
from chernlab.errors import BoundaryIntersected, EmptySuite, InsufficientRadii, NotHarmonic, RadiusTooLarge
from chernlab.corpus import nonholomorphic_hopf
from chernlab.regularity import (AnalysisConfig, bochner_check, epsilon_regularity_check,
                                 fit_differential_inequality, isoperimetric_check, laplacian,
                                 monotonicity_check, morrey_decay_fit, write_csv, write_json)

from conftest import disk_map


def linear(eps):
    return lambda x, patch=0: np.stack([eps * np.asarray(x), 0 * np.asarray(x)], axis=-1)


@pytest.mark.parametrize("eps", [0.1, 1.0])
def test_epsilon_regularity_ratio_of_linear_map(eps):
    # e = eps^2, E(2r) = 4 pi r^2 eps^2
    ms = disk_map(linear(eps), "FlatC2", N=64)
    rows, C3 = epsilon_regularity_check(ms, [0.0, 0.05 + 0.05j], 0.1, epsilon1=10.0)
    assert all(r["status"] == "ok" for r in rows)
    assert C3 == pytest.approx(1 / (4 * np.pi), rel=1e-2)


def test_epsilon_regularity_statuses():
    ms = disk_map(constant("FlatC2"), "FlatC2", N=32)
    rows, C3 = epsilon_regularity_check(ms, [0.0], 0.1, epsilon1=1.0)
    assert rows[0]["status"] == "degenerate" and np.isnan(C3)
    rows, _ = epsilon_regularity_check(disk_map(linear(5.0), "FlatC2", N=32), [0.0], 0.1, epsilon1=1.0)
    assert rows[0]["status"] == "above_epsilon"


def test_isoperimetric_ratio_of_flat_inclusion():
    res = isoperimetric_check(disk_map(linear(1.0), "FlatC2", N=64), 0.0, 0.3)
    assert res.ratio == pytest.approx(1 / (4 * np.pi), rel=1e-3)
    assert res.flags == []


def test_isoperimetric_degenerate_and_radius_errors():
    ms = disk_map(constant("FSProduct"), "FSProduct", N=32)
    assert isoperimetric_check(ms, 0.0, 0.2).degenerate
    with pytest.raises(RadiusTooLarge):
        isoperimetric_check(ms, 0.0, 0.6)


def test_isoperimetric_flags_nonconformal_map():
    ms = disk_map(polynomial("FlatC2", [0, 1], [0], conj1=[0, 0.5]), "FlatC2", N=32)
    assert "non_conformal" in isoperimetric_check(ms, 0.0, 0.2).flags


def test_monotonicity_of_flat_plane():
    ms = disk_map(linear(1.0), "FlatC2", N=128)
    curve = monotonicity_check(ms, np.zeros(2, dtype=complex), [0.1, 0.2, 0.3])
    assert np.allclose(curve.normalized, np.pi, rtol=2e-2)
    assert curve.positive
    with pytest.raises(BoundaryIntersected):
        monotonicity_check(ms, np.zeros(2, dtype=complex), [0.6])


def test_morrey_exponent_of_conformal_map():
    ms = disk_map(linear(1.0), "FlatC2", N=128)
    fit = morrey_decay_fit(ms, 0.0, [0.05, 0.1, 0.2, 0.3])
    assert fit.alpha == pytest.approx(2.0, abs=0.05)
    with pytest.raises(InsufficientRadii):
        morrey_decay_fit(ms, 0.0, [0.1, 0.2])
    assert morrey_decay_fit(disk_map(constant("FlatC2"), "FlatC2", N=32), 0.0, [0.05, 0.1, 0.2, 0.3]).degenerate


def test_subharmonic_energy_gives_zero_constants():
    # flat target: Delta e = 2 |f_xx|^2 >= 0
    suite = [disk_map(fn, "FlatC2", N=64) for fn in holomorphic_maps("FlatC2")]
    fit = fit_differential_inequality(suite)
    assert fit.C1 == pytest.approx(0.0, abs=1e-8)
    assert fit.C2 == pytest.approx(0.0, abs=1e-8)


def test_inequality_constants_scale_with_domain():
    suite = [disk_map(fn, "FSProduct", N=64) for fn in holomorphic_maps("FSProduct")]
    fit = fit_differential_inequality(suite, scale=2.0)
    assert fit.C1 + fit.C2 > 0
    assert fit.scaling_deviation < 1e-6


def test_inequality_fit_needs_maps():
    with pytest.raises(EmptySuite):
        fit_differential_inequality([])


def test_laplacian_of_quadratic():
    d = DomainChart("Disk", 32, size=0.5)
    # Delta |x|^2 = 2 d dbar (x xbar) = 2
    lap = laplacian(d, np.abs(d.x) ** 2)
    assert np.allclose(lap, 2.0, atol=1e-10)


def test_bochner_identity_on_flat_target():
    ms = disk_map(polynomial("FlatC2", [0, 0.5, 0.3], [0, 0.2j, 0, 0.1]), "FlatC2", N=64)
    rep = bochner_check(ms)
    assert rep.defect < 1e-8


def test_bochner_requires_harmonic_map():
    with pytest.raises(NotHarmonic):
        bochner_check(disk_map(nonholomorphic_hopf(), "Hopf", N=32))


def test_analysis_config_validation():
    assert AnalysisConfig().epsilon1_candidate == 1.0
    with pytest.raises(ValueError):
        AnalysisConfig(radii_ladder=[0.2, 0.1])


def test_table_writers(tmp_path):
    write_csv([{"a": np.float64(1.5), "b": "x"}], tmp_path / "t.csv")
    write_json({"v": np.arange(2)}, tmp_path / "s.json")
    assert (tmp_path / "t.csv").read_text().splitlines() == ["a,b", "1.5,x"]
    assert '"v": [\n    0,\n    1\n  ]' in (tmp_path / "s.json").read_text()
