import math

import numpy as np
import pytest

from chernlab.config import ExperimentConfig
from chernlab.errors import ConfigError
from chernlab.suites import refinement_order, run_suite


def test_refinement_order_recovers_power():
    hs = np.array([0.1, 0.05, 0.025])
    order, status = refinement_order(hs, 3 * hs**4, floor=1e-12)
    assert status == "order" and order == pytest.approx(4.0)


def test_refinement_order_on_rounding_floor():
    order, status = refinement_order([0.1, 0.05, 0.025], [1e-6, 1e-13, 2e-13], floor=1e-10)
    assert status == "floor" and math.isnan(order)


def test_unknown_suite():
    with pytest.raises(ConfigError):
        run_suite("nosuch", ExperimentConfig())


def test_small_conformal_suite_passes():
    cfg = ExperimentConfig.from_dict({"domain.N": 32, "verify.resolutions": [32, 64], "verify.corpus_size": 1})
    res = run_suite("conformal", cfg)
    assert res.passed and len(res.rows) == 3
    assert res.summary["max_constant_mu"] < 1e-8


def test_regularity_suite_needs_two_resolutions():
    cfg = ExperimentConfig.from_dict({"verify.resolutions": [64]})
    with pytest.raises(ConfigError):
        run_suite("regularity", cfg)
