import math

import numpy as np
import pytest

import plateplast as pp

MEMBRANE = """
[domain]
nx = 9
ny = 9
gamma_d = left
[material]
sigma_y = 0.1
[p0]
preset = constant
coeffs = 0.2 0 0 0 0
[solver]
tol = 1e-13
"""


def test_reduce_tensor_matches_closed_form():
    rng = np.random.default_rng(0)
    for lam, mu in [(1.0, 1.0), (2.0, 0.5), (0.0, 1.0)]:
        for _ in range(20):
            f = rng.normal(size=(2, 2))
            s = 0.5 * (f + f.T)
            ref = mu * np.sum(s * s) + mu * lam / (lam + 2 * mu) * np.trace(s) ** 2
            assert abs(pp.reduce_tensor(lam, mu, f)["q2"] - ref) <= 1e-12 * (1 + ref)


def test_prox_below_yield_keeps_p0():
    r = pp.plastic_prox(np.zeros((2, 2)), np.zeros(5), sigma_y=1.0)
    assert np.all(r["p"] == 0.0)
    assert r["residual"] <= 1e-12


def test_dissipation_exp_path_for_symmetric_log():
    n = np.diag([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    w, v = np.linalg.eigh(0.1 * n)
    f = v @ np.diag(np.exp(w)) @ v.T
    d = pp.dissipation(f, sigma_y=2.0)
    assert d["exp_bound"] == pytest.approx(0.2, abs=1e-12)
    assert d["path_opt"] <= d["exp_bound"] + 1e-9


def test_config_defaults_and_errors():
    cfg = pp.parse_config("[domain]\ngamma_d = left\n")
    assert cfg["model"]["alpha"] == 4.0
    with pytest.raises(pp.ConfigError, match="alpha >= 3"):
        pp.parse_config("[domain]\ngamma_d = left\n[model]\nalpha = 2.5\n")


def test_solve_limit_membrane_scenario():
    report, fields = pp.solve_limit(MEMBRANE)
    assert report["schema_version"] == pp.SCHEMA_VERSION
    assert report["result"]["converged"]
    assert fields["p"].shape == (81, 4, 5)
    assert np.max(np.abs(fields["v"])) <= 1e-8


def test_membrane_reduction_gap():
    r = pp.check_reduction(MEMBRANE, "membrane")["reduction"]
    assert r["rel_gap"] <= 1e-5


def test_bending_hypothesis_violation():
    with pytest.raises(pp.HypothesisError):
        pp.check_reduction(MEMBRANE.replace("gamma_d = left", "gamma_d = left\n[bc]\nu0x = 0 0.01 0 0 0 0 0 0 0 0"),
                           "bending")


def test_recovery_study_ratios():
    study = pp.recovery_study(MEMBRANE, eps=[0.1, 0.05])["study"]
    assert len(study["rows"]) == 2
    assert abs(study["rows"][-1]["ratio_total"] - 1.0) <= 0.05
