import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import least_squares

from mrqm.errors import InvalidArgumentError, OptimizationFailedError
from mrqm.model import empty_config, eval_F, expand_symmetric, paper_config
from mrqm.optimizer import (
    OptimizationProblem,
    constraint_residual,
    default_fit_points,
    objective,
    optimize,
    paper_params,
    params_to_config,
    symmetric_to_full,
    verify_against_paper,
)


@pytest.mark.parametrize(
    "n, delta, expected",
    [
        (4, 1.0, [m * 1.5 / 14 for m in range(1, 8)]),
        (2, 1.0, [1 / 12, 1 / 6, 0.25]),
        (4, 2.0, [m * 3.0 / 14 for m in range(1, 8)]),
    ],
)
def test_default_fit_points(n, delta, expected):
    pts = default_fit_points(n, delta)
    assert len(pts) == 2 * n - 1
    assert pts == pytest.approx(expected, rel=1e-15)


def test_default_fit_points_values():
    pts = default_fit_points(4)
    assert pts[0] == pytest.approx(0.1071, abs=1e-4)
    assert pts[1] == pytest.approx(0.2143, abs=1e-4)
    assert pts[-1] == 0.75
    with pytest.raises(InvalidArgumentError):
        default_fit_points(3)


def test_problem_validation():
    with pytest.raises(InvalidArgumentError):
        OptimizationProblem(fit_points=(0.2, 0.1))
    with pytest.raises(InvalidArgumentError):
        OptimizationProblem(fit_points=(0.0, 0.1))
    with pytest.raises(InvalidArgumentError):
        OptimizationProblem(objective_kind="numerator")
    with pytest.raises(InvalidArgumentError):
        OptimizationProblem(bounds=[(0, 1)] * 3)
    p = OptimizationProblem()
    assert p.n_params == 7 and len(p.bounds) == 7
    assert OptimizationProblem(symmetry=False).n_params == 13


def test_problem_dict_round_trip():
    p = OptimizationProblem(n_channels=2, objective_kind="reflection_S", gamma_mini=0.01, kappa=100.0)
    assert OptimizationProblem.from_dict(p.to_dict()) == p
    with pytest.raises(InvalidArgumentError):
        OptimizationProblem.from_dict({**p.to_dict(), "bogus": 1})


def test_params_to_config_matches_expand_symmetric():
    p = OptimizationProblem()
    assert params_to_config(paper_params(), p) == paper_config()
    full = OptimizationProblem(symmetry=False)
    assert params_to_config(symmetric_to_full(paper_params(), 4), full) == paper_config()


# ---------------------------------------------------------------- objective

def matched_n2():
    """N=2 device with F = 1 exactly at nu = 0 and nu = 0.25 (root found by least squares)."""
    nu1 = 0.25

    def eqs(v):
        cfg = expand_symmetric(v[0], [v[1]], [v[2]], [v[3]], 2)
        F0, F1 = eval_F(cfg, 0.0), eval_F(cfg, nu1)
        return [F0.real - 1, F1.real - 1, F1.imag]

    sol = least_squares(eqs, [1.0, 1.0, 1.0, 1.0], bounds=([0.1, 0, 0, 0], [10, 10, 10, 10]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    assert np.max(np.abs(sol.fun)) < 1e-13
    return sol.x, (nu1,)


def test_objective_zero_at_matched_params():
    x, pts = matched_n2()
    for kind in ("one_minus_F", "reflection_S"):
        p = OptimizationProblem(n_channels=2, fit_points=pts, objective_kind=kind,
                                bounds=[(0, 10)] * 4)
        assert objective(x, p) < 1e-20
        assert constraint_residual(x, p) < 1e-12


def test_objective_paper_params():
    p = OptimizationProblem()
    fit_only = objective(paper_params(), p, weight=0.0)
    assert 0 < fit_only <= 1e-2
    resid = constraint_residual(paper_params(), p)
    assert objective(paper_params(), p) == pytest.approx(fit_only + 1e6 * resid**2, rel=1e-12)


def test_objective_empty_device():
    p = OptimizationProblem()
    x = np.array([1.0, 0, 0, 0, 0, 0, 0])
    assert objective(x, p) == pytest.approx(7 + 1e6)
    assert objective(x, OptimizationProblem(objective_kind="reflection_S")) == pytest.approx(7 + 1e6)


def test_objective_singular_point_returns_sentinel():
    p = OptimizationProblem(fit_points=(0.3,), bounds=[(-9, 9)] * 7)
    # f = 0 and no miniresonator loss: channel 1 is undamped at nu = delta_c = 0.3
    x = np.array([1.0, 0.0, 0.5, 0.4, 0.4, 0.3, 1.0])
    val = objective(x, p)
    assert math.isfinite(val) and val >= 1e11


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.05, 3.0), min_size=7, max_size=7), st.floats(0.2, 5.0))
def test_objective_scale_invariance(x, scale):
    x = np.array(x)
    p = OptimizationProblem()
    # every frequency scales together: Delta, nu, 1/T2, g, delta_c; f scales like a frequency too
    ps = OptimizationProblem(delta_unit=scale, fit_points=tuple(scale * np.array(p.fit_points)))
    assert objective(scale * x, ps) == pytest.approx(objective(x, p), rel=1e-10, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.05, 3.0), min_size=7, max_size=7))
def test_symmetric_and_full_objectives_agree(x):
    x = np.array(x)
    half = OptimizationProblem()
    full = OptimizationProblem(symmetry=False)
    assert objective(symmetric_to_full(x, 4), full) == pytest.approx(objective(x, half), rel=1e-12, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 3.0), min_size=7, max_size=7))
def test_objective_nonnegative(x):
    assert objective(np.array(x), OptimizationProblem()) >= 0


# ---------------------------------------------------------------- optimize

def test_optimize_n2_smoke():
    r = optimize(OptimizationProblem(n_channels=2), n_starts=5, seed=0)
    assert r.accepted
    assert r.constraint_residual <= 1e-6
    assert r.n_converged >= 1 and r.n_evals > 0
    assert r.config.n_channels == 2
    assert set(r.plateau_summary) == {"half_width", "min_eta_lossless", "min_eta_gamma_1e-2"}


def test_optimize_deterministic():
    p = OptimizationProblem(n_channels=2)
    a = optimize(p, n_starts=3, seed=42)
    b = optimize(p, n_starts=3, seed=42)
    assert a.best_params.tobytes() == b.best_params.tobytes()
    assert a.objective_value == b.objective_value


def test_optimize_degenerate_bounds_returns_published():
    x = paper_params()
    p = OptimizationProblem(bounds=[(v, v) for v in x])
    r = optimize(p, n_starts=2, seed=0)
    assert np.array_equal(r.best_params, x)
    assert r.objective_value == objective(x, p)
    assert not r.accepted  # rounded published values miss F(0) = 1 by ~1e-3


def test_optimize_failure_when_budget_exhausted():
    with pytest.raises(OptimizationFailedError) as info:
        optimize(OptimizationProblem(), n_starts=2, seed=0, max_evals=10)
    assert info.value.diagnostics["n_starts"] == 2


def test_optimize_reflection_kind_reaches_plateau():
    r = optimize(OptimizationProblem(objective_kind="reflection_S"), n_starts=4, seed=0)
    assert r.accepted
    assert r.plateau_summary["min_eta_lossless"] >= 0.9999


def test_optimize_parallel_matches_serial():
    p = OptimizationProblem(n_channels=2)
    a = optimize(p, n_starts=3, seed=7, jobs=1)
    b = optimize(p, n_starts=3, seed=7, jobs=2)
    assert a.best_params.tobytes() == b.best_params.tobytes()


# ---------------------------------------------------------------- comparison report

def test_verify_against_paper_self():
    rep = verify_against_paper(paper_config())
    assert all(v == 0 for v in rep["delta"].values())
    assert rep["plateau_ok"]


def test_verify_against_paper_empty_flags_failure():
    rep = verify_against_paper(empty_config())
    assert not rep["plateau_ok"]
    assert rep["result"]["min_eta_gamma_0"] == 0.0


def test_verify_against_paper_rejects_other_sizes():
    with pytest.raises(InvalidArgumentError):
        verify_against_paper(empty_config(2))
