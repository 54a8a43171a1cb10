from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from hilferctl import probctl
from hilferctl.errors import GridMismatch, InfeasibleError
from hilferctl.psicalc import FracOrder, PsiFunction
from hilferctl.specfn import ml_eval
from hilferctl.spectral import ControlFunction, EvolutionProblem, SpectralState, default_grid, mild_solution


def make(alpha=0.75, beta=0.5, n_modes=6, kind="linear", params=()):
    return EvolutionProblem(PsiFunction(kind, params, 0.0, 1.0), FracOrder(alpha, beta), n_modes)


def test_projection_onto_weighted_ball():
    pr = make(beta=0.0)
    spec = probctl.ConstraintSpec(kappa=0.5, rho0=0.25)
    t = 0.25
    w = t ** (1 - pr.gamma)
    q = SpectralState(np.array([2.0, 0, 0, 0, 0, 0]))
    inside = SpectralState(w * np.array([1.2, 0.1, 0, 0, 0, 0]))
    np.testing.assert_allclose(probctl.project_feasible(spec, pr, t, q, inside).coeffs, inside.coeffs)
    far = SpectralState(w * np.array([1.0, 3.0, 0, 0, 0, 0]))
    out = probctl.project_feasible(spec, pr, t, q, far).coeffs / w
    # centre kappa q = (1, 0, ...), radius rho0 |q| = 0.5, direction (0, 1)
    np.testing.assert_allclose(out, [1.0, 0.5, 0, 0, 0, 0], atol=1e-15)
    with pytest.raises(ValueError):
        probctl.project_feasible(spec, pr, 0.0, q, far)


def test_projected_control_is_feasible():
    pr = make()
    grid = default_grid(pr, 51)
    spec = probctl.ConstraintSpec()
    traj = mild_solution(pr, grid=grid)
    rng = np.random.default_rng(4)
    u = rng.standard_normal((grid.size, pr.n_modes))
    assert np.max(probctl.feasibility_defect(spec, traj, u)) > 0.1
    proj = probctl.project_control(spec, traj, u)
    assert np.max(probctl.feasibility_defect(spec, traj, proj)) < 1e-14
    np.testing.assert_allclose(proj[0], spec.kappa * traj.weighted[0])


def test_hausdorff_witness_below_bound():
    pr = make()
    spec = probctl.ConstraintSpec(0.3, 0.7)
    rng = np.random.default_rng(9)
    for _ in range(20):
        x, y = SpectralState(rng.standard_normal(6)), SpectralState(rng.standard_normal(6))
        bound, witnessed = probctl.hausdorff_bound_check(spec, pr, 0.4, x, y)
        assert witnessed <= bound + 1e-15


def test_running_cost_singular_state_oracle():
    # zero control, x0 = e1: |q(t)| = t^(g-1) E_{a,g}(-t^a), integrable at 0
    pr = make(0.75, 0.0)
    grid = default_grid(pr)
    traj = mild_solution(pr, grid=grid)
    g = pr.gamma
    exact = integrate.quad(lambda t: t ** (g - 1) * float(ml_eval(0.75, g, -t**0.75)), 0, 1, limit=200)[0]
    u = ControlFunction.zero(grid, pr.n_modes)
    hspec = probctl.RunningCostSpec(c_h=0.0)
    np.testing.assert_allclose(probctl.running_cost(hspec, traj, u, pr), exact, rtol=1e-5)
    assert probctl.cost_lower_bound(hspec, traj, u, pr) <= -0.0
    with pytest.raises(ValueError):
        probctl.running_cost(hspec, traj, u)


def test_running_cost_regular_state_and_custom_h():
    pr = make(0.75, 1.0)
    grid = default_grid(pr, 101)
    traj = mild_solution(pr, grid=grid)
    vals = np.full((grid.size, pr.n_modes), 0.5)
    u = ControlFunction(grid, vals)
    hspec = probctl.RunningCostSpec(k1=lambda t: np.full(np.shape(t), 2.0), k2=lambda t: np.zeros(np.shape(t)), c_h=1.0)
    np.testing.assert_allclose(probctl.running_cost(hspec, traj, u, pr), 2.0 + 0.5 * math.sqrt(pr.n_modes), rtol=1e-14)
    custom = probctl.RunningCostSpec(h=lambda t, x, v: v**2)
    np.testing.assert_allclose(probctl.running_cost(custom, traj, u), 0.25 * pr.n_modes, rtol=1e-14)
    other = ControlFunction(grid[:-1], vals[:-1])
    with pytest.raises(GridMismatch):
        probctl.running_cost(hspec, traj, other, pr)


def test_search_is_seed_deterministic_and_within_bounds():
    pr = make()
    grid = default_grid(pr, 61)
    cspec, hspec = probctl.ConstraintSpec(), probctl.RunningCostSpec()
    first = probctl.feasible_search(pr, cspec, hspec, n_candidates=4, seed=3, grid=grid)
    second = probctl.feasible_search(pr, cspec, hspec, n_candidates=4, seed=3, grid=grid)
    other = probctl.feasible_search(pr, cspec, hspec, n_candidates=4, seed=4, grid=grid)
    assert first.digest == second.digest != other.digest
    best = first.history.column("running_best")
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert best[-1] == first.best.cost
    M0, N0 = first.bounds
    assert first.best.trajectory.weighted_norm <= M0
    assert math.sqrt(first.best.control.energy) <= N0
    assert first.best.defect <= probctl.FEAS_TOL


def test_candidates_are_smooth_and_reproducible():
    grid = np.linspace(0, 1, 201)
    a = probctl.candidate_controls(5, grid, 2, 0)
    np.testing.assert_array_equal(a, probctl.candidate_controls(5, grid, 2, 0))
    assert not np.any(probctl.candidate_controls(5, grid, 0, 0))
    # smooth paths: second differences are O(h^2)
    assert np.max(np.abs(np.diff(a, 2, axis=0))) < 1e-2


def test_search_raises_when_nothing_is_feasible(monkeypatch):
    pr = make()
    real = probctl.realize

    def never(*args, **kwargs):
        cand = real(*args, **kwargs)
        cand.accepted = False
        return cand

    monkeypatch.setattr(probctl, "realize", never)
    with pytest.raises(InfeasibleError):
        probctl.feasible_search(pr, probctl.ConstraintSpec(), probctl.RunningCostSpec(), n_candidates=2,
                                grid=default_grid(pr, 21))
    with pytest.raises(ValueError):
        probctl.ConstraintSpec(kappa=-1.0)
