from __future__ import annotations

import math

import numpy as np
import pytest

from hilferctl import inclusion, linctl
from hilferctl.errors import DomainError, EnvelopeError
from hilferctl.inclusion import MultimapSpec, evaluate_selection, fixed_point_solve
from hilferctl.psicalc import FracOrder, PsiFunction
from hilferctl.spectral import EvolutionProblem, SpectralState, default_grid, mild_solution, parabola_coeffs


def make(alpha=0.75, beta=0.5, n_modes=8, kind="linear", params=()):
    return EvolutionProblem(PsiFunction(kind, params, 0.0, 1.0), FracOrder(alpha, beta), n_modes)


def constant_profile_coeffs(c, n_modes):
    """Sine coefficients of the constant function c on (0, pi)."""
    n = np.arange(1, n_modes + 1)
    return c * math.sqrt(2 / math.pi) * (1 - (-1.0) ** n) / n


@pytest.mark.parametrize("strategy,shift", [("lower", -0.5), ("upper", 0.5), ("midpoint", 0.0)])
def test_selection_of_default_multimap(strategy, shift):
    q = SpectralState(np.array([0.8, -0.3, 0.1, 0, 0, 0, 0, 0]))
    f = evaluate_selection(MultimapSpec.default(), strategy, 0.5, q)
    # r = <e1, q> = q_1, and the selection is the constant arctan(r) + shift
    np.testing.assert_allclose(f.coeffs, constant_profile_coeffs(math.atan(0.8) + shift, 8), atol=1e-13)


def test_switch_branches_and_tie():
    spec = MultimapSpec.default()
    for r, shift in ((-0.4, -0.5), (0.4, 0.5), (0.0, 0.5)):
        q = SpectralState.mode(1, 8, r)
        f = evaluate_selection(spec, "switch", 0.1, q)
        np.testing.assert_allclose(f.coeffs, constant_profile_coeffs(math.atan(r) + shift, 8), atol=1e-13)


def test_envelope_order_violation():
    bad = MultimapSpec(f1=lambda xi, r: 1.0 + 0 * r, f2=lambda xi, r: 0.0 * r, phi=np.sin, K1=1.0)
    with pytest.raises(EnvelopeError):
        evaluate_selection(bad, "midpoint", 0.2, SpectralState.mode(1, 4))
    with pytest.raises(ValueError):
        evaluate_selection(MultimapSpec.default(), "random", 0.2, SpectralState.mode(1, 4))


def test_validate_checks_K1():
    spec = MultimapSpec.default()
    spec.validate()
    spec.K1 = 1.0
    with pytest.raises(EnvelopeError):
        spec.validate()


def test_zero_multimap_is_linear_problem():
    pr = make()
    grid = default_grid(pr, 81)
    x1 = SpectralState(parabola_coeffs(8))
    res = fixed_point_solve(pr, MultimapSpec.zero(), "midpoint", x1, 0.05, grid=grid)
    assert res.iterations == 1 and res.converged
    gram = linctl.gramian(pr)
    defect = linctl.target_defect(pr, None, x1, grid)
    expect = x1 + linctl.endpoint_error_closed_form(0.05, defect, gram)
    np.testing.assert_allclose(res.trajectory.endpoint().coeffs, expect.coeffs, atol=1e-12)


def test_constant_multimap_is_forced_linear_problem():
    pr = make()
    grid = default_grid(pr, 81)
    x1 = SpectralState.zeros(8)
    g = lambda xi: 0.3 * np.cos(xi)
    res = fixed_point_solve(pr, MultimapSpec.constant(g), "upper", x1, 0.1, grid=grid)
    assert res.converged and res.iterations <= 2
    gc = SpectralState.from_function(g, 8).coeffs
    forcing = lambda s: np.broadcast_to(gc, np.shape(s) + (8,))
    rep = linctl.eps_sweep(pr, forcing, x1, (0.1,), grid)
    np.testing.assert_allclose((res.trajectory.endpoint() - x1).norm(), rep.column("endpoint_miss")[0], atol=1e-10)


@pytest.mark.parametrize("strategy", ["midpoint", "switch"])
def test_default_instance_fixed_point(strategy):
    pr = make()
    grid = default_grid(pr, 81)
    x1 = SpectralState.zeros(8)
    res = fixed_point_solve(pr, MultimapSpec.default(), strategy, x1, 0.1, grid=grid)
    assert res.converged and res.residual < 1e-8
    assert res.max_selection_ratio <= 1.0
    # the returned trajectory is the mild solution for the returned selection and control
    prop = pr.propagator(grid)
    forcing = lambda s: res.forcing_nodes if s is prop.nodes else None
    again = mild_solution(pr, forcing, res.control, grid)
    np.testing.assert_allclose(again.weighted, res.trajectory.weighted, atol=1e-13)
    # and its selection is the rule applied to that trajectory
    q_nodes = res.trajectory.interpolant(pr.psi)(prop.nodes)
    sel = inclusion.SelectionField(MultimapSpec.default(), strategy, 8)(prop.nodes, q_nodes)
    assert np.max(np.abs(sel - res.forcing_nodes)) < 1e-7


def test_damping_and_argument_checks():
    pr = make()
    with pytest.raises(ValueError):
        fixed_point_solve(pr, MultimapSpec.default(), "midpoint", SpectralState.zeros(8), 0.0)
    with pytest.raises(ValueError):
        fixed_point_solve(pr, MultimapSpec.default(), "midpoint", SpectralState.zeros(8), 0.1, damping=1.5)
    grid = default_grid(pr, 41)
    half = fixed_point_solve(pr, MultimapSpec.default(), "midpoint", SpectralState.zeros(8), 0.1, damping=0.5, grid=grid)
    full = fixed_point_solve(pr, MultimapSpec.default(), "midpoint", SpectralState.zeros(8), 0.1, grid=grid)
    assert half.converged
    np.testing.assert_allclose(half.trajectory.weighted, full.trajectory.weighted, atol=1e-8)


def test_eps_sweep_monotone():
    pr = make()
    rep = inclusion.inclusion_eps_sweep(pr, MultimapSpec.default(), "midpoint", SpectralState.zeros(8),
                                        (1.0, 0.1, 0.01), grid=default_grid(pr, 61))
    miss = rep.column("endpoint_miss")
    assert miss[0] > miss[1] > miss[2]
    np.testing.assert_allclose(miss, rep.column("closed_form_miss"), rtol=1e-8)


def test_weighted_limit_check():
    pr = make(0.75, 0.5)
    assert inclusion.check_weighted_limit(pr, lambda t: np.ones(np.shape(t)))
    caputo = make(0.6, 1.0)
    blowup = lambda t: np.asarray(t, dtype=float) ** -0.9
    # Psi^(1-g) I^a t^-0.9 ~ t^(a - 0.9) grows when g = 1 and a = 0.6
    with pytest.warns(RuntimeWarning):
        assert not inclusion.check_weighted_limit(caputo, blowup, m_exp=-0.9)
    with pytest.raises(DomainError):
        inclusion.check_weighted_limit(caputo, blowup, policy="error", m_exp=-0.9)
    # a milder singularity passes: exponent 1 - g + a - 0.5 = 0.375 > 0
    assert inclusion.check_weighted_limit(pr, lambda t: np.asarray(t, dtype=float) ** -0.5, m_exp=-0.5)
