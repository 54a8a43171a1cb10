from __future__ import annotations

import math

import numpy as np
import pytest

from hilferctl import linctl
from hilferctl.psicalc import FracOrder, PsiFunction
from hilferctl.spectral import ControlFunction, EvolutionProblem, SpectralState, default_grid, mild_solution, parabola_coeffs


def make(alpha=0.75, beta=0.5, kind="linear", params=(), n_modes=8, gain=None):
    return EvolutionProblem(PsiFunction(kind, params, 0.0, 1.0), FracOrder(alpha, beta), n_modes, None, gain)


@pytest.mark.parametrize("alpha,kind,params", [(0.6, "linear", ()), (0.75, "power", (2.0,)), (0.9, "logarithmic", (1.0,))])
def test_gramian_matches_adaptive_reference(alpha, kind, params):
    pr = make(alpha, kind=kind, params=params)
    fast = linctl.gramian(pr).entries
    ref = [linctl.gramian_mode(pr, n) for n in (0, 3, 7)]
    np.testing.assert_allclose(fast[[0, 3, 7]], ref, rtol=1e-9)


def test_gramian_heat_closed_form_and_gain():
    gain = np.linspace(0.0, 2.0, 8)
    pr = make(1.0, 0.0, gain=gain)
    lam = pr.rates
    np.testing.assert_allclose(linctl.gramian(pr).entries, gain**2 * (1 - np.exp(-2 * lam)) / (2 * lam), rtol=1e-13)


def test_gramian_positive_and_decreasing():
    r = linctl.gramian(make(0.75, n_modes=32)).entries
    assert np.all(r > 0)
    assert np.all(np.diff(r) < 0)


def test_truncated_probe_diverges_only_at_half():
    cut = [1e-2, 1e-4, 1e-6]
    half = linctl.truncated_gramian_probe(0.5, 1.0, 1.0, cut)
    above = linctl.truncated_gramian_probe(0.75, 1.0, 1.0, cut)
    # near d = 0 the integrand is d^(-1) E_{1/2,1/2}(0)^2 = 1/(pi d): each
    # two decades of cutoff add log(100)/pi
    np.testing.assert_allclose(np.diff(half)[-1], math.log(100) / math.pi, rtol=2e-2)
    # above 1/2 the increments shrink like delta^(2 alpha - 1)
    steps = np.diff(above)
    np.testing.assert_allclose(steps[1] / steps[0], 0.1, rtol=5e-2)


def test_resolvent_and_closed_form_miss():
    gram = linctl.GramianDiag(np.array([1.0, 0.1, 0.01]), 1.0)
    x = SpectralState(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(gram.resolvent(0.5, x).coeffs, [1 / 1.5, 2 / 0.6, 3 / 0.51])
    np.testing.assert_allclose(linctl.endpoint_error_closed_form(0.5, x, gram).coeffs, [-1 / 3, -2 / 1.2, -3 / 1.02])
    with pytest.raises(ValueError):
        linctl.endpoint_error_closed_form(0.0, x, gram)


@pytest.mark.parametrize("kind,params", [("linear", ()), ("power", (2.0,))])
def test_sweep_simulation_matches_closed_form_with_forcing(kind, params):
    pr = make(0.7, kind=kind, params=params)
    forcing = lambda s: np.outer(np.cos(np.asarray(s)), 1.0 / np.arange(1, 9))
    x1 = SpectralState(parabola_coeffs(8))
    rep = linctl.eps_sweep(pr, forcing, x1, (1.0, 0.1, 0.001))
    assert max(rep.column("max_mode_gap")) < 1e-9
    miss = rep.column("endpoint_miss")
    assert miss[0] > miss[1] > miss[2]
    energy = rep.column("energy")
    assert energy[0] < energy[1] < energy[2]


def test_energy_matches_trapezoid_for_regular_control():
    pr = make(1.0, 0.0)
    grid = np.linspace(0.0, 1.0, 4001)
    gram = linctl.gramian(pr)
    defect = linctl.target_defect(pr, None, SpectralState(parabola_coeffs(8)), grid)
    u = linctl.synthesize_control(pr, 0.1, defect, gram, grid)
    trap = float(np.trapezoid(np.sum(u.values**2, axis=1), grid))
    np.testing.assert_allclose(u.energy, trap, rtol=1e-6)


def test_singular_control_flags_endpoint():
    pr = make(0.75)
    gram = linctl.gramian(pr)
    u = linctl.synthesize_control(pr, 0.1, SpectralState.mode(1, 8), gram)
    assert u.singular_at_b and np.all(np.isnan(u.values[-1]))
    assert np.all(np.isfinite(u.values[:-1]))
    np.testing.assert_allclose(u.energy, (1 / (0.1 + gram.entries[0])) ** 2 * gram.entries[0])


def test_eps_list_validation():
    with pytest.raises(ValueError):
        linctl.eps_sweep(make(), None, SpectralState.zeros(8), (0.1, 1.0))


@pytest.mark.parametrize("alpha", [0.6, 1.0])
@pytest.mark.parametrize("kind,params", [("linear", ()), ("power", (2.0,))])
def test_rho_witness_reproduces_target(alpha, kind, params):
    pr = make(alpha, kind=kind, params=params)
    xi = SpectralState(np.array([1.0, -0.5, 0.25, 0, 0, 0, 0, 0.1]))
    assert linctl.verify_L_rho(pr, xi) < 1e-10
    # the other reading of the derivative does not close the identity
    assert linctl.verify_L_rho(pr, xi, convention="time-chain-rule") > 0.1


def test_rho_witness_shorter_horizon():
    pr = make(0.75)
    xi = SpectralState.mode(2, 8)
    assert linctl.verify_L_rho(pr, xi, T=0.6) < 1e-8
    with pytest.raises(ValueError):
        linctl.rho_witness(pr, xi, convention="other")


def test_optimal_control_coefficients():
    pr = make(0.75)
    grid = default_grid(pr)
    x_b = SpectralState(parabola_coeffs(8))
    lam = 0.05
    res = linctl.optimal_control_quadratic(pr, lam, x_b, grid)
    r = linctl.gramian(pr).entries
    gap = res.target_gap.coeffs
    # q(b) = S x0 + R c with c = gap / (lam + r)
    np.testing.assert_allclose(res.trajectory.endpoint().coeffs, (x_b.coeffs - gap) + r * gap / (lam + r), atol=1e-12)
    np.testing.assert_allclose(res.energy, np.sum(r * (gap / (lam + r)) ** 2), rtol=1e-14)
    np.testing.assert_allclose(res.cost, res.miss**2 + lam * res.energy)
    with pytest.raises(ValueError):
        linctl.optimal_control_quadratic(pr, 0.0, x_b, grid)


def test_perturbed_cost_cross_term_regular_case():
    # for alpha = 1 the control is smooth, so <u, w> can be sampled directly
    pr = make(1.0, 0.0)
    grid = np.linspace(0.0, 1.0, 2001)
    x_b = SpectralState(parabola_coeffs(8))
    lam = 0.1
    res = linctl.optimal_control_quadratic(pr, lam, x_b, grid)
    w = linctl.random_unit_control(pr, grid, np.random.default_rng(5))
    delta = 0.3
    v = res.control.values + delta * w.values
    traj = mild_solution(pr, None, ControlFunction(grid, v), grid)
    direct = (traj.endpoint() - x_b).norm() ** 2 + lam * float(np.trapezoid(np.sum(v**2, axis=1), grid))
    np.testing.assert_allclose(linctl.perturbed_cost(pr, res, w, delta, lam, x_b, grid), direct, rtol=1e-5)
    np.testing.assert_allclose(linctl.perturbed_cost(pr, res, w, 0.0, lam, x_b, grid), res.cost, rtol=1e-12)


def test_random_unit_control_is_unit():
    pr = make(0.75)
    grid = np.linspace(0.0, 1.0, 4001)
    w = linctl.random_unit_control(pr, grid, np.random.default_rng(2))
    np.testing.assert_allclose(float(np.trapezoid(np.sum(w.values**2, axis=1), grid)), 1.0, rtol=1e-6)
    assert w.energy == 1.0


def test_first_variation_nonnegative():
    pr = make(0.75)
    grid = default_grid(pr, 101)
    x_b = SpectralState(parabola_coeffs(8))
    lam = 1e-2
    res = linctl.optimal_control_quadratic(pr, lam, x_b, grid)
    rng = np.random.default_rng(1)
    for _ in range(5):
        w = linctl.random_unit_control(pr, grid, rng)
        for d in (1e-3, -1e-3):
            assert linctl.perturbed_cost(pr, res, w, d, lam, x_b, grid) >= res.cost - 1e-10
