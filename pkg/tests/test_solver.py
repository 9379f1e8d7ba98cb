import math
import warnings

import numpy as np
import pytest
from scipy.stats import poisson

from zics import corpus
from zics.errors import DimensionMismatch, InvalidNetwork, SingularJacobian
from zics.moments import build_basis, generate_equations
from zics.network import ReactionNetwork
from zics.oracle import cme_stationary
from zics.solver import (
    EscalationWarning,
    SolverConfig,
    TruncationWarning,
    jacobian,
    relative_residual_norm,
    residual,
    solve_adaptive,
    solve_at_order,
)
from zics.statespace import MaxEntEvaluator, StateSpace, moments

from helpers import local_maxima

BD_SPACE = StateSpace(((0, 30),))
WIL_SPACE = StateSpace(((0, 50), (0, 40)))


def poisson2(space):
    x = np.arange(space.lows[0], space.highs[0] + 1)
    p = poisson.pmf(x, 2.0)
    return p / p.sum()


@pytest.fixture(scope="module")
def wilhelm_cme(wilhelm):
    return cme_stationary(wilhelm, WIL_SPACE)


# ---------------------------------------------------------------------------
# residual and Jacobian
# ---------------------------------------------------------------------------


def test_residual_examples(birth_death):
    eqs = generate_equations(birth_death, build_basis(1, 1))
    assert residual(eqs, [2.0], []) == pytest.approx([0.0])
    assert residual(eqs, [0.0], []) == pytest.approx([4.0])
    assert eqs.A_prime.shape == (1, 0)


def test_residual_dimension_check(birth_death):
    eqs = generate_equations(birth_death, build_basis(1, 2))
    with pytest.raises(DimensionMismatch):
        residual(eqs, [1.0], [])


def test_jacobian_uniform_example(birth_death):
    space = StateSpace(((0, 9),))
    basis = build_basis(1, 1)
    J = jacobian(space, basis, [0.0], generate_equations(birth_death, basis))
    assert J.shape == (1, 1)
    assert J[0, 0] == pytest.approx(16.5, abs=1e-12)


def test_jacobian_low_block_is_negative_covariance(wilhelm):
    rng = np.random.default_rng(4)
    space = StateSpace(((0, 15), (0, 12)))
    basis = build_basis(2, 3)
    ev = MaxEntEvaluator(space, basis)
    for _ in range(3):
        lam = rng.normal(scale=0.02, size=basis.psi)
        P, _ = ev.evaluate(lam)
        mu = ev.moments(P, list(basis.lower))
        G = ev.cross_moments(P, list(basis.lower), list(basis.lower))
        J_low = -G + np.outer(mu, mu)
        # entries are differences of raw moments, so rounding scales with |G|
        floor = 1e-14 * np.abs(G).max()
        assert np.abs(J_low - J_low.T).max() <= floor
        assert np.linalg.eigvalsh(J_low).max() <= floor * basis.psi


def central_difference(space, basis, eqs, lam, h_rel=1e-6):
    n = basis.psi
    out = np.zeros((n, n))
    for j in range(n):
        h = h_rel * max(1.0, abs(lam[j]))
        up, dn = lam.copy(), lam.copy()
        up[j] += h
        dn[j] -= h
        r_up = residual(eqs, moments(space, basis, up, basis.lower), moments(space, basis, up, eqs.basis.higher))
        r_dn = residual(eqs, moments(space, basis, dn, basis.lower), moments(space, basis, dn, eqs.basis.higher))
        out[:, j] = (r_up - r_dn) / (2 * h)
    return out


@pytest.mark.parametrize("name,order", [("birth_death", 3), ("wilhelm", 2), ("schlogl", 3)])
def test_jacobian_matches_finite_differences(name, order):
    net, _ = corpus.load(name)
    space = StateSpace(tuple((0, 12) for _ in net.species))
    basis = build_basis(net.n_species, order)
    eqs = generate_equations(net, basis)
    rng = np.random.default_rng(7)
    lam = rng.normal(scale=0.02, size=basis.psi)
    J = jacobian(space, basis, lam, eqs)
    fd = central_difference(space, basis, eqs, lam)
    assert np.abs(J - fd).max() <= 1e-5 * np.abs(J).max()


# ---------------------------------------------------------------------------
# fixed-order solves
# ---------------------------------------------------------------------------


def test_birth_death_order2_moments(birth_death):
    sol = solve_at_order(birth_death, BD_SPACE, 2)
    assert sol.order_used == 2
    assert sol.moments_lower == pytest.approx([2.0, 4.0], rel=1e-9)
    assert sol.residual_norm <= 1e-9


def test_birth_death_order2_matches_poisson(birth_death):
    sol = solve_at_order(birth_death, BD_SPACE, 2)
    tv = 0.5 * np.abs(sol.distribution.flat - poisson2(BD_SPACE)).sum()
    assert tv <= 1e-3


def test_birth_death_order4_matches_poisson(birth_death):
    sol = solve_at_order(birth_death, BD_SPACE, 4)
    tv = 0.5 * np.abs(sol.distribution.flat - poisson2(BD_SPACE)).sum()
    assert tv <= 1e-2
    assert sol.boundary_mass < 1e-10


@pytest.fixture(scope="module")
def wilhelm_order6(wilhelm):
    return solve_at_order(wilhelm, WIL_SPACE, 6)


def test_wilhelm_order6_matches_cme(wilhelm_order6, wilhelm_cme):
    sol = wilhelm_order6
    assert sol.residual_norm <= 1e-9
    for j in range(2):
        assert np.abs(sol.distribution.marginal(j) - wilhelm_cme.marginal(j)).sum() <= 0.05


@pytest.mark.parametrize("species", [0, 1])
def test_wilhelm_order6_marginals_bistable(wilhelm_order6, species):
    assert len(local_maxima(wilhelm_order6.distribution.marginal(species))) == 2


def test_order_too_high_for_space(birth_death):
    with pytest.raises(SingularJacobian):
        solve_at_order(birth_death, StateSpace(((0, 3),)), 12)


def test_invalid_network_rejected():
    net = ReactionNetwork.from_matrices([[1]], [[0]], [-1.0], ("X",))
    with pytest.raises(InvalidNetwork):
        solve_at_order(net, StateSpace(((0, 5),)), 2)


def test_space_dimension_check(wilhelm):
    with pytest.raises(DimensionMismatch):
        solve_at_order(wilhelm, BD_SPACE, 2)


def test_solution_is_rederivable(wilhelm):
    sol = solve_at_order(wilhelm, WIL_SPACE, 4)
    ev = MaxEntEvaluator(WIL_SPACE, sol.basis)
    P, lam0 = ev.evaluate(sol.lambdas)
    assert 0.5 * np.abs(P - sol.distribution.flat).sum() <= 1e-12
    mu = ev.moments(P, list(sol.basis.lower))
    mu_h = ev.moments(P, list(sol.basis.higher))
    assert abs(relative_residual_norm(sol.equations, mu, mu_h) - sol.residual_norm) <= 1e-12
    assert sol.residual_norm <= 1e-9


def test_warm_start_converges_immediately(wilhelm):
    sol = solve_at_order(wilhelm, WIL_SPACE, 4)
    again = solve_at_order(wilhelm, WIL_SPACE, 4, warm=sol.lambdas)
    assert again.iterations <= 2
    assert again.distribution.l1(sol.distribution) <= 1e-9


def test_warm_start_from_lower_order_is_padded(wilhelm):
    low = solve_at_order(wilhelm, WIL_SPACE, 2)
    high = solve_at_order(wilhelm, WIL_SPACE, 3, warm=low.lambdas)
    assert high.order_used == 3 and high.residual_norm <= 1e-9
    with pytest.raises(DimensionMismatch):
        solve_at_order(wilhelm, WIL_SPACE, 2, warm=high.lambdas)


def test_superlinear_convergence(wilhelm):
    sol = solve_at_order(wilhelm, WIL_SPACE, 4)
    h = [v for v in sol.residual_history if v > 0]
    assert len(h) >= 3
    # the last three residuals shrink by more than half each time
    assert h[-1] / h[-2] < 0.5 and h[-2] / h[-3] < 0.5


def test_truncation_warning():
    net = ReactionNetwork.from_matrices([[0], [1]], [[1], [0]], [4.0, 2.0], ("X",))
    with pytest.warns(TruncationWarning):
        sol = solve_at_order(net, StateSpace(((0, 4),)), 2)
    assert sol.boundary_mass > 1e-3 and sol.warnings


# ---------------------------------------------------------------------------
# adaptive escalation
# ---------------------------------------------------------------------------


def test_birth_death_adaptive_terminates_early(birth_death):
    sol = solve_adaptive(birth_death, BD_SPACE, SolverConfig(max_order=8))
    assert sol.order_used <= 4


def test_wilhelm_adaptive_history(wilhelm):
    sol = solve_adaptive(wilhelm, WIL_SPACE, SolverConfig(max_order=8))
    hist = sol.per_order_history
    assert hist[0].order == 2 and hist[0].l1_step is None
    assert [r.order for r in hist] == list(range(2, sol.order_used + 1))
    steps = [r.l1_step for r in hist[1:]]
    assert sol.order_used <= 8
    assert steps[-1] < steps[0]
    assert all(r.residual_norm <= 1e-9 for r in hist)


def test_forced_escalation_records_every_order(birth_death):
    sol = solve_adaptive(birth_death, BD_SPACE, SolverConfig(max_order=3, initial_order=1, adaptive=False))
    assert [r.order for r in sol.per_order_history] == [1, 2, 3]
    assert sol.order_used == 3


def test_adaptive_stops_on_small_step(birth_death):
    sol = solve_adaptive(birth_death, BD_SPACE, SolverConfig(max_order=8, order_escalation_tol=0.05))
    assert sol.per_order_history[-1].l1_step < 0.05
    assert all(r.l1_step >= 0.05 for r in sol.per_order_history[1:-1])


def test_escalation_failure_keeps_previous_order(birth_death):
    # on four states the order-3 system is already singular
    with pytest.warns(EscalationWarning):
        sol = solve_adaptive(birth_death, StateSpace(((0, 3),)), SolverConfig(max_order=5, adaptive=False))
    assert sol.escalation_failed and sol.order_used == 2
    assert [r.order for r in sol.per_order_history] == [2]
    assert any("order 3 failed" in w for w in sol.warnings)


def test_adaptive_warm_start(wilhelm):
    first = solve_adaptive(wilhelm, WIL_SPACE, SolverConfig(max_order=4, adaptive=False))
    again = solve_adaptive(wilhelm, WIL_SPACE, SolverConfig(max_order=4, initial_lambdas=first.lambdas))
    assert again.per_order_history[0].order == 4
    assert again.iterations <= 2


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(max_order=1),
        dict(max_order=3, initial_order=4),
        dict(initial_order=0),
        dict(residual_tol=0),
        dict(order_escalation_tol=-1),
        dict(max_newton_iters=0),
        dict(nonmonotone_window=0),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_boundary_mass_and_space_independence(birth_death):
    base = solve_adaptive(birth_death, BD_SPACE, SolverConfig(max_order=8))
    big = solve_adaptive(birth_death, StateSpace(((0, 40),)), SolverConfig(max_order=8))
    assert base.boundary_mass < 1e-10
    n = min(base.moments_lower.size, big.moments_lower.size)
    assert np.allclose(base.moments_lower[:n], big.moments_lower[:n], rtol=1e-8, atol=0)
