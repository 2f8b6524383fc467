import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import primal_min_relative_entropy
from qesscher.classical import (
    ClassicalEsscherProblem,
    ClassicalEsscherSolution,
    FiniteDistribution,
    dual_objective,
    esscher_transform,
    relative_entropy,
    solve_lambda,
    verify_duality,
)
from qesscher.errors import ContractError, InfeasibleError, NonConvergenceError
from qesscher.instances import classical_instance

LN3 = 1.0986122886681098  # closed form ln 3
BERNOULLI = dict(P=[0.5, 0.5], X=[[0.0], [1.0]])


def test_transform_theta_zero():
    P = [0.2, 0.3, 0.5]
    assert np.allclose(esscher_transform(P, [[1.0], [2.0], [3.0]], [0.0]).weights, P)


def test_transform_bernoulli_ln3():
    q = esscher_transform(BERNOULLI["P"], BERNOULLI["X"], [math.log(3)]).weights
    assert np.allclose(q, [0.25, 0.75], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_group_law(seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(5))
    X = rng.standard_normal((5, 2))
    th, ph = rng.standard_normal(2), rng.standard_normal(2)
    two = esscher_transform(esscher_transform(P, X, th), X, ph).weights
    one = esscher_transform(P, X, th + ph).weights
    assert np.max(np.abs(two - one)) <= 1e-12
    assert abs(one.sum() - 1) <= 1e-12 and np.all(one >= 0)


def test_transform_survives_large_theta():
    q = esscher_transform([0.5, 0.5], [[0.0], [1.0]], [700.0]).weights
    assert q[1] == pytest.approx(1.0)


def test_relative_entropy_examples():
    P = FiniteDistribution([0.5, 0.5])
    assert relative_entropy(P, P) == 0.0
    assert relative_entropy([1.0, 0.0], P) == pytest.approx(math.log(2))
    assert relative_entropy([0.5, 0.5], [1.0, 0.0]) == math.inf


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relative_entropy_nonnegative(seed):
    rng = np.random.default_rng(seed)
    P, Q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
    assert relative_entropy(Q, P) >= 0
    assert abs(relative_entropy(P, P)) <= 1e-12


def test_dual_at_zero():
    P, X, m = [0.2, 0.8], [[1.0], [3.0]], [2.0]
    val, g = dual_objective(P, X, m, [0.0])
    assert val == pytest.approx(0.0, abs=1e-15)
    assert g == pytest.approx([2.0 - 2.6])


def test_dual_gradient_bernoulli_zero():
    _, g = dual_objective(**BERNOULLI, m=[0.75], lam=[math.log(3)])
    assert abs(g[0]) <= 1e-15


def test_dual_gradient_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(20):
        P = rng.dirichlet(np.ones(6))
        X = rng.standard_normal((6, 3))
        m = rng.standard_normal(3) * 0.2
        lam = rng.standard_normal(3)
        _, g = dual_objective(P, X, m, lam)
        h = 1e-6
        fd = np.array([(dual_objective(P, X, m, lam + h * e)[0] - dual_objective(P, X, m, lam - h * e)[0]) / (2 * h)
                       for e in np.eye(3)])
        assert np.max(np.abs(fd - g)) <= 1e-6


def test_dual_concave_midpoint():
    rng = np.random.default_rng(12)
    P = rng.dirichlet(np.ones(5))
    X = rng.standard_normal((5, 2))
    m = np.zeros(2)
    for _ in range(50):
        a, b = rng.standard_normal(2) * 3, rng.standard_normal(2) * 3
        mid = dual_objective(P, X, m, (a + b) / 2)[0]
        avg = (dual_objective(P, X, m, a)[0] + dual_objective(P, X, m, b)[0]) / 2
        assert mid >= avg - 1e-10


def test_solve_pre_satisfied():
    P = np.array([0.1, 0.2, 0.3, 0.4])
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    sol = solve_lambda(ClassicalEsscherProblem(P, X, P @ X))
    assert np.allclose(sol.lambda_star, 0.0, atol=1e-12)
    assert np.allclose(sol.Q_star.weights, P)


@pytest.mark.parametrize("method", ["gradient", "newton"])
def test_solve_bernoulli_closed_form(method):
    prob = ClassicalEsscherProblem(m=[0.75], **BERNOULLI)
    sol = solve_lambda(prob, method=method)
    assert sol.lambda_star[0] == pytest.approx(LN3, abs=1e-9)
    gap, res = verify_duality(sol, prob)
    assert abs(gap) <= 1e-10 and np.all(np.abs(res) <= 1e-9)


def test_gap_at_exact_closed_form():
    prob = ClassicalEsscherProblem(m=[0.75], **BERNOULLI)
    lam = np.array([math.log(3)])
    Q = esscher_transform(prob.P, prob.X, lam)
    val, g = dual_objective(prob.P, prob.X, prob.m, lam)
    exact = ClassicalEsscherSolution(lam, Q, val, relative_entropy(Q, prob.P), float(abs(g[0])), 0, g)
    gap, _ = verify_duality(exact, prob)
    assert abs(gap) <= 1e-12


def test_solve_random_matches_primal_oracle():
    inst = classical_instance(42, omega=6, d=2)
    prob = ClassicalEsscherProblem(inst["P"], inst["X"], inst["m"])
    sol = solve_lambda(prob)
    gap, res = verify_duality(sol, prob)
    assert abs(gap) <= 1e-8
    f, Q = primal_min_relative_entropy(inst["P"], inst["X"], inst["m"])
    assert abs(f - sol.primal_value) <= 1e-8
    assert np.max(np.abs(Q - sol.Q_star.weights)) <= 1e-6


def test_verify_duality_perturbed_gap_positive():
    inst = classical_instance(3, omega=6, d=2)
    prob = ClassicalEsscherProblem(inst["P"], inst["X"], inst["m"])
    sol = solve_lambda(prob)
    gap, _ = verify_duality(sol, prob)
    assert -1e-10 <= gap <= 1e-8
    val, _ = dual_objective(prob.P, prob.X, prob.m, sol.lambda_star + 0.1)
    assert sol.primal_value - val > 0


def test_zero_atoms_dropped():
    inst = classical_instance(5, omega=7, d=2, zero_atoms=2)
    prob = ClassicalEsscherProblem(inst["P"], inst["X"], inst["m"])
    sol = solve_lambda(prob)
    assert sol.diagnostics["dropped_atoms"] == [5, 6]
    assert np.all(sol.Q_star.weights[5:] == 0)
    assert np.all(np.abs(sol.residuals) <= 1e-9)


def test_beats_feasible_distributions():
    inst = classical_instance(9, omega=6, d=1)
    prob = ClassicalEsscherProblem(inst["P"], inst["X"], inst["m"])
    sol = solve_lambda(prob)
    rng = np.random.default_rng(0)
    X = inst["X"][:, 0]
    base = sol.Q_star.weights
    # move along directions that preserve mass and the moment
    A = np.vstack([np.ones(6), X])
    Nsp = np.linalg.svd(A)[2][2:].T
    for _ in range(100):
        Q = base + 0.05 * Nsp @ rng.standard_normal(Nsp.shape[1])
        if np.all(Q >= 0):
            assert relative_entropy(Q, inst["P"]) >= sol.primal_value - 1e-8


def test_infeasible_targets():
    with pytest.raises(InfeasibleError):
        ClassicalEsscherProblem(m=[1.0], **BERNOULLI)
    with pytest.raises(InfeasibleError):
        ClassicalEsscherProblem([0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])


def test_bad_distribution():
    with pytest.raises(ContractError):
        FiniteDistribution([0.5, 0.6])
    with pytest.raises(ContractError):
        FiniteDistribution([1.2, -0.2])


def test_iteration_cap_reports_residual():
    inst = classical_instance(1, omega=6, d=2)
    prob = ClassicalEsscherProblem(inst["P"], inst["X"], inst["m"])
    with pytest.raises(NonConvergenceError) as ei:
        solve_lambda(prob, max_iter=1)
    assert ei.value.residual > 0


def test_auto_method_rescues_ill_conditioned_dual():
    # |Omega| = d + 1: a single feasible Q, and a badly conditioned dual
    inst = classical_instance(1095, omega=4, d=3)
    prob = ClassicalEsscherProblem(inst["P"], inst["X"], inst["m"])
    with pytest.raises(NonConvergenceError):
        solve_lambda(prob, method="gradient", max_iter=2000)
    sol = solve_lambda(prob)
    assert sol.diagnostics["newton_steps"]
    gap, res = verify_duality(sol, prob)
    assert abs(gap) <= 1e-8 and np.max(np.abs(res)) <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pushforward_of_tilt_is_tilt_of_pushforward(seed):
    # X takes repeated values, so its law P_X lives on fewer points than Omega
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(8))
    values = rng.standard_normal((3, 2))
    labels = rng.integers(0, 3, size=8)
    labels[:3] = [0, 1, 2]
    X = values[labels]
    th = rng.standard_normal(2)
    Q = esscher_transform(P, X, th).weights
    Q_X = np.bincount(labels, weights=Q, minlength=3)
    P_X = np.bincount(labels, weights=P, minlength=3)
    assert np.max(np.abs(Q_X - esscher_transform(P_X, values, th).weights)) <= 1e-12
