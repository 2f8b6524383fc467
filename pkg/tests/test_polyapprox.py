import math

import numpy as np
import pytest

from oracles import naive_power_sum
from qesscher.errors import BoundViolationError, DomainError
from qesscher.polyapprox import (
    GRID_POINTS,
    BoundedPolynomial,
    TaylorSpec,
    bounded_approximation,
    evaluate,
    exp_polynomial,
    exp_spec,
    log_polynomial,
    log_spec,
    rescale_for_qet,
    truncate,
    truncation_degree,
)


def fresh_grid(lo, hi):
    return np.linspace(lo, hi, GRID_POINTS)


def test_constant_series():
    spec = TaylorSpec(0.0, 1.0, 0.5, 2.0, lambda l: 0.7 if l == 0 else 0.0,
                      lambda x: 0.7 * np.ones_like(x), tail=lambda d, R: 0.0)
    p = truncate(spec, 1e-6)
    assert p.degree == 0 and p.eps_poly == 0.0


def test_geometric_tail_exact_degree():
    q = 0.5
    spec = TaylorSpec(0.0, 1.0, 0.5, 1.0 / (1 - 1.5 * q), lambda l: q**l,
                      lambda x: 1.0 / (1 - q * np.asarray(x)),
                      tail=lambda d, R: (R * q) ** (d + 1) / (1 - R * q))
    eps = 1e-6
    # closed form: smallest d with 0.5^{d+1} / 0.5 <= 1e-6, i.e. d = 20
    d_exact = math.ceil(math.log(eps * (1 - q)) / math.log(q)) - 1
    assert truncation_degree(spec, eps) == d_exact == 20
    p = truncate(spec, 1e-6)
    assert p.eps_poly <= p.tail_bound <= eps


def test_spec_invariants_enforced():
    with pytest.raises(Exception):
        TaylorSpec(2.0, 1.0, 0.5, 1.0, lambda l: 0.0, np.zeros_like)
    with pytest.raises(BoundViolationError):
        # sum (r + delta)^l q^l = 1 / (1 - 0.75) = 4 > B = 2
        TaylorSpec(0.0, 1.0, 0.5, 2.0, lambda l: 0.5**l, lambda x: x)


def test_eps_range_guard():
    with pytest.raises(DomainError):
        truncate(log_spec(2.0), 0.5)  # B = ln 4, so eps must be <= 1/(2 ln 4)


def test_log_spec_paper_constants():
    s = log_spec(2.0)
    assert s.B == pytest.approx(1.3862943611198906)  # ln 4
    assert s.r == 0.5 and s.delta == 0.25 and s.x0 == 1.0


@pytest.mark.parametrize("kappa", [2.0, 4.0, 16.0])
def test_log_series_sum_closed_form(kappa):
    s = log_spec(kappa)
    total = s.series_sum(s.r + s.delta)
    assert abs(total - (-math.log(1.0 / (2 * kappa)))) <= 1e-9


def test_log_truncation_grid_error():
    p = truncate(log_spec(2.0), 1e-6)
    xs = fresh_grid(0.5, 1.5)
    assert np.max(np.abs(evaluate(p, xs) - np.log(xs))) <= 1e-6
    assert p.eps_poly <= p.tail_bound


@pytest.mark.parametrize("kappa", [2.0, 4.0, 16.0])
def test_tail_bound_dominates_grid_error(kappa):
    p = truncate(log_spec(kappa), 1e-6)
    assert p.eps_poly <= p.tail_bound <= 1e-6


@pytest.mark.parametrize("alpha", [1.0, 4.0])
def test_exp_tail_bound_dominates_grid_error(alpha):
    p = truncate(exp_spec(alpha), 1e-8)
    # all coefficients are positive, so the bound is attained at the right window edge;
    # allow for summation rounding only
    assert p.eps_poly <= p.tail_bound * (1 + 1e-6) and p.tail_bound <= 1e-8


@pytest.mark.parametrize("kappa,eps", [(2.0, 1e-4), (4.0, 1e-6), (16.0, 1e-8)])
def test_log_polynomial_bounded_and_accurate(kappa, eps):
    p = log_polynomial(kappa, eps)
    xs = fresh_grid(1 / kappa, 1.0)
    assert np.max(np.abs(evaluate(p, xs) - np.log(xs))) <= eps
    ys = evaluate(p, fresh_grid(-1.0, 1.0))
    assert np.max(np.abs(ys)) <= 1 + math.log(2 * kappa) + 1e-9
    assert p.within_bound


def test_log_degree_golden_values():
    # regression values of the windowed construction (deterministic)
    assert log_polynomial(2.0, 1e-4).degree == 220
    assert log_polynomial(4.0, 1e-8).degree == 1048
    assert log_polynomial(16.0, 1e-11).degree == 6138


def test_exp_endpoints():
    alpha = 2.0
    p = exp_polynomial(alpha, 1e-8)
    assert abs(evaluate(p, 1.0) - 1.0) <= 1e-8
    assert abs(evaluate(p, -1.0) - math.exp(-2 * alpha)) <= 1e-8


def test_exp_degrees_monotone_in_alpha():
    degs = [exp_polynomial(a, 1e-6).degree for a in (1.0, 2.0, 4.0, 8.0)]
    assert degs == sorted(degs) and degs[0] < degs[-1]


@pytest.mark.parametrize("alpha", [1.0, 2.0, 4.0])
def test_exp_grid_error(alpha):
    p = exp_polynomial(alpha, 1e-6)
    xs = fresh_grid(-1.0, 1.0)
    assert np.max(np.abs(evaluate(p, xs) - np.exp(alpha * xs - alpha))) <= 1e-6


def test_eval_degree_zero_and_centre():
    p = BoundedPolynomial(np.array([2.5]), "taylor", 0.3, 0.0, 2.5, (-1, 1), 1.0)
    assert evaluate(p, 0.9) == 2.5
    q = BoundedPolynomial(np.array([1.25, -3.0, 0.5]), "taylor", 0.3, 0.0, 0.0, (-1, 1), 1.0)
    assert evaluate(q, 0.3) == 1.25


def test_eval_matches_naive_power_sum():
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = rng.standard_normal(rng.integers(1, 12))
        x0 = rng.uniform(-1, 1)
        p = BoundedPolynomial(c, "taylor", x0, 0.0, 0.0, (-1, 1), 1.0)
        xs = rng.uniform(-1, 1, 50)
        assert np.max(np.abs(evaluate(p, xs) - naive_power_sum(c, x0, xs))) <= 1e-12


def test_rescale_exact_scaling():
    p = BoundedPolynomial(np.array([0.0, 2.0]), "taylor", 0.0, 0.0, 2.0, (-1, 1), 1.0)
    q = rescale_for_qet(p, 1.0)  # sup 1 + B = 2 -> 1/2
    assert q.sup_bound == pytest.approx(0.5)


def test_rescale_log_polynomial():
    p = log_polynomial(2.0, 1e-6)
    q = rescale_for_qet(p, math.log(4.0))
    assert np.max(np.abs(evaluate(q, fresh_grid(-1, 1)))) <= 0.5


def test_rescale_zero_polynomial():
    z = BoundedPolynomial(np.zeros(3), "taylor", 0.0, 0.0, 0.0, (-1, 1), 1.0)
    assert np.all(evaluate(rescale_for_qet(z, 1.0), fresh_grid(-1, 1)) == 0)


def test_rescale_rejects_loose_bound():
    p = BoundedPolynomial(np.array([0.0, 3.0]), "taylor", 0.0, 0.0, 3.0, (-1, 1), 0.2)
    with pytest.raises(BoundViolationError):
        rescale_for_qet(p, 0.2)


def test_plain_log_truncation_is_unbounded_outside_window():
    # motivates the windowed construction: the raw series blows up near -1
    p = truncate(log_spec(4.0), 1e-6)
    assert abs(evaluate(p, -1.0)) > 1 + math.log(8.0)
    assert bounded_approximation(log_spec(4.0), 1e-6).within_bound
