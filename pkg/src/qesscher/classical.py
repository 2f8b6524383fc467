"""Classical Esscher transform and the moment-constrained entropy minimiser.

Given a finite distribution ``P`` and a random vector ``X``, the Q closest to
``P`` in relative entropy subject to ``E_Q[X] = m`` is the Esscher transform
``P_lambda`` at the maximiser of the concave dual
``lambda . m - log E_P[exp(lambda . X)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, InfeasibleError, NonConvergenceError, RangeError

DEFAULT_TOL = 1e-9
MAX_ITER = 10_000
# 'auto' runs gradient ascent and switches to Newton steps after this many iterations
AUTO_SWITCH = 200
METHODS = ("auto", "gradient", "newton")


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise ContractError("distribution weights must be finite and non-empty")
        if np.any(w < 0):
            raise ContractError(f"negative probability {w.min():.3e}")
        s = w.sum()
        if abs(s - 1.0) > 1e-9:
            raise ContractError(f"weights sum to {s:.12g}, expected 1")
        w = w / s
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.weights > 0))


@dataclass(frozen=True, eq=False)
class RandomVector:
    """Values ``X(omega)``; row ``omega`` is a point of ``R^d``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise ContractError("random vector must be a finite |Omega| x d array")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _as_dist(P) -> FiniteDistribution:
    return P if isinstance(P, FiniteDistribution) else FiniteDistribution(np.asarray(P, dtype=float))


def _as_rv(X) -> RandomVector:
    return X if isinstance(X, RandomVector) else RandomVector(np.asarray(X, dtype=float))


@dataclass(frozen=True, eq=False)
class ClassicalEsscherProblem:
    P: FiniteDistribution
    X: RandomVector
    m: np.ndarray

    def __post_init__(self):
        P, X = _as_dist(self.P), _as_rv(self.X)
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "m", m)
        if X.values.shape[0] != P.size:
            raise ContractError(f"X has {X.values.shape[0]} rows, P has {P.size} atoms")
        if m.size != X.d:
            raise ContractError(f"{m.size} targets for a {X.d}-dimensional X")
        keep = P.weights > 0
        vals = X.values[keep]
        lo, hi = vals.min(axis=0), vals.max(axis=0)
        bad = np.flatnonzero(~((lo < m) & (m < hi)))
        if bad.size:
            i = int(bad[0])
            raise InfeasibleError(f"target m[{i}] = {m[i]:.6g} not strictly inside [{lo[i]:.6g}, {hi[i]:.6g}]")
        if X.d + 1 > int(keep.sum()):
            raise InfeasibleError(f"d + 1 = {X.d + 1} exceeds effective sample space size {int(keep.sum())}")


@dataclass(frozen=True, eq=False)
class ClassicalEsscherSolution:
    lambda_star: np.ndarray
    Q_star: FiniteDistribution
    dual_value: float
    primal_value: float
    gradient_norm: float
    iterations: int
    residuals: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _log_tilt(P: FiniteDistribution, X: RandomVector, theta) -> tuple[np.ndarray, float]:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    with np.errstate(divide="ignore"):
        logp = np.log(P.weights)
    z = X.values @ theta + logp
    lse = float(logsumexp(z))
    if not np.isfinite(lse):
        raise RangeError(f"log-partition overflow at |theta| = {np.linalg.norm(theta):.3e}")
    return z - lse, lse


def esscher_transform(P, X, theta) -> FiniteDistribution:
    """``P_theta(omega) = e^{theta . X(omega)} P(omega) / E_P[e^{theta . X}]``."""
    P, X = _as_dist(P), _as_rv(X)
    logq, _ = _log_tilt(P, X, theta)
    q = np.exp(logq)
    return FiniteDistribution(q / q.sum())


def relative_entropy(Q, P) -> float:
    """``D(Q || P)`` in nats; ``inf`` when ``Q`` is not absolutely continuous."""
    q, p = _as_dist(Q).weights, _as_dist(P).weights
    if q.shape != p.shape:
        raise ContractError("distributions live on different sample spaces")
    s = q > 0
    if np.any(p[s] == 0):
        return math.inf
    return float(np.sum(q[s] * (np.log(q[s]) - np.log(p[s]))))


def dual_objective(P, X, m, lam) -> tuple[float, np.ndarray]:
    """Value ``lambda . m - log E_P e^{lambda . X}`` and its gradient ``m - E_{P_lambda} X``."""
    P, X = _as_dist(P), _as_rv(X)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    m = np.atleast_1d(np.asarray(m, dtype=float))
    logq, lse = _log_tilt(P, X, lam)
    q = np.exp(logq)
    return float(lam @ m - lse), m - q @ X.values


def _covariance(q: np.ndarray, V: np.ndarray) -> np.ndarray:
    mu = q @ V
    Y = V - mu
    return (Y * q[:, None]).T @ Y


def solve_lambda(problem: ClassicalEsscherProblem, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
                 method: str = "auto") -> ClassicalEsscherSolution:
    """Maximise the dual by gradient ascent (or damped Newton) with backtracking.

    ``auto`` starts with gradient steps and falls back on Newton steps once
    ``AUTO_SWITCH`` iterations have passed, which rescues ill-conditioned
    duals (e.g. ``|Omega| = d + 1``) without changing easy cases.
    """
    if method not in METHODS:
        raise ContractError(f"unknown method {method!r}")
    keep = problem.P.weights > 0
    dropped = np.flatnonzero(~keep).tolist()
    P = FiniteDistribution(problem.P.weights[keep])
    X = RandomVector(problem.X.values[keep])
    m = problem.m
    lam = np.zeros(X.d)
    val, g = dual_objective(P, X, m, lam)
    prev_lam = prev_g = None
    it = 0
    # the duality gap at lambda equals -lambda . g, so both must be small
    while np.linalg.norm(g) > tol or abs(float(lam @ g)) > tol:
        if it >= max_iter:
            raise NonConvergenceError(f"dual ascent hit the {max_iter}-iteration cap", float(np.linalg.norm(g)), it)
        if method == "newton" or (method == "auto" and it >= AUTO_SWITCH):
            q = esscher_transform(P, X, lam).weights
            C = _covariance(q, X.values)
            try:
                direction = np.linalg.solve(C + 1e-14 * np.eye(X.d), g)
            except np.linalg.LinAlgError:
                direction = g
            step = 1.0
        else:
            direction = g
            step = 1.0
            if prev_g is not None:
                s, yv = lam - prev_lam, g - prev_g
                sy = -float(s @ yv)
                if sy > 0:
                    step = float(s @ s) / sy
        slope = float(g @ direction)
        if slope <= 0:
            direction, slope = g, float(g @ g)
        while True:
            trial = lam + step * direction
            try:
                tval, tg = dual_objective(P, X, m, trial)
            except RangeError:
                tval = -math.inf
            if tval >= val + 1e-4 * step * slope:
                break
            # near the optimum the value test drowns in rounding; fall back on the gradient
            if abs(tval - val) <= 1e-13 * max(1.0, abs(val)) and np.linalg.norm(tg) < np.linalg.norm(g):
                break
            step *= 0.5
            if step < 1e-20:
                raise NonConvergenceError("line search stalled", float(np.linalg.norm(g)), it)
        prev_lam, prev_g = lam, g
        lam, val, g = trial, tval, tg
        it += 1
    Q = esscher_transform(P, X, lam)
    qfull = np.zeros(problem.P.size)
    qfull[keep] = Q.weights
    Qf = FiniteDistribution(qfull)
    primal = relative_entropy(Qf, problem.P)
    res = qfull @ problem.X.values - m
    return ClassicalEsscherSolution(lam, Qf, val, primal, float(np.linalg.norm(g)), it, res,
                                    {"dropped_atoms": dropped, "method": method,
                                     "newton_steps": method == "newton" or (method == "auto" and it > AUTO_SWITCH)})


def verify_duality(solution: ClassicalEsscherSolution, problem: ClassicalEsscherProblem) -> tuple[float, np.ndarray]:
    """Return ``(primal - dual, E_Q[X] - m)`` re-evaluated from scratch."""
    val, _ = dual_objective(problem.P, problem.X, problem.m, solution.lambda_star)
    primal = relative_entropy(solution.Q_star, problem.P)
    res = solution.Q_star.weights @ problem.X.values - problem.m
    return primal - val, res
