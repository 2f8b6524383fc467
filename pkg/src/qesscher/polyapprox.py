"""Bounded polynomial approximations of analytic functions on [-1, 1].

A :class:`TaylorSpec` describes a power series ``f(x) = sum_l a_l (x - x0)^l``
together with the window data ``(x0, r, delta, B)``. Two constructions are
offered:

* :func:`truncate` keeps the first ``d + 1`` terms, with ``d`` chosen from an
  analytic tail bound. The result is accurate on ``[x0 - r, x0 + r]`` but can
  be huge elsewhere on ``[-1, 1]`` (the log series at ``x = -1`` grows like
  ``2^d / d``).
* :func:`bounded_approximation` multiplies the truncated series by a smooth
  erfc window that vanishes outside ``[x0 - r - delta/2, x0 + r + delta/2]``
  and re-expands the product in Chebyshev polynomials. This keeps the
  approximation error on the window and makes the polynomial small outside
  it, so the sup norm over ``[-1, 1]`` stays below ``1 + B``.

When the window already covers ``[-1, 1]`` both constructions coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.fft import dct
from scipy.special import erfc, erfcinv, gammainc, gammaln

from .errors import BoundViolationError, ContractError, DomainError, NonConvergenceError

GRID_POINTS = 10_001
DEGREE_CAP = 1_000_000
SERIES_HORIZON = 200_000
_CHEB_MAX_NODES = 1 << 20


@dataclass(frozen=True)
class TaylorSpec:
    """Power series data for a function approximated on ``[x0 - r, x0 + r]``.

    Attributes:
        x0: expansion centre in ``[-1, 1]``.
        r: half-width of the accuracy window, ``0 < r <= 2``.
        delta: margin beyond the window, ``0 < delta <= r``.
        B: bound on ``sum_l (r + delta)^l |a_l|``.
        coefficient: ``l -> a_l``.
        func: reference implementation of ``f`` (vectorised), used by the
            grid checks.
        tail: optional closed form ``(d, R) -> sum_{l > d} R^l |a_l|``.
        name: short label used in reports.
    """

    x0: float
    r: float
    delta: float
    B: float
    coefficient: Callable[[int], float]
    func: Callable[[np.ndarray], np.ndarray]
    tail: Optional[Callable[[int, float], float]] = None
    name: str = "series"

    def __post_init__(self):
        if not (-1.0 <= self.x0 <= 1.0):
            raise ContractError(f"x0 = {self.x0} outside [-1, 1]")
        if not (0.0 < self.r <= 2.0):
            raise ContractError(f"r = {self.r} outside (0, 2]")
        if not (0.0 < self.delta <= self.r):
            raise ContractError(f"delta = {self.delta} outside (0, r]")
        if not self.B > 0:
            raise ContractError(f"series bound B = {self.B} must be positive")
        total = self.series_sum(self.r + self.delta)
        if total > self.B * (1 + 1e-9) + 1e-12:
            raise BoundViolationError(
                f"series bound violated: sum (r+delta)^l |a_l| = {total:.12g} > B = {self.B:.12g}"
            )

    def coefficients(self, degree: int) -> np.ndarray:
        return np.array([self.coefficient(l) for l in range(degree + 1)], dtype=float)

    def series_sum(self, radius: float, horizon: int = SERIES_HORIZON) -> float:
        """``sum_l radius^l |a_l|`` summed until terms drop below 1e-18."""
        total = 0.0
        log_r = math.log(radius) if radius > 0 else -math.inf
        small = 0
        for l in range(horizon):
            a = abs(self.coefficient(l))
            term = 0.0 if a == 0 else math.exp(math.log(a) + l * log_r) if l else a
            total += term
            small = small + 1 if term < 1e-18 * max(total, 1.0) else 0
            if small >= 32 and l > 8:
                break
        return total

    def tail_bound(self, d: int, radius: Optional[float] = None) -> float:
        """Bound on ``sum_{l > d} radius^l |a_l|`` (default radius ``r``)."""
        R = self.r if radius is None else radius
        if self.tail is not None:
            return float(self.tail(d, R))
        full = self.series_sum(R)
        head = sum(abs(self.coefficient(l)) * R**l for l in range(d + 1))
        return max(full - head, 0.0)

    @property
    def window(self) -> tuple[float, float]:
        return (self.x0 - self.r, self.x0 + self.r)


@dataclass(frozen=True)
class BoundedPolynomial:
    """Real polynomial with its verified accuracy and sup bound.

    ``basis`` is ``"taylor"`` (coefficients of powers of ``x - x0``) or
    ``"chebyshev"`` (coefficients of ``T_k(x)``). ``scale`` records a
    rescaling: the polynomial approximates ``scale * func`` on
    ``interval`` within ``eps_poly``.
    """

    coefficients: np.ndarray
    basis: str
    x0: float
    eps_poly: float
    sup_bound: float
    interval: tuple[float, float]
    B: float
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    scale: float = 1.0
    tail_bound: float = 0.0
    name: str = "poly"
    meta: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def within_bound(self) -> bool:
        return bool(self.sup_bound <= 1 + self.B + 1e-9)

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(p: BoundedPolynomial, x):
    """Evaluate ``p`` at ``x`` (scalar or array).

    Taylor-basis polynomials use Horner's rule in ``x - x0``; Chebyshev-basis
    polynomials use Clenshaw's recurrence.
    """
    xa = np.asarray(x, dtype=float)
    if p.basis == "chebyshev":
        out = npcheb.chebval(xa, p.coefficients)
    else:
        y = xa - p.x0
        out = np.zeros_like(y)
        with np.errstate(over="ignore", invalid="ignore"):
            for a in p.coefficients[::-1]:
                out = out * y + a
    return float(out) if np.ndim(x) == 0 else out


eval = evaluate  # noqa: A001


def _cheb_points(lo: float, hi: float, count: int) -> np.ndarray:
    k = np.arange(count)
    t = np.cos(np.pi * (k + 0.5) / count)
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t


def _check_points(lo: float, hi: float, degree: int) -> np.ndarray:
    """Uniform 10001-point grid plus a Chebyshev-node refinement."""
    grid = np.linspace(lo, hi, GRID_POINTS)
    refine = _cheb_points(lo, hi, max(GRID_POINTS, 4 * degree + 1))
    return np.concatenate([grid, refine])


def _measure(p: BoundedPolynomial, func, lo: float, hi: float, scale: float = 1.0) -> tuple[float, float]:
    """Return (error on [lo, hi], sup on [-1, 1])."""
    xs = _check_points(lo, hi, p.degree)
    with np.errstate(over="ignore", invalid="ignore"):
        err = float(np.max(np.abs(evaluate(p, xs) - scale * func(xs))))
        ys = evaluate(p, _check_points(-1.0, 1.0, p.degree))
        sup = float(np.max(np.abs(ys)))
    if not np.isfinite(err):
        err = math.inf
    if not np.isfinite(sup):
        sup = math.inf
    return err, sup


def _check_eps(spec: TaylorSpec, eps: float) -> None:
    upper = 1.0 / (2.0 * spec.B) if spec.B >= 0.5 else 1.0
    if not (0.0 < eps <= upper):
        raise DomainError(f"eps = {eps} outside (0, {upper:.6g}] for series bound B = {spec.B:.6g}", value=eps)


def truncation_degree(spec: TaylorSpec, eps: float) -> int:
    """Smallest ``d`` whose analytic tail bound at radius ``r`` is ``<= eps``."""
    if spec.tail_bound(0) <= eps:
        return 0
    hi = 1
    while spec.tail_bound(hi) > eps:
        if hi >= DEGREE_CAP:
            raise NonConvergenceError(
                f"tail bound {spec.tail_bound(DEGREE_CAP):.3e} not below {eps:.3e} within degree cap {DEGREE_CAP}",
                residual=spec.tail_bound(DEGREE_CAP),
            )
        hi = min(2 * hi, DEGREE_CAP)
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if spec.tail_bound(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


def truncate(spec: TaylorSpec, eps: float) -> BoundedPolynomial:
    """Truncated Taylor series accurate to ``eps`` on ``[x0 - r, x0 + r]``."""
    _check_eps(spec, eps)
    d = truncation_degree(spec, eps)
    coeffs = spec.coefficients(d)
    lo, hi = spec.window
    p = BoundedPolynomial(coeffs, "taylor", spec.x0, 0.0, 0.0, (lo, hi), spec.B, spec.func,
                          tail_bound=spec.tail_bound(d), name=spec.name)
    err, sup = _measure(p, spec.func, lo, hi)
    if err > eps:
        raise BoundViolationError(f"truncated series error {err:.3e} exceeds eps = {eps:.3e}")
    return replace(p, eps_poly=err, sup_bound=sup)


def _window(x: np.ndarray, left: Optional[float], right: Optional[float], k: float) -> np.ndarray:
    """Smooth indicator of ``[left, right]`` with edge steepness ``k``."""
    w = np.ones_like(x)
    if left is not None:
        w = w * 0.5 * erfc(k * (left - x))
    if right is not None:
        w = w * 0.5 * erfc(k * (x - right))
    return w


def bounded_approximation(spec: TaylorSpec, eps: float) -> BoundedPolynomial:
    """Polynomial within ``eps`` of ``f`` on the window and bounded by ``1 + B``.

    Raises :class:`BoundViolationError` if the verified error or sup bound
    fails on the check grid.
    """
    _check_eps(spec, eps)
    lo_w, hi_w = spec.window
    left = lo_w - spec.delta / 4 if lo_w > -1.0 else None
    right = hi_w + spec.delta / 4 if hi_w < 1.0 else None
    lo, hi = max(lo_w, -1.0), min(hi_w, 1.0)
    if left is None and right is None:
        p = truncate(spec, eps)
        err, sup = _measure(p, spec.func, lo, hi)
        out = replace(p, eps_poly=err, sup_bound=sup, interval=(lo, hi))
    else:
        out = _windowed(spec, eps, left, right, lo, hi)
    if out.sup_bound > 1 + spec.B + 1e-9:
        raise BoundViolationError(f"polynomial sup {out.sup_bound:.6g} exceeds 1 + B = {1 + spec.B:.6g}")
    return out


def _windowed(spec, eps, left, right, lo, hi) -> BoundedPolynomial:
    T = truncate(spec, eps / 4)
    eta = eps / (4 * max(spec.B, 1.0))
    k = 4 * float(erfcinv(2 * eta)) / spec.delta

    def g(x):
        w = _window(x, left, right, k)
        with np.errstate(over="ignore", invalid="ignore"):
            t = evaluate(T, x)
        return np.where(w < 1e-290, 0.0, t * w)

    nodes = 64
    while True:
        xk = np.cos(np.pi * (np.arange(nodes) + 0.5) / nodes)
        c = dct(g(xk), type=2) / nodes
        c[0] /= 2
        if np.max(np.abs(c[-max(8, nodes // 16):])) < eps / 1e3:
            break
        nodes *= 2
        if nodes > _CHEB_MAX_NODES:
            raise NonConvergenceError("Chebyshev expansion of the windowed series did not resolve",
                                      residual=float(np.max(np.abs(c[-8:]))))
    tails = np.cumsum(np.abs(c[::-1]))[::-1]
    # smallest D whose discarded mass sum_{j > D} |c_j| is <= eps / 4
    ok = np.flatnonzero(np.append(tails[1:], 0.0) <= eps / 4)
    D = int(ok[0])
    coeffs = c[: D + 1].copy()
    p = BoundedPolynomial(coeffs, "chebyshev", spec.x0, 0.0, 0.0, (lo, hi), spec.B, spec.func,
                          tail_bound=T.tail_bound, name=spec.name,
                          meta={"taylor_degree": T.degree, "window_steepness": k, "nodes": nodes})
    err, sup = _measure(p, spec.func, lo, hi)
    if err > eps:
        raise BoundViolationError(f"windowed approximation error {err:.3e} exceeds eps = {eps:.3e}")
    return replace(p, eps_poly=err, sup_bound=sup)


def rescale_for_qet(p: BoundedPolynomial, B: float) -> BoundedPolynomial:
    """Divide ``p`` by ``2(1 + B)`` and enforce ``|P| <= 1/2`` on ``[-1, 1]``."""
    factor = 2.0 * (1.0 + B)
    q = replace(p, coefficients=p.coefficients / factor, scale=p.scale / factor,
                eps_poly=p.eps_poly / factor, sup_bound=p.sup_bound / factor, B=B)
    with np.errstate(over="ignore", invalid="ignore"):
        sup = float(np.max(np.abs(evaluate(q, _check_points(-1.0, 1.0, q.degree)))))
    if not np.isfinite(sup) or sup > 0.5 + 1e-12:
        raise BoundViolationError(f"rescaled polynomial has sup {sup:.6g} > 1/2 on [-1, 1]")
    return replace(q, sup_bound=sup)


def _log_coefficient(l: int) -> float:
    return 0.0 if l == 0 else (-1.0) ** (l + 1) / l


def log_spec(kappa: float) -> TaylorSpec:
    """Series of ``ln x`` about 1 for spectra in ``[1/kappa, 1]``."""
    if not kappa > 1:
        raise DomainError(f"kappa = {kappa} must exceed 1", value=kappa)

    def tail(d: int, R: float) -> float:
        if R >= 1:
            return math.inf
        return R ** (d + 1) / ((d + 1) * (1 - R))

    return TaylorSpec(
        x0=1.0,
        r=1.0 - 1.0 / kappa,
        delta=1.0 / (2.0 * kappa),
        B=math.log(2.0 * kappa),
        coefficient=_log_coefficient,
        func=np.log,
        tail=tail,
        name=f"log(kappa={kappa:g})",
    )


def exp_spec(alpha: float, delta: float = 0.1) -> TaylorSpec:
    """Series of ``exp(alpha x) / exp(alpha)`` about 0 on ``[-1, 1]``.

    The series bound is ``exp(alpha * delta)``; Algorithm-level rescaling uses
    ``B = 1`` instead (see :func:`qesscher.qet.be_exp`).
    """
    if not alpha > 0:
        raise DomainError(f"alpha = {alpha} must be positive", value=alpha)
    la = math.log(alpha)

    def coefficient(l: int) -> float:
        return math.exp(l * la - gammaln(l + 1) - alpha)

    def tail(d: int, R: float) -> float:
        # sum_{l > d} (alpha R)^l / l! = e^{alpha R} P(d + 1, alpha R)
        return float(math.exp(alpha * (R - 1.0)) * gammainc(d + 1, alpha * R))

    return TaylorSpec(
        x0=0.0,
        r=1.0,
        delta=delta,
        B=math.exp(alpha * delta),
        coefficient=coefficient,
        func=lambda x: np.exp(alpha * (np.asarray(x) - 1.0)),
        tail=tail,
        name=f"exp(alpha={alpha:g})",
    )


@lru_cache(maxsize=256)
def log_polynomial(kappa: float, eps: float) -> BoundedPolynomial:
    """Cached bounded approximation of ``ln x`` on ``[1/kappa, 1]``."""
    return bounded_approximation(log_spec(kappa), eps)


@lru_cache(maxsize=256)
def exp_polynomial(alpha: float, eps: float) -> BoundedPolynomial:
    """Cached approximation of ``exp(alpha (x - 1))`` on ``[-1, 1]``."""
    return bounded_approximation(exp_spec(alpha), eps)
