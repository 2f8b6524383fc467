"""Quantum Esscher transform and the constrained quantum relative entropy problem.

For a density operator ``rho`` and observables ``H_i`` the minimiser of
``S(sigma || rho)`` subject to ``tr(sigma H_i) = m_i`` is
``exp(lambda . H + log rho) / Z`` on the support of ``rho`` (and zero on its
kernel), where ``lambda`` minimises the convex function
``tr exp(lambda . (H - m) + log rho)``. Everything is computed in the
eigenbasis of ``rho`` restricted to its support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classical import AUTO_SWITCH, METHODS
from .errors import (
    ContractError,
    DomainError,
    InfeasibleError,
    NonConvergenceError,
    RangeError,
    UnattainedSupremumError,
)
from .numerics import DensityOperator, as_hermitian, hermitian_eig, operator_norm

DEFAULT_TOL = 1e-9
MAX_ITER = 10_000
RANK_TOL = 1e-10
LAMBDA_BOUND = 1e3


@dataclass(frozen=True, eq=False)
class ObservableSet:
    """Hermitian observables rescaled so that each has operator norm at most 1.

    ``operators`` holds the rescaled matrices ``H_i / s_i`` and ``scales`` the
    factors ``s_i = max(1, ||H_i||)``.
    """

    operators: tuple
    scales: np.ndarray
    names: tuple

    @classmethod
    def from_matrices(cls, mats: Sequence, names: Optional[Sequence[str]] = None) -> "ObservableSet":
        ops, scales = [], []
        for M in mats:
            H = as_hermitian(M)
            s = max(1.0, operator_norm(H))
            ops.append(H / s)
            scales.append(s)
        if not ops:
            raise ContractError("need at least one observable")
        dim = ops[0].shape[0]
        if any(H.shape != (dim, dim) for H in ops):
            raise ContractError("observables have different dimensions")
        names = tuple(names) if names is not None else tuple(f"H{i + 1}" for i in range(len(ops)))
        return cls(tuple(ops), np.array(scales), names)

    @property
    def d(self) -> int:
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def original(self) -> list:
        return [s * H for s, H in zip(self.scales, self.operators)]


def _as_observables(H) -> ObservableSet:
    if isinstance(H, ObservableSet):
        return H
    if isinstance(H, np.ndarray) and H.ndim == 2:
        H = [H]
    return ObservableSet.from_matrices(list(H))


def _as_density(rho) -> DensityOperator:
    return rho if isinstance(rho, DensityOperator) else DensityOperator.from_matrix(rho)


@dataclass(frozen=True, eq=False)
class QuantumEsscherProblem:
    """``m`` is given in the units of the original (unscaled) observables."""

    rho: DensityOperator
    H: ObservableSet
    m: np.ndarray

    def __post_init__(self):
        rho, H = _as_density(self.rho), _as_observables(self.H)
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "m", m)
        if H.dim != rho.dim:
            raise ContractError(f"observables act on dimension {H.dim}, rho on {rho.dim}")
        if m.size != H.d:
            raise ContractError(f"{m.size} targets for {H.d} observables")
        for i, Hi in enumerate(H.operators):
            w = np.linalg.eigvalsh(Hi)
            if not (w[0] < self.m_scaled[i] < w[-1]):
                raise InfeasibleError(
                    f"target m[{i}] = {m[i]:.6g} not strictly inside the spectrum "
                    f"[{w[0] * H.scales[i]:.6g}, {w[-1] * H.scales[i]:.6g}]"
                )

    @property
    def m_scaled(self) -> np.ndarray:
        return self.m / self.H.scales


@dataclass(frozen=True, eq=False)
class SupportDecomposition:
    support_projector: np.ndarray
    kernel_projector: np.ndarray
    support_rank: int
    restricted_rho: np.ndarray
    restricted_H: list
    basis: np.ndarray

    @property
    def restricted_log_rho(self) -> np.ndarray:
        return np.diag(np.log(np.diag(self.restricted_rho).real))


@dataclass(frozen=True, eq=False)
class QuantumEsscherSolution:
    """``lambda_star`` is in the units of the original observables."""

    lambda_star: np.ndarray
    sigma_star: DensityOperator
    dual_value: float
    primal_value: float
    gradient_norm: float
    stationarity_residual: float
    iterations: int
    residuals: np.ndarray
    kernel_norm: float
    support_rank: int
    diagnostics: dict = field(default_factory=dict)


def support_kernel_decompose(rho, H=None, rank_tol: float = RANK_TOL) -> SupportDecomposition:
    """Split the Hilbert space into the support and kernel of ``rho``.

    Eigenvalues below ``rank_tol`` times the largest one count as kernel.
    Restricted operators are expressed in the eigenbasis of ``rho`` on its
    support, so ``restricted_rho`` is diagonal.
    """
    rho = _as_density(rho)
    spec = hermitian_eig(rho.matrix)
    w = spec.eigenvalues
    keep = w > rank_tol * w[0]
    V = spec.eigenvectors[:, keep]
    Pi = V @ V.conj().T
    K = np.eye(rho.dim) - Pi
    ops = [] if H is None else _as_observables(H).operators
    rH = [as_hermitian(V.conj().T @ Hi @ V) for Hi in ops]
    return SupportDecomposition((Pi + Pi.conj().T) / 2, (K + K.conj().T) / 2, int(keep.sum()),
                                np.diag(w[keep]).astype(complex), rH, V)


def quantum_relative_entropy(sigma, rho, rank_tol: float = RANK_TOL) -> float:
    """``S(sigma || rho)`` in nats, ``inf`` when supp sigma escapes supp rho."""
    sig, rh = _as_density(sigma), _as_density(rho)
    if sig.dim != rh.dim:
        raise ContractError("sigma and rho have different dimensions")
    spec = hermitian_eig(rh.matrix)
    w, V = spec.eigenvalues, spec.eigenvectors
    keep = w > rank_tol * w[0]
    Vk = V[:, ~keep]
    if Vk.size and float(np.trace(Vk.conj().T @ sig.matrix @ Vk).real) > rank_tol:
        return math.inf
    s = np.linalg.eigvalsh(sig.matrix)
    s = s[s > 0]
    ent = float(np.sum(s * np.log(s)))
    diag = np.einsum("ij,ik,kj->j", V[:, keep].conj(), sig.matrix, V[:, keep]).real
    cross = float(np.sum(diag * np.log(w[keep])))
    return ent - cross


def _exp_normalised(G: np.ndarray) -> tuple[np.ndarray, float]:
    """``(exp(G) / tr exp(G), log tr exp(G))`` with the exponent shifted."""
    spec = hermitian_eig(G)
    mu = spec.eigenvalues
    top = mu[0]
    e = np.exp(mu - top)
    Z = e.sum()
    V = spec.eigenvectors
    S = (V * (e / Z)) @ V.conj().T
    return (S + S.conj().T) / 2, float(top + math.log(Z))


def quantum_esscher_transform(rho, H, theta, rank_tol: float = RANK_TOL) -> DensityOperator:
    """``exp(theta . H + log rho) / tr(...)`` for positive definite ``rho``.

    ``H`` may be a list of matrices or an :class:`ObservableSet` (whose
    original, unscaled operators are used).
    """
    rho = _as_density(rho)
    ops = H.original() if isinstance(H, ObservableSet) else ([H] if np.ndim(H) == 2 else list(H))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if len(ops) != theta.size:
        raise ContractError(f"{theta.size} parameters for {len(ops)} observables")
    spec = hermitian_eig(rho.matrix)
    if spec.eigenvalues[-1] <= rank_tol * spec.eigenvalues[0]:
        raise DomainError("rho is singular; restrict to its support with support_kernel_decompose first",
                          value=float(spec.eigenvalues[-1]))
    V = spec.eigenvectors
    G = (V * np.log(spec.eigenvalues)) @ V.conj().T
    for t, Hi in zip(theta, ops):
        G = G + t * as_hermitian(Hi)
    S, _ = _exp_normalised(G)
    return DensityOperator.from_matrix(S)


def _restricted(problem: QuantumEsscherProblem, rank_tol: float):
    dec = support_kernel_decompose(problem.rho, problem.H, rank_tol)
    return dec, np.log(np.diag(dec.restricted_rho).real), dec.restricted_H


def lambda_gradient(rho, H, m, lam, rank_tol: float = RANK_TOL) -> tuple[float, np.ndarray]:
    """``tr exp(lambda . (H - m) + log rho)`` and its gradient in ``lambda``.

    ``rho`` must be positive definite; ``H`` and ``m`` are used as given.
    """
    rho = _as_density(rho)
    ops = H.operators if isinstance(H, ObservableSet) else ([H] if np.ndim(H) == 2 else list(H))
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    m = np.atleast_1d(np.asarray(m, dtype=float))
    spec = hermitian_eig(rho.matrix)
    if spec.eigenvalues[-1] <= rank_tol * spec.eigenvalues[0]:
        raise DomainError("rho is singular; restrict to its support first", value=float(spec.eigenvalues[-1]))
    V = spec.eigenvectors
    G = (V * np.log(spec.eigenvalues)) @ V.conj().T - float(lam @ m) * np.eye(rho.dim)
    for t, Hi in zip(lam, ops):
        G = G + t * as_hermitian(Hi)
    sig, logZ = _exp_normalised(G)
    if logZ > 700:
        raise RangeError(f"objective overflows: log value {logZ:.1f}")
    obj = math.exp(logZ)
    grad = np.array([obj * (float(np.trace(sig @ Hi).real) - mi) for Hi, mi in zip(ops, m)])
    return obj, grad


class _LogPartition:
    """``F(lambda) = log tr exp(lambda . H + log rho) - lambda . m`` on the support."""

    def __init__(self, log_rho: np.ndarray, ops: list, m: np.ndarray):
        self.log_rho = np.diag(log_rho).astype(complex)
        self.ops = ops
        self.m = m

    def exponent(self, lam):
        G = self.log_rho.copy()
        for t, Hi in zip(lam, self.ops):
            G = G + t * Hi
        return G

    def __call__(self, lam):
        sig, logZ = _exp_normalised(self.exponent(lam))
        expect = np.array([float(np.sum(sig * Hi.T).real) for Hi in self.ops])
        return logZ - float(lam @ self.m), expect - self.m, sig, logZ

    def hessian(self, lam) -> np.ndarray:
        """Kubo-Mori covariance via divided differences of exp."""
        spec = hermitian_eig(self.exponent(lam))
        mu, V = spec.eigenvalues, spec.eigenvectors
        e = np.exp(mu - mu[0])
        Z = e.sum()
        diff = mu[:, None] - mu[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            dd = np.where(np.abs(diff) > 1e-12, (e[:, None] - e[None, :]) / diff,
                          0.5 * (e[:, None] + e[None, :]))
        dd /= Z
        Hs = [V.conj().T @ Hi @ V for Hi in self.ops]
        means = [float(np.real(np.diag(Hk) @ e) / Z) for Hk in Hs]
        d = len(Hs)
        Hm = np.empty((d, d))
        for i in range(d):
            for j in range(i, d):
                v = float(np.sum(Hs[i].conj() * Hs[j] * dd).real) - means[i] * means[j]
                Hm[i, j] = Hm[j, i] = v
        return Hm


def solve(problem: QuantumEsscherProblem, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
          method: str = "auto", rank_tol: float = RANK_TOL,
          lambda_bound: float = LAMBDA_BOUND) -> QuantumEsscherSolution:
    """Minimise ``S(sigma || rho)`` subject to ``tr(sigma H_i) = m_i``."""
    if method not in METHODS:
        raise ContractError(f"unknown method {method!r}")
    dec, log_w, rH = _restricted(problem, rank_tol)
    m_all = problem.m_scaled
    active = []
    for i, Hi in enumerate(rH):
        w = np.linalg.eigvalsh(Hi)
        # an observable that is scalar on the support fixes its own moment
        if w[-1] - w[0] <= 1e-12 and abs(m_all[i] - w[0]) <= max(tol, 1e-12):
            continue
        if not (w[0] < m_all[i] < w[-1]):
            raise InfeasibleError(
                f"target m[{i}] = {problem.m[i]:.6g} not attainable on supp(rho): restricted spectrum "
                f"[{w[0] * problem.H.scales[i]:.6g}, {w[-1] * problem.H.scales[i]:.6g}]"
            )
        active.append(i)
    m = m_all[active]
    F = _LogPartition(log_w, [rH[i] for i in active], m)
    lam = np.zeros(len(active))
    val, g, sig, logZ = F(lam)
    prev_lam = prev_g = None
    it = 0
    while np.linalg.norm(g) > tol or abs(float(lam @ g)) > tol:
        if it >= max_iter:
            raise NonConvergenceError(f"lambda descent hit the {max_iter}-iteration cap", float(np.linalg.norm(g)), it)
        if np.linalg.norm(lam) > lambda_bound:
            raise UnattainedSupremumError(
                f"|lambda| = {np.linalg.norm(lam):.3e} exceeds {lambda_bound:g}; supremum possibly unattained",
                float(np.linalg.norm(g)), it,
            )
        step = 1.0
        if method == "newton" or (method == "auto" and it >= AUTO_SWITCH):
            try:
                direction = -np.linalg.solve(F.hessian(lam) + 1e-14 * np.eye(lam.size), g)
            except np.linalg.LinAlgError:
                direction = -g
        else:
            direction = -g
            if prev_g is not None:
                s, yv = lam - prev_lam, g - prev_g
                sy = float(s @ yv)
                if sy > 0:
                    step = float(s @ s) / sy
        slope = float(g @ direction)
        if slope >= 0:
            direction, slope = -g, -float(g @ g)
        while True:
            trial = lam + step * direction
            tval, tg, tsig, tlogZ = F(trial)
            if tval <= val + 1e-4 * step * slope:
                break
            if abs(tval - val) <= 1e-13 * max(1.0, abs(val)) and np.linalg.norm(tg) < np.linalg.norm(g):
                break
            step *= 0.5
            if step < 1e-20:
                raise NonConvergenceError("line search stalled", float(np.linalg.norm(g)), it)
        prev_lam, prev_g = lam, g
        lam, val, g, sig, logZ = trial, tval, tg, tsig, tlogZ
        it += 1
    lam_all = np.zeros(len(rH))
    lam_all[active] = lam
    V = dec.basis
    sigma_full = V @ sig @ V.conj().T
    sigma_star = DensityOperator.from_matrix(sigma_full)
    primal = quantum_relative_entropy(sigma_star, problem.rho, rank_tol)
    dual = float(lam @ m) - logZ
    if not abs(primal - dual) <= 10 * tol:
        raise NonConvergenceError(f"duality gap {primal - dual:.3e} above {10 * tol:.1e}", abs(primal - dual), it)
    orig = problem.H.original()
    res = np.array([float(np.trace(sigma_star.matrix @ Hi).real) for Hi in orig]) - problem.m
    K = dec.kernel_projector
    kern = operator_norm(K @ sigma_star.matrix @ K) if dec.support_rank < problem.rho.dim else 0.0
    sol = QuantumEsscherSolution(lam_all / problem.H.scales, sigma_star, dual, primal, float(np.linalg.norm(g)),
                                 0.0, it, res, kern, dec.support_rank,
                                 {"method": method, "rank_tol": rank_tol,
                                  "redundant_constraints": sorted(set(range(len(rH))) - set(active))})
    r = wirtinger_stationarity_check(sol, problem)
    object.__setattr__(sol, "stationarity_residual", r)
    return sol


def _lagrangian(Sig, log_rho, ops, lam, m, eta) -> float:
    w = np.linalg.eigvalsh(Sig)
    if w[0] <= 0:
        return math.inf
    ent = float(np.sum(w * np.log(w)))
    val = ent - float(np.sum(Sig * log_rho.T).real)
    for t, Hi, mi in zip(lam, ops, m):
        val -= t * (float(np.sum(Sig * Hi.T).real) - mi)
    return val - eta * (float(np.trace(Sig).real) - 1.0)


def hermitian_directions(r: int) -> list:
    """Real coordinates ``x_ij`` (i <= j) and ``y_ij`` (i < j) of an r x r Hermitian matrix."""
    dirs = []
    for i in range(r):
        for j in range(i, r):
            D = np.zeros((r, r), dtype=complex)
            D[i, j] = D[j, i] = 1.0
            dirs.append(D)
            if i < j:
                D = np.zeros((r, r), dtype=complex)
                D[i, j], D[j, i] = 1j, -1j
                dirs.append(D)
    return dirs


def wirtinger_stationarity_check(solution: QuantumEsscherSolution, problem: QuantumEsscherProblem,
                                 h: float = 1e-5, sigma=None, rank_tol: float = RANK_TOL,
                                 order: int = 4) -> float:
    """Largest central difference of the Lagrangian at the solution.

    sigma is parametrised on the support of rho by the real and imaginary
    parts of its entries, tied by Hermiticity. Each coordinate direction is
    made traceless so the normalisation constraint is preserved; the
    normalisation multiplier is eliminated using the trace of the stationarity
    condition. ``order`` selects the second- or fourth-order central stencil;
    the latter keeps truncation error negligible when sigma has eigenvalues
    close to ``h``.
    """
    if order not in (2, 4):
        raise ContractError(f"stencil order must be 2 or 4, got {order}")
    dec = support_kernel_decompose(problem.rho, problem.H, rank_tol)
    r = dec.support_rank
    V = dec.basis
    Sig_full = solution.sigma_star.matrix if sigma is None else np.asarray(sigma, dtype=complex)
    Sig = V.conj().T @ Sig_full @ V
    Sig = (Sig + Sig.conj().T) / 2
    log_rho = dec.restricted_log_rho
    lam = np.asarray(solution.lambda_star) * problem.H.scales
    ops = dec.restricted_H
    m = problem.m_scaled
    w, U = np.linalg.eigh(Sig)
    if w[0] <= 0:
        return math.inf
    log_sig = (U * np.log(w)) @ U.conj().T
    stat = log_sig - log_rho - sum(t * Hi for t, Hi in zip(lam, ops))
    eta = 1.0 + float(np.trace(stat).real) / r
    worst = 0.0
    I = np.eye(r)
    for D in hermitian_directions(r):
        D = D - np.trace(D) / r * I
        if not np.any(np.abs(D) > 0):
            continue
        L = lambda t: _lagrangian(Sig + t * D, log_rho, ops, lam, m, eta)  # noqa: E731
        if order == 2:
            deriv = (L(h) - L(-h)) / (2 * h)
        else:
            deriv = (8 * (L(h) - L(-h)) - (L(2 * h) - L(-2 * h))) / (12 * h)
        worst = max(worst, abs(deriv))
    return worst
