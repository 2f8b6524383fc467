"""Independent reference computations used by the test suite.

Nothing here calls into the solvers under test; the primal oracles work on
the constraint set directly and the spectral oracles use numpy/scipy only.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog, minimize


def kl(q, p) -> float:
    s = q > 0
    return float(np.sum(q[s] * np.log(q[s] / p[s])))


def strictly_feasible_point(X: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Q with Q^T X = m, sum Q = 1 maximising min_i Q_i (linear program)."""
    k, d = X.shape
    # variables (Q_1..Q_k, t); maximise t subject to Q_i >= t
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A_eq = np.zeros((d + 1, k + 1))
    A_eq[0, :k] = 1.0
    A_eq[1:, :k] = X.T
    b_eq = np.concatenate([[1.0], m])
    A_ub = np.hstack([-np.eye(k), np.ones((k, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * k + [(None, None)], method="highs")
    assert res.status == 0 and res.x[-1] > 0, "instance has no strictly feasible point"
    return res.x[:k]


def primal_min_relative_entropy(P: np.ndarray, X: np.ndarray, m: np.ndarray,
                                iters: int = 200) -> tuple[float, np.ndarray]:
    """Minimise D(Q||P) over {Q >= 0, sum Q = 1, Q^T X = m} by projected Newton steps.

    Steps are taken in the null space of the equality constraints, so every
    iterate stays on the affine constraint set; a fraction-to-boundary rule
    keeps Q strictly positive.
    """
    keep = P > 0
    P, X = P[keep], X[keep]
    A = np.vstack([np.ones(P.size), X.T])
    Nsp = null_space(A)
    Q = strictly_feasible_point(X, m)
    for _ in range(iters):
        g = np.log(Q / P) + 1.0
        Hd = 1.0 / Q
        gz = Nsp.T @ g
        if np.linalg.norm(gz) < 1e-13:
            break
        Hz = Nsp.T @ (Nsp * Hd[:, None])
        step = Nsp @ np.linalg.solve(Hz, -gz)
        t = 1.0
        neg = step < 0
        if np.any(neg):
            t = min(1.0, 0.95 * float(np.min(-Q[neg] / step[neg])))
        f0 = kl(Q, P)
        while t > 1e-16:
            Qn = Q + t * step
            if np.all(Qn > 0) and kl(Qn, P) <= f0 + 1e-4 * t * float(g @ step):
                break
            t *= 0.5
        Q = Q + t * step
    full = np.zeros(keep.size)
    full[keep] = Q
    return kl(Q, P), full


def herm_from_params(x: np.ndarray, N: int) -> np.ndarray:
    """Lower-triangular complex parametrisation A; returns A A^dagger."""
    A = np.zeros((N, N), dtype=complex)
    il = np.tril_indices(N)
    k = len(il[0])
    A[il] = x[:k] + 1j * x[k:]
    return A @ A.conj().T


def primal_min_quantum(rho: np.ndarray, Hs: list, m: np.ndarray, seed: int = 0) -> float:
    """Minimise S(sigma||rho) over sigma = A A^dagger / tr(.) with SLSQP.

    Used as a cross-check only; returns the best objective found.
    """
    N = rho.shape[0]
    w, V = np.linalg.eigh(rho)
    log_rho = (V * np.log(w)) @ V.conj().T
    k = N * (N + 1) // 2

    def sigma(x):
        S = herm_from_params(x, N)
        return S / np.trace(S).real

    def S_rel(x):
        s = sigma(x)
        ws, Vs = np.linalg.eigh(s)
        ws = np.clip(ws, 1e-300, None)
        log_s = (Vs * np.log(ws)) @ Vs.conj().T
        return float(np.trace(s @ (log_s - log_rho)).real)

    cons = [{"type": "eq", "fun": (lambda x, H=H, mi=mi: float(np.trace(sigma(x) @ H).real - mi))}
            for H, mi in zip(Hs, m)]
    # start from the Cholesky factor of rho
    L = np.linalg.cholesky(rho)
    x0 = np.concatenate([L[np.tril_indices(N)].real, L[np.tril_indices(N)].imag])
    best = np.inf
    rng = np.random.default_rng(seed)
    for trial in range(3):
        start = x0 if trial == 0 else x0 + 0.05 * rng.standard_normal(x0.size)
        res = minimize(S_rel, start, method="SLSQP", constraints=cons,
                       options={"ftol": 1e-14, "maxiter": 2000})
        viol = max(abs(c["fun"](res.x)) for c in cons)
        if viol < 1e-8:
            best = min(best, res.fun)
    return best


def spectral_function(M: np.ndarray, f) -> np.ndarray:
    w, V = np.linalg.eigh((M + M.conj().T) / 2)
    return (V * f(w)) @ V.conj().T


def esscher_state(rho: np.ndarray, Hs: list, theta) -> np.ndarray:
    G = spectral_function(rho, np.log) + sum(t * H for t, H in zip(theta, Hs))
    E = spectral_function(G, np.exp)
    return E / np.trace(E).real


def naive_power_sum(coeffs, x0: float, x):
    x = np.asarray(x, dtype=float)
    return sum(c * (x - x0) ** k for k, c in enumerate(coeffs))


def constraint_preserving_direction(rho, H, rng) -> np.ndarray:
    """Unit-norm Hermitian direction on supp(rho), orthogonal to I and every H_i there."""
    w, U = np.linalg.eigh(np.asarray(rho))
    V = U[:, w > 1e-10]
    r = V.shape[1]
    basis = [np.eye(r)] + [V.conj().T @ np.asarray(h) @ V for h in H]
    G = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    D = (G + G.conj().T) / 2
    Q = []
    for B in basis:
        for C in Q:
            B = B - np.trace(C.conj().T @ B) * C
        nb = np.linalg.norm(B)
        if nb > 1e-12:
            Q.append(B / nb)
    for C in Q:
        D = D - np.trace(C.conj().T @ D) * C
    nd = np.linalg.norm(D, 2)
    if nd < 1e-12:
        return None
    return V @ (D / nd) @ V.conj().T
