"""Seeded random problem instances for tests, sweeps and the ``gen`` command."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import ContractError

KINDS = ("classical", "quantum", "quest")


def _rng(seed: int) -> np.random.Generator:
    if not 0 <= int(seed) < 2**64:
        raise ContractError(f"seed {seed} is not an unsigned 64-bit integer")
    return np.random.default_rng(int(seed))


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    Z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def random_hermitian(dim: int, rng: np.random.Generator, norm: float = 1.0) -> np.ndarray:
    G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    H = (G + G.conj().T) / 2
    return norm * H / np.linalg.norm(H, 2)


def random_density(n: int, rng: np.random.Generator, kappa: Optional[float] = None,
                   rank: Optional[int] = None) -> np.ndarray:
    """Random ``rho`` with spectrum in ``[1/kappa, 1]`` (full rank) or of the given rank.

    For a full-rank draw the spectrum is ``1/kappa + (1 - N/kappa) * Dir(1)``,
    which needs ``kappa >= N``.
    """
    N = 1 << n
    r = N if rank is None else int(rank)
    if not 1 <= r <= N:
        raise ContractError(f"rank {r} outside [1, {N}]")
    if r == N:
        kappa = float(2 * N if kappa is None else kappa)
        if kappa < N:
            raise ContractError(f"kappa = {kappa:g} below the dimension {N}; no density has that spread")
        lam = 1.0 / kappa + (1.0 - N / kappa) * rng.dirichlet(np.ones(N))
    else:
        lam = np.zeros(N)
        lam[:r] = rng.dirichlet(np.ones(r))
        floor = 0.05 / r
        lam[:r] = floor + (1 - r * floor) * lam[:r]
    U = haar_unitary(N, rng)
    rho = (U * lam) @ U.conj().T
    return (rho + rho.conj().T) / 2


def _interior_moments(rho: np.ndarray, ops: list, rng: np.random.Generator) -> np.ndarray:
    """``m_i = tr(rho' H_i)`` with ``rho'`` mixed from ``rho`` and a random state on supp(rho)."""
    w, V = np.linalg.eigh(rho)
    P = V[:, w > 1e-10]
    r = P.shape[1]
    G = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    tau = G @ G.conj().T
    tau = P @ (tau / np.trace(tau).real) @ P.conj().T
    rho_p = 0.5 * rho + 0.5 * tau
    return np.array([np.trace(rho_p @ H).real for H in ops])


def classical_instance(seed: int, omega: int = 6, d: int = 2, zero_atoms: int = 0) -> dict:
    rng = _rng(seed)
    if d + 1 > omega - zero_atoms:
        raise ContractError(f"need d + 1 <= |Omega| - zero atoms, got d = {d}, |Omega| = {omega}")
    P = rng.dirichlet(np.ones(omega - zero_atoms))
    P = np.concatenate([P, np.zeros(zero_atoms)])
    X = rng.standard_normal((omega, d))
    Qp = 0.5 * P[: omega - zero_atoms] + 0.5 * rng.dirichlet(np.ones(omega - zero_atoms))
    m = Qp @ X[: omega - zero_atoms]
    return {"kind": "classical", "seed": int(seed), "P": P, "X": X, "m": m}


def quantum_instance(seed: int, n: int = 2, d: int = 2, kappa: Optional[float] = None,
                     rank: Optional[int] = None) -> dict:
    rng = _rng(seed)
    rho = random_density(n, rng, kappa=kappa, rank=rank)
    ops = [random_hermitian(1 << n, rng) for _ in range(d)]
    m = _interior_moments(rho, ops, rng)
    return {"kind": "quantum", "seed": int(seed), "rho": rho, "H": ops, "m": m}


def quest_instance(seed: int, n: int = 1, d: int = 1, kappa: Optional[float] = None,
                   theta_scale: float = 0.5) -> dict:
    """Full-rank ``rho`` with declared ``kappa``, unit-norm observables and ``theta``."""
    rng = _rng(seed)
    N = 1 << n
    kappa = float(2 * N if kappa is None else kappa)
    rho = random_density(n, rng, kappa=kappa)
    ops = [random_hermitian(N, rng) for _ in range(d)]
    theta = theta_scale * rng.uniform(-1.0, 1.0, size=d)
    return {"kind": "quest", "seed": int(seed), "rho": rho, "H": ops, "theta": theta, "kappa": kappa}


def generate_instance(kind: str, seed: int, **size) -> dict:
    if kind == "classical":
        return classical_instance(seed, **size)
    if kind == "quantum":
        return quantum_instance(seed, **size)
    if kind == "quest":
        return quest_instance(seed, **size)
    raise ContractError(f"unknown instance kind {kind!r}; expected one of {', '.join(KINDS)}")
