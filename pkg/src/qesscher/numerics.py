"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays. The helpers here validate and normalise
them (finite entries, Hermitian symmetrisation, PSD clamping) and provide the
spectral matrix functions that every other module builds on.

Qubit ordering is big-endian: qubit 0 is the most significant bit of a basis
index, matching ``np.kron(A, B)`` with ``A`` acting on the leading qubits.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Callable, Iterable, Union

import numpy as np

from .errors import ContractError, ContractionError, DomainError, NonConvergenceError

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

HERMITIAN_TOL = 1e-12
PSD_CLAMP_TOL = 1e-10

ScalarFunction = Union[Callable[[np.ndarray], np.ndarray], str]


def as_matrix(M) -> np.ndarray:
    """Return ``M`` as a 2-D complex array, rejecting NaN/Inf entries."""
    A = np.asarray(M, dtype=complex)
    if A.ndim == 1 and A.size == 1:
        A = A.reshape(1, 1)
    if A.ndim != 2:
        raise ContractError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ContractError("matrix has non-finite entries")
    return A


def as_hermitian(M, atol: float = 1e-8) -> np.ndarray:
    """Ingest a Hermitian matrix.

    Inputs within ``atol`` (max-entry, relative to the largest entry) of
    Hermitian are accepted and symmetrised, so the stored matrix satisfies
    ``M == M^dagger`` exactly.
    """
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise ContractError(f"Hermitian matrix must be square, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    dev = float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0
    if dev > atol * scale:
        raise ContractError(f"matrix is not Hermitian: max |M - M^dagger| = {dev:.3e}")
    return (A + A.conj().T) / 2


def n_qubits_of(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or (1 << n) != dim:
        raise ContractError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class Spectrum:
    """Eigen-decomposition ``M = V diag(eigenvalues) V^dagger``.

    Eigenvalues are in descending order; the columns of ``eigenvectors`` are
    normalised so that their first non-negligible component is real positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def hermitian_eig(M) -> Spectrum:
    """Deterministic Hermitian eigensolver (LAPACK ``heevd`` via numpy)."""
    A = as_hermitian(M)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        off = A - np.diag(np.diag(A))
        raise NonConvergenceError(
            f"Hermitian eigensolver failed to converge: {exc}",
            residual=float(np.linalg.norm(off)),
        ) from exc
    order = np.argsort(-w, kind="stable")
    w = w[order]
    V = V[:, order]
    # phase convention: first component above 1e-8 in magnitude is real positive
    for k in range(V.shape[1]):
        col = V[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-8)
        if idx.size:
            z = col[idx[0]]
            V[:, k] = col * (abs(z) / z)
    w.flags.writeable = False
    V.flags.writeable = False
    return Spectrum(w, V)


_NAMED = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt}


def matrix_function(M, f: ScalarFunction) -> np.ndarray:
    """Apply a real scalar function to a Hermitian matrix spectrally.

    ``f`` may be a vectorised callable or one of ``"exp"``, ``"log"``,
    ``"sqrt"``. Logarithms are natural.
    """
    spec = hermitian_eig(M)
    lam = spec.eigenvalues
    is_log = f == "log" or f is np.log
    if is_log and lam.size and lam[-1] <= 0:
        raise DomainError(
            f"matrix logarithm needs positive eigenvalues, found {lam[-1]:.6g}",
            value=float(lam[-1]),
        )
    if f == "sqrt" and lam.size and lam[-1] < 0:
        raise DomainError(f"matrix square root of negative eigenvalue {lam[-1]:.6g}", value=float(lam[-1]))
    fn = _NAMED[f] if isinstance(f, str) else f
    V = spec.eigenvectors
    out = (V * np.asarray(fn(lam), dtype=float)) @ V.conj().T
    return (out + out.conj().T) / 2


def expm_h(M) -> np.ndarray:
    return matrix_function(M, "exp")


def logm_h(M) -> np.ndarray:
    return matrix_function(M, "log")


def kron(*mats) -> np.ndarray:
    """Kronecker product of one or more matrices, left factor most significant."""
    if not mats:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, (np.asarray(m) for m in mats))


def partial_trace(state, keep_qubits: Iterable[int], total_qubits: int) -> np.ndarray:
    """Reduced operator on ``keep_qubits`` (kept in increasing order)."""
    A = as_matrix(state)
    dim = 1 << total_qubits
    if A.shape != (dim, dim):
        raise ContractError(f"state has shape {A.shape}, expected {(dim, dim)}")
    keep = sorted(set(int(q) for q in keep_qubits))
    if any(q < 0 or q >= total_qubits for q in keep):
        raise ContractError(f"qubit index out of range in {keep} for {total_qubits} qubits")
    traced = [q for q in range(total_qubits) if q not in keep]
    dk, dt = 1 << len(keep), 1 << len(traced)
    T = A.reshape([2] * (2 * total_qubits))
    perm = keep + traced + [total_qubits + q for q in keep] + [total_qubits + q for q in traced]
    T = T.transpose(perm).reshape(dk, dt, dk, dt)
    return np.einsum("ajbj->ab", T)


def operator_norm(M) -> float:
    A = as_matrix(M)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def trace_norm(M) -> float:
    A = as_matrix(M)
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma``."""
    a = rho.matrix if isinstance(rho, DensityOperator) else as_matrix(rho)
    b = sigma.matrix if isinstance(sigma, DensityOperator) else as_matrix(sigma)
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape} vs {b.shape}")
    w = np.linalg.eigvalsh(as_hermitian(a - b))
    return 0.5 * float(np.sum(np.abs(w)))


def unitarity_residual(U) -> float:
    U = np.asarray(U)
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))


def unitary_completion(M) -> np.ndarray:
    """Embed a contraction ``M`` as the top-left block of a unitary.

    Returns ``[[M, sqrt(I - M M^dagger)], [sqrt(I - M^dagger M), -M^dagger]]``
    with the square roots taken through one SVD of ``M`` so the off-diagonal
    identities hold to rounding error even when ``M`` is nearly unitary.
    """
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise ContractError(f"unitary_completion needs a square matrix, got {A.shape}")
    W, s, Vh = np.linalg.svd(A)
    if s.size and s[0] > 1 + 1e-12:
        raise ContractionError(float(s[0]))
    s = np.clip(s, 0.0, 1.0)
    c = np.sqrt((1.0 - s) * (1.0 + s))
    V = Vh.conj().T
    m = A.shape[0]
    U = np.empty((2 * m, 2 * m), dtype=complex)
    U[:m, :m] = A
    U[:m, m:] = (W * c) @ W.conj().T
    U[m:, :m] = (V * c) @ V.conj().T
    U[m:, m:] = -A.conj().T
    return U


def householder_unitary(v) -> np.ndarray:
    """Deterministic unitary whose first column is the unit vector ``v``."""
    v = np.asarray(v, dtype=complex).ravel()
    nv = np.linalg.norm(v)
    if not np.isfinite(nv) or abs(nv - 1) > 1e-9:
        raise ContractError(f"householder_unitary needs a unit vector, got norm {nv}")
    v = v / nv
    dim = v.size
    phase = -v[0] / abs(v[0]) if abs(v[0]) > 0 else -1.0 + 0j
    u = v - phase * np.eye(dim, 1, dtype=complex).ravel()
    R = np.eye(dim, dtype=complex) - 2.0 * np.outer(u, u.conj()) / np.vdot(u, u).real
    R[:, 0] *= phase
    return R


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive semidefinite, trace-one operator on ``n_qubits`` qubits."""

    matrix: np.ndarray
    n_qubits: int

    @classmethod
    def from_matrix(cls, M, trace_tol: float = 1e-8) -> "DensityOperator":
        A = as_hermitian(M)
        n = n_qubits_of(A.shape[0])
        tr = float(np.trace(A).real)
        if abs(tr - 1.0) > trace_tol:
            raise ContractError(f"density operator trace is {tr:.12g}, expected 1")
        spec = hermitian_eig(A)
        lam = np.array(spec.eigenvalues)
        if lam[-1] < -PSD_CLAMP_TOL:
            raise ContractError(f"density operator has negative eigenvalue {lam[-1]:.3e}")
        if lam[-1] < 0:
            lam = np.maximum(lam, 0.0)
            V = spec.eigenvectors
            A = (V * lam) @ V.conj().T
            A = (A + A.conj().T) / 2
        A = A / np.trace(A).real
        A.flags.writeable = False
        return cls(A, n)

    @classmethod
    def from_pure_state(cls, psi) -> "DensityOperator":
        v = np.asarray(psi, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        return cls.from_matrix(np.outer(v, v.conj()))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def spectrum(self) -> Spectrum:
        return hermitian_eig(self.matrix)
