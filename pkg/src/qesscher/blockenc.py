"""Block-encodings and the algebra used to combine them.

Register convention: ancilla qubits are the most significant qubits and the
encoded operator sits in the top-left ``2^n x 2^n`` corner of the unitary.
An ``(alpha, a, eps)`` encoding ``U`` of ``A`` satisfies
``||A - alpha * U[:2^n, :2^n]|| <= eps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ContractionError
from .numerics import (
    DensityOperator,
    as_hermitian,
    as_matrix,
    householder_unitary,
    hermitian_eig,
    kron,
    n_qubits_of,
    operator_norm,
    partial_trace,
    unitarity_residual,
    unitary_completion,
)

UNITARITY_TOL = 1e-9
AUDIT_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class BlockEncoding:
    """An ``(alpha, ancillas, eps)`` block-encoding on ``system_qubits`` qubits.

    ``core`` is the unitary actually stored. When ``ancillas`` exceeds the
    ancilla count of ``core``, the difference is identity padding on the most
    significant qubits, materialised only by :attr:`unitary`.
    ``target`` optionally carries the operator the construction is meant to
    encode, so that :meth:`audit` can compare measured and claimed error.
    """

    core: np.ndarray
    alpha: float
    ancillas: int
    eps: float
    system_qubits: int
    provenance: str = "matrix"
    target: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = self.core.shape[0]
        if self.core.shape != (dim, dim):
            raise ContractError(f"block-encoding unitary must be square, got {self.core.shape}")
        total = n_qubits_of(dim)
        if total - self.system_qubits < 0 or total - self.system_qubits > self.ancillas:
            raise ContractError(
                f"unitary acts on {total} qubits, inconsistent with n = {self.system_qubits}, a = {self.ancillas}"
            )
        if not self.alpha > 0:
            raise ContractError(f"subnormalisation alpha = {self.alpha} must be positive")
        if not self.eps >= 0:
            raise ContractError(f"claimed error {self.eps} must be non-negative")
        res = unitarity_residual(self.core)
        if res > UNITARITY_TOL:
            raise ContractError(f"block-encoding is not unitary: residual {res:.3e}")

    @property
    def eps_claimed(self) -> float:
        return self.eps

    @property
    def core_ancillas(self) -> int:
        return n_qubits_of(self.core.shape[0]) - self.system_qubits

    @property
    def total_qubits(self) -> int:
        return self.system_qubits + self.ancillas

    @property
    def unitary(self) -> np.ndarray:
        pad = self.ancillas - self.core_ancillas
        if pad == 0:
            return self.core
        return kron(np.eye(1 << pad), self.core)

    def block(self) -> np.ndarray:
        """The encoded corner (all ancillas in ``|0>``)."""
        m = 1 << self.system_qubits
        return self.core[:m, :m]

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Apply the full unitary to column vector(s) on all qubits."""
        v = np.asarray(vectors, dtype=complex)
        squeeze = v.ndim == 1
        if squeeze:
            v = v[:, None]
        dim_core = self.core.shape[0]
        pad = 1 << (self.ancillas - self.core_ancillas)
        if v.shape[0] != pad * dim_core:
            raise ContractError(f"vector length {v.shape[0]} does not match {pad * dim_core}")
        out = np.einsum("ij,pjk->pik", self.core, v.reshape(pad, dim_core, -1)).reshape(v.shape)
        return out[:, 0] if squeeze else out

    def audit(self, A=None) -> tuple[float, float, bool]:
        """(measured error, claimed error, measured <= claimed + 1e-9)."""
        ref = self.target if A is None else A
        if ref is None:
            raise ContractError("no target operator to audit against")
        err = measured_error(self, ref)
        return err, self.eps, bool(err <= self.eps + AUDIT_SLACK)


def measured_error(be: BlockEncoding, A) -> float:
    """Spectral norm ``||A - alpha * block||``."""
    A = as_matrix(A)
    m = 1 << be.system_qubits
    if A.shape != (m, m):
        raise ContractError(f"operator has shape {A.shape}, block-encoding system is {m}x{m}")
    return operator_norm(A - be.alpha * be.block())


def pad_ancillas(be: BlockEncoding, extra: int) -> BlockEncoding:
    """Tensor ``extra`` identity ancillas onto the most significant end."""
    if extra < 1:
        raise ContractError(f"padding needs at least one extra ancilla, got {extra}")
    return replace(be, ancillas=be.ancillas + int(extra), provenance=f"pad({be.provenance},+{extra})")


def pad_to(be: BlockEncoding, ancillas: int) -> BlockEncoding:
    if ancillas < be.ancillas:
        raise ContractError(f"cannot pad {be.ancillas} ancillas down to {ancillas}")
    return be if ancillas == be.ancillas else pad_ancillas(be, ancillas - be.ancillas)


def be_from_matrix(A, alpha: Optional[float] = None, error: float = 0.0,
                   rng: Optional[np.random.Generator] = None, hermitian_error: bool = True) -> BlockEncoding:
    """One-ancilla encoding of ``A`` by unitary dilation of ``A / alpha``.

    With ``error > 0`` the encoded block is deliberately perturbed: the target
    is shrunk by ``error / 2`` along itself and a random perturbation of norm
    ``error / 2`` is added, so the measured error is at most ``error`` and the
    block stays a contraction. ``rng`` supplies the perturbation.
    """
    A = as_matrix(A)
    n = n_qubits_of(A.shape[0])
    normA = operator_norm(A)
    alpha = max(normA, 1.0) if alpha is None else float(alpha)
    if normA > alpha * (1 + 1e-12):
        raise ContractionError(normA / alpha)
    M = A
    if error > 0:
        if error >= alpha:
            raise ContractError(f"injected error {error} must be below alpha = {alpha}")
        rng = np.random.default_rng(0) if rng is None else rng
        E = rng.normal(size=A.shape) + 1j * rng.normal(size=A.shape)
        if hermitian_error:
            E = (E + E.conj().T) / 2
        E *= (error / 2) / operator_norm(E)
        shrink = (error / 2) / normA if normA > 0 else 0.0
        M = (1.0 - shrink) * A + E
    U = unitary_completion(M / alpha)
    return BlockEncoding(U, alpha, 1, float(error), n, "dilation", target=A)


@dataclass(frozen=True, eq=False)
class PurifiedAccess:
    """Unitary ``O_rho`` with ``tr_{n_rho} O|0><0|O^dagger = rho``.

    Registers: the first ``n_rho`` qubits purify, the last ``n`` carry rho.
    """

    O_rho: np.ndarray
    n: int
    n_rho: int

    def __post_init__(self):
        dim = 1 << (self.n + self.n_rho)
        if self.O_rho.shape != (dim, dim):
            raise ContractError(f"O_rho has shape {self.O_rho.shape}, expected {(dim, dim)}")
        res = unitarity_residual(self.O_rho)
        if res > UNITARITY_TOL:
            raise ContractError(f"O_rho is not unitary: residual {res:.3e}")

    @property
    def state(self) -> np.ndarray:
        return self.O_rho[:, 0]

    def density(self) -> np.ndarray:
        psi = self.state
        return partial_trace(np.outer(psi, psi.conj()), range(self.n_rho, self.n_rho + self.n), self.n + self.n_rho)

    def density_operator(self) -> DensityOperator:
        return DensityOperator.from_matrix(self.density())


def purification_state(rho) -> np.ndarray:
    """``sum_i sqrt(lambda_i) |i> |v_i>`` with the purifying register first."""
    R = rho.matrix if isinstance(rho, DensityOperator) else as_hermitian(rho)
    n = n_qubits_of(R.shape[0])
    spec = hermitian_eig(R)
    lam = np.clip(spec.eigenvalues, 0.0, None)
    lam = lam / lam.sum()
    psi = np.zeros(1 << (2 * n), dtype=complex)
    for i, l in enumerate(lam):
        psi[i << n:(i + 1) << n] = np.sqrt(l) * spec.eigenvectors[:, i]
    return psi


def access_from_state(psi, n: int) -> PurifiedAccess:
    """Purified access whose first column is the given purification."""
    psi = np.asarray(psi, dtype=complex).ravel()
    total = n_qubits_of(psi.size)
    if total < n:
        raise ContractError(f"purification on {total} qubits cannot carry a {n}-qubit state")
    psi = psi / np.linalg.norm(psi)
    return PurifiedAccess(householder_unitary(psi), n, total - n)


def purify(rho) -> PurifiedAccess:
    R = rho.matrix if isinstance(rho, DensityOperator) else as_hermitian(rho)
    n = n_qubits_of(R.shape[0])
    return access_from_state(purification_state(R), n)


def swap_registers(n: int) -> np.ndarray:
    """Permutation ``|i>|j> -> |j>|i>`` on two ``n``-qubit registers."""
    N = 1 << n
    i, j = np.divmod(np.arange(N * N), N)
    P = np.zeros((N * N, N * N))
    P[j * N + i, i * N + j] = 1.0
    return P


def be_from_purification(access: PurifiedAccess) -> BlockEncoding:
    """``(O^dagger x I)(I x SWAP)(O x I)``, a ``(1, n + n_rho, 0)`` encoding of rho."""
    n, nr = access.n, access.n_rho
    In = np.eye(1 << n)
    O = access.O_rho
    # identity on the purifying register, SWAP on the last two n-qubit registers
    S = kron(np.eye(1 << nr), swap_registers(n))
    U = kron(O.conj().T, In) @ S @ kron(O, In)
    return BlockEncoding(U, 1.0, n + nr, 0.0, n, "purification", target=access.density())


@dataclass(frozen=True, eq=False)
class StatePreparationPair:
    """Unitaries ``(P_L, P_R)`` with ``c = P_L|0>``, ``d = P_R|0>`` encoding ``target``."""

    P_L: np.ndarray
    P_R: np.ndarray
    beta: float
    b: int
    eps_sp: float
    target: np.ndarray

    @property
    def c(self) -> np.ndarray:
        return self.P_L[:, 0]

    @property
    def d(self) -> np.ndarray:
        return self.P_R[:, 0]

    def achieved_error(self) -> float:
        m = len(self.target)
        prod = self.c.conj() * self.d
        return float(np.sum(np.abs(self.target - self.beta * prod[:m])))

    def spill(self) -> float:
        """Largest ``|c_j^* d_j|`` over the unused indices ``j >= m``."""
        prod = self.c.conj() * self.d
        tail = prod[len(self.target):]
        return float(np.max(np.abs(tail))) if tail.size else 0.0


def make_state_preparation_pair(y, beta: float, b: int, eps_sp: float = 0.0) -> StatePreparationPair:
    """Exact pair for ``y``; leftover mass goes to two disjoint spare indices."""
    y = np.asarray(y, dtype=complex).ravel()
    m = y.size
    if m > (1 << b):
        raise ContractError(f"{m} coefficients need more than b = {b} qubits")
    l1 = float(np.sum(np.abs(y)))
    if beta < l1 * (1 - 1e-12):
        raise ContractError(f"beta = {beta:.12g} below ||y||_1 = {l1:.12g}")
    mag = np.sqrt(np.abs(y) / beta)
    phase = np.where(np.abs(y) > 0, y / np.where(np.abs(y) > 0, np.abs(y), 1.0), 1.0)
    dim = 1 << b
    c = np.zeros(dim, dtype=complex)
    d = np.zeros(dim, dtype=complex)
    c[:m] = mag
    d[:m] = phase * mag
    rem = 1.0 - float(np.sum(mag**2))
    if rem > 1e-14:
        if m + 2 > dim:
            raise ContractError(f"b = {b} leaves no room to park residual mass {rem:.3e}")
        c[m] = np.sqrt(rem)
        d[m + 1] = np.sqrt(rem)
    c /= np.linalg.norm(c)
    d /= np.linalg.norm(d)
    pair = StatePreparationPair(householder_unitary(c), householder_unitary(d), float(beta), int(b),
                                float(eps_sp), y)
    return pair


def linear_combination(bes: Sequence[BlockEncoding], y, pair: StatePreparationPair) -> BlockEncoding:
    """Encoding of ``sum_j y_j A_j`` from encodings ``U_j`` of ``A_j``.

    ``pair`` must prepare ``alpha_j * y_j`` with ``alpha_j`` the encodings'
    subnormalisations. The result is ``(P_L^dagger x I) W (P_R x I)`` with
    ``W = sum_j |j><j| x U_j + sum_{j >= m} |j><j| x I``.
    """
    bes = list(bes)
    y = np.asarray(y, dtype=complex).ravel()
    if not bes or len(bes) != y.size:
        raise ContractError(f"{len(bes)} encodings for {y.size} coefficients")
    a, n = bes[0].ancillas, bes[0].system_qubits
    for be in bes:
        if be.ancillas != a or be.system_qubits != n:
            raise ContractError("all encodings need equal ancilla and system counts; pad first")
    alphas = np.array([be.alpha for be in bes], dtype=float)
    want = alphas * y
    mismatch = float(np.sum(np.abs(want - pair.target))) if pair.target.size == y.size else np.inf
    if mismatch > 1e-9 or pair.achieved_error() > pair.eps_sp + 1e-9:
        raise ContractError(f"state-preparation pair does not prepare alpha * y (mismatch {mismatch:.3e})")
    dimb = 1 << pair.b
    D = 1 << (a + n)
    W = np.zeros((dimb * D, dimb * D), dtype=complex)
    for j in range(dimb):
        W[j * D:(j + 1) * D, j * D:(j + 1) * D] = bes[j].unitary if j < len(bes) else np.eye(D)
    Wt = kron(pair.P_L.conj().T, np.eye(D)) @ W @ kron(pair.P_R, np.eye(D))
    eps = (pair.beta / float(np.min(alphas))) * max(be.eps for be in bes) + pair.eps_sp
    target = None
    if all(be.target is not None for be in bes):
        target = sum(yj * be.target for yj, be in zip(y, bes))
    return BlockEncoding(Wt, pair.beta, a + pair.b, eps, n, "lcu", target=target,
                         info={"alphas": alphas.tolist(), "coefficients": y.tolist()})
