"""Polynomial eigenvalue transformation of block-encoded Hermitian matrices.

The transformation is realised at the matrix level: given an encoding of
``A`` with subnormalisation ``alpha``, the output unitary is a dilation of
``P(A~/alpha)`` where ``A~`` is the symmetrised encoded block. Metadata is
propagated with the usual circuit-level bounds (``4 d sqrt(eps/alpha)`` for
error, two extra ancillas, ``d`` queries) so that downstream budgets match
what a phase-sequence circuit would guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .blockenc import BlockEncoding, measured_error
from .errors import BoundViolationError, ContractError, DomainError
from .numerics import hermitian_eig, matrix_function, operator_norm, unitary_completion
from .polyapprox import (
    BoundedPolynomial,
    TaylorSpec,
    bounded_approximation,
    evaluate,
    exp_polynomial,
    exp_spec,
    log_polynomial,
    log_spec,
    rescale_for_qet,
)

HERMITIAN_BLOCK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class QetResult:
    be: BlockEncoding
    degree_used: int
    claimed_error: float
    target_matrix: Optional[np.ndarray]
    measured_error: Optional[float]
    polynomial: BoundedPolynomial
    asymptotic: str = ""
    asymptotic_value: Optional[float] = None

    @property
    def within_budget(self) -> bool:
        return self.measured_error is None or self.measured_error <= self.claimed_error + 1e-9


def _poly_of_hermitian(p: BoundedPolynomial, M: np.ndarray) -> np.ndarray:
    spec = hermitian_eig(M)
    lam = np.clip(spec.eigenvalues, -1.0, 1.0)
    V = spec.eigenvectors
    out = (V * evaluate(p, lam)) @ V.conj().T
    return (out + out.conj().T) / 2


def hermitian_block(be: BlockEncoding) -> np.ndarray:
    B = be.block()
    dev = float(np.max(np.abs(B - B.conj().T)))
    if dev > HERMITIAN_BLOCK_TOL:
        raise ContractError(f"encoded block is not Hermitian: max deviation {dev:.3e}")
    return (B + B.conj().T) / 2


def apply_polynomial(be: BlockEncoding, p: BoundedPolynomial) -> QetResult:
    """``(1, a + 2, 4 d sqrt(eps/alpha))`` encoding of ``P(A/alpha)``."""
    if not p.sup_bound <= 0.5 + 1e-12:
        raise BoundViolationError(f"polynomial sup {p.sup_bound:.6g} exceeds 1/2; rescale first")
    PA = _poly_of_hermitian(p, hermitian_block(be))
    U = unitary_completion(PA)
    d = p.degree
    claimed = 4.0 * d * math.sqrt(be.eps / be.alpha)
    target = None
    if be.target is not None:
        target = _poly_of_hermitian(p, np.asarray(be.target) / be.alpha)
    out = BlockEncoding(U, 1.0, be.ancillas + 2, claimed, be.system_qubits, f"qet({be.provenance})",
                        target=target, info={"degree": d})
    err = measured_error(out, target) if target is not None else None
    return QetResult(out, d, claimed, target, err, p)


def _spectrum_of(be: BlockEncoding) -> np.ndarray:
    A = be.target if be.target is not None else be.alpha * hermitian_block(be)
    return np.asarray(hermitian_eig(A).eigenvalues)


def be_function(be: BlockEncoding, spec: TaylorSpec, eps_poly: float,
                B_qet: Optional[float] = None, poly: Optional[BoundedPolynomial] = None) -> QetResult:
    """Encoding of ``f(A)`` where ``spec`` expands ``x -> f(alpha x)``.

    Output metadata is ``(2(1+B), a + 2, eps_poly + 2(1+B) 4 d sqrt(eps/alpha))``.
    ``B_qet`` overrides the series bound used for the rescaling; the
    ``|P| <= 1/2`` gate is always checked directly. ``poly`` may supply a
    precomputed approximation of ``spec`` at ``eps_poly``.
    """
    lam = _spectrum_of(be) / be.alpha
    lo, hi = spec.window
    tol = 1e-9
    if lam[-1] < lo - tol or lam[0] > hi + tol:
        raise ContractError(
            f"spectrum/alpha [{lam[-1]:.6g}, {lam[0]:.6g}] not inside the series window [{lo:.6g}, {hi:.6g}]"
        )
    B = spec.B if B_qet is None else float(B_qet)
    p = bounded_approximation(spec, eps_poly) if poly is None else poly
    if p.eps_poly > eps_poly:
        raise BoundViolationError(f"supplied polynomial error {p.eps_poly:.3e} exceeds {eps_poly:.3e}")
    q = rescale_for_qet(p, B)
    inner = apply_polynomial(be, q)
    scale = 2.0 * (1.0 + B)
    claimed = eps_poly + scale * inner.claimed_error
    target = None
    if be.target is not None:
        target = matrix_function(np.asarray(be.target) / be.alpha, spec.func)
    out = replace(inner.be, alpha=scale, eps=claimed, target=target,
                  provenance=f"fn[{spec.name}]({be.provenance})",
                  info={"degree": q.degree, "B": B, "eps_poly": eps_poly})
    err = measured_error(out, target) if target is not None else None
    return QetResult(out, q.degree, claimed, target, err, q)


def be_log_rho(be_rho: BlockEncoding, kappa: float, eps_poly: float) -> QetResult:
    """``(2(1 + ln 2 kappa), a + 2, eps_poly)`` encoding of ``log rho``."""
    if abs(be_rho.alpha - 1.0) > 1e-12:
        raise ContractError(f"log construction needs alpha = 1, got {be_rho.alpha}")
    lam = _spectrum_of(be_rho)
    if lam[-1] < 1.0 / kappa - 1e-9 or lam[0] > 1.0 + 1e-9:
        raise DomainError(
            f"spectrum [{lam[-1]:.6g}, {lam[0]:.6g}] not inside [1/kappa, 1] = [{1 / kappa:.6g}, 1]",
            value=float(lam[-1]),
        )
    res = be_function(be_rho, log_spec(kappa), eps_poly, poly=log_polynomial(float(kappa), float(eps_poly)))
    asym = max(kappa * math.log(max(math.log(kappa), 1e-300) / eps_poly), 0.0) if kappa > 1 else 0.0
    return replace(res, asymptotic="O(kappa log(log kappa / eps_poly))", asymptotic_value=asym)


def be_exp(be_H: BlockEncoding, eps_poly: float, half_exponent: bool = False) -> QetResult:
    """``(4, a + 2, eps_poly + 16 t sqrt(eps/alpha))`` encoding of ``e^H / e^alpha``.

    With ``half_exponent`` the same unitary is read as an ``(alpha/2, a,
    eps/2)`` encoding of ``H/2`` and the output encodes ``e^{H/2}/e^{alpha/2}``.
    """
    view = be_H
    if half_exponent:
        tgt = None if be_H.target is None else np.asarray(be_H.target) / 2
        view = replace(be_H, alpha=be_H.alpha / 2, eps=be_H.eps / 2, target=tgt,
                       provenance=f"half({be_H.provenance})")
    if view.target is not None and operator_norm(view.target) > view.alpha * (1 + 1e-12):
        raise ContractError(f"||H|| exceeds alpha = {view.alpha}")
    res = be_function(view, exp_spec(view.alpha), eps_poly, B_qet=1.0,
                      poly=exp_polynomial(float(view.alpha), float(eps_poly)))
    a, lp = view.alpha, math.log(1.0 / eps_poly)
    asym = math.sqrt(max(a, lp) * lp)
    return replace(res, asymptotic="O(sqrt(max(alpha, log 1/eps_poly) log 1/eps_poly))", asymptotic_value=asym)
