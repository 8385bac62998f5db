"""Convergent / non-convergent dual subspaces and the optimal dual point."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .graph import ConstraintMatrices

KINDS = ("pdmm", "admm", "dual_ascent")
RANK_TOL = 1e-10


class InfeasibleDualError(ValueError):
    """The optimality system for the dual has no (least-squares exact) solution."""


def _span_matrix(cm: ConstraintMatrices, kind: str) -> np.ndarray:
    if kind == "pdmm":
        return np.hstack([cm.C, cm.PC])
    if kind == "admm":
        return np.hstack([cm.M, cm.W])
    if kind == "dual_ascent":
        return cm.B
    raise ValueError(f"unknown optimizer kind {kind!r}; expected one of {KINDS}")


def dual_kind(optimizer: str) -> str:
    """Map an optimizer name to the subspace family of its dual variable."""
    return "pdmm" if optimizer in ("pdmm", "averaged_pdmm") else optimizer


@dataclass(frozen=True)
class SubspaceBasis:
    kind: str
    basis: np.ndarray
    ambient_dim: int
    rank: int
    tol: float
    complement: np.ndarray

    @property
    def null_dim(self) -> int:
        return self.ambient_dim - self.rank

    @cached_property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


def convergent_basis(
    cm: ConstraintMatrices, kind: str, tol: float = RANK_TOL
) -> SubspaceBasis:
    """Orthonormal basis of the column span where the dual iterates converge.

    ``kind`` is ``pdmm`` (span of ``[C, PC]``), ``admm`` (``[M, W]``) or
    ``dual_ascent`` (``B``). Singular values below ``tol * sigma_max`` count
    as zero.
    """
    kind = dual_kind(kind)
    A = _span_matrix(cm, kind)
    U, s, _ = np.linalg.svd(A, full_matrices=True)
    cutoff = tol * (s[0] if s.size else 0.0)
    rank = int(np.count_nonzero(s > cutoff))
    return SubspaceBasis(
        kind=kind,
        basis=np.ascontiguousarray(U[:, :rank]),
        ambient_dim=A.shape[0],
        rank=rank,
        tol=tol,
        complement=np.ascontiguousarray(U[:, rank:]),
    )


def project(basis: SubspaceBasis, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``v`` into its convergent and non-convergent components."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != basis.ambient_dim:
        raise ValueError(
            f"vector of length {v.shape[0]} does not match ambient dimension {basis.ambient_dim}"
        )
    v_conv = basis.basis @ (basis.basis.T @ v)
    return v_conv, v - v_conv


def sample_dual_init(
    dim: int,
    variance: float,
    seed: int,
    mode: str = "full",
    basis: SubspaceBasis | None = None,
) -> np.ndarray:
    """Gaussian dual initialization.

    ``mode="full"`` draws i.i.d. ``N(0, variance)`` entries. ``mode="in_subspace"``
    projects that draw onto the convergent subspace, leaving nothing in the
    non-convergent one (the non-private baseline). ``mode="zeros"`` returns the
    zero vector.
    """
    if variance < 0:
        raise ValueError("variance must be non-negative")
    if mode == "zeros":
        return np.zeros(dim)
    draw = np.random.default_rng(seed).standard_normal(dim) * np.sqrt(variance)
    if mode == "full":
        return draw
    if mode == "in_subspace":
        if basis is None:
            raise ValueError("mode='in_subspace' needs the convergent basis")
        if basis.ambient_dim != dim:
            raise ValueError("basis does not match requested dimension")
        return project(basis, draw)[0]
    raise ValueError(f"unknown init mode {mode!r}")


def _certified_pinv_solve(A: np.ndarray, rhs: np.ndarray, rtol: float) -> np.ndarray:
    sol = np.linalg.pinv(A, rcond=RANK_TOL) @ rhs
    resid = np.linalg.norm(A @ sol - rhs)
    scale = max(np.linalg.norm(rhs), 1.0)
    if resid > rtol * scale:
        raise InfeasibleDualError(
            f"optimality system residual {resid:.3e} exceeds {rtol:.1e} x {scale:.3e}"
        )
    return sol


def optimal_dual(
    cm: ConstraintMatrices,
    subgrad_at_opt: np.ndarray,
    x_star: np.ndarray,
    c: float,
    rtol: float = 1e-8,
) -> np.ndarray:
    """Limit of the convergent PDMM dual component for the optimum ``x_star``."""
    if c <= 0:
        raise ValueError("c must be positive")
    C, PC = cm.C, cm.PC
    g = np.asarray(subgrad_at_opt, dtype=float)
    x = np.asarray(x_star, dtype=float)
    A = np.vstack([C.T, PC.T])
    rhs = np.concatenate([g + c * C.T @ (C @ x), g + c * C.T @ (PC @ x)])
    return -_certified_pinv_solve(A, rhs, rtol) + c * (C @ x)


def optimal_dual_admm(
    cm: ConstraintMatrices, subgrad_at_opt: np.ndarray, rtol: float = 1e-8
) -> np.ndarray:
    """Convergent ADMM dual: solves ``grad f + M^T v = 0`` and ``W^T v = 0``."""
    A = np.vstack([cm.M.T, cm.W.T])
    rhs = np.concatenate([np.asarray(subgrad_at_opt, float), np.zeros(cm.W.shape[1])])
    return -_certified_pinv_solve(A, rhs, rtol)


def optimal_dual_ascent(
    cm: ConstraintMatrices, subgrad_at_opt: np.ndarray, rtol: float = 1e-8
) -> np.ndarray:
    """Convergent dual-ascent multiplier: solves ``grad f + B^T u = 0``."""
    return -_certified_pinv_solve(cm.B.T, np.asarray(subgrad_at_opt, float), rtol)
