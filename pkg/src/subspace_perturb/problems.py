"""Application objectives: average consensus, least squares and LASSO.

Each node ``i`` holds private data and a local objective ``f_i``; the edge
constraints force ``x_i = x_j``. Local minimizers solve

    grad f_i(x) + scale * x = aggregate          (PDMM / ADMM x-step)
    grad f_i(x) + linear = 0                     (dual ascent x-step)

which is all the optimizers need from a problem.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._backend import kernels

PROBLEM_KINDS = ("consensus", "least_squares", "lasso")
CD_TOL = 1e-12
CD_MAX_SWEEPS = 20000


class LocalSolverError(RuntimeError):
    """A node-local minimization failed (singular system, unbounded or unconverged)."""


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    kind: str
    u: int
    s: np.ndarray | None = None
    Q: tuple[np.ndarray, ...] | None = None
    y: tuple[np.ndarray, ...] | None = None
    alpha: float = 0.0
    seed: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.kind == "consensus":
            if self.s is None or self.s.ndim != 2 or self.s.shape[1] != self.u:
                raise ValueError("consensus data s must have shape (n, u)")
        else:
            if self.Q is None or self.y is None or len(self.Q) != len(self.y):
                raise ValueError(f"{self.kind} needs per-node Q and y")
            for Qi, yi in zip(self.Q, self.y):
                if Qi.ndim != 2 or Qi.shape[1] != self.u or yi.shape != (Qi.shape[0],):
                    raise ValueError("each Q_i must be (p_i, u) with matching y_i")
        if self.kind == "lasso" and not self.alpha > 0:
            raise ValueError("lasso needs alpha > 0")

    @property
    def n(self) -> int:
        return self.s.shape[0] if self.kind == "consensus" else len(self.Q)

    @property
    def strictly_convex(self) -> bool:
        return self.kind != "lasso"

    # cached per-node quantities -------------------------------------------------

    def _qty(self) -> np.ndarray:
        if "qty" not in self._cache:
            self._cache["qty"] = np.stack([Qi.T @ yi for Qi, yi in zip(self.Q, self.y)])
        return self._cache["qty"]

    def _gram(self) -> np.ndarray:
        if "gram" not in self._cache:
            self._cache["gram"] = np.stack([Qi.T @ Qi for Qi in self.Q])
        return self._cache["gram"]

    def _inverse(self, scales: np.ndarray) -> np.ndarray:
        key = ("inv", tuple(np.asarray(scales, float).tolist()))
        if key not in self._cache:
            eye = np.eye(self.u)
            invs = []
            for i, (G, sc) in enumerate(zip(self._gram(), scales)):
                A = G + sc * eye
                if np.linalg.matrix_rank(A) < self.u:
                    raise LocalSolverError(f"node {i}: local system is singular")
                invs.append(np.linalg.inv(A))
            self._cache[key] = np.stack(invs)
        return self._cache[key]

    # serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "u": self.u, "alpha": self.alpha, "seed": self.seed}
        if self.kind == "consensus":
            out["s"] = self.s.tolist()
        else:
            out["Q"] = [Qi.tolist() for Qi in self.Q]
            out["y"] = [yi.tolist() for yi in self.y]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemInstance":
        kind = data["kind"]
        kw = dict(kind=kind, u=int(data["u"]), alpha=float(data.get("alpha", 0.0)),
                  seed=data.get("seed"))
        if kind == "consensus":
            kw["s"] = np.asarray(data["s"], dtype=float).reshape(-1, kw["u"])
        else:
            kw["Q"] = tuple(np.asarray(q, dtype=float).reshape(-1, kw["u"]) for q in data["Q"])
            kw["y"] = tuple(np.asarray(v, dtype=float) for v in data["y"])
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "ProblemInstance":
        return cls.from_json(Path(path).read_text())


# generators ---------------------------------------------------------------------


def make_consensus(n: int, u: int = 1, seed: int = 0) -> ProblemInstance:
    s = np.random.default_rng(seed).standard_normal((n, u))
    return ProblemInstance(kind="consensus", u=u, s=s, seed=seed)


def make_least_squares(n: int, u: int = 3, p: int = 5, seed: int = 0) -> ProblemInstance:
    if p <= u:
        raise ValueError("least squares needs p_i > u observations per node")
    rng = np.random.default_rng(seed)
    Q = tuple(rng.standard_normal((p, u)) for _ in range(n))
    y = tuple(rng.standard_normal(p) for _ in range(n))
    return ProblemInstance(kind="least_squares", u=u, Q=Q, y=y, seed=seed)


def make_lasso(
    n: int = 10, u: int = 20, p: int = 1, alpha: float = 0.1, seed: int = 0
) -> ProblemInstance:
    rng = np.random.default_rng(seed)
    Q = tuple(rng.standard_normal((p, u)) for _ in range(n))
    y = tuple(rng.standard_normal(p) for _ in range(n))
    return ProblemInstance(kind="lasso", u=u, Q=Q, y=y, alpha=alpha, seed=seed)


def make_problem(kind: str, n: int, seed: int = 0, **kw) -> ProblemInstance:
    if kind == "consensus":
        return make_consensus(n, u=kw.get("u", 1), seed=seed)
    if kind == "least_squares":
        return make_least_squares(n, u=kw.get("u", 3), p=kw.get("p", 5), seed=seed)
    if kind == "lasso":
        return make_lasso(n, u=kw.get("u", 20), p=kw.get("p", 1),
                          alpha=kw.get("alpha", 0.1), seed=seed)
    raise ValueError(f"unknown problem kind {kind!r}")


# local solvers -------------------------------------------------------------------


def _lasso_solve(G, h, alpha, x0, node):
    x, sweeps = kernels.lasso_cd(
        np.ascontiguousarray(G), np.ascontiguousarray(h), float(alpha),
        np.asarray(x0, dtype=float), CD_TOL, CD_MAX_SWEEPS,
    )
    if sweeps == kernels.UNBOUNDED:
        raise LocalSolverError(f"node {node}: local lasso objective is unbounded below")
    if sweeps >= CD_MAX_SWEEPS:
        raise LocalSolverError(f"node {node}: coordinate descent hit {CD_MAX_SWEEPS} sweeps")
    return x


def local_x_update(
    problem: ProblemInstance,
    i: int,
    aggregate: np.ndarray,
    scale: float,
    x_warm: np.ndarray | None = None,
) -> np.ndarray:
    """Minimize ``f_i(x) - aggregate'x + scale/2 |x|^2`` for a single node."""
    aggregate = np.asarray(aggregate, dtype=float).reshape(problem.u)
    if problem.kind == "consensus":
        return (problem.s[i] + aggregate) / (1.0 + scale)
    G = problem._gram()[i] + scale * np.eye(problem.u)
    h = problem._qty()[i] + aggregate
    if problem.kind == "least_squares":
        return np.linalg.solve(G, h)
    x0 = np.zeros(problem.u) if x_warm is None else x_warm
    return _lasso_solve(G, h, problem.alpha, x0, i)


def local_x_update_all(
    problem: ProblemInstance,
    aggregate: np.ndarray,
    scales: np.ndarray,
    x_warm: np.ndarray | None = None,
) -> np.ndarray:
    """Node-wise ``local_x_update`` for all nodes; ``aggregate`` is ``(n, u)``."""
    if problem.kind == "consensus":
        return (problem.s + aggregate) / (1.0 + scales)[:, None]
    rhs = problem._qty() + aggregate
    if problem.kind == "least_squares":
        return np.einsum("nij,nj->ni", problem._inverse(scales), rhs)
    eye = np.eye(problem.u)
    gram = problem._gram()
    x0 = np.zeros_like(rhs) if x_warm is None else x_warm
    return np.stack([
        _lasso_solve(gram[i] + scales[i] * eye, rhs[i], problem.alpha, x0[i], i)
        for i in range(problem.n)
    ])


def dual_ascent_local_x(
    problem: ProblemInstance, i: int, linear: np.ndarray, x_warm: np.ndarray | None = None
) -> np.ndarray:
    """Minimize ``f_i(x) + linear'x`` for a single node."""
    linear = np.asarray(linear, dtype=float).reshape(problem.u)
    if problem.kind == "consensus":
        return problem.s[i] - linear
    G = problem._gram()[i]
    h = problem._qty()[i] - linear
    if problem.kind == "least_squares":
        if np.linalg.matrix_rank(G) < problem.u:
            raise LocalSolverError(f"node {i}: Q_i^T Q_i is singular")
        return np.linalg.solve(G, h)
    x0 = np.zeros(problem.u) if x_warm is None else x_warm
    return _lasso_solve(G, h, problem.alpha, x0, i)


def dual_ascent_x_all(
    problem: ProblemInstance, linear: np.ndarray, x_warm: np.ndarray | None = None
) -> np.ndarray:
    if problem.kind == "consensus":
        return problem.s - linear
    rhs = problem._qty() - linear
    if problem.kind == "least_squares":
        return np.einsum("nij,nj->ni", problem._inverse(np.zeros(problem.n)), rhs)
    gram = problem._gram()
    x0 = np.zeros_like(rhs) if x_warm is None else x_warm
    return np.stack([
        _lasso_solve(gram[i], rhs[i], problem.alpha, x0[i], i) for i in range(problem.n)
    ])


def local_hessians(problem: ProblemInstance) -> np.ndarray | None:
    """Per-node Hessians ``(n, u, u)`` of the smooth objectives; None for lasso."""
    if problem.kind == "consensus":
        return np.broadcast_to(np.eye(problem.u), (problem.n, problem.u, problem.u))
    if problem.kind == "least_squares":
        return problem._gram()
    return None


# centralized oracles --------------------------------------------------------------


def _stacked(problem):
    return np.vstack(problem.Q), np.concatenate(problem.y)


def lasso_objective(problem: ProblemInstance, x: np.ndarray) -> float:
    """Network objective at a common value ``x``: ``0.5|y - Qx|^2 + n alpha |x|_1``."""
    Q, y = _stacked(problem)
    r = y - Q @ x
    return 0.5 * float(r @ r) + problem.n * problem.alpha * float(np.abs(x).sum())


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def centralized_lasso(
    Q: np.ndarray, y: np.ndarray, weight: float, tol: float = 1e-12, max_iter: int = 2_000_000
) -> np.ndarray:
    """Proximal gradient (with Nesterov momentum and restart) for
    ``0.5|y - Qx|^2 + weight |x|_1``, stopped on the prox-gradient residual."""
    L = np.linalg.norm(Q, 2) ** 2
    if L == 0:
        return np.zeros(Q.shape[1])
    QtQ, Qty = Q.T @ Q, Q.T @ y
    x = np.zeros(Q.shape[1])
    z, t = x.copy(), 1.0
    for _ in range(max_iter):
        x_new = _soft(z - (QtQ @ z - Qty) / L, weight / L)
        # gradient-mapping residual at the plain prox step from x_new
        x_chk = _soft(x_new - (QtQ @ x_new - Qty) / L, weight / L)
        if L * np.max(np.abs(x_chk - x_new)) <= tol:
            return x_chk
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if (z - x_new) @ (x_new - x) > 0:
            t_new, z = 1.0, x_new.copy()
        else:
            z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
    raise LocalSolverError("centralized proximal gradient did not reach tolerance")


def centralized_solution(problem: ProblemInstance) -> tuple[np.ndarray, np.ndarray | None]:
    """Optimum replicated per node ``(n, u)`` and the per-node gradient there.

    The gradient is ``None`` for lasso, whose subdifferential is set-valued.
    """
    n = problem.n
    if problem.kind == "consensus":
        xs = np.tile(problem.s.mean(axis=0), (n, 1))
        return xs, xs - problem.s
    Q, y = _stacked(problem)
    if problem.kind == "least_squares":
        if np.linalg.matrix_rank(Q) < problem.u:
            raise LocalSolverError("stacked Q is rank deficient")
        x = np.linalg.solve(Q.T @ Q, Q.T @ y)
        xs = np.tile(x, (n, 1))
        grads = np.stack([Qi.T @ (Qi @ x - yi) for Qi, yi in zip(problem.Q, problem.y)])
        return xs, grads
    x = centralized_lasso(Q, y, n * problem.alpha)
    return np.tile(x, (n, 1)), None
