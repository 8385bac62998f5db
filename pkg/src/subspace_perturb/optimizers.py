"""PDMM, averaged PDMM, ADMM and dual ascent as node-local protocols.

Every optimizer has two executions of the same update:

* ``form="local"`` (default): message passing over edges via the kernels in
  ``_backend``; this is the protocol simulation.
* ``form="stacked"``: the global matrix recursions written with ``C``, ``P``,
  ``M``, ``W`` and ``B``; used as an oracle for the local form.

Primal vectors are ``(n, u)`` arrays, dual vectors ``(2m, u)`` (or ``(m, u)``
for ``z`` and the dual-ascent multiplier) in the layout of ``graph``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import problems as P
from ._backend import kernels
from .graph import ConstraintMatrices
from .subspace import (
    SubspaceBasis,
    convergent_basis,
    dual_kind,
    optimal_dual,
    optimal_dual_admm,
    optimal_dual_ascent,
)
from .trace import Trace

log = logging.getLogger(__name__)

OPTIMIZERS = ("pdmm", "averaged_pdmm", "admm", "dual_ascent")
SCHEDULES = ("synchronous", "asynchronous")


class DivergenceError(ArithmeticError):
    """The iterates blew up (for dual ascent: step size too large)."""


@dataclass(frozen=True)
class StepConfig:
    c: float = 0.4
    theta: float = 0.5
    t: float | None = None
    schedule: str = "synchronous"
    schedule_seed: int = 0
    broadcast_counts_once: bool = False
    blowup: float = 1e12

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if self.t is not None and not self.t > 0:
            raise ValueError("t must be positive")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")


@dataclass
class OptimizerState:
    x: np.ndarray
    lam: np.ndarray | None = None
    v: np.ndarray | None = None
    z: np.ndarray | None = None
    u_vec: np.ndarray | None = None
    k: int = 0
    transmissions: int = 0
    rng: np.random.Generator | None = None

    def dual(self) -> np.ndarray:
        """The dual vector that carries the subspace noise, flattened."""
        for d in (self.lam, self.v, self.u_vec):
            if d is not None:
                return d.ravel()
        raise ValueError("state has no dual variable")


def dual_dim(cm: ConstraintMatrices, optimizer: str) -> int:
    return cm.edge_dim if optimizer == "dual_ascent" else 2 * cm.edge_dim


def init_state(
    optimizer: str,
    cm: ConstraintMatrices,
    dual_init: np.ndarray | None = None,
    cfg: StepConfig | None = None,
) -> OptimizerState:
    """Zero primal start with the given (flat) dual initialization."""
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {optimizer!r}; expected one of {OPTIMIZERS}")
    n, m, u = cm.graph.n, cm.graph.m, cm.u
    dim = dual_dim(cm, optimizer)
    d0 = np.zeros(dim) if dual_init is None else np.asarray(dual_init, dtype=float)
    if d0.shape != (dim,):
        raise ValueError(f"dual init must have length {dim}, got {d0.shape}")
    cfg = cfg or StepConfig()
    state = OptimizerState(x=np.zeros((n, u)), rng=np.random.default_rng(cfg.schedule_seed))
    if optimizer in ("pdmm", "averaged_pdmm"):
        state.lam = d0.reshape(2 * m, u).copy()
    elif optimizer == "admm":
        state.v = d0.reshape(2 * m, u).copy()
        state.z = np.zeros((m, u))
    else:
        state.u_vec = d0.reshape(m, u).copy()
    return state


def _broadcast_cost(cm: ConstraintMatrices, cfg: StepConfig) -> int:
    return cm.graph.n if cfg.broadcast_counts_once else 2 * cm.graph.m


# PDMM ------------------------------------------------------------------------------


def _pdmm_sync(state, problem, cm, cfg, theta, form):
    c = cfg.c
    n, u = cm.graph.n, cm.u
    scales = c * cm.degrees
    if form == "stacked":
        xf, lf = state.x.ravel(), state.lam.ravel()
        PC = cm.PC
        agg = -(cm.C.T @ cm.apply_P(lf)) - c * (cm.C.T @ (PC @ xf))
        x_new = P.local_x_update_all(problem, agg.reshape(n, u), scales, state.x)
        xnf = x_new.ravel()
        plain = cm.apply_P(lf) + c * (cm.C @ xnf + PC @ xf - 2 * cm.d)
        if theta:
            lam_new = theta * (lf - c * cm.C @ (xnf - xf)) + (1 - theta) * plain
        else:
            lam_new = plain
        lam_new = lam_new.reshape(-1, u)
    elif form == "local":
        ei, ej = cm.edge_index
        agg = kernels.pdmm_aggregate(state.x, state.lam, ei, ej, c)
        x_new = P.local_x_update_all(problem, agg, scales, state.x)
        lam_new = kernels.pdmm_dual_update(x_new, state.x, state.lam, ei, ej, c, theta)
    else:
        raise ValueError(f"unknown form {form!r}")
    return replace(state, x=x_new, lam=lam_new, k=state.k + 1,
                   transmissions=state.transmissions + _broadcast_cost(cm, cfg))


def _pdmm_async(state, problem, cm, cfg, theta):
    c = cfg.c
    ei, ej = cm.edge_index
    m = cm.graph.m
    i = int(state.rng.integers(cm.graph.n))
    inc = cm.incident[i]
    x, lam = state.x, state.lam
    agg = np.zeros(cm.u)
    for e in inc:
        if ei[e] == i:
            agg += c * x[ej[e]] - lam[m + e]
        else:
            agg += c * x[ei[e]] + lam[e]
    xi_new = P.local_x_update(problem, i, agg, c * len(inc), x[i])
    lam_new = lam.copy()
    for e in inc:
        # the neighbour updates the dual that node i reads back next time
        if ei[e] == i:
            j, row, sign = ej[e], e, 1.0
        else:
            j, row, sign = ei[e], m + e, -1.0
        fresh = lam[(row + m) % (2 * m)] + c * sign * (xi_new - x[j])
        if theta:
            fresh = theta * (lam[row] - c * sign * (xi_new - x[i])) + (1 - theta) * fresh
        lam_new[row] = fresh
    x_new = x.copy()
    x_new[i] = xi_new
    cost = 1 if cfg.broadcast_counts_once else len(inc)
    return replace(state, x=x_new, lam=lam_new, k=state.k + 1,
                   transmissions=state.transmissions + cost)


def pdmm_round(state, problem, cm, cfg, form="local"):
    """One PDMM round: every node (or, asynchronously, one random node)
    updates its x and the duals on its edges are refreshed by the receivers."""
    if cfg.schedule == "asynchronous":
        return _pdmm_async(state, problem, cm, cfg, 0.0)
    return _pdmm_sync(state, problem, cm, cfg, 0.0, form)


def averaged_pdmm_round(state, problem, cm, cfg, form="local"):
    """PDMM with the dual update replaced by a ``theta``-weighted average:
    ``theta (lambda - c C (x_new - x)) + (1 - theta) (P lambda + c (C x_new + PC x))``.

    This is a Krasnosel'skii-Mann averaging of the PDMM fixed-point map, so it
    converges for merely convex objectives such as lasso.
    """
    if cfg.schedule == "asynchronous":
        return _pdmm_async(state, problem, cm, cfg, cfg.theta)
    return _pdmm_sync(state, problem, cm, cfg, cfg.theta, form)


# ADMM ------------------------------------------------------------------------------


def admm_round(state, problem, cm, cfg, form="local"):
    if cfg.schedule != "synchronous":
        raise ValueError("ADMM is only simulated with the synchronous schedule")
    c = cfg.c
    n, m, u = cm.graph.n, cm.graph.m, cm.u
    scales = c * cm.degrees
    if form == "stacked":
        vf, zf = state.v.ravel(), state.z.ravel()
        agg = -(cm.M.T @ vf) - c * (cm.M.T @ (cm.W @ zf))
        x_new = P.local_x_update_all(problem, agg.reshape(n, u), scales, state.x)
        Mx = cm.M @ x_new.ravel()
        z_new = -(cm.W.T @ vf + c * (cm.W.T @ Mx)) / (2 * c)
        v_new = vf + c * (Mx + cm.W @ z_new - 2 * cm.d)
        z_new, v_new = z_new.reshape(m, u), v_new.reshape(2 * m, u)
    elif form == "local":
        ei, ej = cm.edge_index
        agg = kernels.admm_aggregate(state.z, state.v, ei, ej, c, n)
        x_new = P.local_x_update_all(problem, agg, scales, state.x)
        z_new, v_new = kernels.admm_edge_update(x_new, state.v, ei, ej, c)
    else:
        raise ValueError(f"unknown form {form!r}")
    # pairwise (x_i, v_{e,i}) packages: one per directed edge
    return replace(state, x=x_new, z=z_new, v=v_new, k=state.k + 1,
                   transmissions=state.transmissions + 2 * m)


# dual ascent -------------------------------------------------------------------------


def default_step(problem: P.ProblemInstance, cm: ConstraintMatrices) -> float:
    """``1 / lambda_max(B H^-1 B^T)`` with ``H`` the block-diagonal Hessian.

    Reduces to ``1 / lambda_max(B B^T)`` for consensus; falls back to that
    value when ``H`` is singular (lasso).
    """
    H = P.local_hessians(problem)
    B = cm.B
    if H is not None and all(np.linalg.matrix_rank(h) == cm.u for h in H):
        Hinv = np.zeros((cm.primal_dim, cm.primal_dim))
        for i, h in enumerate(H):
            sl = slice(i * cm.u, (i + 1) * cm.u)
            Hinv[sl, sl] = np.linalg.inv(h)
        K = B @ Hinv @ B.T
    else:
        K = B @ B.T
    return 1.0 / float(np.linalg.eigvalsh(K)[-1])


def dual_ascent_round(state, problem, cm, cfg, form="local", step=None):
    if cfg.schedule != "synchronous":
        raise ValueError("dual ascent is only simulated with the synchronous schedule")
    t = step if step is not None else (cfg.t if cfg.t is not None else default_step(problem, cm))
    n, m, u = cm.graph.n, cm.graph.m, cm.u
    if form == "stacked":
        linear = (cm.B.T @ state.u_vec.ravel()).reshape(n, u)
        x_new = P.dual_ascent_x_all(problem, linear, state.x)
        u_new = (state.u_vec.ravel() + t * (cm.B @ x_new.ravel() - cm.b)).reshape(m, u)
    elif form == "local":
        ei, ej = cm.edge_index
        linear = kernels.incidence_T(state.u_vec, ei, ej, n)
        x_new = P.dual_ascent_x_all(problem, linear, state.x)
        u_new = state.u_vec + t * kernels.incidence(x_new, ei, ej)
    else:
        raise ValueError(f"unknown form {form!r}")
    norm = float(np.linalg.norm(x_new))
    if not math.isfinite(norm) or norm > cfg.blowup:
        raise DivergenceError(
            f"dual ascent diverged at round {state.k + 1} (|x| = {norm:.3e}, t = {t:.3e})"
        )
    return replace(state, x=x_new, u_vec=u_new, k=state.k + 1,
                   transmissions=state.transmissions + _broadcast_cost(cm, cfg))


ROUND_FUNCTIONS = {
    "pdmm": pdmm_round,
    "averaged_pdmm": averaged_pdmm_round,
    "admm": admm_round,
    "dual_ascent": dual_ascent_round,
}


def step(optimizer, state, problem, cm, cfg, form="local"):
    return ROUND_FUNCTIONS[optimizer](state, problem, cm, cfg, form=form)


# runs ----------------------------------------------------------------------------------


def optimal_dual_for(
    optimizer: str,
    problem: P.ProblemInstance,
    cm: ConstraintMatrices,
    cfg: StepConfig,
    x_star: np.ndarray,
    grad: np.ndarray | None,
) -> np.ndarray | None:
    """Limit of the convergent dual component, or None when it is not unique."""
    if grad is None:
        return None
    g, xs = grad.ravel(), x_star.ravel()
    if optimizer in ("pdmm", "averaged_pdmm"):
        return optimal_dual(cm, g, xs, cfg.c)
    if optimizer == "admm":
        return optimal_dual_admm(cm, g)
    return optimal_dual_ascent(cm, g)


def run(
    optimizer: str,
    problem: P.ProblemInstance,
    cm: ConstraintMatrices,
    cfg: StepConfig | None = None,
    dual_init: np.ndarray | None = None,
    max_rounds: int = 10_000,
    primal_tol: float = 1e-12,
    form: str = "local",
    basis: SubspaceBasis | None = None,
    record_x: bool = False,
    record_nonconv: bool = False,
    solution: tuple[np.ndarray, np.ndarray | None] | None = None,
) -> Trace:
    """Iterate ``optimizer`` until the relative primal error drops below
    ``primal_tol`` or ``max_rounds`` rounds have run.

    Round 0 (the initial state) is recorded too. The convergent-dual error is
    NaN when the optimal dual is not unique (lasso).
    """
    cfg = cfg or StepConfig()
    x_star, grad = solution if solution is not None else P.centralized_solution(problem)
    basis = basis or convergent_basis(cm, dual_kind(optimizer))
    dual_star = optimal_dual_for(optimizer, problem, cm, cfg, x_star, grad)
    state = init_state(optimizer, cm, dual_init, cfg)
    round_fn = ROUND_FUNCTIONS[optimizer]
    kwargs = {"form": form}
    if optimizer == "dual_ascent":
        kwargs["step"] = cfg.t if cfg.t is not None else default_step(problem, cm)
    ref = float(np.linalg.norm(x_star)) or 1.0
    Q = basis.basis

    trace = Trace(metadata={"optimizer": optimizer, "problem": problem.kind})
    if record_x:
        trace.x_history = []
    if record_nonconv:
        trace.nonconv_history = []

    def record(st):
        dv = st.dual()
        conv = Q @ (Q.T @ dv)
        non = dv - conv
        cerr = float(np.sum((conv - dual_star) ** 2)) if dual_star is not None else math.nan
        perr = float(np.sum((st.x - x_star) ** 2))
        trace.append(st.k, st.transmissions, perr, cerr, float(non @ non))
        if record_x:
            trace.x_history.append(st.x.copy())
        if record_nonconv:
            trace.nonconv_history.append(non)
        return math.sqrt(perr) / ref

    rel = record(state)
    while state.k < max_rounds and rel > primal_tol:
        state = round_fn(state, problem, cm, cfg, **kwargs)
        rel = record(state)
    trace.final_state = state
    trace.metadata["rounds"] = state.k
    trace.metadata["final_rel_err"] = rel
    log.debug("%s on %s: %d rounds, rel err %.3e", optimizer, problem.kind, state.k, rel)
    return trace
