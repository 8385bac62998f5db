"""Information-leakage measurement and attack demonstrations.

Mutual information is reported in bits. ``FULLY_REVEALED`` (``math.inf``)
marks quantities that are completely determined by what the adversary sees;
serializers write it as the string ``"inf"``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from . import problems as P
from ._backend import kernels
from .graph import ConstraintMatrices, Graph
from .optimizers import StepConfig, dual_dim, init_state, pdmm_round
from .subspace import convergent_basis, dual_kind
from .trace import Trace

FULLY_REVEALED = math.inf
MIN_MI_SAMPLES = 1000
LOG2E = 1.0 / math.log(2.0)


def json_float(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return v


@dataclass(frozen=True)
class AdversaryModel:
    corrupted: frozenset[int] = frozenset()
    eavesdrop_all_channels: bool = False
    secure_init_round: bool = True

    def honest(self, n: int) -> list[int]:
        return [i for i in range(n) if i not in self.corrupted]

    def validate(self, n: int) -> None:
        bad = [i for i in self.corrupted if not 0 <= i < n]
        if bad:
            raise ValueError(f"corrupted nodes {bad} are not in the graph")
        if len(self.corrupted) >= n:
            raise ValueError("at least one node must be honest")

    @classmethod
    def from_dict(cls, d: dict) -> "AdversaryModel":
        return cls(
            corrupted=frozenset(int(i) for i in d.get("corrupted", [])),
            eavesdrop_all_channels=bool(d.get("eavesdrop_all_channels", False)),
            secure_init_round=bool(d.get("secure_init_round", True)),
        )


# closed-form quantities --------------------------------------------------------------


def prop2_bound(var_x: float, var_y: float) -> float:
    """Upper bound ``0.5 log2(1 + var_x / var_y)`` on ``I(X; X + Y)`` for
    Gaussian noise ``Y``; tight when ``X`` is Gaussian too."""
    if var_x < 0 or var_y < 0:
        raise ValueError("variances must be non-negative")
    if var_y == 0:
        return FULLY_REVEALED
    if var_x == 0:
        return 0.0
    return 0.5 * math.log2(1.0 + var_x / var_y)


def honest_components(g: Graph, adv: AdversaryModel) -> list[list[int]]:
    """Connected components of the subgraph induced by the honest nodes,
    each sorted, ordered by smallest member."""
    honest = set(adv.honest(g.n))
    nbrs = g.neighbors
    seen: set[int] = set()
    comps = []
    for start in sorted(honest):
        if start in seen:
            continue
        comp, queue = [], deque([start])
        seen.add(start)
        while queue:
            v = queue.popleft()
            comp.append(v)
            for w in nbrs[v]:
                if w in honest and w not in seen:
                    seen.add(w)
                    queue.append(w)
        comps.append(sorted(comp))
    return comps


def consensus_lower_bound(component_size: int) -> float:
    """``I(S_i; sum_{j in C} S_j)`` in bits for i.i.d. Gaussian private values."""
    if component_size < 1:
        raise ValueError("component size must be >= 1")
    if component_size == 1:
        return FULLY_REVEALED
    return 0.5 * math.log2(component_size / (component_size - 1))


# k-NN mutual information --------------------------------------------------------------


def _prepare(samples, rng):
    a = np.asarray(samples, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    sd = a.std(axis=0)
    keep = sd > 0
    a = (a[:, keep] - a[:, keep].mean(axis=0)) / sd[keep]
    # tie-breaking jitter, far below the nearest-neighbour spacing
    return a + 1e-10 * rng.standard_normal(a.shape)


def estimate_mi(samples_a, samples_b, k: int = 3, min_samples: int = MIN_MI_SAMPLES) -> float:
    """Kraskov-Stoegbauer-Grassberger estimate (first variant, max-norm) of
    ``I(A; B)`` in bits.

    Inputs are standardized per coordinate first, so the estimate is
    invariant to affine rescaling of either argument. A constant input has
    no density to estimate against and takes the ``FULLY_REVEALED`` path.
    """
    a_raw = np.asarray(samples_a, dtype=float)
    b_raw = np.asarray(samples_b, dtype=float)
    n = a_raw.shape[0]
    if b_raw.shape[0] != n:
        raise ValueError("sample sets must have equal length")
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    if k < 1 or k >= n:
        raise ValueError("k must satisfy 1 <= k < number of samples")
    rng = np.random.default_rng(0)
    a = _prepare(a_raw, rng)
    b = _prepare(b_raw, rng)
    if a.shape[1] == 0 or b.shape[1] == 0:
        return FULLY_REVEALED
    joint = np.hstack([a, b])
    dist, _ = cKDTree(joint).query(joint, k=k + 1, p=np.inf)
    eps = dist[:, k] * (1.0 - 1e-12)
    nx = cKDTree(a).query_ball_point(a, eps, p=np.inf, return_length=True) - 1
    ny = cKDTree(b).query_ball_point(b, eps, p=np.inf, return_length=True) - 1
    nats = digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1))
    return float(nats * LOG2E)


def estimate_mi_max_coordinate(samples_a, samples_b, k: int = 3) -> float:
    """Largest per-coordinate estimate; used for vector-valued data (u > 1)."""
    a = np.asarray(samples_a, dtype=float).reshape(len(samples_a), -1)
    b = np.asarray(samples_b, dtype=float).reshape(len(samples_b), -1)
    return max(estimate_mi(a[:, q], b[:, q], k) for q in range(a.shape[1]))


# Monte Carlo leakage ----------------------------------------------------------------------


@dataclass
class LeakageReport:
    nodes: list[int]
    iterations: list[int]
    mi_bits: np.ndarray
    normalized_mi: np.ndarray
    self_info_bits: np.ndarray
    lower_bound_bits: np.ndarray
    effective_variance: np.ndarray
    condition16_satisfied: list[bool]
    metadata: dict = field(default_factory=dict)

    @property
    def normalized_lower_bound(self) -> np.ndarray:
        return self.lower_bound_bits / self.self_info_bits

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes,
            "iterations": self.iterations,
            "mi_bits": [[json_float(v) for v in row] for row in self.mi_bits],
            "normalized_mi": [[json_float(v) for v in row] for row in self.normalized_mi],
            "self_info_bits": [json_float(v) for v in self.self_info_bits],
            "lower_bound_bits": [json_float(v) for v in self.lower_bound_bits],
            "normalized_lower_bound": [json_float(v) for v in self.normalized_lower_bound],
            "effective_variance": [json_float(v) for v in self.effective_variance],
            "condition16_satisfied": list(self.condition16_satisfied),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "iteration", "mi_bits", "normalized_mi", "lower_bound_bits"])
        for r, node in enumerate(self.nodes):
            for c, it in enumerate(self.iterations):
                w.writerow([node, it, json_float(self.mi_bits[r, c]),
                            json_float(self.normalized_mi[r, c]),
                            json_float(self.lower_bound_bits[r])])
        return buf.getvalue()

    def write(self, stem: str | Path) -> tuple[Path, Path]:
        stem = Path(stem)
        pj, pc = stem.with_suffix(".json"), stem.with_suffix(".csv")
        pj.write_text(self.to_json())
        pc.write_text(self.to_csv())
        return pj, pc


def _incoming_rows(cm: ConstraintMatrices, optimizer: str) -> dict[tuple[int, int], np.ndarray]:
    """Flat dual indices node ``i`` reads on its edge to ``j``, keyed ``(i, j)``."""
    m, u = cm.graph.m, cm.u
    rows = {}
    for e, (a, b) in enumerate(cm.graph.edges):
        block = lambda r: np.arange(r * u, (r + 1) * u)
        if optimizer in ("pdmm", "averaged_pdmm"):
            rows[(a, b)] = block(m + e)  # lambda_{b|a}
            rows[(b, a)] = block(e)      # lambda_{a|b}
        elif optimizer == "admm":
            rows[(a, b)] = block(e)      # v_{e,a}
            rows[(b, a)] = block(m + e)  # v_{e,b}
        else:
            rows[(a, b)] = rows[(b, a)] = block(e)
    return rows


def noise_variance_per_node(
    cm: ConstraintMatrices, optimizer: str, adv: AdversaryModel, variance: float, mode: str
) -> np.ndarray:
    """For each node, the largest non-convergent noise variance on a dual
    entry it reads from an honest neighbour (min over the ``u`` coordinates)."""
    n = cm.graph.n
    out = np.zeros(n)
    if mode != "full" or variance == 0:
        return out
    basis = convergent_basis(cm, dual_kind(optimizer))
    diag = 1.0 - np.einsum("ij,ij->i", basis.basis, basis.basis)
    rows = _incoming_rows(cm, optimizer)
    for i in range(n):
        best = 0.0
        for j in cm.graph.neighbors[i]:
            if j in adv.corrupted:
                continue
            best = max(best, float(variance * diag[rows[(i, j)]].min()))
        out[i] = best
    return out


def _batched_consensus(optimizer, cm, cfg, S, D, iterations, step):
    """Synchronous stacked iterations on a batch; columns are trials.

    ``S`` is ``(n u, T)`` private data, ``D`` the ``(dim, T)`` dual inits.
    Returns ``(iterations, n u, T)`` primal iterates for rounds 1..K.
    """
    c = cfg.c
    nu = S.shape[0]
    X = np.zeros_like(S)
    deg = np.repeat(cm.degrees, cm.u)[:, None]
    out = np.empty((iterations,) + S.shape)
    if optimizer in ("pdmm", "averaged_pdmm"):
        theta = cfg.theta if optimizer == "averaged_pdmm" else 0.0
        C, PC, perm = cm.C, cm.PC, cm.perm
        CtP = C.T[:, perm]
        CtPC = C.T @ PC
        L = D
        for k in range(iterations):
            Xn = (S - CtP @ L - c * (CtPC @ X)) / (1.0 + c * deg)
            plain = L[perm] + c * (C @ Xn + PC @ X)
            L = theta * (L - c * (C @ (Xn - X))) + (1 - theta) * plain if theta else plain
            X = Xn
            out[k] = X
    elif optimizer == "admm":
        M, W = cm.M, cm.W
        V, Z = D, np.zeros((W.shape[1], S.shape[1]))
        MtW = M.T @ W
        for k in range(iterations):
            X = (S - M.T @ V - c * (MtW @ Z)) / (1.0 + c * deg)
            Mx = M @ X
            Z = -(W.T @ V + c * (W.T @ Mx)) / (2 * c)
            V = V + c * (Mx + W @ Z)
            out[k] = X
    elif optimizer == "dual_ascent":
        B = cm.B
        U = D
        for k in range(iterations):
            X = S - B.T @ U
            U = U + step * (B @ X)
            out[k] = X
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    assert out.shape[1] == nu
    return out


def _draw_trials(seed, trials, nu, dim, variance, mode, basis):
    children = np.random.SeedSequence(seed).spawn(trials)
    S = np.empty((nu, trials))
    D = np.zeros((dim, trials))
    sd = math.sqrt(variance)
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        S[:, t] = rng.standard_normal(nu)
        if mode != "zeros" and variance > 0:
            D[:, t] = rng.standard_normal(dim) * sd
    if mode == "in_subspace":
        Q = basis.basis
        D = Q @ (Q.T @ D)
    return S, D


def leakage_experiment(
    problem_template: P.ProblemInstance,
    optimizer_kind: str,
    cm: ConstraintMatrices,
    cfg: StepConfig,
    adv: AdversaryModel,
    trials: int,
    variance: float,
    iterations: int = 20,
    mode: str = "full",
    seed: int = 0,
    k: int = 3,
    variance_threshold: float | None = None,
    threads: int = 1,
) -> LeakageReport:
    """Monte Carlo estimate of ``I(S_i; X_i^(k))`` for every honest node.

    Each trial redraws the private values (unit-variance Gaussian, shaped like
    ``problem_template``) and the dual initialization from its own seeded
    stream, runs the optimizer synchronously from ``x = 0`` and keeps the
    broadcast iterates. Only consensus problems are supported.
    """
    if problem_template.kind != "consensus":
        raise ValueError("leakage experiments are defined for consensus problems")
    if trials < MIN_MI_SAMPLES:
        raise ValueError(f"trials must be >= {MIN_MI_SAMPLES} for the MI estimator")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    g = cm.graph
    adv.validate(g.n)
    u = cm.u
    nu, dim = g.n * u, dual_dim(cm, optimizer_kind)
    basis = convergent_basis(cm, dual_kind(optimizer_kind))
    S, D = _draw_trials(seed, trials, nu, dim, variance, mode, basis)
    step = None
    if optimizer_kind == "dual_ascent":
        from .optimizers import default_step
        step = cfg.t if cfg.t is not None else default_step(problem_template, cm)
    X = _batched_consensus(optimizer_kind, cm, cfg, S, D, iterations, step)

    honest = adv.honest(g.n)
    comps = honest_components(g, adv)
    comp_size = {v: len(cpt) for cpt in comps for v in cpt}

    def node_row(i):
        sl = slice(i * u, (i + 1) * u)
        s_i = S[sl].T
        self_info = estimate_mi_max_coordinate(s_i, s_i, k)
        mis = [estimate_mi_max_coordinate(s_i, X[it, sl].T, k) for it in range(iterations)]
        return self_info, mis

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(node_row, honest))
    else:
        rows = [node_row(i) for i in honest]

    self_info = np.array([r[0] for r in rows])
    mi = np.array([r[1] for r in rows])
    lb = np.array([consensus_lower_bound(comp_size[i]) for i in honest])
    eff = noise_variance_per_node(cm, optimizer_kind, adv, variance, mode)[honest]
    data_var = 1.0
    thr = 100.0 * data_var if variance_threshold is None else variance_threshold
    cond = [bool(any(j not in adv.corrupted for j in g.neighbors[i]) and e >= thr)
            for i, e in zip(honest, eff)]
    return LeakageReport(
        nodes=honest,
        iterations=list(range(1, iterations + 1)),
        mi_bits=mi,
        normalized_mi=mi / self_info[:, None],
        self_info_bits=self_info,
        lower_bound_bits=lb,
        effective_variance=eff,
        condition16_satisfied=cond,
        metadata={
            "optimizer": optimizer_kind, "trials": trials, "variance": variance,
            "mode": mode, "seed": seed, "k": k, "variance_threshold": thr,
            "corrupted": sorted(adv.corrupted),
            "estimator": "KSG (max-norm), standardized inputs; max over coordinates when u > 1",
        },
    )


# attacks and baselines ---------------------------------------------------------------------


def eavesdrop_reconstruct(
    trace: Trace,
    adv: AdversaryModel,
    cm: ConstraintMatrices,
    cfg: StepConfig,
    known_dual_init: np.ndarray | None = None,
) -> np.ndarray:
    """Invert the first consensus PDMM x-update from intercepted broadcasts.

    ``trace`` must carry ``x_history`` (rounds 0 and 1). Without the initial
    duals (secured first round) they are taken as zero, and the estimate is
    off by exactly the unknown dual term.
    """
    if trace.x_history is None or len(trace.x_history) < 2:
        raise ValueError("trace must record x for rounds 0 and 1")
    if known_dual_init is None and adv.eavesdrop_all_channels and not adv.secure_init_round:
        raise ValueError("an eavesdropper on an unsecured init round must be given the duals")
    x0, x1 = trace.x_history[0], trace.x_history[1]
    m, u = cm.graph.m, cm.u
    lam0 = np.zeros((2 * m, u)) if known_dual_init is None else np.asarray(
        known_dual_init, float).reshape(2 * m, u)
    ei, ej = cm.edge_index
    agg = kernels.pdmm_aggregate(np.ascontiguousarray(x0), lam0, ei, ej, cfg.c)
    return x1 * (1.0 + cfg.c * cm.degrees)[:, None] - agg


def dp_baseline_consensus(
    problem: P.ProblemInstance,
    cm: ConstraintMatrices,
    cfg: StepConfig,
    noise_variance: float,
    seed: int = 0,
    rounds: int = 2000,
    dual_init: np.ndarray | None = None,
) -> Trace:
    """PDMM where every broadcast ``x_i`` carries fresh Gaussian noise.

    Receivers only ever see the noisy values, so both the x-updates and the
    dual updates run on them; the trace measures the nodes' own iterates.
    """
    if problem.kind != "consensus":
        raise ValueError("the noise-on-state baseline is defined for consensus")
    if noise_variance == 0:
        return _plain_pdmm_trace(problem, cm, cfg, dual_init, rounds)
    x_star, _ = P.centralized_solution(problem)
    rng = np.random.default_rng(seed)
    sd = math.sqrt(noise_variance)
    c = cfg.c
    ei, ej = cm.edge_index
    scales = c * cm.degrees
    state = init_state("pdmm", cm, dual_init, cfg)
    lam, x_pub = state.lam, state.x.copy()
    per_round = cm.graph.n if cfg.broadcast_counts_once else 2 * cm.graph.m
    trace = Trace(metadata={"optimizer": "dp_pdmm", "noise_variance": noise_variance})
    trace.append(0, 0, float(np.sum(x_star ** 2)), math.nan, math.nan)
    for k in range(1, rounds + 1):
        agg = kernels.pdmm_aggregate(x_pub, lam, ei, ej, c)
        x = P.local_x_update_all(problem, agg, scales)
        x_new_pub = x + sd * rng.standard_normal(x.shape)
        lam = kernels.pdmm_dual_update(x_new_pub, x_pub, lam, ei, ej, c, 0.0)
        x_pub = x_new_pub
        trace.append(k, k * per_round, float(np.sum((x - x_star) ** 2)), math.nan, math.nan)
    return trace


def _plain_pdmm_trace(problem, cm, cfg, dual_init, rounds):
    x_star, _ = P.centralized_solution(problem)
    state = init_state("pdmm", cm, dual_init, cfg)
    trace = Trace(metadata={"optimizer": "dp_pdmm", "noise_variance": 0.0})
    trace.append(0, 0, float(np.sum((state.x - x_star) ** 2)), math.nan, math.nan)
    for _ in range(rounds):
        state = pdmm_round(state, problem, cm, cfg)
        trace.append(state.k, state.transmissions,
                     float(np.sum((state.x - x_star) ** 2)), math.nan, math.nan)
    return trace


def steady_state_error(trace: Trace, fraction: float = 0.25) -> float:
    """Mean squared primal error over the final ``fraction`` of rounds."""
    err = np.asarray(trace.primal_err_sq)
    tail = max(1, int(round(len(err) * fraction)))
    return float(err[-tail:].mean())
