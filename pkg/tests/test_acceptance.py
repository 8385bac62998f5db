"""End-to-end acceptance checks at their stated tolerances.

Each check records one PASS/FAIL line; pytest prints them in an
"acceptance criteria" section of the terminal summary. Running this file
directly prints the same lines without pytest.
"""
import time

import numpy as np
import pytest

from subspace_perturb import privacy as V
from subspace_perturb import problems as P
from subspace_perturb.graph import build_constraint_matrices, complete_graph, generate_geometric_graph
from subspace_perturb.harness import fit_tail_line
from subspace_perturb.optimizers import ROUND_FUNCTIONS, StepConfig, dual_dim, init_state, run
from subspace_perturb.subspace import convergent_basis, dual_kind, sample_dual_init

VARIANCE = 1e6
DUAL_SEED = 3
MAX_ROUNDS = 10_000


def graph20():
    return generate_geometric_graph(20, seed=7)


def instances():
    return {
        "consensus": P.make_consensus(20, u=1, seed=0),
        "least_squares": P.make_least_squares(20, u=3, p=5, seed=1),
    }


_runs = {}


def strict_runs():
    """PDMM and ADMM on consensus and least squares from variance-1e6 duals."""
    if not _runs:
        g = graph20()
        for kind, prob in instances().items():
            cm = build_constraint_matrices(g, prob.u)
            sol = P.centralized_solution(prob)
            for opt in ("pdmm", "admm"):
                basis = convergent_basis(cm, dual_kind(opt))
                d0 = sample_dual_init(dual_dim(cm, opt), VARIANCE, DUAL_SEED)
                t0 = time.perf_counter()
                tr = run(opt, prob, cm, StepConfig(c=0.4), d0, max_rounds=MAX_ROUNDS,
                         primal_tol=1e-11, basis=basis, record_nonconv=True, solution=sol)
                _runs[(opt, kind)] = (tr, cm, time.perf_counter() - t0)
    return _runs


def rel_errors(tr):
    e = np.sqrt(tr.column("primal_err_sq"))
    return e / e[0]


def check_1():
    lines, ok = [], True
    for (opt, kind), (tr, _, secs) in strict_runs().items():
        best = float(rel_errors(tr).min())
        good = best < 1e-10 and secs < 60
        ok &= good
        lines.append(f"{opt}/{kind} {best:.1e} in {tr.metadata['rounds']} rounds ({secs:.1f}s)")
    g = graph20()
    prob = P.make_lasso(20, u=20, p=1, alpha=0.1, seed=2)
    cm = build_constraint_matrices(g, 20)
    d0 = sample_dual_init(dual_dim(cm, "averaged_pdmm"), VARIANCE, DUAL_SEED)
    t0 = time.perf_counter()
    tr = run("averaged_pdmm", prob, cm, StepConfig(c=0.4, theta=0.5), d0,
             max_rounds=MAX_ROUNDS, primal_tol=1e-7)
    secs = time.perf_counter() - t0
    best = float(rel_errors(tr).min())
    ok &= best < 1e-6 and secs < 60
    lines.append(f"averaged_pdmm/lasso {best:.1e} in {tr.metadata['rounds']} rounds ({secs:.1f}s)")
    return ok, "; ".join(lines)


def check_2():
    ok, worst_flat, worst_perm = True, 0.0, 0.0
    for (opt, _), (tr, cm, _) in strict_runs().items():
        norms = np.sqrt(tr.column("nonconv_dual_norm_sq"))
        flat = float((norms.max() - norms.min()) / norms.max())
        worst_flat = max(worst_flat, flat)
        ok &= flat < 1e-9
        if opt == "pdmm":
            w0 = tr.nonconv_history[0]
            pw0 = cm.apply_P(w0)
            for k, w in enumerate(tr.nonconv_history):
                dev = np.linalg.norm(w - (w0 if k % 2 == 0 else pw0)) / np.linalg.norm(w0)
                worst_perm = max(worst_perm, float(dev))
            ok &= worst_perm <= 1e-10
    return ok, f"max relative norm variation {worst_flat:.1e}; max |(I-Pi)lam_k - P^k (I-Pi)lam_0| rel {worst_perm:.1e}"


def check_3():
    g = graph20()
    cm = build_constraint_matrices(g, 1)
    basis = convergent_basis(cm, "pdmm")
    prob = instances()["consensus"]
    d0 = sample_dual_init(dual_dim(cm, "pdmm"), VARIANCE, DUAL_SEED)
    w = basis.complement @ np.random.default_rng(17).standard_normal(basis.null_dim)
    w *= 1e3 / np.linalg.norm(w)
    kw = dict(max_rounds=500, primal_tol=0.0, record_x=True, basis=basis)
    a = run("pdmm", prob, cm, StepConfig(c=0.4), d0, **kw)
    b = run("pdmm", prob, cm, StepConfig(c=0.4), d0 + w, **kw)
    dev = max(float(np.abs(xa - xb).max()) for xa, xb in zip(a.x_history, b.x_history))
    return dev <= 1e-8, f"max x deviation over 500 rounds {dev:.1e} (|w| = 1e3 in the non-convergent space)"


def check_4():
    g = graph20()
    prob = instances()["least_squares"]
    cm = build_constraint_matrices(g, prob.u)
    sol = P.centralized_solution(prob)
    ok, parts = True, []
    for opt, rounds in (("dual_ascent", 3000), ("admm", 300), ("pdmm", 400)):
        slopes, offsets = [], []
        for var in (1e2, 1e4, 1e6):
            d0 = sample_dual_init(dual_dim(cm, opt), var, DUAL_SEED)
            tr = run(opt, prob, cm, StepConfig(c=0.4), d0, max_rounds=rounds, primal_tol=0.0, solution=sol)
            s, c = fit_tail_line(tr, 0.5)
            slopes.append(s)
            offsets.append(c)
        spread = (max(slopes) - min(slopes)) / abs(np.mean(slopes))
        ordered = offsets[0] < offsets[1] < offsets[2]
        ok &= spread <= 0.05 and ordered
        parts.append(f"{opt} slope {np.mean(slopes):.4g}/round spread {spread:.1%} offsets {'ordered' if ordered else 'NOT ordered'}")
    return ok, "; ".join(parts)


def check_5():
    a, b = V.prop2_bound(1, 10), V.prop2_bound(1, 100)
    ok = abs(a - 0.0688) <= 1e-4 and abs(b - 0.00718) <= 1e-5
    return ok, f"prop2_bound(1,10) = {a:.5f} bits, prop2_bound(1,100) = {b:.6f} bits"


def check_6():
    g = graph20()
    cm = build_constraint_matrices(g, 1)
    prob = instances()["consensus"]
    cfg = StepConfig(c=0.4)
    dp = []
    for var in (0.0, 1e2, 1e4):
        errs = [V.steady_state_error(V.dp_baseline_consensus(prob, cm, cfg, var, seed=s, rounds=400))
                for s in range(20)]
        dp.append(float(np.mean(errs)))
    monotone = dp[0] < dp[1] < dp[2]
    sp = []
    for var in (1e2, 1e4, 1e6):
        d0 = sample_dual_init(dual_dim(cm, "pdmm"), var, DUAL_SEED)
        tr = run("pdmm", prob, cm, cfg, d0, max_rounds=1000, primal_tol=0.0)
        sp.append(V.steady_state_error(tr))
    spread = max(sp) - min(sp)
    return monotone and spread <= 1e-10, (
        f"noise-on-state steady error {dp[0]:.2e} < {dp[1]:.2e} < {dp[2]:.2e}; "
        f"subspace-perturbed spread {spread:.1e}")


def check_7():
    g = generate_geometric_graph(8, seed=1)
    cm = build_constraint_matrices(g, 1)
    prob = P.make_consensus(8, seed=0)
    adv = V.AdversaryModel(frozenset({0}))
    cfg = StepConfig(c=0.4)
    npdmm = V.leakage_experiment(prob, "pdmm", cm, cfg, adv, 10_000, 0.0,
                                 iterations=20, mode="zeros", seed=11)
    ppdmm = V.leakage_experiment(prob, "pdmm", cm, cfg, adv, 10_000, VARIANCE,
                                 iterations=20, mode="full", seed=11)
    first = float(npdmm.normalized_mi[:, 0].min())
    excess = float((ppdmm.normalized_mi - ppdmm.normalized_lower_bound[:, None]).max())
    ok = first >= 0.9 and excess <= 0.05
    return ok, (f"non-private iteration-1 normalized MI min {first:.3f}; "
                f"p-PDMM max excess over normalized lower bound {excess:+.4f}")


def check_8():
    g = graph20()
    worst = 0.0
    cases = []
    for kind, prob in {**instances(), "lasso": P.make_lasso(20, u=4, p=1, alpha=0.1, seed=2)}.items():
        for opt in ROUND_FUNCTIONS:
            if opt == "dual_ascent" and kind == "lasso":
                continue
            cases.append((opt, kind, prob))
    for opt, kind, prob in cases:
        cm = build_constraint_matrices(g, prob.u)
        cfg = StepConfig(c=0.4, theta=0.5)
        d0 = sample_dual_init(dual_dim(cm, opt), 1.0, DUAL_SEED)
        a, b = init_state(opt, cm, d0, cfg), init_state(opt, cm, d0, cfg)
        for _ in range(5):
            a = ROUND_FUNCTIONS[opt](a, prob, cm, cfg, form="local")
            b = ROUND_FUNCTIONS[opt](b, prob, cm, cfg, form="stacked")
            worst = max(worst, float(np.abs(a.x - b.x).max()), float(np.abs(a.dual() - b.dual()).max()))
    cm3 = build_constraint_matrices(complete_graph(3), 1)
    ranks = {k: (convergent_basis(cm3, k).rank, convergent_basis(cm3, k).ambient_dim)
             for k in ("pdmm", "admm", "dual_ascent")}
    oracle = {"pdmm": np.hstack([cm3.C, cm3.PC]), "admm": np.hstack([cm3.M, cm3.W]), "dual_ascent": cm3.B}
    svd_ranks = {k: int(np.linalg.matrix_rank(A, tol=1e-10 * np.linalg.norm(A, 2))) for k, A in oracle.items()}
    ranks_ok = ranks == {"pdmm": (5, 6), "admm": (5, 6), "dual_ascent": (2, 3)} and all(
        ranks[k][0] == svd_ranks[k] for k in ranks)
    rng = np.random.default_rng(2024)
    comps_ok = True
    for _ in range(100):
        corrupted = set(rng.choice(20, size=int(rng.integers(0, 19)), replace=False).tolist())
        comps_ok &= V.honest_components(g, V.AdversaryModel(frozenset(corrupted))) == _bfs(g, corrupted)
    ok = worst <= 1e-12 and ranks_ok and comps_ok
    return ok, (f"local vs stacked max diff {worst:.1e} over {len(cases)} optimizer/problem pairs; "
                f"triangle ranks {ranks}; honest components vs BFS {'match' if comps_ok else 'MISMATCH'}")


def _bfs(g, corrupted):
    honest = [v for v in range(g.n) if v not in corrupted]
    label = {}
    for root in honest:
        if root in label:
            continue
        label[root] = root
        stack = [root]
        while stack:
            v = stack.pop()
            for w in g.neighbors[v]:
                if w not in corrupted and w not in label:
                    label[w] = root
                    stack.append(w)
    groups = {}
    for v in honest:
        groups.setdefault(label[v], []).append(v)
    return sorted(sorted(c) for c in groups.values())


def check_9():
    g = graph20()
    cm = build_constraint_matrices(g, 1)
    cfg = StepConfig(c=0.4)
    known_err, hidden = 0.0, []
    for seed in range(100):
        prob = P.make_consensus(20, seed=seed)
        d0 = sample_dual_init(dual_dim(cm, "pdmm"), VARIANCE, 10_000 + seed)
        tr = run("pdmm", prob, cm, cfg, d0, max_rounds=1, primal_tol=0.0, record_x=True)
        open_init = V.AdversaryModel(eavesdrop_all_channels=True, secure_init_round=False)
        sealed = V.AdversaryModel(eavesdrop_all_channels=True, secure_init_round=True)
        est = V.eavesdrop_reconstruct(tr, open_init, cm, cfg, known_dual_init=d0)
        known_err = max(known_err, float(np.abs(est - prob.s).max()))
        hidden.extend(np.abs(V.eavesdrop_reconstruct(tr, sealed, cm, cfg) - prob.s).ravel())
    med = float(np.median(hidden))
    return known_err <= 1e-10 and med >= 1e2, (
        f"known init max error {known_err:.1e}; hidden init median error {med:.3g}")


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9]


@pytest.mark.slow
@pytest.mark.parametrize("number", range(1, 10))
def test_criterion(number, acceptance):
    ok, detail = CHECKS[number - 1]()
    acceptance(number, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    for n, fn in enumerate(CHECKS, 1):
        ok, detail = fn()
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
