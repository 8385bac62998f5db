import numpy as np
import pytest

from subspace_perturb import problems as P
from subspace_perturb.graph import build_constraint_matrices, from_edges, path_graph
from subspace_perturb.optimizers import StepConfig, init_state, pdmm_round
from subspace_perturb.subspace import (
    InfeasibleDualError,
    convergent_basis,
    optimal_dual,
    project,
    sample_dual_init,
)


def svd_rank(A):
    s = np.linalg.svd(A, compute_uv=False)
    return int((s > 1e-10 * s[0]).sum())


def oracle_null_projector(A):
    # independent oracle: complement projector from the full SVD of A^T
    _, s, Vt = np.linalg.svd(A.T, full_matrices=True)
    r = int((s > 1e-10 * s[0]).sum())
    N = Vt[r:].T
    return N @ N.T


@pytest.mark.parametrize("kind, ambient, rank", [("pdmm", 6, 5), ("admm", 6, 5), ("dual_ascent", 3, 2)])
def test_triangle_ranks(triangle, kind, ambient, rank):
    cm = build_constraint_matrices(triangle, 1)
    b = convergent_basis(cm, kind)
    assert (b.ambient_dim, b.rank) == (ambient, rank)
    A = {"pdmm": np.hstack([cm.C, cm.PC]), "admm": np.hstack([cm.M, cm.W]), "dual_ascent": cm.B}[kind]
    assert b.rank == svd_rank(A)
    np.testing.assert_allclose(b.basis.T @ b.basis, np.eye(b.rank), atol=1e-12)


def test_single_edge_has_no_noncovergent_room(path2):
    b = convergent_basis(build_constraint_matrices(path2, 1), "pdmm")
    assert (b.rank, b.ambient_dim, b.null_dim) == (2, 2, 0)


def test_pdmm_null_dim_lower_bound(graph20):
    for u in (1, 2):
        cm = build_constraint_matrices(graph20, u)
        b = convergent_basis(cm, "pdmm")
        assert b.null_dim == 2 * graph20.m * u - svd_rank(np.hstack([cm.C, cm.PC]))
        assert b.null_dim >= u * (graph20.m - graph20.n + 1)


def test_projection_of_ones_matches_oracle(triangle):
    cm = build_constraint_matrices(triangle, 1)
    b = convergent_basis(cm, "pdmm")
    v = np.ones(6)
    vc, vn = project(b, v)
    np.testing.assert_allclose(vc + vn, v, atol=1e-14)
    Pn = oracle_null_projector(np.hstack([cm.C, cm.PC]))
    assert np.linalg.norm(vn) == pytest.approx(np.linalg.norm(Pn @ v), abs=1e-12)


def test_projection_properties(cm20, rng):
    b = convergent_basis(cm20, "pdmm")
    v = rng.standard_normal(b.ambient_dim)
    vc, vn = project(b, v)
    np.testing.assert_allclose(project(b, vc)[0], vc, atol=1e-12)
    assert abs(vc @ vn) <= 1e-10 * (v @ v)
    col = b.basis[:, 0]
    c0, n0 = project(b, col)
    np.testing.assert_allclose(c0, col, atol=1e-12)
    np.testing.assert_allclose(n0, 0, atol=1e-12)
    w = b.complement[:, 0]
    cw, nw = project(b, w)
    np.testing.assert_allclose(cw, 0, atol=1e-12)
    with pytest.raises(ValueError):
        project(b, np.ones(3))


def test_P_permutes_nonconvergent_space(cm20, rng):
    b = convergent_basis(cm20, "pdmm")
    w = b.complement @ rng.standard_normal(b.null_dim)
    np.testing.assert_allclose(project(b, cm20.apply_P(w))[0], 0, atol=1e-10)


def test_sample_dual_init_modes(triangle):
    cm = build_constraint_matrices(triangle, 1)
    b = convergent_basis(cm, "pdmm")
    np.testing.assert_array_equal(sample_dual_init(6, 0.0, 1), 0)
    full = sample_dual_init(6, 1e6, 1)
    assert np.linalg.norm(project(b, full)[1]) > 0
    np.testing.assert_array_equal(full, sample_dual_init(6, 1e6, 1))
    ins = sample_dual_init(6, 1e6, 1, mode="in_subspace", basis=b)
    assert np.linalg.norm(project(b, ins)[1]) <= 1e-9 * np.linalg.norm(ins)
    np.testing.assert_array_equal(sample_dual_init(6, 1e6, 1, mode="zeros"), 0)
    with pytest.raises(ValueError):
        sample_dual_init(6, -1.0, 1)


def _run_pdmm(problem, cm, c, rounds):
    cfg = StepConfig(c=c)
    st = init_state("pdmm", cm, None, cfg)
    for _ in range(rounds):
        st = pdmm_round(st, problem, cm, cfg)
    return st


def test_optimal_dual_consensus_triangle(triangle):
    cm = build_constraint_matrices(triangle, 1)
    prob = P.ProblemInstance(kind="consensus", u=1, s=np.array([[0.0], [3.0], [6.0]]))
    xs, grad = P.centralized_solution(prob)
    lam_star = optimal_dual(cm, grad.ravel(), xs.ravel(), 0.4)
    st = _run_pdmm(prob, cm, 0.4, 2000)
    conv, _ = project(convergent_basis(cm, "pdmm"), st.lam.ravel())
    assert np.linalg.norm(conv - lam_star) < 1e-8


def test_optimal_dual_constant_data_is_zero_gradient_case(graph20):
    cm = build_constraint_matrices(graph20, 1)
    xs = np.full(20, 2.5)
    lam = optimal_dual(cm, np.zeros(20), xs, 0.4)
    C, PC = cm.C, cm.PC
    rhs = np.concatenate([0.4 * C.T @ C @ xs, 0.4 * C.T @ PC @ xs])
    expected = 0.4 * C @ xs - np.linalg.pinv(np.vstack([C.T, PC.T]), rcond=1e-10) @ rhs
    np.testing.assert_allclose(lam, expected, atol=1e-10)


def test_optimal_dual_least_squares_path():
    g = path_graph(3)
    cm = build_constraint_matrices(g, 2)
    prob = P.make_least_squares(3, u=2, p=4, seed=4)
    xs, grad = P.centralized_solution(prob)
    lam_star = optimal_dual(cm, grad.ravel(), xs.ravel(), 0.4)
    st = _run_pdmm(prob, cm, 0.4, 4000)
    conv, _ = project(convergent_basis(cm, "pdmm"), st.lam.ravel())
    assert np.max(np.abs(conv - lam_star)) < 1e-6


def test_optimal_dual_detects_inconsistent_certificate(triangle):
    cm = build_constraint_matrices(triangle, 1)
    # a gradient that does not sum to zero cannot be an optimality certificate
    with pytest.raises(InfeasibleDualError):
        optimal_dual(cm, np.array([1.0, 1.0, 1.0]), np.zeros(3), 0.4)


def test_admm_and_dual_ascent_ranks_on_cycle():
    g = from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    cm = build_constraint_matrices(g, 1)
    assert convergent_basis(cm, "dual_ascent").null_dim == g.m - g.n + 1
    assert convergent_basis(cm, "admm").rank == svd_rank(np.hstack([cm.M, cm.W]))
