"""Pure-Python/numpy kernels; the fallback for the compiled ``_kernels`` module.

Array conventions: ``x`` is ``(n, u)``; edge-indexed arrays are ``(m, u)``;
directed duals are ``(2m, u)`` with ``lambda_{i|j}`` in row ``e`` and
``lambda_{j|i}`` in row ``m + e`` for edge ``e = (i, j)``, ``i < j``.
"""
import numpy as np

UNBOUNDED = -1


def pdmm_aggregate(x, lam, ei, ej, c):
    """Per node ``sum_j (c x_j - B_{i|j} lambda_{j|i})``."""
    m = ei.shape[0]
    out = np.zeros_like(x)
    np.add.at(out, ei, c * x[ej] - lam[m:])
    np.add.at(out, ej, c * x[ei] + lam[:m])
    return out


def pdmm_dual_update(x_new, x_old, lam, ei, ej, c, theta):
    """Directed-dual update; ``theta = 0`` is plain PDMM, otherwise averaged PDMM.

    The averaged form is the Krasnosel'skii-Mann average of the
    Peaceman-Rachford step on ``w = P(lambda + c C x)``, which in terms of
    lambda reads ``theta (lambda - c C dx) + (1 - theta) (plain update)``.
    """
    m = ei.shape[0]
    top, bot = lam[:m], lam[m:]
    new_top = bot + c * (x_new[ei] - x_old[ej])
    new_bot = top + c * (x_old[ei] - x_new[ej])
    if theta != 0.0:
        new_top = theta * (top - c * (x_new[ei] - x_old[ei])) + (1.0 - theta) * new_top
        new_bot = theta * (bot + c * (x_new[ej] - x_old[ej])) + (1.0 - theta) * new_bot
    return np.concatenate([new_top, new_bot])


def admm_aggregate(z, v, ei, ej, c, n):
    """Per node ``sum_{e incident} (c z_e - v_{e,i})``."""
    m = ei.shape[0]
    out = np.zeros((n, z.shape[1]))
    np.add.at(out, ei, c * z - v[:m])
    np.add.at(out, ej, c * z - v[m:])
    return out


def admm_edge_update(x, v, ei, ej, c):
    """Closed-form z-minimization followed by the v ascent step."""
    m = ei.shape[0]
    xi, xj = x[ei], x[ej]
    z = 0.5 * (xi + xj) + (v[:m] + v[m:]) / (2.0 * c)
    v_new = np.concatenate([v[:m] + c * (xi - z), v[m:] + c * (xj - z)])
    return z, v_new


def incidence(x, ei, ej):
    """``B x`` with one row block per edge."""
    return x[ei] - x[ej]


def incidence_T(w, ei, ej, n):
    """``B^T w`` with one row block per node."""
    out = np.zeros((n, w.shape[1]))
    np.add.at(out, ei, w)
    np.subtract.at(out, ej, w)
    return out


def lasso_cd(G, h, alpha, x0, tol, max_iter):
    """Cyclic coordinate descent on ``0.5 x'Gx - h'x + alpha |x|_1``.

    Stops when no coordinate moved by more than ``tol * max(1, max|x|)``.
    Returns ``(x, sweeps)``; ``sweeps`` is ``UNBOUNDED`` when a coordinate with
    zero curvature has a linear pull stronger than ``alpha``, and equals
    ``max_iter`` when the tolerance was not reached.
    """
    u = h.shape[0]
    x = np.array(x0, dtype=float)
    r = h - G @ x
    for sweep in range(1, max_iter + 1):
        delta = 0.0
        for k in range(u):
            gkk = G[k, k]
            rho = r[k] + gkk * x[k]
            if gkk > 0.0:
                if rho > alpha:
                    new = (rho - alpha) / gkk
                elif rho < -alpha:
                    new = (rho + alpha) / gkk
                else:
                    new = 0.0
            elif abs(rho) <= alpha:
                new = 0.0
            else:
                return x, UNBOUNDED
            step = new - x[k]
            if step != 0.0:
                r -= G[:, k] * step
                x[k] = new
                delta = max(delta, abs(step))
        if delta <= tol * max(1.0, float(np.max(np.abs(x)))):
            return x, sweep
    return x, max_iter
