"""Dense box-constrained quadratic programming.

    minimize  1/2 x^T H x + g^T x   subject to  lb <= x <= ub

solved by projected-Newton iterations with an active set read off the
current iterate: variables pinned at a bound with an inward-pushing
gradient are frozen, the Newton system on the free block is solved
exactly, and the step is projected back onto the box.  A projected
gradient descent step with backtracking guards the rare case where the
projected Newton step fails to decrease the objective.  H must be
symmetric positive definite, which the condensed tracking problems here
guarantee (the input-weight block is full rank).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class QpSolution:
    x: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool


def qp_objective(H: np.ndarray, g: np.ndarray, x: np.ndarray) -> float:
    return float(0.5 * x @ H @ x + g @ x)


def kkt_residual(H: np.ndarray, g: np.ndarray, x: np.ndarray,
                 lb: np.ndarray, ub: np.ndarray) -> float:
    """Infinity norm of the projected gradient (0 exactly at the optimum)."""
    grad = H @ x + g
    r = grad.copy()
    at_lo = x <= lb
    at_hi = x >= ub
    r[at_lo] = np.minimum(r[at_lo], 0.0)
    r[at_hi] = np.maximum(r[at_hi], 0.0)
    return float(np.max(np.abs(r))) if r.size else 0.0


def solve_box_qp(H: np.ndarray, g: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                 x0: np.ndarray | None = None, tol: float = 1e-8,
                 max_iters: int = 100) -> QpSolution:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n = g.shape[0]
    if H.shape != (n, n) or lb.shape != (n,) or ub.shape != (n,):
        raise ConfigError("inconsistent QP dimensions")
    if np.any(lb > ub):
        raise ConfigError("lb must be <= ub")

    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, dtype=float), lb, ub)
    kkt = kkt_residual(H, g, x, lb, ub)
    it = 0
    while kkt > tol and it < max_iters:
        it += 1
        grad = H @ x + g
        active = ((x <= lb) & (grad > 0.0)) | ((x >= ub) & (grad < 0.0))
        free = ~active
        if not np.any(free):
            break  # every variable pinned with consistent multiplier signs
        Hff = H[np.ix_(free, free)]
        try:
            dx_f = np.linalg.solve(Hff, -grad[free])
        except np.linalg.LinAlgError:
            dx_f = np.linalg.solve(Hff + 1e-12 * np.eye(Hff.shape[0]), -grad[free])
        candidate = x.copy()
        candidate[free] = candidate[free] + dx_f
        candidate = np.clip(candidate, lb, ub)
        if qp_objective(H, g, candidate) <= qp_objective(H, g, x):
            x = candidate
        else:
            # fall back to projected gradient with backtracking
            step = 1.0 / max(np.linalg.norm(H, ord=2), 1e-12)
            for _ in range(40):
                candidate = np.clip(x - step * grad, lb, ub)
                if qp_objective(H, g, candidate) <= qp_objective(H, g, x):
                    break
                step *= 0.5
            if np.array_equal(candidate, x):
                break  # no further progress possible at this precision
            x = candidate
        kkt = kkt_residual(H, g, x, lb, ub)
    return QpSolution(x=x, kkt_residual=kkt, iterations=it, converged=kkt <= tol)
