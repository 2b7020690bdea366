"""Damped Gauss-Newton (Levenberg-style) least squares used by the
calibration, pose, and window solvers.

The damping factor multiplies the normal-equation diagonal, shrinks by
10x on every accepted step and grows by 10x on every rejected one,
starting at 1e-3. Accepted iterations strictly decrease the (optionally
Huber-robustified) cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def huber_rho(e: np.ndarray, delta: float) -> np.ndarray:
    """Robust cost of per-block residual norms."""
    e = np.asarray(e, dtype=float)
    quad = e <= delta
    return np.where(quad, 0.5 * e * e, delta * (e - 0.5 * delta))


def huber_weights(e: np.ndarray, delta: float) -> np.ndarray:
    """IRLS weights; multiply residual blocks by sqrt of these."""
    e = np.asarray(e, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(e > delta, delta / np.maximum(e, 1e-300), 1.0)
    return w


def block_norms(r: np.ndarray, block: int) -> np.ndarray:
    return np.linalg.norm(r.reshape(-1, block), axis=1)


def robust_cost(r: np.ndarray, huber_delta: float | None, block: int = 2) -> float:
    if huber_delta is None:
        return 0.5 * float(r @ r)
    return float(huber_rho(block_norms(r, block), huber_delta).sum())


@dataclass
class LMResult:
    state: object
    costs: list[float] = field(default_factory=list)  # accepted costs, decreasing
    iterations: int = 0
    converged: bool = False


def lm_solve(
    state,
    residual_fn,
    jacobian_fn,
    retract,
    max_iters: int = 50,
    init_lambda: float = 1e-3,
    huber_delta: float | None = None,
    block: int = 2,
    cost_tol: float = 1e-12,
    step_tol: float = 1e-12,
) -> LMResult:
    """Minimize the (robust) squared residual norm over a manifold state.

    residual_fn(state) -> (m,) residuals; jacobian_fn(state) -> (m, n)
    derivatives w.r.t. a local increment; retract(state, dx) applies one.
    """
    r = residual_fn(state)
    cost = robust_cost(r, huber_delta, block)
    result = LMResult(state=state, costs=[cost])
    lam = init_lambda

    for it in range(max_iters):
        result.iterations = it + 1
        J = jacobian_fn(state)
        if huber_delta is not None:
            sw = np.sqrt(np.repeat(huber_weights(block_norms(r, block), huber_delta), block))
            Jw = J * sw[:, None]
            rw = r * sw
        else:
            Jw, rw = J, r
        A = Jw.T @ Jw
        g = Jw.T @ rw
        diag = np.maximum(np.diag(A), 1e-12)

        accepted = False
        for _ in range(8):  # grow damping until a step is accepted or hopeless
            try:
                dx = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = retract(state, dx)
            r_cand = residual_fn(cand)
            cost_cand = robust_cost(r_cand, huber_delta, block)
            if cost_cand < cost:
                state, r, cost = cand, r_cand, cost_cand
                result.state = state
                result.costs.append(cost)
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                step = float(np.linalg.norm(dx))
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not accepted:
            break
        if len(result.costs) >= 2:
            drop = result.costs[-2] - result.costs[-1]
            if drop < cost_tol * max(result.costs[-2], 1e-300) or step < step_tol:
                result.converged = True
                break
    else:
        result.converged = True
    return result
