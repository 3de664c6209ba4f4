"""Solution-space geometry in RGB 3-space.

Quantifies how far ideal pixel values can be from what a family of global
adjustments can represent: a single global point leaves a summed deviation,
an unconstrained 3-vector basis can reach any point, and restricting the
basis weights to the box [0,1]^3 (the single-channel normalized-map regime)
leaves a deviation between those extremes.  The projection onto the box
feasible set makes that middle case computable per point.
"""

from __future__ import annotations

import numpy as np


class SingularBasisError(ValueError):
    """Raised when basis vectors are linearly dependent (or nearly so)."""


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.float64).reshape(-1)
    if a.shape != (3,):
        raise ValueError(f"expected an RGB point with 3 components, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("point components must be finite")
    return a


def deviation_sum(anchor, targets) -> float:
    """Sum of Euclidean distances from ``anchor`` to each target point.

    For the single-channel (2D) argument, pass points with the unused
    components zeroed.
    """
    a = _as_point(anchor)
    ts = [_as_point(t) for t in targets]
    if not ts:
        raise ValueError("need at least one target point")
    return float(sum(np.linalg.norm(a - t) for t in ts))


def solve_basis_weights(x, y, z, d) -> tuple[float, float, float]:
    """Weights (w1, w2, w3) with ``w1*x + w2*y + w3*z == d``.

    Raises SingularBasisError when the basis is linearly dependent, judged
    by the determinant falling below 1e-12 relative to the column-norm scale.
    """
    basis = np.column_stack([_as_point(x), _as_point(y), _as_point(z)])
    target = _as_point(d)
    scale = float(np.prod(np.linalg.norm(basis, axis=0)))
    det = float(np.linalg.det(basis))
    if abs(det) <= 1e-12 * max(scale, 1e-300):
        raise SingularBasisError(
            f"basis vectors are linearly dependent (|det|={abs(det):.3e})"
        )
    w = np.linalg.solve(basis, target)
    return (float(w[0]), float(w[1]), float(w[2]))


def project_constrained(x, y, z, d, max_iter: int = 500, tol: float = 1e-10):
    """Nearest point to ``d`` in ``{w1*x + w2*y + w3*z : w in [0,1]^3}``.

    Returns ``(point, weights, distance)``.  Uses projected gradient with
    exact line search on the box-constrained quadratic; the basis may be
    dependent (the feasible set is convex either way).
    """
    basis = np.column_stack([_as_point(x), _as_point(y), _as_point(z)])
    target = _as_point(d)

    # an unconstrained solution inside the box is the exact projection
    try:
        w_exact = np.linalg.solve(basis, target)
    except np.linalg.LinAlgError:
        w_exact = None
    if (
        w_exact is not None
        and np.all(np.isfinite(w_exact))
        and np.all(w_exact >= 0.0)
        and np.all(w_exact <= 1.0)
    ):
        point = basis @ w_exact
        distance = float(np.linalg.norm(point - target))
        return point, tuple(float(v) for v in w_exact), distance

    def value(wv):
        r = basis @ wv - target
        return float(r @ r)

    w = np.full(3, 0.5)
    f_cur = value(w)
    for _ in range(max_iter):
        residual = basis @ w - target
        grad = 2.0 * (basis.T @ residual)
        bg = basis @ grad
        denom = 2.0 * float(bg @ bg)
        if denom <= 0.0:
            break
        step = float(grad @ grad) / denom
        # clipping can turn an exact-line-search step into an ascent step on
        # ill-conditioned bases; halve until it descends
        w_new = np.clip(w - step * grad, 0.0, 1.0)
        f_new = value(w_new)
        for _ in range(60):
            if f_new <= f_cur:
                break
            step *= 0.5
            w_new = np.clip(w - step * grad, 0.0, 1.0)
            f_new = value(w_new)
        converged = np.max(np.abs(w_new - w)) < tol
        w, f_cur = w_new, f_new
        if converged:
            break
    # polish: exact clamped coordinate minimization tightens the first-order
    # conditions beyond what the step-size stopping rule guarantees
    col_sq = (basis * basis).sum(axis=0)
    for _ in range(200):
        moved = 0.0
        for k in range(3):
            if col_sq[k] == 0.0:
                continue
            residual = basis @ w - target
            step = float(basis[:, k] @ residual) / col_sq[k]
            new_wk = min(1.0, max(0.0, w[k] - step))
            moved = max(moved, abs(new_wk - w[k]))
            w[k] = new_wk
        if moved < 1e-15:
            break
    # both phases converge only linearly, so ill-conditioned bases can stall
    # short of certifiable optimality; the 27 active-set patterns of the box
    # make the exact solution enumerable as a fallback
    foc_tol = 1e-10 * (1.0 + float(np.linalg.norm(target)))
    if _foc_violation(basis, target, w) > foc_tol:
        w = _best_active_set(basis, target, w)
    point = basis @ w
    distance = float(np.linalg.norm(point - target))
    return point, tuple(float(v) for v in w), distance


def _foc_violation(basis: np.ndarray, target: np.ndarray, w: np.ndarray) -> float:
    grad = 2.0 * (basis.T @ (basis @ w - target))
    worst = 0.0
    for wi, gi in zip(w, grad):
        if wi <= 0.0:
            worst = max(worst, -gi)
        elif wi >= 1.0:
            worst = max(worst, gi)
        else:
            worst = max(worst, abs(gi))
    return float(worst)


def _best_active_set(basis: np.ndarray, target: np.ndarray,
                     fallback: np.ndarray) -> np.ndarray:
    best_w = fallback
    best_f = float(np.sum((basis @ fallback - target) ** 2))
    for pattern in range(27):
        codes = (pattern % 3, pattern // 3 % 3, pattern // 9)
        w = np.zeros(3)
        free = []
        for k, code in enumerate(codes):
            if code == 0:
                free.append(k)
            else:
                w[k] = 0.0 if code == 1 else 1.0
        if free:
            rhs = target - basis @ w
            sol, *_ = np.linalg.lstsq(basis[:, free], rhs, rcond=None)
            if np.any(sol < -1e-12) or np.any(sol > 1.0 + 1e-12):
                continue
            w[free] = np.clip(sol, 0.0, 1.0)
        f = float(np.sum((basis @ w - target) ** 2))
        if f < best_f:
            best_f = f
            best_w = w
    return best_w


def first_order_violation(x, y, z, d, weights) -> float:
    """Largest violation of the box-QP optimality conditions at ``weights``.

    Zero (to tolerance) certifies the projection: interior weights need a
    vanishing gradient component, weights at 0 a nonnegative one, weights
    at 1 a nonpositive one.
    """
    basis = np.column_stack([_as_point(x), _as_point(y), _as_point(z)])
    return _foc_violation(basis, _as_point(d), np.asarray(weights, dtype=np.float64))
