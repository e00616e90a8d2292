"""Minimum-norm common ascent directions over the probability simplex.

Given one gradient per objective, the minimum-norm point of their convex
hull is a direction that (when nonzero) improves every objective at once.
This module solves that small quadratic program in Gram-matrix space,
provides the closed-form two-objective solution, the Euclidean projection
onto the simplex used by the iterative solver, and the associated
stationarity test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AscentResult",
    "analytic_two_objective_alpha",
    "is_pareto_stationary",
    "min_norm_direction",
    "project_to_simplex",
    "validate_weights",
]

#: Default infinity-norm step tolerance for the projected-gradient loop.
DEFAULT_TOL = 1e-10

#: Default iteration cap for the projected-gradient loop.
DEFAULT_MAX_ITERS = 10_000


def validate_weights(w, tol: float = 1e-6) -> np.ndarray:
    """Check that ``w`` lies on the probability simplex within ``tol``.

    Returns a cleaned copy (negatives clipped, renormalized). Raises
    ``ValueError`` when the input is off the simplex beyond ``tol``.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"weight vector must be 1-D and non-empty, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight vector has non-finite entries")
    if w.min() < -tol or abs(w.sum() - 1.0) > tol:
        raise ValueError(
            f"weights off the simplex beyond tolerance {tol}: sum={w.sum()!r}, min={w.min()!r}"
        )
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def _project_simplex_sorted(v: np.ndarray) -> np.ndarray:
    # Sort-and-threshold projection; assumes a finite 1-D array.
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    rho = int(np.nonzero(u + (1.0 - css) / idx > 0)[0][-1]) + 1
    tau = (css[rho - 1] - 1.0) / rho
    return np.maximum(v - tau, 0.0)


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Returns the unique ``w`` with ``w >= 0`` and ``sum(w) == 1`` minimizing
    ``||w - v||_2``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a vector with non-finite entries")
    return _project_simplex_sorted(v)


@dataclass(frozen=True)
class AscentResult:
    """Solution of the minimum-norm convex-combination problem.

    ``direction`` is the alpha-weighted combination of the gradient rows;
    ``stationary`` is True when its squared norm is at or below the
    stationarity tolerance (no common ascent direction exists to first
    order).
    """

    alpha: np.ndarray
    direction: np.ndarray
    squared_norm: float
    stationary: bool


def _default_stationary_eps(gram_diag_max: float) -> float:
    # Scale-aware zero test: absolute floor 1e-8 grown with the largest
    # squared gradient norm.
    return 1e-8 * (1.0 + gram_diag_max)


def min_norm_direction(
    grads,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    stationary_eps: float | None = None,
) -> AscentResult:
    """Minimize ``||sum_i alpha_i g_i||^2`` over the probability simplex.

    ``grads`` is an (m, d) matrix with one gradient per row, m >= 2. The
    quadratic program is solved by projected gradient iteration on the
    m x m Gram matrix (the d-dimensional rows enter only through it), with
    a conservative ``1 / (2 L)`` step size and an infinity-norm step-change
    stopping rule; a fixed point of the projected step is the exact
    constrained minimizer.
    """
    G = np.asarray(grads, dtype=float)
    if G.ndim != 2 or G.shape[0] < 2:
        raise ValueError(f"expected an (m, d) gradient matrix with m >= 2, got shape {G.shape}")
    if not np.all(np.isfinite(G)):
        raise ValueError("gradient matrix has non-finite entries")
    if max_iters < 1:
        raise ValueError("max_iters must be positive")

    m = G.shape[0]
    K = G @ G.T
    K = 0.5 * (K + K.T)  # guard against asymmetric rounding
    alpha = np.full(m, 1.0 / m)

    # Cheap Lipschitz bound for grad f = 2 K alpha: largest diagonal entry
    # plus largest absolute row sum dominates the spectral radius.
    lip = float(K.diagonal().max() + np.abs(K).sum(axis=1).max())
    if lip > 0.0:
        eta = 1.0 / (2.0 * lip)
        for _ in range(max_iters):
            nxt = _project_simplex_sorted(alpha - eta * 2.0 * (K @ alpha))
            done = np.max(np.abs(nxt - alpha)) < tol
            alpha = nxt
            if done:
                break

    direction = G.T @ alpha
    squared_norm = float(direction @ direction)
    if stationary_eps is None:
        stationary_eps = _default_stationary_eps(float(K.diagonal().max()))
    return AscentResult(
        alpha=alpha,
        direction=direction,
        squared_norm=squared_norm,
        stationary=squared_norm <= stationary_eps,
    )


def analytic_two_objective_alpha(g1, g2) -> float:
    """Closed-form weight of ``g1`` in the two-objective minimum-norm problem.

    The minimizer of ``||a g1 + (1 - a) g2||^2`` over ``a in [0, 1]`` is the
    unconstrained optimum ``((g2 - g1) . g2) / ||g1 - g2||^2`` clamped to the
    unit interval. When ``||g1 - g2|| < 1e-12`` any weight is optimal and the
    symmetric value 0.5 is returned.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    if g1.shape != g2.shape or g1.ndim != 1:
        raise ValueError(f"expected two 1-D vectors of equal length, got {g1.shape} and {g2.shape}")
    if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
        raise ValueError("gradients have non-finite entries")
    diff = g1 - g2
    denom = float(diff @ diff)
    if denom < 1e-24:  # ||g1 - g2|| < 1e-12
        return 0.5
    a = float((g2 - g1) @ g2) / denom
    return min(max(a, 0.0), 1.0)


def is_pareto_stationary(grads, eps: float | None = None) -> bool:
    """True when no convex combination of the gradients is bounded away from zero.

    Equivalent to the minimum-norm squared value being at or below ``eps``
    (scale-aware default when ``eps`` is None).
    """
    result = min_norm_direction(grads, stationary_eps=eps)
    if eps is None:
        return result.stationary
    return result.squared_norm <= eps
