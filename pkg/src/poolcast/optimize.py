"""A small BFGS minimizer with a backtracking Armijo line search.

Every accepted step satisfies the sufficient-decrease condition, so the
objective sequence in ``OptimResult.history`` never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ARMIJO_C1 = 1e-4
_MAX_HALVINGS = 60
_STALL_STEPS = 5
_EPS = np.finfo(float).eps


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    message: str
    history: list = field(default_factory=list)

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def bfgs(fun_grad, x0, *, gtol: float = 1e-8, max_iter: int = 500, max_norm: float | None = None) -> OptimResult:
    """Minimize ``fun_grad(x) -> (f, g)`` starting from ``x0``.

    Stops when the gradient infinity-norm drops below ``gtol``, when the line
    search can make no further progress even from a steepest-descent
    direction, after ``max_iter`` iterations, or (if given) when the iterate
    norm exceeds ``max_norm``.

    Stiff objectives can stall with a small but nonzero gradient while ``f``
    no longer changes in floating point.  After ``_STALL_STEPS`` consecutive
    accepted steps with a decrease below a few ulps, the run stops and counts
    as converged when the gradient norm is below ``sqrt(gtol)``.
    """
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return OptimResult(x, float(f), np.asarray(g), 0, False, "non-finite objective at start", [float(f)])
    n = x.size
    H = np.eye(n)
    history = [float(f)]
    reset = True
    stalled = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < gtol:
            return OptimResult(x, f, g, it - 1, True, "gradient tolerance reached", history)
        d = -H @ g
        slope = float(g @ d)
        if not slope < 0:
            H = np.eye(n)
            d = -g
            slope = float(g @ d)
            reset = True
        step = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS):
            x_new = x + step * d
            f_new, g_new = fun_grad(x_new)
            if np.isfinite(f_new) and f_new <= f + _ARMIJO_C1 * step * slope and np.all(np.isfinite(g_new)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if reset:
                converged = bool(np.max(np.abs(g)) < gtol)
                return OptimResult(x, f, g, it, converged, "line search failed", history)
            H = np.eye(n)
            reset = True
            continue
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        stalled = stalled + 1 if f - f_new <= 4.0 * _EPS * max(1.0, abs(f)) else 0
        x, f, g = x_new, float(f_new), g_new
        history.append(f)
        if stalled >= _STALL_STEPS:
            converged = bool(np.max(np.abs(g)) < np.sqrt(gtol))
            return OptimResult(x, f, g, it, converged, "objective stationary at machine precision", history)
        if max_norm is not None and np.max(np.abs(x)) > max_norm:
            return OptimResult(x, f, g, it, False, "iterate norm limit exceeded", history)
        # skip the update when the curvature condition fails
        if sy > 1e-12 * float(np.sqrt((s @ s) * (yv @ yv))):
            if reset:
                H = np.eye(n) * (sy / float(yv @ yv))
            rho = 1.0 / sy
            Hy = H @ yv
            H = H + ((sy + yv @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
            reset = False
    converged = bool(np.max(np.abs(g)) < gtol)
    return OptimResult(x, f, g, max_iter, converged, "iteration limit", history)


def golden_section(fun, lo: float, hi: float, *, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Minimizer of a unimodal ``fun`` on ``[lo, hi]``."""
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - ratio * (b - a)
    d = a + ratio * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a < tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - ratio * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + ratio * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)
