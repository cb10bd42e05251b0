"""Nonlinear conjugate gradient minimizer.

Hestenes-Stiefel direction updates with a Moré-Thuente style strong-Wolfe
line search (bracketing plus cubic interpolation).  Works on a flat
variable vector; the caller supplies a combined value/gradient oracle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

STOP_F_TOL = "f_tol"
STOP_G_TOL = "g_tol"
STOP_MAX_ITERS = "max_iters"
STOP_MAX_FEVALS = "max_fevals"
STOP_LS_FAILURE = "line_search_failure"


@dataclass
class OptConfig:
    rel_f_tol: float = 1e-8
    grad_tol: float = 1e-8          # two-norm of gradient divided by variable count
    max_iters: int = 500
    max_fevals: int = 10000
    ls_c1: float = 1e-4
    ls_c2: float = 1e-2
    ls_initial_step: float = 1.0
    ls_max_trials: int = 20
    record_wolfe: bool = False


@dataclass
class OptResult:
    f: float
    gnorm_scaled: float
    iterations: int
    fevals: int
    stop_reason: str
    seconds: float
    # (f0, dphi0, alpha, f_alpha, dphi_alpha) per accepted step, only
    # populated when OptConfig.record_wolfe is set
    wolfe_log: list[tuple] = field(default_factory=list)


def _cubic_minimizer(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolant through two (point, value, slope) pairs."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sqrt(disc)
    if a > b:
        d2 = -d2
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def _interp(lo, f_lo, g_lo, hi, f_hi, g_hi):
    """Safeguarded trial point strictly inside (lo, hi)."""
    left, right = (lo, hi) if lo < hi else (hi, lo)
    width = right - left
    trial = _cubic_minimizer(lo, f_lo, g_lo, hi, f_hi, g_hi)
    if (
        trial is None
        or not np.isfinite(trial)
        or trial <= left + 0.05 * width
        or trial >= right - 0.05 * width
    ):
        trial = 0.5 * (left + right)
    return trial


def strong_wolfe_search(
    phi: Callable[[float], tuple[float, float, object]],
    f0: float,
    dphi0: float,
    alpha0: float = 1.0,
    c1: float = 1e-4,
    c2: float = 1e-2,
    max_trials: int = 20,
):
    """Line search returning a step satisfying the strong Wolfe conditions.

    ``phi(alpha)`` must return ``(phi(alpha), phi'(alpha), payload)`` where
    the payload carries whatever the caller wants back at the accepted
    step (typically the trial point and its full gradient).

    Returns ``(alpha, f, dphi, payload, trials)`` or ``None`` when no
    acceptable step is found within ``max_trials`` evaluations (e.g. the
    function keeps decreasing linearly, so no curvature point exists).
    """
    if dphi0 >= 0:
        raise ValueError("search direction is not a descent direction")
    trials = 0

    def evaluate(a):
        nonlocal trials
        trials += 1
        f, g, payload = phi(a)
        if not np.isfinite(f):
            f = np.inf
        return f, g, payload

    def zoom(a_lo, f_lo, g_lo, a_hi, f_hi, g_hi):
        while trials < max_trials:
            a = _interp(a_lo, f_lo, g_lo, a_hi, f_hi, g_hi)
            f, g, payload = evaluate(a)
            if f > f0 + c1 * a * dphi0 or f >= f_lo:
                a_hi, f_hi, g_hi = a, f, g
            else:
                if abs(g) <= -c2 * dphi0:
                    return a, f, g, payload, trials
                if g * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, g_hi = a_lo, f_lo, g_lo
                a_lo, f_lo, g_lo = a, f, g
            if abs(a_hi - a_lo) < 1e-16 * max(1.0, abs(a_hi)):
                break
        return None

    a_prev, f_prev, g_prev = 0.0, f0, dphi0
    a = alpha0
    first = True
    while trials < max_trials:
        f, g, payload = evaluate(a)
        if f > f0 + c1 * a * dphi0 or (not first and f >= f_prev):
            return zoom(a_prev, f_prev, g_prev, a, f, g)
        if abs(g) <= -c2 * dphi0:
            return a, f, g, payload, trials
        if g >= 0:
            return zoom(a, f, g, a_prev, f_prev, g_prev)
        a_prev, f_prev, g_prev = a, f, g
        a *= 2.0
        first = False
    return None


def ncg_minimize(
    fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    cfg: OptConfig | None = None,
) -> tuple[np.ndarray, OptResult]:
    """Minimize ``fun_grad`` starting from ``x0``.

    Direction update: d = -g + beta_HS * d_prev with
    beta_HS = g.(g - g_prev) / d_prev.(g - g_prev); restarts to steepest
    descent when beta is undefined, the update is not a descent direction,
    or every P iterations (P = variable count).

    Stops on the first satisfied criterion; on line-search failure the
    best iterate found so far is returned with that stop reason.
    """
    cfg = cfg or OptConfig()
    t_start = time.perf_counter()
    x = np.asarray(x0, dtype=float).copy()
    p = x.size
    f, g = fun_grad(x)
    fevals = 1
    iterations = 0
    wolfe_log: list[tuple] = []

    def result(stop):
        return OptResult(
            f=float(f),
            gnorm_scaled=float(np.linalg.norm(g)) / p,
            iterations=iterations,
            fevals=fevals,
            stop_reason=stop,
            seconds=time.perf_counter() - t_start,
            wolfe_log=wolfe_log,
        )

    if np.linalg.norm(g) / p <= cfg.grad_tol:
        return x, result(STOP_G_TOL)

    d = -g
    while True:
        if iterations >= cfg.max_iters:
            return x, result(STOP_MAX_ITERS)
        if fevals >= cfg.max_fevals:
            return x, result(STOP_MAX_FEVALS)

        dphi0 = float(d @ g)
        if dphi0 >= 0:
            d = -g
            dphi0 = -float(g @ g)

        def phi(alpha, _d=d, _x=x):
            nonlocal fevals
            fevals += 1
            xa = _x + alpha * _d
            fa, ga = fun_grad(xa)
            return fa, float(ga @ _d), (xa, ga)

        budget = min(cfg.ls_max_trials, cfg.max_fevals - fevals)
        if budget < 1:
            return x, result(STOP_MAX_FEVALS)
        hit = strong_wolfe_search(
            phi, f, dphi0, cfg.ls_initial_step, cfg.ls_c1, cfg.ls_c2, budget
        )
        if hit is None:
            # distinguish a genuinely failed search from one cut short by
            # the evaluation budget
            if fevals >= cfg.max_fevals:
                return x, result(STOP_MAX_FEVALS)
            return x, result(STOP_LS_FAILURE)
        alpha, f_new, dphi_new, (x_new, g_new), _ = hit
        if cfg.record_wolfe:
            wolfe_log.append((f, dphi0, alpha, f_new, dphi_new))
        iterations += 1

        f_old, g_old = f, g
        x, f = x_new, f_new
        y = g_new - g_old
        g = g_new

        if np.linalg.norm(g) / p <= cfg.grad_tol:
            return x, result(STOP_G_TOL)
        if abs(f_old - f) / max(1.0, abs(f_old)) <= cfg.rel_f_tol:
            return x, result(STOP_F_TOL)

        denom = float(d @ y)
        if iterations % p == 0 or abs(denom) < 1e-300:
            d = -g
        else:
            beta = float(g @ y) / denom
            d_new = -g + beta * d
            d = d_new if float(d_new @ g) < 0 else -g
