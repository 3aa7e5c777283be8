"""Simulated annealing in a box, shared by the surrogate hyperparameter
searches. Maximizes; always returns the best point seen."""

from __future__ import annotations

import numpy as np


def anneal_maximize(
    fn,
    x0: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    budget: int,
    rng: np.random.Generator,
    *,
    t_start: float = 1.0,
    t_end: float = 0.01,
):
    """Geometric-cooling annealing of `fn` over the box [lo, hi].

    `budget` counts objective evaluations including the initial one.
    Returns (best_x, best_value, n_evals).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    f = float(fn(x))
    best_x, best_f = x.copy(), f
    n_evals = 1
    if budget == 1:
        return best_x, best_f, n_evals
    steps = budget - 1
    cool = (t_end / t_start) ** (1.0 / max(steps - 1, 1))
    temp = t_start
    width = hi - lo
    for _ in range(steps):
        scale = 0.25 * width * max(temp, t_end)
        cand = x + rng.standard_normal(x.shape) * scale
        cand = np.clip(cand, lo, hi)
        fc = float(fn(cand))
        n_evals += 1
        delta = fc - f
        if delta >= 0.0 or rng.uniform() < np.exp(delta / max(temp, 1e-12)):
            x, f = cand, fc
        if fc > best_f:
            best_x, best_f = cand.copy(), fc
        temp *= cool
    return best_x, best_f, n_evals
