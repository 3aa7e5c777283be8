"""Benchmark objectives and the duel oracle.

All functions are exposed in maximization form (minimization problems
from the literature are negated); optima are stored alongside so runs can
report regret. The duel oracle compares noise-free values, resolving ties
for the incumbent, and in mixed mode reports candidate validity instead
of a preference when the candidate is infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import OutOfBounds, UnknownBenchmark


@dataclass(frozen=True)
class BenchmarkFn:
    name: str
    dim: int
    bounds: np.ndarray  # (dim, 2)
    evaluate: Callable  # maximization objective
    optimum_x: np.ndarray | None
    optimum_value: float | None
    validity: Callable | None = None  # h(x) <= 0 means valid
    converted_from_min: bool = False

    def in_bounds(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x >= self.bounds[:, 0] - 1e-12)
                    and np.all(x <= self.bounds[:, 1] + 1e-12))

    def is_valid(self, x) -> bool:
        if self.validity is None:
            return True
        return float(self.validity(np.atleast_1d(np.asarray(x, dtype=float)))) <= 0.0


@dataclass(frozen=True)
class DuelOutcome:
    """winner is "candidate", "reference", or None when the candidate was
    non-valid (mixed mode only)."""

    winner: str | None
    candidate_valid: bool


def _cos5exp(x):
    x = float(np.atleast_1d(x)[0])
    return math.cos(5.0 * x) + math.exp(-0.5 * x * x)


def _forrester_min(x):
    x = float(np.atleast_1d(x)[0])
    return (6.0 * x - 2.0) ** 2 * math.sin(12.0 * x - 4.0)


def _six_hump_camel_min(x):
    x1, x2 = float(x[0]), float(x[1])
    return ((4.0 - 2.1 * x1**2 + x1**4 / 3.0) * x1**2
            + x1 * x2 + (-4.0 + 4.0 * x2**2) * x2**2)


def _goldstein_price_min(x):
    x1, x2 = float(x[0]), float(x[1])
    a = 1.0 + (x1 + x2 + 1.0) ** 2 * (
        19.0 - 14.0 * x1 + 3.0 * x1**2 - 14.0 * x2 + 6.0 * x1 * x2 + 3.0 * x2**2
    )
    b = 30.0 + (2.0 * x1 - 3.0 * x2) ** 2 * (
        18.0 - 32.0 * x1 + 12.0 * x1**2 + 48.0 * x2 - 36.0 * x1 * x2 + 27.0 * x2**2
    )
    return a * b


def _levy_min(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = 1.0 + (x - 1.0) / 4.0
    head = math.sin(math.pi * w[0]) ** 2
    body = float(np.sum((w[:-1] - 1.0) ** 2
                        * (1.0 + 10.0 * np.sin(math.pi * w[:-1] + 1.0) ** 2)))
    tail = (w[-1] - 1.0) ** 2 * (1.0 + math.sin(2.0 * math.pi * w[-1]) ** 2)
    return head + body + tail


def _rosenbrock_min(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (x[:-1] - 1.0) ** 2))


_HARTMAN6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMAN6_A = np.array([
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
])
_HARTMAN6_P = 1e-4 * np.array([
    [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
    [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
    [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
    [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
])


def _hartman6_min(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    inner = np.sum(_HARTMAN6_A * (x[None, :] - _HARTMAN6_P) ** 2, axis=1)
    return -float(np.sum(_HARTMAN6_ALPHA * np.exp(-inner)))


def _sasena_min(x):
    x1, x2 = float(x[0]), float(x[1])
    return (2.0 + (x2 - x1**2) ** 2 / 100.0 + (1.0 - x1) ** 2
            + 2.0 * (2.0 - x2) ** 2
            + 7.0 * math.sin(0.5 * x1) * math.sin(0.7 * x1 * x2))


def _sasena_validity(x):
    # input is valid when h(x) = -sin(x1 - x2 - pi/8) <= 0
    return -math.sin(float(x[0]) - float(x[1]) - math.pi / 8.0)


def _gate_below(threshold):
    # valid when x > threshold
    def h(x):
        return threshold - float(np.atleast_1d(x)[0])

    return h


def _negated(fn):
    def g(x):
        return -fn(x)

    return g


def _registry() -> dict:
    return {
        "cos5exp": BenchmarkFn(
            name="cos5exp", dim=1, bounds=np.array([[-3.0, 3.0]]),
            evaluate=_cos5exp, optimum_x=np.array([0.0]), optimum_value=2.0,
        ),
        "cos5exp_gated": BenchmarkFn(
            name="cos5exp_gated", dim=1, bounds=np.array([[-3.0, 3.0]]),
            evaluate=_cos5exp, optimum_x=np.array([0.0]), optimum_value=2.0,
            validity=_gate_below(-0.2),
        ),
        "forrester": BenchmarkFn(
            name="forrester", dim=1, bounds=np.array([[0.0, 1.0]]),
            evaluate=_negated(_forrester_min),
            optimum_x=np.array([0.757249]), optimum_value=6.020740,
            converted_from_min=True,
        ),
        "sixhumpcamel": BenchmarkFn(
            name="sixhumpcamel", dim=2, bounds=np.array([[-3.0, 3.0], [-2.0, 2.0]]),
            evaluate=_negated(_six_hump_camel_min),
            optimum_x=np.array([0.0898, -0.7126]), optimum_value=1.031628,
            converted_from_min=True,
        ),
        "goldsteinprice": BenchmarkFn(
            name="goldsteinprice", dim=2, bounds=np.array([[-2.0, 2.0], [-2.0, 2.0]]),
            evaluate=_negated(_goldstein_price_min),
            optimum_x=np.array([0.0, -1.0]), optimum_value=-3.0,
            converted_from_min=True,
        ),
        "levy2": BenchmarkFn(
            name="levy2", dim=2, bounds=np.array([[-10.0, 10.0], [-10.0, 10.0]]),
            evaluate=_negated(_levy_min),
            optimum_x=np.array([1.0, 1.0]), optimum_value=0.0,
            converted_from_min=True,
        ),
        "rosenbrock5": BenchmarkFn(
            name="rosenbrock5", dim=5,
            bounds=np.array([[-2.048, 2.048]] * 5),
            evaluate=_negated(_rosenbrock_min),
            optimum_x=np.ones(5), optimum_value=0.0,
            converted_from_min=True,
        ),
        "hartman6": BenchmarkFn(
            name="hartman6", dim=6, bounds=np.array([[0.0, 1.0]] * 6),
            evaluate=_negated(_hartman6_min),
            optimum_x=np.array([0.20169, 0.150011, 0.476874,
                                0.275332, 0.311652, 0.6573]),
            optimum_value=3.322368,
            converted_from_min=True,
        ),
        "sasena": BenchmarkFn(
            name="sasena", dim=2, bounds=np.array([[0.0, 5.0], [0.0, 5.0]]),
            evaluate=_negated(_sasena_min),
            optimum_x=np.array([2.7450, 2.3523]), optimum_value=1.1743,
            validity=_sasena_validity,
            converted_from_min=True,
        ),
    }


def builtin_benchmark(name: str) -> BenchmarkFn:
    reg = _registry()
    if name not in reg:
        raise UnknownBenchmark(
            f"unknown benchmark {name!r}; available: {sorted(reg)}"
        )
    return reg[name]


def list_benchmarks() -> list[str]:
    return sorted(_registry())


def penalized_objective(bench: BenchmarkFn, weight: float = 1e8) -> BenchmarkFn:
    """Fold the validity constraint into the objective as a quadratic
    penalty; the returned benchmark has no separate validity oracle."""
    if weight <= 0.0:
        raise ValueError("penalty weight must be positive")
    if bench.validity is None:
        raise ValueError(f"benchmark {bench.name} has no validity constraint")
    h = bench.validity
    g = bench.evaluate

    def penalized(x):
        return g(x) - weight * max(0.0, float(h(x))) ** 2

    return BenchmarkFn(
        name=bench.name + "-penalized",
        dim=bench.dim,
        bounds=bench.bounds,
        evaluate=penalized,
        optimum_x=bench.optimum_x,
        optimum_value=bench.optimum_value,
        validity=None,
        converted_from_min=bench.converted_from_min,
    )


def answer_duel(bench: BenchmarkFn, candidate, reference, *, mixed: bool = False) -> DuelOutcome:
    """Noise-free comparison of the candidate against the incumbent.

    Ties go to the incumbent. In mixed mode an infeasible candidate gets
    (winner=None, candidate_valid=False) instead of a preference.
    """
    candidate = np.atleast_1d(np.asarray(candidate, dtype=float))
    reference = np.atleast_1d(np.asarray(reference, dtype=float))
    for point in (candidate, reference):
        if not bench.in_bounds(point):
            raise OutOfBounds(f"point {point} outside {bench.name} bounds")
    if mixed:
        if bench.validity is None:
            raise ValueError(f"benchmark {bench.name} has no validity oracle")
        if not bench.is_valid(candidate):
            return DuelOutcome(winner=None, candidate_valid=False)
    wins = bench.evaluate(candidate) > bench.evaluate(reference)
    return DuelOutcome(winner="candidate" if wins else "reference",
                       candidate_valid=True)
