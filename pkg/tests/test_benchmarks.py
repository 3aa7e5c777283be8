import math

import numpy as np
import pytest
from scipy import optimize as sciopt

from skewpbo.benchmarks import (
    answer_duel,
    builtin_benchmark,
    list_benchmarks,
    penalized_objective,
)
from skewpbo.errors import OutOfBounds, UnknownBenchmark


def grid_max(bench, num=4001):
    """Dense-grid oracle for 1D and 2D maximization benchmarks."""
    if bench.dim == 1:
        xs = np.linspace(bench.bounds[0, 0], bench.bounds[0, 1], num)
        vals = np.array([bench.evaluate([x]) for x in xs])
        i = int(np.argmax(vals))
        return xs[i:i + 1], vals[i]
    g1 = np.linspace(bench.bounds[0, 0], bench.bounds[0, 1], 401)
    g2 = np.linspace(bench.bounds[1, 0], bench.bounds[1, 1], 401)
    best_v, best_x = -np.inf, None
    for x1 in g1:
        row = np.array([bench.evaluate([x1, x2]) for x2 in g2])
        j = int(np.argmax(row))
        if row[j] > best_v:
            best_v, best_x = row[j], np.array([x1, g2[j]])
    return best_x, best_v


def multistart_max(bench, n_starts=60, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = bench.bounds[:, 0], bench.bounds[:, 1]
    best_v, best_x = -np.inf, None
    for _ in range(n_starts):
        x0 = rng.uniform(lo, hi)
        res = sciopt.minimize(lambda x: -bench.evaluate(x), x0, method="L-BFGS-B",
                              bounds=list(zip(lo, hi)))
        if -res.fun > best_v:
            best_v, best_x = -res.fun, res.x
    return best_x, best_v


class TestBuiltins:
    def test_unknown_name(self):
        with pytest.raises(UnknownBenchmark):
            builtin_benchmark("nope")

    def test_listing_contains_paper_suite(self):
        names = list_benchmarks()
        for expected in ("cos5exp", "forrester", "sixhumpcamel", "goldsteinprice",
                         "levy2", "rosenbrock5", "hartman6", "sasena"):
            assert expected in names

    def test_cos5exp_peak(self):
        b = builtin_benchmark("cos5exp")
        assert b.evaluate([0.0]) == pytest.approx(2.0, abs=1e-12)
        x, v = grid_max(b)
        assert v <= 2.0 + 1e-9
        assert abs(x[0]) < 2e-3

    def test_sasena_value_at_stored_optimum(self):
        b = builtin_benchmark("sasena")
        # literature cost at the minimizer, via the maximization form
        assert -b.evaluate(b.optimum_x) == pytest.approx(-1.1743, abs=1e-3)

    def test_sasena_optimum_is_feasible(self):
        b = builtin_benchmark("sasena")
        assert b.validity(b.optimum_x) <= 0.0
        assert b.is_valid(b.optimum_x)

    def test_sasena_feasible_grid_oracle_confirms_optimum(self):
        # the stored optimum is the best *feasible* point (it sits exactly
        # on the validity boundary); an unconstrained search leaves the
        # valid region, so the oracle filters by the constraint
        b = builtin_benchmark("sasena")
        g = np.linspace(0.0, 5.0, 801)
        best_v, best_x = -np.inf, None
        for x1 in g:
            for x2 in g:
                if b.validity([x1, x2]) <= 0.0:
                    v = b.evaluate([x1, x2])
                    if v > best_v:
                        best_v, best_x = v, np.array([x1, x2])
        assert best_v == pytest.approx(b.optimum_value, abs=5e-3)
        np.testing.assert_allclose(best_x, b.optimum_x, atol=2e-2)

    def test_forrester_grid_oracle(self):
        b = builtin_benchmark("forrester")
        x, v = grid_max(b, num=20001)
        # standard minimum of the minimization form
        assert -v == pytest.approx(-6.020740, abs=1e-4)
        assert x[0] == pytest.approx(0.757249, abs=1e-3)
        assert b.evaluate(b.optimum_x) == pytest.approx(b.optimum_value, abs=1e-4)

    @pytest.mark.parametrize("name", ["sixhumpcamel", "goldsteinprice", "levy2"])
    def test_2d_optima_match_multistart_oracle(self, name):
        b = builtin_benchmark(name)
        _, v = multistart_max(b)
        assert v == pytest.approx(b.optimum_value, abs=1e-4)
        assert b.evaluate(b.optimum_x) == pytest.approx(b.optimum_value, abs=1e-3)

    @pytest.mark.parametrize("name", ["rosenbrock5", "hartman6"])
    def test_high_dim_optima_match_multistart_oracle(self, name):
        b = builtin_benchmark(name)
        _, v = multistart_max(b, n_starts=120)
        assert v == pytest.approx(b.optimum_value, abs=1e-3)
        assert b.evaluate(b.optimum_x) == pytest.approx(b.optimum_value, abs=1e-3)

    def test_all_optima_inside_bounds(self):
        for name in list_benchmarks():
            b = builtin_benchmark(name)
            assert b.in_bounds(b.optimum_x)


class TestPenalized:
    def test_valid_region_unchanged(self):
        b = builtin_benchmark("sasena")
        p = penalized_objective(b)
        x = b.optimum_x
        assert p.evaluate(x) == b.evaluate(x)

    def test_penalty_arithmetic(self):
        b = builtin_benchmark("cos5exp_gated")
        p = penalized_objective(b, weight=1e8)
        x = [-0.3]  # h = -0.2 - (-0.3) = 0.1
        assert p.evaluate(x) == pytest.approx(b.evaluate(x) - 1e8 * 0.1**2, rel=1e-12)

    def test_invalid_point_always_loses(self):
        b = builtin_benchmark("sasena")
        p = penalized_objective(b)
        valid = b.optimum_x
        invalid = np.array([1.0, 3.0])
        assert b.validity(invalid) > 0
        out = answer_duel(p, invalid, valid)
        assert out.winner == "reference"
        out = answer_duel(p, valid, invalid)
        assert out.winner == "candidate"


class TestAnswerDuel:
    def test_global_max_wins(self):
        b = builtin_benchmark("cos5exp")
        out = answer_duel(b, [0.0], [1.0])
        assert out.winner == "candidate"
        out = answer_duel(b, [1.0], [0.0])
        assert out.winner == "reference"

    def test_tie_goes_to_incumbent(self):
        b = builtin_benchmark("cos5exp")
        out = answer_duel(b, [1.0], [1.0])
        assert out.winner == "reference"

    def test_mixed_invalid_candidate(self):
        b = builtin_benchmark("sasena")
        out = answer_duel(b, [1.0, 3.0], b.optimum_x, mixed=True)
        assert out.winner is None
        assert not out.candidate_valid

    def test_mixed_valid_candidate_gets_preference(self):
        b = builtin_benchmark("sasena")
        out = answer_duel(b, b.optimum_x, [3.0, 1.0], mixed=True)
        assert out.candidate_valid
        assert out.winner in ("candidate", "reference")

    def test_out_of_bounds_rejected(self):
        b = builtin_benchmark("forrester")
        with pytest.raises(OutOfBounds):
            answer_duel(b, [2.0], [0.5])
