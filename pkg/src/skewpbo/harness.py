"""Full preferential-optimization loop: initialization, duel iterations,
hyperparameter re-optimization on a schedule, trial repetition, and
result export.

Seeding discipline: every random stream is derived from (master seed,
trial, purpose, iteration) and never from the surrogate, so competing
surrogates see identical initial duels and identical acquisition
candidate sets. Wall-clock times are exported to a separate file so the
remaining exports are byte-identical across runs with the same seed.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acquisition import AcquisitionSpec, optimize_acquisition, update_reference
from .benchmarks import BenchmarkFn, answer_duel, builtin_benchmark, penalized_objective
from .duels import DuelLog, build_duel_matrix, build_mixed_matrix
from .errors import InvalidConfig
from .kernels import RbfArdKernel
from .laplace import fit_laplace, laplace_pair_diff_samples, laplace_predict, \
    optimize_hyperparams_laplace
from .skewgp import fit_posterior, optimize_hyperparams, pair_diff_samples, \
    predict_samples, skewness_statistic

log = logging.getLogger(__name__)

SURROGATE_SKEWGP = "skewgp"
SURROGATE_GPL = "gpl"

# purpose tags for seed derivation
_SEED_INIT = 0
_SEED_CANDIDATES = 1
_SEED_BANK = 2
_SEED_HYPEROPT = 3
_SEED_XR = 4


@dataclass
class ExperimentConfig:
    benchmark: str
    surrogate: str = SURROGATE_SKEWGP
    acquisition: AcquisitionSpec = field(default_factory=AcquisitionSpec)
    n_initial_duels: int = 10
    duel_budget: int = 100
    n_trials: int = 20
    master_seed: int = 0
    mixed_mode: bool = False
    penalty_mode: bool = False
    penalty_weight: float = 1e8
    kernel: dict | None = None  # fixed (or initial) kernel parameters
    hyperopt_every: int = 5  # duels between re-optimizations; 0 disables
    hyperopt_budget: int = 30
    u1_bank: int = 2000
    u1_chains: int = 1
    n_jobs: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.surrogate not in (SURROGATE_SKEWGP, SURROGATE_GPL):
            raise InvalidConfig(f"unknown surrogate {self.surrogate!r}")
        if self.n_initial_duels < 1 or self.duel_budget < self.n_initial_duels:
            raise InvalidConfig("need 1 <= n_initial_duels <= duel_budget")
        if self.n_trials < 1:
            raise InvalidConfig("n_trials must be positive")
        if self.penalty_weight <= 0.0:
            raise InvalidConfig("penalty_weight must be positive")
        if self.mixed_mode and self.penalty_mode:
            raise InvalidConfig("mixed_mode and penalty_mode are exclusive")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "benchmark", "surrogate", "n_initial_duels", "duel_budget",
            "n_trials", "master_seed", "mixed_mode", "penalty_mode",
            "penalty_weight", "kernel", "hyperopt_every", "hyperopt_budget",
            "u1_bank", "u1_chains", "n_jobs", "out_dir")}
        d["acquisition"] = self.acquisition.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        acq = d.pop("acquisition", None)
        cfg = cls(acquisition=AcquisitionSpec.from_dict(acq) if acq else AcquisitionSpec(), **d)
        return cfg

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class IterationRow:
    iteration: int
    proposed: list
    outcome: str  # "init" | "candidate" | "reference" | "non_valid"
    x_r: list
    g_xr: float  # oracle objective at the reference (penalized form if used)
    g_xr_raw: float  # plain benchmark objective at the reference
    wall_ms: float


@dataclass
class TrialRecord:
    trial: int
    surrogate: str
    acquisition: str
    benchmark: str
    rows: list
    final_kernel: dict
    failed: bool = False
    error: str = ""

    def final_g(self) -> float:
        return self.rows[-1].g_xr_raw if self.rows else float("nan")

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "surrogate": self.surrogate,
            "acquisition": self.acquisition,
            "benchmark": self.benchmark,
            "rows": [{
                "iteration": r.iteration,
                "proposed": r.proposed,
                "outcome": r.outcome,
                "x_r": r.x_r,
                "g_xr": r.g_xr,
                "g_xr_raw": r.g_xr_raw,
            } for r in self.rows],
            "wall_ms": [r.wall_ms for r in self.rows],
            "final_kernel": self.final_kernel,
            "failed": self.failed,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        walls = d.get("wall_ms", [0.0] * len(d["rows"]))
        rows = [IterationRow(wall_ms=walls[i], **r) for i, r in enumerate(d["rows"])]
        return cls(trial=d["trial"], surrogate=d["surrogate"],
                   acquisition=d["acquisition"], benchmark=d["benchmark"],
                   rows=rows, final_kernel=d["final_kernel"],
                   failed=d.get("failed", False), error=d.get("error", ""))


def _rng(config: ExperimentConfig, trial: int, purpose: int, iteration: int = 0):
    return np.random.default_rng(
        np.random.SeedSequence([config.master_seed, trial, purpose, iteration])
    )


def _default_kernel(bench: BenchmarkFn) -> RbfArdKernel:
    spans = bench.bounds[:, 1] - bench.bounds[:, 0]
    return RbfArdKernel(lengthscales=0.2 * spans, variance=1.0)


def _oracle(bench: BenchmarkFn, config: ExperimentConfig) -> BenchmarkFn:
    if config.penalty_mode:
        return penalized_objective(bench, config.penalty_weight)
    return bench


class _Surrogate:
    """Thin uniform facade over the two posterior kinds for the loop."""

    def __init__(self, config: ExperimentConfig, kernel: RbfArdKernel):
        self.config = config
        self.kernel = kernel
        self.post = None
        self._mode_warm = None

    def fit(self, duel_log: DuelLog, trial: int, iteration: int):
        cfg = self.config
        if cfg.mixed_mode:
            w = build_mixed_matrix(duel_log.mixed_dataset())
        else:
            w = build_duel_matrix(duel_log.preference_dataset())
        x = duel_log.registry.as_array()
        if cfg.surrogate == SURROGATE_SKEWGP:
            self.post = fit_posterior(
                x, w, self.kernel, bank_size=cfg.u1_bank,
                rng=_rng(cfg, trial, _SEED_BANK, iteration),
                n_chains=cfg.u1_chains,
            )
        else:
            self.post = fit_laplace(x, w, self.kernel,
                                    warm_start_weights=self._mode_warm)
            self._mode_warm = self.post.weights
        return x, w

    def reoptimize(self, duel_log: DuelLog, trial: int, iteration: int):
        cfg = self.config
        if cfg.mixed_mode:
            w = build_mixed_matrix(duel_log.mixed_dataset())
        else:
            w = build_duel_matrix(duel_log.preference_dataset())
        x = duel_log.registry.as_array()
        rng = _rng(cfg, trial, _SEED_HYPEROPT, iteration)
        if cfg.surrogate == SURROGATE_SKEWGP:
            self.kernel, _ = optimize_hyperparams(
                x, w, self.kernel, cfg.hyperopt_budget, rng)
        else:
            self.kernel, _ = optimize_hyperparams_laplace(
                x, w, self.kernel, cfg.hyperopt_budget, rng)

    def posterior_means(self, points: np.ndarray, trial: int) -> np.ndarray:
        if self.config.surrogate == SURROGATE_SKEWGP:
            s = predict_samples(self.post, points, 512,
                                _rng(self.config, trial, _SEED_XR))
            return s.mean(axis=0)
        mean, _ = laplace_predict(self.post, points)
        return mean


def _pick_reference(duel_log: DuelLog, surrogate: _Surrogate, config: ExperimentConfig,
                    trial: int) -> np.ndarray:
    points = duel_log.registry.as_array()
    if config.mixed_mode:
        eligible = [i for i in range(len(points)) if duel_log.labels.get(i) == 1]
        if not eligible:
            return points[0].copy()
    else:
        eligible = list(range(len(points)))
    means = surrogate.posterior_means(points[eligible], trial)
    return points[eligible[int(np.argmax(means))]].copy()


def _initial_data(bench: BenchmarkFn, oracle: BenchmarkFn,
                  config: ExperimentConfig, trial: int) -> DuelLog:
    rng = _rng(config, trial, _SEED_INIT)
    lo, hi = bench.bounds[:, 0], bench.bounds[:, 1]
    pts = rng.uniform(lo, hi, size=(2 * config.n_initial_duels, bench.dim))
    duel_log = DuelLog(dim=bench.dim)
    for k in range(config.n_initial_duels):
        a, b = pts[2 * k], pts[2 * k + 1]
        if config.mixed_mode:
            a_ok = bench.is_valid(a)
            b_ok = bench.is_valid(b)
            duel_log.add_label(a, a_ok)
            duel_log.add_label(b, b_ok)
            if a_ok and b_ok:
                out = answer_duel(bench, a, b, mixed=True)
                if out.winner == "candidate":
                    duel_log.add_duel(a, b)
                else:
                    duel_log.add_duel(b, a)
        else:
            out = answer_duel(oracle, a, b)
            if out.winner == "candidate":
                duel_log.add_duel(a, b)
            else:
                duel_log.add_duel(b, a)
    return duel_log


def run_trial(config: ExperimentConfig, trial: int) -> TrialRecord:
    bench = builtin_benchmark(config.benchmark)
    oracle = _oracle(bench, config)
    record = TrialRecord(
        trial=trial, surrogate=config.surrogate,
        acquisition=config.acquisition.kind, benchmark=config.benchmark,
        rows=[], final_kernel={},
    )
    try:
        t0 = time.perf_counter()
        duel_log = _initial_data(bench, oracle, config, trial)
        kernel = (RbfArdKernel.from_dict(config.kernel) if config.kernel
                  else _default_kernel(bench))
        surrogate = _Surrogate(config, kernel)
        surrogate.fit(duel_log, trial, 0)
        x_r = _pick_reference(duel_log, surrogate, config, trial)
        record.rows.append(IterationRow(
            iteration=0, proposed=x_r.tolist(), outcome="init",
            x_r=x_r.tolist(), g_xr=float(oracle.evaluate(x_r)),
            g_xr_raw=float(bench.evaluate(x_r)),
            wall_ms=(time.perf_counter() - t0) * 1e3,
        ))

        n_rounds = config.duel_budget - config.n_initial_duels
        for t in range(1, n_rounds + 1):
            t0 = time.perf_counter()
            if config.hyperopt_every > 0 and (t - 1) % config.hyperopt_every == 0:
                surrogate.reoptimize(duel_log, trial, t)
            surrogate.fit(duel_log, trial, t)
            proposal = optimize_acquisition(
                surrogate.post, config.acquisition, x_r, bench.bounds,
                _rng(config, trial, _SEED_CANDIDATES, t),
            )
            cand = np.clip(proposal.candidate, bench.bounds[:, 0], bench.bounds[:, 1])

            if config.mixed_mode:
                out = answer_duel(bench, cand, x_r, mixed=True)
                if out.winner is None:
                    duel_log.add_label(cand, False)
                    outcome = "non_valid"
                else:
                    duel_log.add_label(cand, True)
                    outcome = out.winner
                    if not np.array_equal(cand, x_r):
                        if out.winner == "candidate":
                            duel_log.add_duel(cand, x_r)
                        else:
                            duel_log.add_duel(x_r, cand)
                    x_r = update_reference(x_r, cand, out.winner)
            else:
                out = answer_duel(oracle, cand, x_r)
                outcome = out.winner
                if not np.array_equal(cand, x_r):
                    if out.winner == "candidate":
                        duel_log.add_duel(cand, x_r)
                    else:
                        duel_log.add_duel(x_r, cand)
                x_r = update_reference(x_r, cand, out.winner)

            record.rows.append(IterationRow(
                iteration=t, proposed=cand.tolist(), outcome=outcome,
                x_r=np.atleast_1d(x_r).tolist(),
                g_xr=float(oracle.evaluate(x_r)),
                g_xr_raw=float(bench.evaluate(x_r)),
                wall_ms=(time.perf_counter() - t0) * 1e3,
            ))
        record.final_kernel = surrogate.kernel.to_dict()
    except Exception as exc:  # record and continue with other trials
        log.exception("trial %d failed", trial)
        record.failed = True
        record.error = f"{type(exc).__name__}: {exc}"
    return record


def _run_trial_dict(args) -> dict:
    config_dict, trial = args
    return run_trial(ExperimentConfig.from_dict(config_dict), trial).to_dict()


def run_pbo(config: ExperimentConfig) -> list[TrialRecord]:
    """All trials of one experiment, optionally across processes; results
    are ordered by trial index regardless of scheduling."""
    trials = list(range(config.n_trials))
    if config.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            dicts = list(pool.map(_run_trial_dict,
                                  [(config.to_dict(), t) for t in trials]))
        return [TrialRecord.from_dict(d) for d in dicts]
    return [run_trial(config, t) for t in trials]


# ---------------------------------------------------------------------------
# Export.
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return ";".join(_fmt(c) for c in v)


def curve_table(post, x_r, bounds, n_grid: int = 200, mc: int = 4000, seed: int = 0):
    """Posterior summary of f(x) - f(x_r) on a grid: mean, shortest-95%
    band, and the skewness statistic per grid point (1D only)."""
    from .acquisition import shortest_interval
    from .laplace import LaplacePosterior

    grid = np.linspace(bounds[0, 0], bounds[0, 1], n_grid)[:, None]
    x_r = np.atleast_1d(np.asarray(x_r, dtype=float))
    rows = []
    if isinstance(post, LaplacePosterior):
        mean_diff, l11, l21, l22, same = _laplace_pair_terms(post, grid, x_r)
        sd = np.sqrt(np.maximum((l11 - l21) ** 2 + l22**2, 0.0))
        for i, x in enumerate(grid[:, 0]):
            half = 1.959963984540054 * sd[i]
            rows.append((x, mean_diff[i], mean_diff[i] - half, mean_diff[i] + half, 0.0))
        return rows
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((mc, 2))
    idx = rng.integers(0, max(post.bank_size, 1), size=mc)
    diffs = pair_diff_samples(post, grid, x_r, z, idx)
    for i, x in enumerate(grid[:, 0]):
        d = diffs[i]
        if d.std() < 1e-12:
            rows.append((x, float(d.mean()), float(d.mean()), float(d.mean()), 0.0))
            continue
        lo, hi = shortest_interval(d, 0.95)
        rows.append((x, float(d.mean()), lo, hi, skewness_statistic(d)))
    return rows


def _laplace_pair_terms(post, grid, x_r):
    from .laplace import laplace_pair_chol_terms

    return laplace_pair_chol_terms(post, grid, x_r)


def export_results(records: list[TrialRecord], out_dir, config: ExperimentConfig,
                   fmt: str = "csv") -> dict:
    """Write the per-iteration long table, the median summary, wall-clock
    timings (separate file, excluded from determinism comparisons), the
    full records, and for 1D benchmarks a posterior curve table from the
    first successful trial's final state."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not records:
        raise ValueError("no records to export")
    written = {}

    rows = []
    for rec in records:
        for r in rec.rows:
            rows.append({
                "trial": rec.trial, "iteration": r.iteration,
                "surrogate": rec.surrogate, "acquisition": rec.acquisition,
                "benchmark": rec.benchmark, "outcome": r.outcome,
                "proposed": _vec(r.proposed), "x_r": _vec(r.x_r),
                "g_xr": r.g_xr, "g_xr_raw": r.g_xr_raw,
            })

    header = ["trial", "iteration", "surrogate", "acquisition", "benchmark",
              "outcome", "proposed", "x_r", "g_xr", "g_xr_raw"]
    if fmt == "csv":
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(
                _fmt(r[k]) if isinstance(r[k], float) else str(r[k]) for k in header
            ))
        (out / "results.csv").write_text("\n".join(lines) + "\n")
        written["results"] = out / "results.csv"
    else:
        (out / "results.json").write_text(json.dumps(rows, indent=1))
        written["results"] = out / "results.json"

    timing_lines = ["trial,iteration,wall_ms"]
    for rec in records:
        for r in rec.rows:
            timing_lines.append(f"{rec.trial},{r.iteration},{r.wall_ms:.3f}")
    (out / "timings.csv").write_text("\n".join(timing_lines) + "\n")
    written["timings"] = out / "timings.csv"

    ok = [r for r in records if not r.failed and r.rows]
    finals = [r.final_g() for r in ok]
    bench = builtin_benchmark(config.benchmark)
    summary = {
        "surrogate": config.surrogate,
        "acquisition": config.acquisition.kind,
        "benchmark": config.benchmark,
        "n_trials": len(records),
        "n_failed": sum(r.failed for r in records),
        "median_final_g": float(np.median(finals)) if finals else float("nan"),
        "median_final_regret": (
            float(np.median([bench.optimum_value - g for g in finals]))
            if finals and bench.optimum_value is not None else float("nan")
        ),
    }

    curve_rows = None
    if bench.dim == 1 and ok:
        rec = ok[0]
        post, x_r = _refit_final_state(config, rec)
        curve_rows = curve_table(post, x_r, bench.bounds, seed=config.master_seed)
        lines = ["x,mean_diff,band_lo,band_hi,ss"]
        for x, m, lo, hi, ss in curve_rows:
            lines.append(",".join(_fmt(v) for v in (x, m, lo, hi, ss)))
        (out / "curves.csv").write_text("\n".join(lines) + "\n")
        written["curves"] = out / "curves.csv"
        summary["max_abs_ss"] = float(max(abs(r[4]) for r in curve_rows))

    skeys = sorted(summary)
    (out / "summary.csv").write_text(
        ",".join(skeys) + "\n" + ",".join(
            _fmt(summary[k]) if isinstance(summary[k], float) else str(summary[k])
            for k in skeys) + "\n"
    )
    written["summary"] = out / "summary.csv"

    (out / "records.json").write_text(
        json.dumps({"config": config.to_dict(),
                    "records": [r.to_dict() for r in records]}, indent=1)
    )
    written["records"] = out / "records.json"
    return written


def _refit_final_state(config: ExperimentConfig, rec: TrialRecord):
    """Reconstruct the final posterior of a recorded trial by replaying
    its duel history (deterministic seeds)."""
    bench = builtin_benchmark(config.benchmark)
    oracle = _oracle(bench, config)
    duel_log = _initial_data(bench, oracle, config, rec.trial)
    x_r = np.array(rec.rows[0].x_r)
    for r in rec.rows[1:]:
        cand = np.array(r.proposed)
        if r.outcome == "non_valid":
            duel_log.add_label(cand, False)
            continue
        if config.mixed_mode:
            duel_log.add_label(cand, True)
        if not np.array_equal(cand, x_r):
            if r.outcome == "candidate":
                duel_log.add_duel(cand, x_r)
            else:
                duel_log.add_duel(x_r, cand)
        x_r = cand if r.outcome == "candidate" else x_r
    kernel = (RbfArdKernel.from_dict(rec.final_kernel) if rec.final_kernel
              else _default_kernel(bench))
    if config.mixed_mode:
        w = build_mixed_matrix(duel_log.mixed_dataset())
    else:
        w = build_duel_matrix(duel_log.preference_dataset())
    x = duel_log.registry.as_array()
    n_rounds = config.duel_budget - config.n_initial_duels
    if config.surrogate == SURROGATE_SKEWGP:
        post = fit_posterior(x, w, kernel, bank_size=max(config.u1_bank, 4000),
                             rng=_rng(config, rec.trial, _SEED_BANK, n_rounds))
    else:
        post = fit_laplace(x, w, kernel)
    return post, x_r


def load_records(path) -> tuple[ExperimentConfig, list[TrialRecord]]:
    payload = json.loads(Path(path).read_text())
    config = ExperimentConfig.from_dict(payload["config"])
    records = [TrialRecord.from_dict(d) for d in payload["records"]]
    return config, records
