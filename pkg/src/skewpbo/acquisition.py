"""Dueling acquisition functions over posterior samples of f(x) - f(x_r).

All three acquisitions consume per-candidate Monte Carlo difference
samples whose randomness is frozen per acquisition round: the same base
normals and the same latent-bank rows are used for every candidate, so
the acquisition surface is a deterministic function of the candidate and
can be polished with a local optimizer after the random sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import TooFewSamples
from .laplace import LaplacePosterior, laplace_pair_diff_samples
from .skewgp import SkewGpPosterior, pair_diff_samples

MIN_SAMPLES = 100

KIND_UCB = "ucb"
KIND_THOMPSON = "thompson"
KIND_EIIG = "eiig"
KINDS = (KIND_UCB, KIND_THOMPSON, KIND_EIIG)


@dataclass(frozen=True)
class AcquisitionSpec:
    """Which dueling acquisition to run and its scalar knobs."""

    kind: str = KIND_UCB
    credible_level: float = 0.95
    improvement_weight: float = 0.1  # trade-off scalar for eiig
    mc_samples: int = 2000
    n_candidates: int = 5000
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown acquisition kind {self.kind!r}")
        if not 0.0 < self.credible_level < 1.0:
            raise ValueError("credible_level must lie in (0, 1)")
        if self.improvement_weight < 0.0:
            raise ValueError("improvement_weight must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "credible_level": self.credible_level,
            "improvement_weight": self.improvement_weight,
            "mc_samples": self.mc_samples,
            "n_candidates": self.n_candidates,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AcquisitionSpec":
        return cls(**{k: d[k] for k in (
            "kind", "credible_level", "improvement_weight",
            "mc_samples", "n_candidates", "seed") if k in d})


@dataclass(frozen=True)
class DuelProposal:
    candidate: np.ndarray
    reference: np.ndarray
    value: float


def shortest_interval(samples: np.ndarray, level: float) -> tuple[float, float]:
    """Shortest contiguous interval containing `level` of the samples."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    n = s.shape[0]
    k = max(1, int(math.ceil(level * n)))
    if k >= n:
        return float(s[0]), float(s[-1])
    widths = s[k - 1:] - s[: n - k + 1]
    j = int(np.argmin(widths))
    return float(s[j]), float(s[j + k - 1])


def eval_ucb(diff_samples, credible_level: float = 0.95) -> float:
    """Upper endpoint of the shortest credible interval of the samples."""
    s = np.asarray(diff_samples, dtype=float).ravel()
    if s.shape[0] < MIN_SAMPLES:
        raise TooFewSamples(f"{s.shape[0]} samples; need at least {MIN_SAMPLES}")
    return shortest_interval(s, credible_level)[1]


def _ucb_rows(diffs: np.ndarray, level: float) -> np.ndarray:
    """Row-wise shortest-interval upper endpoints, (nc, n_mc) -> (nc,)."""
    s = np.sort(diffs, axis=1)
    n = s.shape[1]
    k = max(1, int(math.ceil(level * n)))
    if k >= n:
        return s[:, -1]
    widths = s[:, k - 1:] - s[:, : n - k + 1]
    j = np.argmin(widths, axis=1)
    return s[np.arange(s.shape[0]), j + k - 1]


def binary_entropy(p) -> np.ndarray:
    """Entropy in nats with the 0 log 0 = 0 convention."""
    p = np.asarray(p, dtype=float)
    return -special.xlogy(p, p) - special.xlogy(1.0 - p, 1.0 - p)


def eval_eiig(diff_samples, improvement_weight: float) -> float:
    """Log expected win probability traded against the dueling
    information gain (difference of entropies)."""
    s = np.asarray(diff_samples, dtype=float).ravel()
    if s.shape[0] < MIN_SAMPLES:
        raise TooFewSamples(f"{s.shape[0]} samples; need at least {MIN_SAMPLES}")
    return float(_eiig_rows(s[None, :], improvement_weight)[0])


def _eiig_rows(diffs: np.ndarray, weight: float) -> np.ndarray:
    probs = special.ndtr(diffs)
    p_bar = np.clip(probs.mean(axis=1), 1e-12, 1.0)
    info_gain = binary_entropy(p_bar) - binary_entropy(probs).mean(axis=1)
    return weight * np.log(p_bar) - info_gain


class SkewGpDiffSampler:
    """Frozen-randomness difference sampler over the exact posterior."""

    def __init__(self, post: SkewGpPosterior, mc_samples: int, rng: np.random.Generator):
        self.post = post
        n_mc = min(mc_samples, max(post.bank_size, 1))
        self.base_normals = rng.standard_normal((n_mc, 2))
        self.u1_indices = rng.integers(0, max(post.bank_size, 1), size=n_mc)
        self.thompson_normal = rng.standard_normal(2)
        self.thompson_index = int(rng.integers(0, max(post.bank_size, 1)))

    def diff_samples(self, x_cand, x_r) -> np.ndarray:
        return pair_diff_samples(self.post, x_cand, x_r,
                                 self.base_normals, self.u1_indices)

    def thompson_diff(self, x_cand, x_r) -> np.ndarray:
        from .skewgp import pair_thompson_diff

        return pair_thompson_diff(self.post, x_cand, x_r,
                                  self.thompson_normal, self.thompson_index)


class LaplaceDiffSampler:
    """Same contract over the Gaussian (Laplace) predictive."""

    def __init__(self, post: LaplacePosterior, mc_samples: int, rng: np.random.Generator):
        self.post = post
        self.base_normals = rng.standard_normal((mc_samples, 2))
        self.thompson_normal = rng.standard_normal(2)

    def diff_samples(self, x_cand, x_r) -> np.ndarray:
        return laplace_pair_diff_samples(self.post, x_cand, x_r, self.base_normals)

    def thompson_diff(self, x_cand, x_r) -> np.ndarray:
        return laplace_pair_diff_samples(
            self.post, x_cand, x_r, self.thompson_normal.reshape(1, 2)
        )[:, 0]


def make_sampler(post, mc_samples: int, rng: np.random.Generator):
    if isinstance(post, SkewGpPosterior):
        return SkewGpDiffSampler(post, mc_samples, rng)
    if isinstance(post, LaplacePosterior):
        return LaplaceDiffSampler(post, mc_samples, rng)
    raise TypeError(f"no difference sampler for {type(post).__name__}")


def eval_thompson(post, x, x_r, rng: np.random.Generator | int) -> float:
    """One coherent sampled-function difference f_j(x) - f_j(x_r)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    sampler = make_sampler(post, 1, rng)
    return float(sampler.thompson_diff(np.atleast_2d(x), np.atleast_1d(x_r))[0])


def _acquisition_values(sampler, spec: AcquisitionSpec, cands: np.ndarray,
                        x_r: np.ndarray) -> np.ndarray:
    if spec.kind == KIND_THOMPSON:
        return sampler.thompson_diff(cands, x_r)
    diffs = sampler.diff_samples(cands, x_r)
    if spec.kind == KIND_UCB:
        return _ucb_rows(diffs, spec.credible_level)
    return _eiig_rows(diffs, spec.improvement_weight)


def optimize_acquisition(
    post,
    spec: AcquisitionSpec,
    x_r,
    bounds,
    rng: np.random.Generator | int,
) -> DuelProposal:
    """Random sweep plus bounded local refinement of the acquisition.

    Evaluates the acquisition at `spec.n_candidates` uniform points (the
    caller controls the seed so competing surrogates can share the same
    candidate set), then polishes the best candidate with a bounded
    pattern search on the frozen-randomness surface. The returned value
    is never below the best random value and the point stays inside the
    box.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    x_r = np.atleast_1d(np.asarray(x_r, dtype=float))
    d = bounds.shape[0]
    lo, hi = bounds[:, 0], bounds[:, 1]

    cands = rng.uniform(lo, hi, size=(spec.n_candidates, d))
    sampler = make_sampler(post, spec.mc_samples, rng)
    values = _acquisition_values(sampler, spec, cands, x_r)
    best = int(np.argmax(values))
    best_x, best_val = cands[best].copy(), float(values[best])

    # derivative-free descent on the frozen surface: axis steps evaluated
    # in one batched call per shrink level, so the polish costs a handful
    # of vectorized evaluations regardless of dimension
    step = (hi - lo) / 50.0
    for _ in range(10):
        trial_pts = np.concatenate([
            np.clip(best_x[None, :] + np.diag(step), lo, hi),
            np.clip(best_x[None, :] - np.diag(step), lo, hi),
        ])
        trial_vals = _acquisition_values(sampler, spec, trial_pts, x_r)
        j = int(np.argmax(trial_vals))
        if trial_vals[j] > best_val:
            best_x, best_val = trial_pts[j].copy(), float(trial_vals[j])
        else:
            step *= 0.5

    return DuelProposal(candidate=best_x, reference=x_r.copy(), value=best_val)


def update_reference(x_r, x_n, outcome: str):
    """New reference point: the candidate on a win, otherwise unchanged."""
    if outcome not in ("candidate", "reference"):
        raise ValueError(f"unknown duel outcome {outcome!r}")
    x_r = np.atleast_1d(np.asarray(x_r, dtype=float))
    x_n = np.atleast_1d(np.asarray(x_n, dtype=float))
    return x_n.copy() if outcome == "candidate" else x_r.copy()
