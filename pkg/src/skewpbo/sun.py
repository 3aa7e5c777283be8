"""The unified skew-normal distribution.

Density, closure under marginalization and conditioning, and sampling via
the additive representation (a correlated Gaussian term plus a linear map
of a box-truncated latent Gaussian). The latent scale matrix is allowed to
be any SPD matrix, not only a correlation matrix, so that exact posteriors
under affine probit likelihoods stay inside the family.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .gauss import (
    CholeskyFactor,
    TruncationSpec,
    bvn_cdf,
    cholesky,
    lin_ess_sample,
    mvn_cdf,
    std_normal_cdf,
)

_LOG_TWOPI = math.log(2.0 * math.pi)
_MIN_DIAG = 1e-12


@dataclass(frozen=True)
class SunParams:
    """Parameters of a p-dimensional unified skew-normal with latent
    dimension s.

    loc: location vector (p,)
    scale: SPD scale matrix (p, p)
    skew: skewness matrix (p, s), on the correlation scale of `scale`
    latent_shift: latent truncation shift (s,)
    latent_scale: SPD latent scale matrix (s, s)
    """

    loc: np.ndarray
    scale: np.ndarray
    skew: np.ndarray
    latent_shift: np.ndarray
    latent_scale: np.ndarray

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.loc, dtype=float))
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        skew = np.asarray(self.skew, dtype=float)
        shift = np.atleast_1d(np.asarray(self.latent_shift, dtype=float))
        latent = np.atleast_2d(np.asarray(self.latent_scale, dtype=float))
        p = loc.shape[0]
        if skew.ndim == 1:
            skew = skew.reshape(p, -1)
        s = skew.shape[1] if skew.size else shift.shape[0]
        if skew.size == 0:
            skew = skew.reshape(p, s)
        if latent.size == 0:
            latent = latent.reshape(s, s)
        if scale.shape != (p, p):
            raise DimensionMismatch(f"scale shape {scale.shape}, expected {(p, p)}")
        if skew.shape != (p, s):
            raise DimensionMismatch(f"skew shape {skew.shape}, expected {(p, s)}")
        if shift.shape != (s,):
            raise DimensionMismatch(f"latent_shift shape {shift.shape}, expected {(s,)}")
        if latent.shape != (s, s):
            raise DimensionMismatch(f"latent_scale shape {latent.shape}, expected {(s, s)}")
        if np.any(np.diag(scale) < _MIN_DIAG):
            raise NotPositiveDefinite("scale has a (near-)degenerate diagonal entry")
        object.__setattr__(self, "loc", loc)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "skew", skew)
        object.__setattr__(self, "latent_shift", shift)
        object.__setattr__(self, "latent_scale", latent)
        self._validate_block_matrix()

    @property
    def p(self) -> int:
        return self.loc.shape[0]

    @property
    def s(self) -> int:
        return self.latent_shift.shape[0]

    @cached_property
    def sd(self) -> np.ndarray:
        """Square roots of the scale diagonal."""
        return np.sqrt(np.diag(self.scale))

    @cached_property
    def corr(self) -> np.ndarray:
        """Correlation matrix of `scale`."""
        d = self.sd
        return self.scale / np.outer(d, d)

    @cached_property
    def _corr_chol(self) -> CholeskyFactor:
        return cholesky(self.corr)

    @cached_property
    def _scale_chol(self) -> CholeskyFactor:
        return cholesky(self.scale)

    @cached_property
    def _inner_cov(self) -> np.ndarray:
        # latent_scale - skew^T corr^{-1} skew, the covariance inside the
        # density's numerator CDF
        if self.s == 0:
            return np.zeros((0, 0))
        solved = self._corr_chol.solve(self.skew)
        inner = self.latent_scale - self.skew.T @ solved
        return 0.5 * (inner + inner.T)

    @cached_property
    def _log_normalizer(self) -> float:
        if self.s == 0:
            return 0.0
        return math.log(max(mvn_cdf(self.latent_shift, self.latent_scale), 1e-300))

    def _validate_block_matrix(self):
        # [[latent_scale, skew^T], [skew, corr]] must be positive definite
        s, p = self.s, self.p
        m = np.zeros((s + p, s + p))
        m[:s, :s] = self.latent_scale
        m[:s, s:] = self.skew.T
        m[s:, :s] = self.skew
        m[s:, s:] = self.corr
        try:
            cholesky(m, jitter_ladder=(0.0, 1e-12, 1e-10))
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(
                "joint latent/observed scale block matrix is not positive definite"
            ) from exc

    def to_dict(self) -> dict:
        return {
            "loc": self.loc.tolist(),
            "scale": self.scale.tolist(),
            "skew": self.skew.tolist(),
            "latent_shift": self.latent_shift.tolist(),
            "latent_scale": self.latent_scale.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SunParams":
        return cls(
            loc=np.asarray(d["loc"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
            skew=np.asarray(d["skew"], dtype=float),
            latent_shift=np.asarray(d["latent_shift"], dtype=float),
            latent_scale=np.asarray(d["latent_scale"], dtype=float),
        )

    @classmethod
    def from_json(cls, text: str) -> "SunParams":
        return cls.from_dict(json.loads(text))


def _gaussian_log_pdf_batch(dev: np.ndarray, chol: CholeskyFactor) -> np.ndarray:
    # dev: (n, p) deviations from the mean
    y = np.linalg.solve(chol.L, dev.T)  # (p, n)
    quad = np.sum(y * y, axis=0)
    return -0.5 * quad - 0.5 * chol.logdet() - 0.5 * dev.shape[1] * _LOG_TWOPI


def sun_log_pdf(params: SunParams, z) -> float:
    """Log density at a single point."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (params.p,):
        raise DimensionMismatch(f"point of shape {z.shape}, expected {(params.p,)}")
    return float(sun_log_pdf_batch(params, z[None, :])[0])


def sun_log_pdf_batch(params: SunParams, Z) -> np.ndarray:
    """Log density at many points, shape (n, p) -> (n,)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != params.p:
        raise DimensionMismatch(f"points of width {Z.shape[1]}, expected {params.p}")
    dev = Z - params.loc[None, :]
    base = _gaussian_log_pdf_batch(dev, params._scale_chol)
    if params.s == 0:
        return base
    # argument of the numerator CDF: shift + skew^T corr^{-1} D^{-1} dev
    t = params._corr_chol.solve((dev / params.sd[None, :]).T)  # (p, n)
    args = params.latent_shift[:, None] + params.skew.T @ t  # (s, n)
    inner = params._inner_cov
    if params.s == 1:
        sd = math.sqrt(max(inner[0, 0], 1e-300))
        num = np.log(np.maximum(std_normal_cdf(args[0] / sd), 1e-300))
    elif params.s == 2:
        s1 = math.sqrt(inner[0, 0])
        s2 = math.sqrt(inner[1, 1])
        rho = min(max(inner[0, 1] / (s1 * s2), -1.0), 1.0)
        num = np.log(np.maximum(bvn_cdf(args[0] / s1, args[1] / s2, rho), 1e-300))
    else:
        num = np.array([
            math.log(max(mvn_cdf(args[:, i], inner), 1e-300))
            for i in range(args.shape[1])
        ])
    return base + num - params._log_normalizer


def sun_marginalize(params: SunParams, keep) -> SunParams:
    """Marginal over the kept coordinates; the latent block is unchanged."""
    keep = np.atleast_1d(np.asarray(keep, dtype=int))
    if keep.size == 0:
        raise DimensionMismatch("keep must be nonempty")
    if np.any(keep < 0) or np.any(keep >= params.p) or len(set(keep.tolist())) != keep.size:
        raise DimensionMismatch("keep indices out of range or repeated")
    return SunParams(
        loc=params.loc[keep],
        scale=params.scale[np.ix_(keep, keep)],
        skew=params.skew[keep, :],
        latent_shift=params.latent_shift,
        latent_scale=params.latent_scale,
    )


def sun_condition(params: SunParams, observed_indices, observed_values) -> SunParams:
    """Distribution of the remaining coordinates given exact observations.

    The conditional stays in the family; its skewness matrix is restated on
    the correlation scale of the conditional scale matrix (the Schur
    complement is not a correlation matrix, so the raw update must be
    rescaled by marginal-to-conditional standard-deviation ratios).
    """
    obs = np.atleast_1d(np.asarray(observed_indices, dtype=int))
    vals = np.atleast_1d(np.asarray(observed_values, dtype=float))
    if obs.size == 0 or obs.size >= params.p:
        raise DimensionMismatch("observed indices must be a nonempty strict subset")
    if np.any(obs < 0) or np.any(obs >= params.p) or len(set(obs.tolist())) != obs.size:
        raise DimensionMismatch("observed indices out of range or repeated")
    if vals.shape != obs.shape:
        raise DimensionMismatch("observed_values length must match observed_indices")
    rest = np.array([i for i in range(params.p) if i not in set(obs.tolist())])

    om11 = params.scale[np.ix_(obs, obs)]
    om21 = params.scale[np.ix_(rest, obs)]
    om22 = params.scale[np.ix_(rest, rest)]
    chol11 = cholesky(om11)
    dev1 = vals - params.loc[obs]
    loc_c = params.loc[rest] + om21 @ chol11.solve(dev1)
    scale_c = om22 - om21 @ chol11.solve(om21.T)
    scale_c = 0.5 * (scale_c + scale_c.T)

    corr = params.corr
    cb11 = corr[np.ix_(obs, obs)]
    cb21 = corr[np.ix_(rest, obs)]
    cchol11 = cholesky(cb11)
    d1 = params.sd[obs]
    delta1 = params.skew[obs, :]
    delta2 = params.skew[rest, :]

    skew_raw = delta2 - cb21 @ cchol11.solve(delta1)
    shift_c = params.latent_shift + delta1.T @ cchol11.solve(dev1 / d1)
    latent_c = params.latent_scale - delta1.T @ cchol11.solve(delta1)
    latent_c = 0.5 * (latent_c + latent_c.T)

    d2 = params.sd[rest]
    dc = np.sqrt(np.maximum(np.diag(scale_c), _MIN_DIAG))
    skew_c = skew_raw * (d2 / dc)[:, None]

    return SunParams(
        loc=loc_c,
        scale=scale_c,
        skew=skew_c,
        latent_shift=shift_c,
        latent_scale=latent_c,
    )


def sun_sample(
    params: SunParams,
    n: int,
    rng: np.random.Generator,
    *,
    burn_in: int = 100,
    thin: int = 1,
) -> np.ndarray:
    """Draws via the additive representation: a Gaussian component plus a
    linear map of the latent Gaussian truncated below -latent_shift."""
    p, s = params.p, params.s
    if s == 0:
        g = rng.standard_normal((n, p)) @ params._scale_chol.L.T
        return params.loc[None, :] + g
    resid_cov = params.corr - params.skew @ np.linalg.solve(params.latent_scale, params.skew.T)
    resid_cov = 0.5 * (resid_cov + resid_cov.T)
    u0 = rng.standard_normal((n, p)) @ cholesky(resid_cov).L.T
    u1 = lin_ess_sample(
        params.latent_scale,
        TruncationSpec(-params.latent_shift),
        n,
        rng,
        burn_in=burn_in,
        thin=thin,
    )
    carry = np.linalg.solve(params.latent_scale, u1.T)  # (s, n)
    y = u0 + (params.skew @ carry).T
    return params.loc[None, :] + params.sd[None, :] * y
