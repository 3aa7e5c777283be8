"""Shared test utilities: independent oracles and statistical comparisons."""

import numpy as np


def rejection_truncated_gaussian(gamma, lower, n, rng, max_batches=200000):
    """Plain rejection sampler for N(0, gamma) restricted to u > lower.

    Deliberately naive and independent of the elliptical-slice sampler it
    is used to check.
    """
    gamma = np.atleast_2d(np.asarray(gamma, float))
    lower = np.atleast_1d(np.asarray(lower, float))
    L = np.linalg.cholesky(gamma)
    m = gamma.shape[0]
    out = []
    got = 0
    for _ in range(max_batches):
        z = rng.standard_normal((4096, m)) @ L.T
        keep = np.all(z > lower[None, :], axis=1)
        kept = z[keep]
        out.append(kept)
        got += len(kept)
        if got >= n:
            break
    samples = np.concatenate(out, axis=0)
    if len(samples) < n:
        raise RuntimeError("rejection oracle could not reach the requested count")
    return samples[:n]


def batch_means_se(chain_samples, n_batches=50):
    """Standard error of the mean for (possibly autocorrelated) samples,
    one value per column, via batch means."""
    x = np.atleast_2d(np.asarray(chain_samples, float))
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    b = max(2, min(n_batches, n // 10))
    usable = (n // b) * b
    batches = x[:usable].reshape(b, usable // b, -1).mean(axis=1)
    return batches.std(axis=0, ddof=1) / np.sqrt(b)


def assert_moments_close(samples_a, samples_b, n_se=4.0, label=""):
    """First and second moments of two sample sets agree within n_se
    combined standard errors (batch-means on both sides)."""
    a = np.atleast_2d(np.asarray(samples_a, float))
    b = np.atleast_2d(np.asarray(samples_b, float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("column mismatch")
    se_a = batch_means_se(a)
    se_b = batch_means_se(b)
    se = np.sqrt(se_a**2 + se_b**2)
    gap = np.abs(a.mean(axis=0) - b.mean(axis=0))
    assert np.all(gap <= n_se * se), f"{label} mean gap {gap} vs allowed {n_se * se}"

    # second (raw) moments, including cross moments
    def raw_second(x):
        d = x.shape[1]
        cols = [x[:, i] * x[:, j] for i in range(d) for j in range(i, d)]
        return np.stack(cols, axis=1)

    sa = raw_second(a)
    sb = raw_second(b)
    se2 = np.sqrt(batch_means_se(sa) ** 2 + batch_means_se(sb) ** 2)
    gap2 = np.abs(sa.mean(axis=0) - sb.mean(axis=0))
    assert np.all(gap2 <= n_se * se2), (
        f"{label} second-moment gap {gap2} vs allowed {n_se * se2}"
    )


def random_spd(dim, rng, ridge=0.5):
    a = rng.standard_normal((dim, dim))
    return a @ a.T + ridge * np.eye(dim)


def grid_and_weights(lo, hi, num):
    """Simpson-ready uniform grid (num must be odd for exactness; we just
    use scipy.integrate.simpson downstream)."""
    x = np.linspace(lo, hi, num)
    return x
