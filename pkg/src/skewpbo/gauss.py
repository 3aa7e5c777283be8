"""Gaussian numerical primitives.

Univariate normal pdf/cdf, Cholesky factorization with a jitter ladder,
multivariate normal CDF (exact in dims 1-2, bivariate conditioning above,
plus a quasi-Monte-Carlo fallback for cross-validation), and rejection-free
sampling of box-truncated multivariate Gaussians via linear elliptical
slice sampling.

All operations are pure given an explicit random generator; callers that
share a generator across threads must provide one generator per thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import InfeasibleStart, NotPositiveDefinite

_SQRT2 = math.sqrt(2.0)
_TWOPI = 2.0 * math.pi

# Default geometric jitter ladder: bare attempt first, then eps * I.
DEFAULT_JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def std_normal_pdf(x):
    """Standard normal density, vectorized."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(_TWOPI)


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function."""
    x = np.asarray(x, dtype=float)
    return special.ndtr(x)


def log_std_normal_cdf(x):
    """log(Phi(x)), stable far into the lower tail."""
    x = np.asarray(x, dtype=float)
    return special.log_ndtr(x)


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor with the jitter (eps added to the diagonal)
    that was required to obtain it."""

    L: np.ndarray
    dim: int
    jitter: float

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve (L L^T) x = b."""
        y = np.linalg.solve(self.L, b)
        return np.linalg.solve(self.L.T, y)

    def logdet(self) -> float:
        """log det of the factored matrix."""
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))


def _check_square_symmetric(a: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if a.size and float(np.max(np.abs(a - a.T))) > rtol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    return a


def cholesky(a: np.ndarray, jitter_ladder=DEFAULT_JITTER_LADDER) -> CholeskyFactor:
    """Cholesky factorization, retrying with increasing diagonal jitter.

    Raises NotPositiveDefinite if every rung of the ladder fails.
    """
    a = _check_square_symmetric(a)
    n = a.shape[0]
    if n == 0:
        return CholeskyFactor(L=np.zeros((0, 0)), dim=0, jitter=0.0)
    eye = np.eye(n)
    for eps in jitter_ladder:
        try:
            L = np.linalg.cholesky(a + eps * eye if eps else a)
        except np.linalg.LinAlgError:
            continue
        return CholeskyFactor(L=L, dim=n, jitter=float(eps))
    raise NotPositiveDefinite(
        f"Cholesky failed for dim {n} even with jitter up to {jitter_ladder[-1]:g}"
    )


# ---------------------------------------------------------------------------
# Bivariate normal probabilities (Drezner & Wesolowsky, as refined by Genz).
# ---------------------------------------------------------------------------

_GL6_W = np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])
_GL6_X = np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970])
_GL12_W = np.array(
    [0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
     0.2031674267230659, 0.2334925365383547, 0.2491470458134029]
)
_GL12_X = np.array(
    [0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
     0.5873179542866171, 0.3678314989981802, 0.1252334085114692]
)
_GL20_W = np.array(
    [0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
     0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
     0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
     0.1527533871307259]
)
_GL20_X = np.array(
    [0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
     0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
     0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
     0.07652652113349733]
)


def _bvn_upper(dh, dk, r: float):
    """P(X > dh, Y > dk) for standard bivariate normal with correlation r.

    Vectorized over dh/dk (broadcast together); r is a scalar. Infinite
    limits are handled.
    """
    dh = np.asarray(dh, dtype=float)
    dk = np.asarray(dk, dtype=float)
    dh, dk = np.broadcast_arrays(dh, dk)
    out = np.empty(dh.shape, dtype=float)

    zero = dh == np.inf
    zero |= dk == np.inf
    one = (dh == -np.inf) & (dk == -np.inf)
    h_only = (dk == -np.inf) & ~one
    k_only = (dh == -np.inf) & ~one
    finite = ~(zero | one | h_only | k_only)

    out[zero] = 0.0
    out[one] = 1.0
    out[h_only] = special.ndtr(-dh[h_only])
    out[k_only] = special.ndtr(-dk[k_only])
    if np.any(finite):
        out[finite] = _bvn_upper_finite(dh[finite], dk[finite], float(r))
    return out


def _bvn_upper_finite(h, k, r: float):
    if r == 0.0:
        return special.ndtr(-h) * special.ndtr(-k)
    ar = abs(r)
    if ar < 0.3:
        gw, gx = _GL6_W, _GL6_X
    elif ar < 0.75:
        gw, gx = _GL12_W, _GL12_X
    else:
        gw, gx = _GL20_W, _GL20_X
    w = np.concatenate([gw, gw])
    x = np.concatenate([1.0 - gx, 1.0 + gx])

    hk = h * k
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r) / 2.0
        sn = np.sin(asr * x)  # (q,)
        expo = (np.outer(hk, sn) - hs[:, None]) / (1.0 - sn * sn)
        bvn = np.exp(expo) @ w
        bvn = bvn * asr / _TWOPI + special.ndtr(-h) * special.ndtr(-k)
        return np.clip(bvn, 0.0, 1.0)

    # |r| close to 1: Genz's asymptotic-corrected quadrature.
    if r < 0.0:
        k = -k
        hk = -hk
    bvn = np.zeros_like(h)
    if ar < 1.0:
        a_s = (1.0 - r) * (1.0 + r)
        a = math.sqrt(a_s)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        asr = -(bs / a_s + hk) / 2.0
        m1 = asr > -100.0
        bvn = np.where(
            m1,
            a * np.exp(np.maximum(asr, -745.0))
            * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 1.0) / 3.0 + c * d * a_s * a_s),
            0.0,
        )
        m2 = hk > -100.0
        b = np.sqrt(bs)
        sp = math.sqrt(_TWOPI) * special.ndtr(-b / a)
        bvn = bvn - np.where(
            m2,
            np.exp(np.maximum(-hk / 2.0, -745.0)) * sp * b
            * (1.0 - c * bs * (1.0 - d * bs) / 3.0),
            0.0,
        )
        a2 = a / 2.0
        xs = (a2 * x) ** 2  # (q,)
        asr2 = -(bs[:, None] / xs[None, :] + hk[:, None]) / 2.0
        rs = np.sqrt(1.0 - xs)
        sp2 = 1.0 + np.outer(c, xs) * (1.0 + 5.0 * np.outer(d, xs))
        ep = np.exp(-np.outer(hk / 2.0, xs / (1.0 + rs) ** 2)) / rs[None, :]
        terms = np.where(asr2 > -100.0, np.exp(np.maximum(asr2, -745.0)) * (sp2 - ep), 0.0)
        bvn = (a2 * (terms @ w) - bvn) / _TWOPI
    if r > 0.0:
        bvn = bvn + special.ndtr(-np.maximum(h, k))
    else:
        lower_mask = h < k
        L = np.where(
            h < 0.0,
            special.ndtr(k) - special.ndtr(h),
            special.ndtr(-h) - special.ndtr(-k),
        )
        bvn = np.where(lower_mask, L - bvn, -bvn)
    return np.clip(bvn, 0.0, 1.0)


def bvn_cdf(b1, b2, rho: float):
    """P(X <= b1, Y <= b2) for standard bivariate normal, vectorized."""
    return _bvn_upper(-np.asarray(b1, dtype=float), -np.asarray(b2, dtype=float), rho)


# ---------------------------------------------------------------------------
# Multivariate normal rectangle probabilities by bivariate conditioning.
# ---------------------------------------------------------------------------


def _bvn_moments_upper_trunc(xu: float, yu: float, r: float):
    """Probability and conditional means of a standard bivariate normal
    truncated to x < xu, y < yu (lower limits at -inf)."""
    if xu == np.inf and yu == np.inf:
        return 0.0, 0.0, 1.0
    p = float(bvn_cdf(xu, yu, r))
    p = max(p, 1e-300)
    rs = 1.0 / math.sqrt(max(1.0 - r * r, 1e-300))
    if xu == np.inf:
        py = -float(std_normal_pdf(yu))
        px = 0.0
    elif yu == np.inf:
        px = -float(std_normal_pdf(xu))
        py = 0.0
    else:
        px = -float(std_normal_pdf(xu)) * float(std_normal_cdf((yu - r * xu) * rs))
        py = -float(std_normal_pdf(yu)) * float(std_normal_cdf((xu - r * yu) * rs))
    ex = (px + r * py) / p
    ey = (r * px + py) / p
    return ex, ey, p


def _mvn_upper_bivariate_conditioning(upper: np.ndarray, sigma: np.ndarray) -> float:
    """P(X <= upper) for X ~ N(0, sigma) via bivariate conditioning.

    Greedy variable ordering with a blocked (pairwise) Cholesky sweep;
    each pair of coordinates is integrated with the exact bivariate CDF
    and replaced by its truncated conditional expectation.
    """
    n = sigma.shape[0]
    c = np.array(sigma, dtype=float, copy=True)
    bp = np.array(upper, dtype=float, copy=True)
    eps = 2.2204e-16
    ep = 1e-10

    d = np.sqrt(np.maximum(np.diag(c), 0.0))
    for i in range(n):
        if d[i] > 0.0:
            bp[i] /= d[i]
            c[:, i] /= d[i]
            c[i, :] /= d[i]

    y = np.zeros(n)
    pb = 1.0
    dem = 1.0
    for k in range(n):
        im = k
        ckk = 0.0
        dem = 1.0
        bm = 0.0
        for i in range(k, n):
            if c[i, i] > eps:
                cii = math.sqrt(max(c[i, i], 0.0))
                s = float(c[i, :k] @ y[:k]) if k > 0 else 0.0
                bi = (bp[i] - s) / cii
                de = float(std_normal_cdf(bi))
                if de <= dem:
                    ckk = cii
                    dem = de
                    bm = bi
                    im = i
        if im > k:
            bp[[im, k]] = bp[[k, im]]
            c[[im, k], :k] = c[[k, im], :k]
            ip = np.arange(im + 1, n)
            if ip.size:
                c[np.ix_(ip, [im, k])] = c[np.ix_(ip, [k, im])]
            ki = np.arange(k + 1, im)
            if ki.size:
                t = c[ki, k].copy()
                c[ki, k] = c[im, ki]
                c[im, ki] = t
            c[im, im] = c[k, k]
        if ckk > ep * (k + 1):
            c[k, k] = ckk
            c[k, k + 1:] = 0.0
            for i in range(k + 1, n):
                c[i, k] /= ckk
                c[i, k + 1:i + 1] -= c[i, k] * c[k + 1:i + 1, k]
            if abs(dem) > ep:
                y[k] = -float(std_normal_pdf(bm)) / dem
            else:
                y[k] = bm  # upper tail vanishes; mass concentrates at the bound
        else:
            c[k:, k] = 0.0
            y[k] = min(0.0, bp[k])  # degenerate coordinate sits at its mean
        if (k + 1) % 2 == 0:
            u = c[k - 1, k - 1]
            v = c[k, k]
            w = c[k, k - 1]
            trans = np.array([[1.0 / u, 0.0], [-w / (u * v), 1.0 / v]])
            c[k - 1:, k - 1:k + 1] = c[k - 1:, k - 1:k + 1] @ trans
            bb = bp[k - 1:k + 1].copy()
            if k >= 2:
                bb = bb - c[k - 1:k + 1, :k - 1] @ y[:k - 1]
            sg = np.array([[u * u, u * w], [u * w, w * w + v * v]])
            sx = math.sqrt(sg[0, 0])
            sy = math.sqrt(sg[1, 1])
            r12 = sg[1, 0] / (sx * sy)
            ex, ey, bv = _bvn_moments_upper_trunc(bb[0] / sx, bb[1] / sy, r12)
            pb *= bv
            y[k - 1] = ex * sx
            y[k] = ey * sy
    if n % 2 == 1:
        pb *= dem
    return float(min(max(pb, 0.0), 1.0))


_COND_NODES = {3: 128, 4: 64, 5: 40, 6: 24}
_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_unit(n: int):
    # Gauss-Legendre nodes/weights mapped to (0, 1)
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[n]


def _mvn_cdf_cond_quadrature(upper: np.ndarray, sigma: np.ndarray) -> float:
    """Near-exact CDF for dims 3-6: the leading Cholesky innovations are
    integrated by tensor Gauss-Legendre after the probability-integral
    transform; the trailing pair is handled by the exact bivariate CDF."""
    m = upper.shape[0]
    L = cholesky(sigma).L
    n_nodes = _COND_NODES[m]
    u, w = _gl_unit(n_nodes)
    levels = m - 2

    v_grids = []  # v_j with shape (n,) * (j + 1)
    p_list = []  # p_j with shape (n,) * j
    for j in range(levels):
        partial = upper[j]
        for k, v_k in enumerate(v_grids):
            partial = partial - L[j, k] * v_k[(...,) + (None,) * (j - 1 - k)]
        c_j = partial / L[j, j]
        p_j = std_normal_cdf(np.asarray(c_j, dtype=float))
        if j == 0 and p_j < 1e-300:
            return 0.0
        arg = np.clip(np.multiply.outer(p_j, u), 1e-300, 1.0 - 1e-16)
        v_grids.append(special.ndtri(arg))
        p_list.append(p_j)

    i, j = m - 2, m - 1
    s_i = L[i, i]
    s_j = math.hypot(L[j, i], L[j, j])
    rho = L[j, i] / s_j
    mean_i = 0.0
    mean_j = 0.0
    for k, v_k in enumerate(v_grids):
        mean_i = mean_i + L[i, k] * v_k[(...,) + (None,) * (levels - 1 - k)]
        mean_j = mean_j + L[j, k] * v_k[(...,) + (None,) * (levels - 1 - k)]
    tail = bvn_cdf((upper[i] - mean_i) / s_i, (upper[j] - mean_j) / s_j, rho)

    acc = tail
    for j_level in reversed(range(levels)):
        acc = acc @ w  # contract the innermost axis
        acc = acc * p_list[j_level]
    return float(np.clip(acc, 0.0, 1.0))


def mvn_cdf(upper, sigma) -> float:
    """CDF of N(0, sigma) at `upper`, clamped to [0, 1].

    Dimension 0 returns 1, dimensions 1-2 use exact formulas, dimensions
    3-6 condition the leading variables exactly onto the bivariate base
    case, and higher dimensions use the fast bivariate-conditioning sweep
    with truncated-moment propagation.
    """
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    m = upper.shape[0]
    if m == 0:
        return 1.0
    sigma = _check_square_symmetric(np.atleast_2d(np.asarray(sigma, dtype=float)))
    if sigma.shape[0] != m:
        raise ValueError(f"bounds of length {m} but covariance of dim {sigma.shape[0]}")
    if np.any(np.diag(sigma) <= 0.0):
        raise NotPositiveDefinite("covariance has a non-positive diagonal entry")
    if m == 1:
        return float(np.clip(std_normal_cdf(upper[0] / math.sqrt(sigma[0, 0])), 0.0, 1.0))
    if m == 2:
        sx = math.sqrt(sigma[0, 0])
        sy = math.sqrt(sigma[1, 1])
        rho = sigma[0, 1] / (sx * sy)
        rho = min(max(rho, -1.0), 1.0)
        return float(bvn_cdf(upper[0] / sx, upper[1] / sy, rho))
    if m <= 6:
        return _mvn_cdf_cond_quadrature(upper, sigma)
    cholesky(sigma)  # propagate NotPositiveDefinite before approximating
    return _mvn_upper_bivariate_conditioning(upper, sigma)


def mvn_cdf_qmc(upper, sigma, abseps: float = 1e-6, releps: float = 0.0) -> float:
    """Quasi-Monte-Carlo evaluation of the same rectangle probability.

    Independent of mvn_cdf's conditioning approximation; used to
    cross-validate it in tests.
    """
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    m = upper.shape[0]
    if m == 0:
        return 1.0
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    val = stats.multivariate_normal.cdf(
        upper, mean=np.zeros(m), cov=sigma, abseps=abseps, releps=releps,
        maxpts=100_000 * m,
    )
    return float(np.clip(val, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Linear elliptical slice sampling for box-truncated Gaussians.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncationSpec:
    """Component-wise lower truncation: samples satisfy u > lower."""

    lower: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        if not np.all(np.isfinite(lower)):
            raise ValueError("truncation bounds must be finite")
        object.__setattr__(self, "lower", lower)


def _feasible_start(lower: np.ndarray, sd: np.ndarray) -> np.ndarray:
    # Coordinate-wise mode of the box-constrained Gaussian, nudged to the
    # strict interior.
    return np.maximum(0.0, lower + 0.1 * sd)


def lin_ess_sample(
    gamma,
    trunc: TruncationSpec,
    n_samples: int,
    rng: np.random.Generator,
    *,
    burn_in: int = 100,
    thin: int = 1,
    n_chains: int = 1,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Rejection-free samples from N(0, gamma) restricted to u > lower.

    Each ellipse through the current state and a fresh Gaussian draw is cut
    analytically into feasible arcs, and the next state is drawn uniformly
    from them; every returned sample satisfies the constraints exactly.
    Consecutive states form a Markov chain with the configured burn-in and
    thinning.
    """
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    m = gamma.shape[0]
    lower = trunc.lower
    if lower.shape[0] != m:
        raise ValueError("truncation dim does not match covariance dim")
    if n_samples < 0:
        raise ValueError("n_samples must be nonnegative")
    if m == 0 or n_samples == 0:
        return np.zeros((n_samples, m))
    factor = cholesky(gamma)
    sd = np.sqrt(np.diag(gamma))

    start = _feasible_start(lower, sd) if initial is None else np.asarray(initial, float)
    if not (np.all(np.isfinite(start)) and np.all(start > lower)):
        raise InfeasibleStart("no strictly feasible starting point for the truncation")

    n_chains = max(1, min(int(n_chains), n_samples))
    x = np.tile(start, (n_chains, 1))
    rounds = -(-n_samples // n_chains)
    kept = np.empty((rounds * n_chains, m))

    def step(x):
        nu = rng.standard_normal((n_chains, m)) @ factor.L.T
        r = np.hypot(x, nu)
        ang = np.arctan2(nu, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(r > 0.0, lower[None, :] / r, -1.0)
        alpha = np.arccos(np.clip(t, -1.0, 1.0))
        active = (np.pi - alpha) > 1e-15  # constraint cuts the ellipse
        s = np.where(active, np.mod(ang + alpha, _TWOPI), 0.0)
        e = np.where(active, np.mod(ang - alpha, _TWOPI), 0.0)
        wraps = active & (s > e)
        delta = active.astype(float)

        angles = np.concatenate([s, e], axis=1)
        deltas = np.concatenate([delta, -delta], axis=1)
        order = np.argsort(angles, axis=1, kind="stable")
        a_sorted = np.take_along_axis(angles, order, axis=1)
        d_sorted = np.take_along_axis(deltas, order, axis=1)
        base = wraps.sum(axis=1, keepdims=True).astype(float)
        cov_after = base + np.cumsum(d_sorted, axis=1)

        seg_start = np.concatenate([np.zeros((n_chains, 1)), a_sorted], axis=1)
        seg_end = np.concatenate([a_sorted, np.full((n_chains, 1), _TWOPI)], axis=1)
        seg_cov = np.concatenate([base, cov_after], axis=1)
        seg_len = np.where(seg_cov < 0.5, np.maximum(seg_end - seg_start, 0.0), 0.0)
        total = seg_len.sum(axis=1)

        u = rng.uniform(0.0, 1.0, size=n_chains) * total
        csum = np.cumsum(seg_len, axis=1)
        idx = (csum <= u[:, None]).sum(axis=1)
        idx = np.minimum(idx, seg_len.shape[1] - 1)
        prev = np.where(idx > 0, np.take_along_axis(csum, np.maximum(idx - 1, 0)[:, None], 1)[:, 0], 0.0)
        theta = np.take_along_axis(seg_start, idx[:, None], 1)[:, 0] + (u - prev)

        x_new = x * np.cos(theta)[:, None] + nu * np.sin(theta)[:, None]
        ok = (total > 0.0) & np.all(x_new > lower[None, :], axis=1)
        return np.where(ok[:, None], x_new, x)

    for _ in range(burn_in):
        x = step(x)
    for j in range(rounds):
        for _ in range(max(1, thin)):
            x = step(x)
        kept[j * n_chains:(j + 1) * n_chains] = x
    return kept[:n_samples]
