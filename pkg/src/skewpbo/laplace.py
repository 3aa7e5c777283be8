"""Laplace-approximation baseline for preference learning.

Newton mode finding on the probit-likelihood GP posterior, a Gaussian
predictive from the Hessian at the mode, and the Laplace evidence used
for its hyperparameter selection. Serves as the symmetric-approximation
comparison surrogate for the exact skew posterior.

All linear algebra is phrased against B = I + sqrt(L) W Omega W^T sqrt(L)
(eigenvalues >= 1, so factorizations never fail) and the representer
weights c with mode = Omega c; the prior Gram matrix is never inverted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .annealing import anneal_maximize
from .duels import DuelMatrix
from .errors import NoConvergence
from .gauss import CholeskyFactor, cholesky
from .kernels import RbfArdKernel
from .skewgp import default_search_box

_LOG_TWOPI = math.log(2.0 * math.pi)


def _probit_pull(z: np.ndarray):
    """phi/Phi ratio and the negative second derivative of log Phi,
    computed in the log domain so large negative z do not underflow."""
    z = np.asarray(z, dtype=float)
    log_pdf = -0.5 * z * z - 0.5 * _LOG_TWOPI
    log_cdf = special.log_ndtr(z)
    pull = np.exp(log_pdf - log_cdf)
    curv = pull * (z + pull)
    return pull, np.maximum(curv, 0.0)


@dataclass(eq=False)
class LaplacePosterior:
    x_train: np.ndarray
    duel_matrix: DuelMatrix
    kernel: RbfArdKernel
    omega: np.ndarray
    mode: np.ndarray
    weights: np.ndarray  # c with mode = Omega @ c
    curvatures: np.ndarray  # probit weights at the mode, one per constraint
    scaled_rows: np.ndarray  # sqrt(curvatures)[:, None] * W
    b_chol: CholeskyFactor  # factor of I + scaled_rows Omega scaled_rows^T
    converged: bool
    n_iterations: int
    grad_norm: float
    objective_trace: tuple  # negative log posterior per accepted iterate

    @property
    def n_train(self) -> int:
        return self.x_train.shape[0]


def fit_laplace(
    x_train,
    duel_matrix: DuelMatrix,
    kernel: RbfArdKernel,
    *,
    tol: float = 1e-6,
    max_iterations: int = 100,
    warm_start_weights: np.ndarray | None = None,
) -> LaplacePosterior:
    """Newton iterations with halving line search on the negative log
    posterior; returns the best iterate with a convergence flag."""
    x_train = np.atleast_2d(np.asarray(x_train, dtype=float))
    n = x_train.shape[0]
    if duel_matrix.n_points != n:
        raise ValueError("duel matrix width does not match training points")
    w = duel_matrix.w
    m = w.shape[0]
    omega = kernel(x_train)
    gram = w @ omega @ w.T  # (m, m), fixed across iterations

    c = np.zeros(n)
    if warm_start_weights is not None and len(warm_start_weights) <= n:
        c[: len(warm_start_weights)] = warm_start_weights
    f = omega @ c

    def neg_log_post(cv, fv):
        return 0.5 * float(fv @ cv) - float(np.sum(special.log_ndtr(w @ fv)))

    value = neg_log_post(c, f)
    trace = [value]
    grad_norm = np.inf
    converged = False
    it = 0
    lam = np.zeros(m)
    for it in range(1, max_iterations + 1):
        z = w @ f
        pull, lam = _probit_pull(z)
        grad = c - w.T @ pull
        grad_norm = float(np.max(np.abs(grad))) if n else 0.0
        if grad_norm < tol:
            converged = True
            break
        sl = np.sqrt(lam)
        b_mat = np.eye(m) + sl[:, None] * gram * sl[None, :]
        b_chol = cholesky(0.5 * (b_mat + b_mat.T))
        target = lam * z + pull  # m-space statistic of the Newton solve
        b_vec = w.T @ target
        u = sl * (w @ (omega @ b_vec))
        c_new = b_vec - w.T @ (sl * b_chol.solve(u))
        dc = c_new - c
        df = omega @ dc
        t = 1.0
        moved = False
        for _ in range(30):
            cand_c = c + t * dc
            cand_f = f + t * df
            cand_value = neg_log_post(cand_c, cand_f)
            if cand_value < value:
                c, f, value = cand_c, cand_f, cand_value
                trace.append(value)
                moved = True
                break
            t *= 0.5
        if not moved:
            break
    else:
        it = max_iterations

    if not converged:
        warnings.warn(
            f"Laplace mode finding stopped at grad norm {grad_norm:.2e} "
            f"after {it} iterations",
            RuntimeWarning,
        )
    z = w @ f
    _, lam = _probit_pull(z)
    sl = np.sqrt(lam)
    b_mat = np.eye(m) + sl[:, None] * gram * sl[None, :]
    return LaplacePosterior(
        x_train=x_train,
        duel_matrix=duel_matrix,
        kernel=kernel,
        omega=omega,
        mode=f,
        weights=c,
        curvatures=lam,
        scaled_rows=sl[:, None] * w,
        b_chol=cholesky(0.5 * (b_mat + b_mat.T)),
        converged=converged,
        n_iterations=it,
        grad_norm=grad_norm,
        objective_trace=tuple(trace),
    )


def laplace_predict(post: LaplacePosterior, x_test) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian predictive mean and covariance at the test points.

    The covariance subtracts the information carried by the constraints,
    weighted through the curvature-stabilized system, so it never exceeds
    the prior covariance.
    """
    x_test = np.atleast_2d(np.asarray(x_test, dtype=float))
    k_xt = post.kernel(post.x_train, x_test)  # (n, t)
    mean = k_xt.T @ post.weights
    u = post.scaled_rows @ k_xt  # (m, t)
    cov = post.kernel(x_test) - u.T @ post.b_chol.solve(u)
    return mean, 0.5 * (cov + cov.T)


def laplace_log_evidence(post: LaplacePosterior) -> float:
    """Laplace approximation to log p(D): the joint at the mode plus the
    Gaussian curvature correction (log det B collects both determinants)."""
    if not post.converged:
        raise NoConvergence(
            f"mode finding did not converge (grad norm {post.grad_norm:.2e})"
        )
    z = post.duel_matrix.w @ post.mode
    log_lik = float(np.sum(special.log_ndtr(z)))
    return log_lik - 0.5 * float(post.mode @ post.weights) - 0.5 * post.b_chol.logdet()


def optimize_hyperparams_laplace(
    x_train,
    duel_matrix: DuelMatrix,
    kernel: RbfArdKernel,
    budget: int,
    rng: np.random.Generator | int,
) -> tuple[RbfArdKernel, float]:
    """Same annealing driver and budget as the exact surrogate, with the
    Laplace evidence as the objective."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    x_train = np.atleast_2d(np.asarray(x_train, dtype=float))
    d = x_train.shape[1]

    def objective(theta: np.ndarray) -> float:
        kern = RbfArdKernel(lengthscales=np.exp(theta[:d]), variance=float(np.exp(theta[d])))
        try:
            post = fit_laplace(x_train, duel_matrix, kern)
            return laplace_log_evidence(post)
        except NoConvergence:
            return -1e12

    lo, hi = default_search_box(x_train, d)
    theta0 = np.concatenate([np.log(kernel.lengthscales), [math.log(kernel.variance)]])
    best_theta, best_val, _ = anneal_maximize(objective, theta0, lo, hi, budget, rng)
    return (
        RbfArdKernel(lengthscales=np.exp(best_theta[:d]), variance=float(np.exp(best_theta[d]))),
        best_val,
    )


def laplace_pair_chol_terms(post: LaplacePosterior, x_cand, x_r):
    """Per-candidate 2x2 predictive Cholesky of (f(x), f(x_r)) plus the
    mean difference, vectorized over candidates and mirroring the exact
    surrogate's pair machinery."""
    x_cand = np.atleast_2d(np.asarray(x_cand, dtype=float))
    x_r = np.atleast_2d(np.asarray(x_r, dtype=float))
    k_xc = post.kernel(post.x_train, x_cand)  # (n, nc)
    k_xr = post.kernel(post.x_train, x_r)  # (n, 1)
    mean_c = k_xc.T @ post.weights
    mean_r = float((k_xr.T @ post.weights)[0])

    var = post.kernel.variance
    if post.duel_matrix.n_rows:
        u_c = post.scaled_rows @ k_xc  # (m, nc)
        u_r = post.scaled_rows @ k_xr  # (m, 1)
        q_c = post.b_chol.solve(u_c)
        q_r = post.b_chol.solve(u_r)
        v_c = var - np.sum(u_c * q_c, axis=0)
        v_r = var - float(np.sum(u_r * q_r))
        w_cr = post.kernel(x_cand, x_r)[:, 0] - (u_c.T @ q_r)[:, 0]
    else:
        v_c = np.full(x_cand.shape[0], var)
        v_r = var
        w_cr = post.kernel(x_cand, x_r)[:, 0]

    v_c = np.maximum(v_c, 0.0)
    v_r = max(v_r, 0.0)
    l11 = np.sqrt(v_c)
    l21 = np.where(l11 > 1e-300, w_cr / np.maximum(l11, 1e-300), 0.0)
    l22 = np.sqrt(np.maximum(v_r - l21 * l21, 0.0))
    same = np.all(x_cand == x_r, axis=1)
    return mean_c - mean_r, l11, l21, l22, same


def laplace_pair_diff_samples(
    post: LaplacePosterior,
    x_cand,
    x_r,
    base_normals: np.ndarray,
) -> np.ndarray:
    """Monte Carlo samples of f(x) - f(x_r) under the Gaussian predictive,
    (nc, n_mc), with frozen base randomness shared across candidates."""
    mean_diff, l11, l21, l22, same = laplace_pair_chol_terms(post, x_cand, x_r)
    z1 = base_normals[:, 0][None, :]
    z2 = base_normals[:, 1][None, :]
    noise = (l11 - l21)[:, None] * z1 - l22[:, None] * z2
    out = mean_diff[:, None] + noise
    out[same, :] = 0.0
    return out
