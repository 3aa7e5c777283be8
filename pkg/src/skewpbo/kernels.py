"""Covariance kernels for the latent preference function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RbfArdKernel:
    """Squared-exponential kernel with one lengthscale per input dimension.

    k(x, x') = variance * exp(-sum_d (x_d - x'_d)^2 / (2 * ell_d^2))
    """

    lengthscales: np.ndarray
    variance: float

    def __post_init__(self):
        ell = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ell <= 0.0) or not np.all(np.isfinite(ell)):
            raise ValueError("lengthscales must be strictly positive and finite")
        if not (self.variance > 0.0 and np.isfinite(self.variance)):
            raise ValueError("variance must be strictly positive and finite")
        object.__setattr__(self, "lengthscales", ell)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def input_dim(self) -> int:
        return self.lengthscales.shape[0]

    def __call__(self, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
        if a.shape[1] != self.input_dim or b.shape[1] != self.input_dim:
            raise ValueError(
                f"kernel built for dim {self.input_dim}, got {a.shape[1]}/{b.shape[1]}"
            )
        sa = a / self.lengthscales[None, :]
        sb = b / self.lengthscales[None, :]
        sq = (
            np.sum(sa * sa, axis=1)[:, None]
            - 2.0 * sa @ sb.T
            + np.sum(sb * sb, axis=1)[None, :]
        )
        return self.variance * np.exp(-0.5 * np.maximum(sq, 0.0))

    def to_dict(self) -> dict:
        return {"lengthscales": self.lengthscales.tolist(), "variance": self.variance}

    @classmethod
    def from_dict(cls, d: dict) -> "RbfArdKernel":
        return cls(lengthscales=np.asarray(d["lengthscales"], dtype=float),
                   variance=float(d["variance"]))
