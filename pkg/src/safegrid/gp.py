"""
Exact Gaussian-process regression with an anisotropic Matern-3/2 kernel.

Inputs are expected in normalized units; targets are stored relative to a
constant prior mean ``prior_offset``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist

SQRT3 = math.sqrt(3.0)
MAX_REL_JITTER = 1e-6


class DegenerateGramError(np.linalg.LinAlgError):
    """Gram matrix not positive definite even after jitter (duplicate inputs, zero noise)."""


@dataclass(frozen=True)
class KernelParams:
    lengthscales: tuple[float, ...]
    signal_std: float
    noise_std: float = 0.0
    nu: float = 1.5

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        if not ls or min(ls) <= 0:
            raise ValueError("lengthscales must be positive")
        if self.signal_std <= 0 or self.noise_std < 0:
            raise ValueError("signal_std must be positive and noise_std non-negative")
        if self.nu != 1.5:
            raise ValueError("only nu = 3/2 is supported")
        object.__setattr__(self, "lengthscales", ls)

    def with_dims(self, d: int) -> "KernelParams":
        """Broadcast a single lengthscale to ``d`` dimensions."""
        if len(self.lengthscales) == d:
            return self
        if len(self.lengthscales) != 1:
            raise ValueError(f"need 1 or {d} lengthscales, got {len(self.lengthscales)}")
        return KernelParams(self.lengthscales * d, self.signal_std, self.noise_std)


class Posterior(NamedTuple):
    mean: float
    variance: float


def matern32(k: KernelParams, x1, x2) -> np.ndarray:
    """Kernel matrix between the rows of ``x1`` (n, d) and ``x2`` (m, d)."""
    ls = np.asarray(k.lengthscales)
    a = np.atleast_2d(np.asarray(x1, dtype=float)) / ls
    b = np.atleast_2d(np.asarray(x2, dtype=float)) / ls
    r = SQRT3 * cdist(a, b)
    return k.signal_std**2 * (1.0 + r) * np.exp(-r)


def kernel_eval(k: KernelParams, x1, x2) -> float:
    """``signal_std**2 * (1 + sqrt(3) d) * exp(-sqrt(3) d)`` for scaled distance ``d``."""
    d = math.sqrt(sum(((a - b) / ell) ** 2 for a, b, ell in zip(np.atleast_1d(x1), np.atleast_1d(x2), k.lengthscales)))
    return k.signal_std**2 * (1.0 + SQRT3 * d) * math.exp(-SQRT3 * d)


def _cholesky_with_jitter(gram: np.ndarray, signal_var: float) -> np.ndarray:
    jitter = 0.0
    n = gram.shape[0]
    while True:
        try:
            return cholesky(gram + jitter * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            jitter = 1e-12 * signal_var if jitter == 0.0 else jitter * 10.0
            if jitter > MAX_REL_JITTER * signal_var * (1 + 1e-9):
                raise DegenerateGramError(
                    "Gram matrix is not positive definite; duplicate inputs with zero noise?"
                ) from None


class GpModel:
    """
    Fitted GP posterior. Instances are treated as immutable.

    Use :meth:`fit` to build one and :meth:`add_observation` to obtain an
    extended copy.
    """

    def __init__(self, inputs, targets, kernel, chol, alpha, prior_offset):
        self.inputs = inputs
        self.targets = targets
        self.kernel = kernel
        self.chol = chol
        self.alpha = alpha
        self.prior_offset = prior_offset

    @classmethod
    def fit(cls, inputs, targets, kernel: KernelParams, prior_offset: float = 0.0) -> "GpModel":
        """
        Condition the prior on ``targets`` observed at ``inputs``.

        ``targets`` are raw values; they are centered by ``prior_offset``.
        """
        x = np.atleast_2d(np.asarray(inputs, dtype=float))
        y = np.asarray(targets, dtype=float).ravel() - prior_offset
        if x.shape[0] == 0:
            raise ValueError("at least one observation is required")
        if x.shape[0] != y.shape[0]:
            raise ValueError("inputs and targets differ in length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("observations must be finite")
        kernel = kernel.with_dims(x.shape[1])
        gram = matern32(kernel, x, x) + kernel.noise_std**2 * np.eye(len(y))
        chol = _cholesky_with_jitter(gram, kernel.signal_std**2)
        alpha = solve_triangular(chol.T, solve_triangular(chol, y, lower=True), lower=False)
        return cls(x, y, kernel, chol, alpha, float(prior_offset))

    @property
    def n_obs(self) -> int:
        return self.inputs.shape[0]

    def add_observation(self, x, y: float) -> "GpModel":
        """Return the model conditioned on one more point, via a Cholesky row append."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not (np.all(np.isfinite(x)) and math.isfinite(y)):
            raise ValueError("observations must be finite")
        k = self.kernel
        k_new = matern32(k, self.inputs, x).ravel()
        l12 = solve_triangular(self.chol, k_new, lower=True)
        d2 = k.signal_std**2 + k.noise_std**2 - l12 @ l12
        if d2 <= 1e-12 * k.signal_std**2:
            return GpModel.fit(
                np.vstack([self.inputs, x]),
                np.append(self.targets + self.prior_offset, y),
                k,
                self.prior_offset,
            )
        n = self.n_obs
        chol = np.zeros((n + 1, n + 1))
        chol[:n, :n] = self.chol
        chol[n, :n] = l12
        chol[n, n] = math.sqrt(d2)
        targets = np.append(self.targets, y - self.prior_offset)
        alpha = solve_triangular(chol.T, solve_triangular(chol, targets, lower=True), lower=False)
        return GpModel(np.vstack([self.inputs, x]), targets, k, chol, alpha, self.prior_offset)

    def _solve_lower(self, x) -> tuple[np.ndarray, np.ndarray]:
        k_star = matern32(self.kernel, self.inputs, x)
        return k_star, solve_triangular(self.chol, k_star, lower=True)

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at the rows of ``x``."""
        k_star, v = self._solve_lower(x)
        mean = k_star.T @ self.alpha + self.prior_offset
        var = self.kernel.signal_std**2 - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    def posterior_at(self, x) -> Posterior:
        mean, var = self.predict(np.atleast_2d(np.asarray(x, dtype=float)))
        return Posterior(float(mean[0]), float(var[0]))

    def covariance(self, xa, xb) -> np.ndarray:
        """Posterior covariance matrix between the rows of ``xa`` and ``xb``."""
        _, va = self._solve_lower(xa)
        _, vb = self._solve_lower(xb)
        return matern32(self.kernel, xa, xb) - va.T @ vb


def confidence_bounds(p, beta: float):
    """Lower and upper bound ``mean -/+ beta * std``; works on scalars or arrays."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    mean, var = p
    std = np.sqrt(var)
    return mean - beta * std, mean + beta * std
