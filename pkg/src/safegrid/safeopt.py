"""
SafeOpt over a finite grid of parameter vectors, GP confidence bounds only.

A grid point is *safe* when its lower confidence bound clears ``j_min``.
Among safe points, *maximizers* have an upper bound above the best safe
lower bound, and *expanders* would certify at least one currently unsafe
point if they were observed at their upper bound. The next evaluation is
the widest-interval point in the union of the two sets.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from safegrid.gp import GpModel, KernelParams, confidence_bounds, matern32

logger = logging.getLogger(__name__)

EXPANDER = "expander"
MAXIMIZER = "maximizer"
FALLBACK = "exploit-fallback"
_CHUNK = 256


class SafeSetEmpty(RuntimeError):
    """No grid point satisfies the safety threshold any more."""


@dataclass(frozen=True)
class ParamBounds:
    """
    Box bounds in physical units plus the grid resolution per dimension.

    Examples
    --------
    >>> b = ParamBounds((0.0,), (300.0,), (2,))
    >>> b.grid().tolist()
    [[0.0], [300.0]]
    """

    lows: tuple[float, ...]
    highs: tuple[float, ...]
    grid_points: tuple[int, ...]

    def __post_init__(self):
        lows = tuple(float(v) for v in np.atleast_1d(self.lows))
        highs = tuple(float(v) for v in np.atleast_1d(self.highs))
        pts = tuple(int(v) for v in np.atleast_1d(self.grid_points))
        if not (len(lows) == len(highs) == len(pts)):
            raise ValueError("lows, highs and grid_points must have the same length")
        if any(lo >= hi for lo, hi in zip(lows, highs)):
            raise ValueError("each low must be below its high")
        if any(p < 2 for p in pts):
            raise ValueError("grid_points must be >= 2 per dimension")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        object.__setattr__(self, "grid_points", pts)

    @property
    def ndim(self) -> int:
        return len(self.lows)

    def normalize(self, x) -> np.ndarray:
        lo, hi = np.asarray(self.lows), np.asarray(self.highs)
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def denormalize(self, z) -> np.ndarray:
        lo, hi = np.asarray(self.lows), np.asarray(self.highs)
        return lo + np.asarray(z, dtype=float) * (hi - lo)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lows, self.highs, self.grid_points)]

    def grid(self) -> np.ndarray:
        """All grid points, shape ``(prod(grid_points), ndim)``; the last dimension varies fastest."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def nearest_index(self, x) -> int:
        """Flat grid index of the point nearest to ``x`` (per-axis rounding)."""
        z = np.clip(self.normalize(x), 0.0, 1.0)
        idx = np.rint(z * (np.asarray(self.grid_points) - 1)).astype(int)
        return int(np.ravel_multi_index(tuple(idx), self.grid_points))


class Proposal(NamedTuple):
    params: np.ndarray
    width: float
    set: str
    index: int


class Observation(NamedTuple):
    params: np.ndarray
    j: float
    aborted: bool
    index: int


class SafeOpt:
    """
    Safe Bayesian optimization state over ``bounds.grid()``.

    Parameters
    ----------
    bounds : ParamBounds
        Search box and grid resolution.
    seed_params : array_like
        Known-safe starting parameters (physical units); snapped to the grid.
    seed_j : float
        Measured performance at the seed.
    j_min : float
        Safety threshold on the performance.
    kernel : KernelParams
        GP hyperparameters in normalized input units.
    beta : float
        Confidence multiplier.
    prior_offset : float, optional
        Constant prior mean; defaults to ``seed_j``.
    expanders : {"lazy", "full"}
        ``"full"`` classifies every safe point as expander or not in
        :meth:`compute_sets`; ``"lazy"`` only evaluates as many as
        :meth:`propose_next` needs. Proposals are identical either way.
    """

    def __init__(
        self,
        bounds: ParamBounds,
        seed_params,
        seed_j: float,
        j_min: float,
        kernel: KernelParams,
        beta: float = 2.0,
        prior_offset: Optional[float] = None,
        expanders: str = "lazy",
    ):
        if seed_j < j_min:
            raise ValueError(f"seed performance {seed_j} is below the safety threshold {j_min}")
        if beta <= 0:
            raise ValueError("beta must be positive")
        if expanders not in ("lazy", "full"):
            raise ValueError("expanders must be 'lazy' or 'full'")
        self.bounds = bounds
        self.grid = bounds.grid()
        self.grid_norm = bounds.normalize(self.grid)
        self.j_min = float(j_min)
        self.beta = float(beta)
        self.kernel = kernel.with_dims(bounds.ndim)
        self.expander_mode = expanders
        idx = bounds.nearest_index(seed_params)
        offset = float(seed_j) if prior_offset is None else float(prior_offset)
        self.gp = GpModel.fit(self.grid_norm[idx : idx + 1], [seed_j], self.kernel, offset)
        self.observations = [Observation(self.grid[idx].copy(), float(seed_j), False, idx)]
        self.compute_sets()

    def compute_sets(self) -> None:
        """Recompute bounds and the safe, maximizer and expander masks from the current GP."""
        gp = self.gp
        k_star, v = gp._solve_lower(self.grid_norm)
        self._v = v
        self.mean = k_star.T @ gp.alpha + gp.prior_offset
        self.var = np.maximum(self.kernel.signal_std**2 - np.einsum("ij,ij->j", v, v), 0.0)
        self.lower, self.upper = confidence_bounds((self.mean, self.var), self.beta)
        self.safe_mask = self.lower >= self.j_min
        if not self.safe_mask.any():
            self.maximizer_mask = np.zeros_like(self.safe_mask)
            self.expander_mask = np.zeros_like(self.safe_mask)
            raise SafeSetEmpty("safe set is empty")
        best_lower = self.lower[self.safe_mask].max()
        self.maximizer_mask = self.safe_mask & (self.upper >= best_lower)
        self._expander_cache: dict[int, bool] = {}
        if self.expander_mode == "full":
            safe_idx = np.flatnonzero(self.safe_mask)
            flags = self._expander_flags(safe_idx)
            self.expander_mask = np.zeros_like(self.safe_mask)
            self.expander_mask[safe_idx] = flags
            self._expander_cache = dict(zip(safe_idx.tolist(), flags.tolist()))
        else:
            # lazy: flags live in _expander_cache, evaluated on demand
            self.expander_mask = None

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def _expander_flags(self, cand: np.ndarray) -> np.ndarray:
        """
        Expander test for grid indices ``cand``.

        A fictitious observation ``y = upper(x)`` at candidate ``x`` moves the
        posterior at ``x'`` by a rank-1 update::

            mean'(x') = mean(x') + c(x', x) / s * (upper(x) - mean(x))
            var'(x')  = var(x') - c(x', x)**2 / s,    s = var(x) + noise**2

        and ``x`` expands if ``mean' - beta*sqrt(var') >= j_min`` for some
        currently unsafe ``x'``.
        """
        unsafe = np.flatnonzero(~self.safe_mask)
        flags = np.zeros(len(cand), dtype=bool)
        if len(unsafe) == 0 or len(cand) == 0:
            return flags
        noise2 = self.kernel.noise_std**2
        v_u = self._v[:, unsafe]
        mean_u, var_u = self.mean[unsafe], self.var[unsafe]
        for start in range(0, len(cand), _CHUNK):
            c = cand[start : start + _CHUNK]
            cov = matern32(self.kernel, self.grid_norm[unsafe], self.grid_norm[c]) - v_u.T @ self._v[:, c]
            s = self.var[c] + noise2
            ok = s > 0
            s_safe = np.where(ok, s, 1.0)
            gain = cov / s_safe
            new_mean = mean_u[:, None] + gain * (self.upper[c] - self.mean[c])
            new_var = np.maximum(var_u[:, None] - cov * gain, 0.0)
            new_lower = new_mean - self.beta * np.sqrt(new_var)
            flags[start : start + len(c)] = ok & np.any(new_lower >= self.j_min, axis=0)
        return flags

    def is_expander(self, idx: int) -> bool:
        if idx not in self._expander_cache:
            self._expander_cache[idx] = bool(self._expander_flags(np.array([idx]))[0])
        return self._expander_cache[idx]

    def propose_next(self) -> Proposal:
        """
        Widest-interval point among maximizers and expanders.

        Safe points are scanned by descending width (ties: lowest index);
        expander tests run in chunks only until the first qualifying point.
        """
        safe_idx = np.flatnonzero(self.safe_mask)
        if len(safe_idx) == 0:
            raise SafeSetEmpty("safe set is empty")
        width = self.width
        order = safe_idx[np.argsort(-width[safe_idx], kind="stable")]
        for start in range(0, len(order), _CHUNK):
            chunk = order[start : start + _CHUNK]
            todo = np.array([i for i in chunk if i not in self._expander_cache and not self.maximizer_mask[i]], dtype=int)
            if len(todo):
                self._expander_cache.update(zip(todo.tolist(), self._expander_flags(todo).tolist()))
            for i in chunk:
                if self.maximizer_mask[i]:
                    return self._proposal(i, MAXIMIZER)
                if self._expander_cache.get(int(i), False):
                    return self._proposal(i, EXPANDER)
        logger.debug("no maximizer or expander among %d safe points", len(order))
        return self._proposal(order[0], FALLBACK)

    def _proposal(self, idx, tag: str) -> Proposal:
        idx = int(idx)
        return Proposal(self.grid[idx].copy(), float(self.width[idx]), tag, idx)

    def add_measurement(self, params, j: float, aborted: bool = False) -> None:
        """Condition on a new measurement at grid point ``params`` and refresh the sets."""
        idx = self.bounds.nearest_index(params)
        span = np.asarray(self.bounds.highs) - np.asarray(self.bounds.lows)
        if np.any(np.abs(self.grid[idx] - np.asarray(params, dtype=float)) > 1e-9 * span):
            raise ValueError(f"parameters {params} are not on the grid")
        self.gp = self.gp.add_observation(self.grid_norm[idx], float(j))
        self.observations.append(Observation(self.grid[idx].copy(), float(j), bool(aborted), idx))
        self.compute_sets()

    def best_observed(self) -> tuple[np.ndarray, float]:
        best = max(range(len(self.observations)), key=lambda k: (self.observations[k].j, -k))
        obs = self.observations[best]
        return obs.params.copy(), obs.j

    @property
    def safe_set_size(self) -> int:
        return int(self.safe_mask.sum())

    def write_posterior_csv(self, path, names) -> None:
        """Grid dump with columns ``names..., mean, lower, upper, safe``."""
        write_posterior_csv(path, names, self.grid, self.mean, self.lower, self.upper, self.safe_mask)


def posterior_on_grid(gp: GpModel, grid_norm: np.ndarray, beta: float, j_min: float):
    """Mean, lower, upper and safe flag of ``gp`` at normalized grid points."""
    mean, var = gp.predict(grid_norm)
    lower, upper = confidence_bounds((mean, var), beta)
    return mean, lower, upper, lower >= j_min


def write_posterior_csv(path, names, grid, mean, lower, upper, safe) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "mean", "lower", "upper", "safe"])
        for k in range(len(mean)):
            w.writerow(
                [repr(float(v)) for v in grid[k]]
                + [repr(float(mean[k])), repr(float(lower[k])), repr(float(upper[k])), int(safe[k])]
            )
