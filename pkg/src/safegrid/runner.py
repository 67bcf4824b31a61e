"""
Experiment orchestration: PI-agent episodes, landscape sweeps and the
SafeOpt tuning loop.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from safegrid.control import PiGains, PiState, command_divisor, pi_step
from safegrid.env import LOG_EPS, EnvConfig, EpisodeRecord, MicrogridEnv
from safegrid.frames import PHASE_SHIFTS
from safegrid.gp import GpModel, KernelParams
from safegrid.plant import build_lc_plant, zoh_discretize
from safegrid.safeopt import ParamBounds, SafeOpt, SafeSetEmpty

logger = logging.getLogger(__name__)

GAIN_NAMES = ("kp", "ki")
HISTORY_COLUMNS = ("iteration", "kp", "ki", "J", "aborted", "set", "safe_set_size")
LANDSCAPE_COLUMNS = ("kp", "ki", "J")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything needed to reproduce one tuning run.

    ``bounds`` always spans both gains ``(kp, ki)``; dimensions pinned in
    ``fixed_params`` are excluded from the search. Kernel ``signal_std`` and
    ``noise_std`` left as ``None`` are derived from the measured seed
    performance as ``|J_init|`` and ``0.01 * |J_init|``.
    """

    env: EnvConfig = field(default_factory=EnvConfig)
    bounds: ParamBounds = field(default_factory=lambda: ParamBounds((0.0, 0.0), (0.03, 300.0), (100, 100)))
    fixed_params: tuple[Optional[float], Optional[float]] = (None, None)
    seed_gains: PiGains = field(default_factory=lambda: PiGains(0.005, 10.0))
    n_episodes: int = 50
    lengthscales: tuple[float, ...] = (0.05,)
    signal_std: Optional[float] = None
    noise_std: Optional[float] = None
    beta: float = 2.0
    rng_seed: int = 0
    scaling: str = "per-unit"
    anti_windup: bool = False
    expanders: str = "lazy"
    snapshot_stride: Optional[int] = None
    name: str = "tune"

    def __post_init__(self):
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be >= 1")
        if self.bounds.ndim != 2:
            raise ValueError("bounds must cover (kp, ki)")
        if len(self.fixed_params) != 2 or all(v is not None for v in self.fixed_params):
            raise ValueError("fixed_params needs two entries with at least one free dimension")
        seed = (self.seed_gains.kp, self.seed_gains.ki)
        for v, lo, hi in zip(seed, self.bounds.lows, self.bounds.highs):
            if not lo <= v <= hi:
                raise ValueError(f"seed gains {seed} outside bounds")
        command_divisor(self.scaling, 1.0)
        if self.expanders not in ("lazy", "full"):
            raise ValueError("expanders must be 'lazy' or 'full'")

    @property
    def free_dims(self) -> list[int]:
        return [k for k, v in enumerate(self.fixed_params) if v is None]

    def search_bounds(self) -> ParamBounds:
        dims = self.free_dims
        b = self.bounds
        return ParamBounds(
            tuple(b.lows[k] for k in dims),
            tuple(b.highs[k] for k in dims),
            tuple(b.grid_points[k] for k in dims),
        )

    def gains_from(self, free_values) -> PiGains:
        values = list(self.fixed_params)
        for k, v in zip(self.free_dims, np.atleast_1d(free_values)):
            values[k] = float(v)
        return PiGains(*values)

    def kernel_for(self, j_init: float) -> KernelParams:
        scale = max(abs(j_init), 1e-12)
        signal = self.signal_std if self.signal_std is not None else scale
        noise = self.noise_std if self.noise_std is not None else 0.01 * scale
        return KernelParams(self.lengthscales, signal, noise).with_dims(len(self.free_dims))

    def stride(self) -> int:
        if self.snapshot_stride is not None:
            return self.snapshot_stride
        return 1 if self.n_episodes <= 20 else 5


class HistoryEntry(NamedTuple):
    iteration: int
    gains: PiGains
    j: float
    aborted: bool
    set_tag: str
    safe_set_size: int
    lower_at_proposal: float


@dataclass
class TuningHistory:
    """Measured episodes of a tuning run, the seed first."""

    entries: list[HistoryEntry]
    j_init: float
    j_min: float
    kernel: KernelParams
    snapshots: dict[int, GpModel]
    terminal: bool = False
    rng_seed: int = 0
    optimizer: Optional[SafeOpt] = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def best(self) -> tuple[PiGains, float]:
        e = max(self.entries, key=lambda e: (e.j, -e.iteration))
        return e.gains, e.j

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            for e in self.entries:
                w.writerow([
                    e.iteration, repr(e.gains.kp), repr(e.gains.ki), repr(e.j),
                    int(e.aborted), e.set_tag, e.safe_set_size,
                ])


def read_history_csv(path) -> list[dict]:
    """Parse a history CSV back into typed rows."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HISTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected history columns {reader.fieldnames}")
        for r in reader:
            rows.append({
                "iteration": int(r["iteration"]),
                "kp": float(r["kp"]),
                "ki": float(r["ki"]),
                "J": float(r["J"]),
                "aborted": bool(int(r["aborted"])),
                "set": r["set"],
                "safe_set_size": int(r["safe_set_size"]),
            })
    return rows


def run_episode(
    env_cfg: EnvConfig,
    gains: PiGains,
    scaling: str = "per-unit",
    anti_windup: bool = False,
) -> EpisodeRecord:
    """Run one blackstart episode of the PI agent on a fresh environment."""
    env = MicrogridEnv(env_cfg)
    obs = env.reset()
    state = PiState()
    while True:
        out, state = pi_step(
            gains, state, obs.i_f_abc, env_cfg.i_ref_dq0, obs.theta, env_cfg.dt,
            env_cfg.grid.v_dc, scaling, anti_windup,
        )
        res = env.step(out.m_abc)
        obs = res.obs
        if res.done:
            return env.record()


class BatchResult(NamedTuple):
    j: np.ndarray
    aborted: np.ndarray
    peak_current: np.ndarray


def simulate_batch(
    env_cfg: EnvConfig,
    kp,
    ki,
    scaling: str = "per-unit",
    anti_windup: bool = False,
) -> BatchResult:
    """
    Vectorized twin of :func:`run_episode` over many gain pairs at once.

    Returns J, abort flags and the peak filter current per gain pair.
    """
    kp = np.atleast_1d(np.asarray(kp, dtype=float))
    ki = np.atleast_1d(np.asarray(ki, dtype=float))
    kp, ki = np.broadcast_arrays(kp, ki)
    n = kp.size
    cfg = env_cfg
    model = build_lc_plant(cfg.grid)
    a_t = model.a_matrix.T
    b_t = model.b_matrix.T
    if cfg.backend == "zoh":
        d = zoh_discretize(model, cfg.dt)
        ad_t, bd_t = d.a_d.T, d.b_d.T
    divisor = command_divisor(scaling, cfg.grid.v_dc)
    ref = np.asarray(cfg.i_ref_dq0)

    x = np.zeros((n, model.n_states))
    integ = np.zeros((n, 3))
    total = np.zeros(n)
    last = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    aborted = np.zeros(n, dtype=bool)
    peak = np.zeros(n)
    kp_c, ki_c = kp.ravel()[:, None], ki.ravel()[:, None]
    for k in range(cfg.n_steps):
        theta = 2.0 * math.pi * cfg.grid.f_grid * (k * cfg.dt)
        ang = theta - PHASE_SHIFTS
        fwd = (2.0 / 3.0) * np.array([np.cos(ang), -np.sin(ang), [0.5, 0.5, 0.5]])
        inv = np.column_stack([np.cos(ang), -np.sin(ang), np.ones(3)])
        e = ref - x[:, :3] @ fwd.T
        integ_new = integ + e * cfg.dt
        m_raw = (kp_c * e + ki_c * integ_new) @ inv.T / divisor
        if anti_windup:
            hold = np.any(np.abs(m_raw) > 1.0, axis=1)
            integ_new[hold] = integ[hold]
            m_raw = (kp_c * e + ki_c * integ_new) @ inv.T / divisor
        integ = integ_new
        v_inv = np.clip(m_raw, -1.0, 1.0) * cfg.v_link
        if cfg.backend == "zoh":
            x_new = x @ ad_t + v_inv @ bd_t
        else:
            bu = v_inv @ b_t
            h = cfg.dt / cfg.rk4_substeps
            x_new = x
            for _ in range(cfg.rk4_substeps):
                k1 = x_new @ a_t + bu
                k2 = (x_new + 0.5 * h * k1) @ a_t + bu
                k3 = (x_new + 0.5 * h * k2) @ a_t + bu
                k4 = (x_new + h * k3) @ a_t + bu
                x_new = x_new + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        i_f = x_new[:, :3]
        i_ref = inv @ ref
        root = np.sqrt(np.abs(i_ref - i_f) / cfg.i_limit)
        over = np.maximum(np.abs(i_f) - cfg.i_nom, 0.0) / (cfg.i_limit - cfg.i_nom)
        r = -np.sum(root - cfg.mu * np.log(np.maximum(1.0 - over, LOG_EPS)), axis=1)
        # finished episodes keep contributing their abort-step reward
        total += np.where(alive, r, last)
        last = np.where(alive, r, last)
        i_max = np.max(np.abs(i_f), axis=1)
        peak = np.where(alive, np.maximum(peak, i_max), peak)
        newly = alive & (i_max > cfg.i_limit)
        aborted |= newly
        alive &= ~newly
        x = x_new
    shape = kp.shape
    return BatchResult((total / cfg.n_steps).reshape(shape), aborted.reshape(shape), peak.reshape(shape))


class Landscape(NamedTuple):
    kp: np.ndarray
    ki: np.ndarray
    j: np.ndarray
    aborted: np.ndarray
    peak_current: np.ndarray

    def argmax(self) -> tuple[float, float, float]:
        i, k = np.unravel_index(int(np.argmax(self.j)), self.j.shape)
        return float(self.kp[i]), float(self.ki[k]), float(self.j[i, k])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LANDSCAPE_COLUMNS)
            for i, kp in enumerate(self.kp):
                for k, ki in enumerate(self.ki):
                    w.writerow([repr(float(kp)), repr(float(ki)), repr(float(self.j[i, k]))])


def landscape_sweep(
    env_cfg: EnvConfig,
    bounds: ParamBounds,
    resolution=None,
    fixed_params=(None, None),
    scaling: str = "per-unit",
    anti_windup: bool = False,
) -> Landscape:
    """
    Brute-force J over a uniform (kp, ki) grid.

    ``resolution`` defaults to ``bounds.grid_points``; a pinned dimension in
    ``fixed_params`` collapses to that single value. A resolution of 1 uses
    the lower bound.
    """
    res = tuple(bounds.grid_points if resolution is None else np.broadcast_to(resolution, (2,)))
    axes = []
    for k in range(2):
        if fixed_params[k] is not None:
            axes.append(np.array([float(fixed_params[k])]))
        elif int(res[k]) == 1:
            axes.append(np.array([bounds.lows[k]]))
        else:
            axes.append(np.linspace(bounds.lows[k], bounds.highs[k], int(res[k])))
    kp_m, ki_m = np.meshgrid(axes[0], axes[1], indexing="ij")
    out = simulate_batch(env_cfg, kp_m, ki_m, scaling, anti_windup)
    return Landscape(axes[0], axes[1], out.j, out.aborted, out.peak_current)


def run_tuning(cfg: ExperimentConfig) -> TuningHistory:
    """
    Measure the seed, then alternate SafeOpt proposals and episodes.

    The safety threshold is ``2 * J_init`` of the measured seed. If the safe
    set empties the history is returned with ``terminal=True``.
    """
    seed_rec = run_episode(cfg.env, cfg.seed_gains, cfg.scaling, cfg.anti_windup)
    j_init = seed_rec.j
    j_min = 2.0 * j_init
    kernel = cfg.kernel_for(j_init)
    seed_free = np.array([(cfg.seed_gains.kp, cfg.seed_gains.ki)[k] for k in cfg.free_dims])
    opt = SafeOpt(cfg.search_bounds(), seed_free, j_init, j_min, kernel, cfg.beta, expanders=cfg.expanders)
    entries = [HistoryEntry(0, cfg.seed_gains, j_init, seed_rec.aborted, "seed", opt.safe_set_size, float("nan"))]
    stride = cfg.stride()
    snapshots = {0: opt.gp}
    terminal = False
    for it in range(1, cfg.n_episodes):
        prop = opt.propose_next()
        lower = float(opt.lower[prop.index])
        if lower < j_min:
            raise AssertionError(f"proposal outside the safe set at iteration {it}")
        gains = cfg.gains_from(prop.params)
        rec = run_episode(cfg.env, gains, cfg.scaling, cfg.anti_windup)
        try:
            opt.add_measurement(prop.params, rec.j, rec.aborted)
        except SafeSetEmpty:
            terminal = True
        entries.append(HistoryEntry(it, gains, rec.j, rec.aborted, prop.set, opt.safe_set_size, lower))
        if it % stride == 0 or it == cfg.n_episodes - 1:
            snapshots[it] = opt.gp
        logger.info("episode %d: kp=%.6g ki=%.6g J=%.4f (%s)", it, gains.kp, gains.ki, rec.j, prop.set)
        if terminal:
            break
    return TuningHistory(entries, j_init, j_min, kernel, snapshots, terminal, cfg.rng_seed, opt)


def replay_optimizer(cfg: ExperimentConfig, rows: list[dict], upto: int) -> SafeOpt:
    """Rebuild the SafeOpt state after history row ``upto`` (0 = seed only)."""
    if not 0 <= upto < len(rows):
        raise IndexError(f"episode index {upto} out of range 0..{len(rows) - 1}")
    j_init = rows[0]["J"]
    free = cfg.free_dims
    seed = np.array([(rows[0]["kp"], rows[0]["ki"])[k] for k in free])
    opt = SafeOpt(
        cfg.search_bounds(), seed, j_init, 2.0 * j_init, cfg.kernel_for(j_init), cfg.beta,
        expanders=cfg.expanders,
    )
    for r in rows[1 : upto + 1]:
        opt.add_measurement(np.array([(r["kp"], r["ki"])[k] for k in free]), r["J"], r["aborted"])
    return opt


def calibrate_modulation(
    env_cfg: EnvConfig,
    gains: PiGains = PiGains(0.005, 10.0),
    target: float = -0.52,
) -> list[tuple[str, str, float]]:
    """
    J of the seed gains under every command-scaling / link combination.

    Sorted by distance to ``target``; the first entry is the best match.
    """
    results = []
    for scaling in ("per-unit", "half-link", "full-link"):
        for link in ("half", "full"):
            cfg = EnvConfig(**{**env_cfg.__dict__, "link": link})
            results.append((scaling, link, run_episode(cfg, gains, scaling).j))
    return sorted(results, key=lambda r: abs(r[2] - target))


def default_experiment(mode: str, env: EnvConfig | None = None, **overrides) -> ExperimentConfig:
    """Default 1D (ki only, kp pinned at the seed) or 2D tuning setup."""
    env = env or EnvConfig()
    if mode == "1d":
        base = dict(
            bounds=ParamBounds((0.0, 0.0), (0.03, 300.0), (100, 1000)),
            fixed_params=(0.005, None),
            n_episodes=15,
            name="tune1d",
        )
    elif mode == "2d":
        base = dict(
            bounds=ParamBounds((0.0, 0.0), (0.03, 300.0), (100, 100)),
            n_episodes=50,
            name="tune2d",
        )
    else:
        raise ValueError(f"mode must be '1d' or '2d', got {mode!r}")
    base.update(overrides)
    return ExperimentConfig(env=env, **base)
