"""
Episodic gym-style environment around the LC-filter plant.

One step holds the inverter phase voltages ``v_inv = m * v_dc * link`` for
``dt`` seconds, then scores the new filter-inductor currents against the
abc image of the dq0 setpoint at the angle the step was commanded at.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from safegrid.frames import ThreePhase, grid_angle, inverse_park_matrix
from safegrid.plant import (
    GridParams,
    PlantState,
    build_lc_plant,
    step_rk4,
    step_zoh,
    zoh_discretize,
)

LOG_EPS = 1e-6
LINK_FACTORS = {"half": 0.5, "full": 1.0}
TRACE_COLUMNS = (
    "t",
    "i_f_a", "i_f_b", "i_f_c",
    "v_c_a", "v_c_b", "v_c_c",
    "i_l_a", "i_l_b", "i_l_c",
    "m_a", "m_b", "m_c",
    "reward",
)


@dataclass(frozen=True)
class EnvConfig:
    """
    Episode settings.

    ``link`` selects how a modulation index becomes a phase voltage:
    ``"half"`` gives ``m * v_dc / 2``, ``"full"`` gives ``m * v_dc``.
    ``backend`` is ``"zoh"`` or ``"rk4"`` (with ``rk4_substeps``).
    """

    grid: GridParams = field(default_factory=GridParams)
    i_nom: float = 20.0
    i_limit: float = 30.0
    i_ref_dq0: tuple[float, float, float] = (15.0, 0.0, 0.0)
    dt: float = 50e-6
    n_steps: int = 300
    mu: float = 2.0
    backend: str = "zoh"
    rk4_substeps: int = 20
    link: str = "full"

    def __post_init__(self):
        if not 0 < self.i_nom < self.i_limit:
            raise ValueError("require 0 < i_nom < i_limit")
        if self.dt <= 0 or self.n_steps < 1:
            raise ValueError("require dt > 0 and n_steps >= 1")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if self.backend not in ("zoh", "rk4"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.rk4_substeps < 1:
            raise ValueError("rk4_substeps must be >= 1")
        if self.link not in LINK_FACTORS:
            raise ValueError(f"unknown link {self.link!r}; expected 'half' or 'full'")
        object.__setattr__(self, "i_ref_dq0", tuple(float(v) for v in self.i_ref_dq0))

    @property
    def v_link(self) -> float:
        """Phase voltage per unit modulation index."""
        return self.grid.v_dc * LINK_FACTORS[self.link]


@dataclass(frozen=True)
class Observation:
    i_f_abc: ThreePhase
    v_c_abc: ThreePhase
    t: float
    theta: float


@dataclass(frozen=True)
class StepResult:
    obs: Observation
    reward: float
    done: bool
    aborted: bool


@dataclass
class EpisodeRecord:
    """Per-step trace of one episode; ``states[n]`` is the state after step ``n``."""

    t: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    aborted: bool
    abort_step: Optional[int]
    n_steps: int
    j: float = float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for k in range(len(self.rewards)):
                w.writerow(
                    [repr(float(self.t[k]))]
                    + [repr(float(v)) for v in self.states[k]]
                    + [repr(float(v)) for v in self.actions[k]]
                    + [repr(float(self.rewards[k]))]
                )


def reward(i_abc, i_ref_abc, cfg: EnvConfig):
    """
    Tracking reward: root-error term plus a log barrier above ``i_nom``.

    ``r = -sum_p [ sqrt(|i*_p - i_p| / i_limit)
                  - mu * log(max(1 - max(|i_p| - i_nom, 0) / (i_limit - i_nom), eps)) ]``

    Accepts arrays whose last axis holds the three phases and returns one
    value per leading index (a float for a single sample).
    """
    i = np.asarray(i_abc, dtype=float)
    i_ref = np.asarray(i_ref_abc, dtype=float)
    root = np.sqrt(np.abs(i_ref - i) / cfg.i_limit)
    overshoot = np.maximum(np.abs(i) - cfg.i_nom, 0.0) / (cfg.i_limit - cfg.i_nom)
    barrier = cfg.mu * np.log(np.maximum(1.0 - overshoot, LOG_EPS))
    r = -np.sum(root - barrier, axis=-1)
    return float(r) if np.ndim(r) == 0 else r


def episode_performance(rec: EpisodeRecord, cfg: EnvConfig | None = None) -> float:
    """
    Mean reward over all ``N`` step slots.

    Slots after an abort are filled with the abort-step reward.
    """
    n = cfg.n_steps if cfg is not None else rec.n_steps
    rewards = np.asarray(rec.rewards, dtype=float)
    if len(rewards) == 0:
        raise ValueError("empty episode")
    if rec.aborted:
        missing = n - len(rewards)
        return float((rewards.sum() + missing * rewards[-1]) / n)
    if len(rewards) != n:
        raise ValueError(f"episode incomplete: {len(rewards)} of {n} steps")
    return float(rewards.mean())


def zero_current_performance(cfg: EnvConfig) -> float:
    """J of an episode in which all currents stay zero, from the reference alone."""
    total = 0.0
    ref = np.asarray(cfg.i_ref_dq0)
    for n in range(cfg.n_steps):
        theta = 2.0 * math.pi * cfg.grid.f_grid * n * cfg.dt
        i_ref = inverse_park_matrix(theta) @ ref
        total -= sum(math.sqrt(abs(v) / cfg.i_limit) for v in i_ref)
    return total / cfg.n_steps


class MicrogridEnv:
    """
    Single inverter with LC filter and RL load, started from blackstart.

    Examples
    --------
    >>> env = MicrogridEnv(EnvConfig())
    >>> obs = env.reset()
    >>> res = env.step((0.0, 0.0, 0.0))
    """

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self.model = build_lc_plant(cfg.grid)
        self.discrete = zoh_discretize(self.model, cfg.dt)
        self._ref_dq0 = np.asarray(cfg.i_ref_dq0)
        self.reset()

    def reset(self) -> Observation:
        self.state = PlantState.zeros(self.model)
        self.n = 0
        self.done = False
        self.aborted = False
        self.abort_step: Optional[int] = None
        self._t: list[float] = []
        self._states: list[np.ndarray] = []
        self._actions: list[np.ndarray] = []
        self._rewards: list[float] = []
        return self.observation()

    @property
    def theta(self) -> float:
        return grid_angle(self.n * self.cfg.dt, self.cfg.grid.f_grid)

    def observation(self) -> Observation:
        x = self.state.x
        return Observation(ThreePhase(*x[0:3].tolist()), ThreePhase(*x[3:6].tolist()), self.n * self.cfg.dt, self.theta)

    def reference_abc(self, theta: float) -> np.ndarray:
        return inverse_park_matrix(theta) @ self._ref_dq0

    def step(self, action) -> StepResult:
        if self.done:
            raise RuntimeError("episode is finished; call reset() first")
        m = np.asarray(action, dtype=float)
        if m.shape != (3,):
            raise ValueError("action must hold three modulation indices")
        theta = self.theta
        v_inv = m * self.cfg.v_link
        if self.cfg.backend == "zoh":
            self.state = step_zoh(self.discrete, self.state, v_inv)
        else:
            self.state = step_rk4(self.model, self.state, v_inv, self.cfg.dt, self.cfg.rk4_substeps)
        self.n += 1
        i_f = self.state.x[0:3]
        r = reward(i_f, self.reference_abc(theta), self.cfg)
        if np.max(np.abs(i_f)) > self.cfg.i_limit:
            self.aborted = True
            self.abort_step = self.n - 1
        self.done = self.aborted or self.n >= self.cfg.n_steps
        self._t.append(self.n * self.cfg.dt)
        self._states.append(self.state.x.copy())
        self._actions.append(m)
        self._rewards.append(r)
        return StepResult(self.observation(), r, self.done, self.aborted)

    def record(self) -> EpisodeRecord:
        n_states = self.model.n_states
        rec = EpisodeRecord(
            t=np.array(self._t),
            states=np.array(self._states).reshape(-1, n_states),
            actions=np.array(self._actions).reshape(-1, 3),
            rewards=np.array(self._rewards),
            aborted=self.aborted,
            abort_step=self.abort_step,
            n_steps=self.cfg.n_steps,
        )
        if self.done:
            rec.j = episode_performance(rec, self.cfg)
        return rec


def reset(cfg: EnvConfig) -> tuple[MicrogridEnv, Observation]:
    env = MicrogridEnv(cfg)
    return env, env.observation()
