"""
Linear state-space models of the inverter plant and their time stepping.

Two topologies are provided: the bare three-phase RL load and the inverter
with an LC filter feeding an RL load. Both decompose into three identical,
uncoupled per-phase blocks. States are stored phase-minor, i.e. the LC model
orders its nine states as ``[i_f_abc, v_c_abc, i_l_abc]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

PHASES = ("a", "b", "c")


@dataclass(frozen=True)
class GridParams:
    """
    Electrical parameters of the single-inverter grid.

    Parameters
    ----------
    v_dc : float
        DC-link voltage (V).
    f_grid : float
        Grid frequency (Hz).
    l_filt, c_filt, r_filt : float
        Filter inductance (H), capacitance (F) and series resistance (Ohm).
    r_load, l_load : float
        Load resistance (Ohm) and inductance (H).
    """

    v_dc: float = 1000.0
    f_grid: float = 50.0
    l_filt: float = 2e-3
    c_filt: float = 20e-6
    r_filt: float = 0.0
    r_load: float = 20.0
    l_load: float = 1e-3

    def __post_init__(self):
        if self.v_dc <= 0 or self.f_grid <= 0:
            raise ValueError("v_dc and f_grid must be positive")
        if min(self.l_filt, self.c_filt, self.l_load) <= 0:
            raise ValueError("inductances and capacitance must be positive")
        if min(self.r_filt, self.r_load) < 0:
            raise ValueError("resistances must be non-negative")


@dataclass(frozen=True)
class PlantModel:
    """Continuous LTI model ``dx/dt = A x + B u``."""

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    state_labels: tuple[str, ...]

    def __post_init__(self):
        a = np.array(self.a_matrix, dtype=float)
        b = np.array(self.b_matrix, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n) or b.ndim != 2 or b.shape[0] != n:
            raise ValueError(f"inconsistent shapes A{a.shape}, B{b.shape}")
        if len(self.state_labels) != n:
            raise ValueError("one label per state required")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("model matrices must be finite")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_matrix", b)
        object.__setattr__(self, "state_labels", tuple(self.state_labels))

    @property
    def n_states(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b_matrix.shape[1]

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.a_matrix @ x + self.b_matrix @ u


@dataclass(frozen=True)
class DiscretePlant:
    """Exact zero-order-hold discretization of a :class:`PlantModel`."""

    a_d: np.ndarray
    b_d: np.ndarray
    dt: float
    state_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class PlantState:
    x: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, model: PlantModel | DiscretePlant) -> "PlantState":
        n = model.a_matrix.shape[0] if isinstance(model, PlantModel) else model.a_d.shape[0]
        return cls(np.zeros(n), 0.0)


def _per_phase(block_a: np.ndarray, block_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # quantity-major, phase-minor: kron(block, I3)
    return np.kron(block_a, np.eye(3)), np.kron(block_b, np.eye(3))


def build_rl_plant(r, l) -> PlantModel:
    """
    Three-phase RL load driven by phase voltages.

    Parameters
    ----------
    r, l : float or sequence of 3 floats
        Per-phase resistance (Ohm) and inductance (H).
    """
    r = np.broadcast_to(np.asarray(r, dtype=float), (3,))
    l = np.broadcast_to(np.asarray(l, dtype=float), (3,))
    if np.any(l <= 0):
        raise ValueError("inductance must be positive")
    if np.any(r < 0):
        raise ValueError("resistance must be non-negative")
    return PlantModel(np.diag(-r / l), np.diag(1.0 / l), tuple(f"i_{p}" for p in PHASES))


def build_lc_plant(p: GridParams) -> PlantModel:
    """
    Inverter with LC filter supplying an RL load, one leg per phase.

    Per phase::

        di_f/dt = (v_inv - v_c - r_filt*i_f) / l_filt
        dv_c/dt = (i_f - i_l) / c_filt
        di_l/dt = (v_c - r_load*i_l) / l_load
    """
    block_a = np.array([
        [-p.r_filt / p.l_filt, -1.0 / p.l_filt, 0.0],
        [1.0 / p.c_filt, 0.0, -1.0 / p.c_filt],
        [0.0, 1.0 / p.l_load, -p.r_load / p.l_load],
    ])
    block_b = np.array([[1.0 / p.l_filt], [0.0], [0.0]])
    a, b = _per_phase(block_a, block_b)
    labels = tuple(f"{q}_{ph}" for q in ("i_f", "v_c", "i_l") for ph in PHASES)
    return PlantModel(a, b, labels)


def zoh_discretize(m: PlantModel, dt: float) -> DiscretePlant:
    """
    Discretize with inputs held constant over ``dt``.

    Uses the exponential of the augmented matrix ``[[A, B], [0, 0]] * dt``,
    whose upper blocks are ``exp(A dt)`` and ``int_0^dt exp(A s) ds B``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n, k = m.n_states, m.n_inputs
    aug = np.zeros((n + k, n + k))
    aug[:n, :n] = m.a_matrix
    aug[:n, n:] = m.b_matrix
    e = expm(aug * dt)
    if not np.all(np.isfinite(e)):
        raise FloatingPointError("matrix exponential is not finite; model is ill-conditioned for this dt")
    a_d, b_d = e[:n, :n].copy(), e[:n, n:].copy()
    a_d.flags.writeable = False
    b_d.flags.writeable = False
    return DiscretePlant(a_d, b_d, float(dt), m.state_labels)


def step_zoh(d: DiscretePlant, s: PlantState, u) -> PlantState:
    return PlantState(d.a_d @ s.x + d.b_d @ np.asarray(u, dtype=float), s.t + d.dt)


def step_rk4(m: PlantModel, s: PlantState, u, dt: float, substeps: int = 1) -> PlantState:
    """Classical RK4 over ``dt`` split into ``substeps`` steps, input held constant."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    u = np.asarray(u, dtype=float)
    bu = m.b_matrix @ u
    a = m.a_matrix
    h = dt / substeps
    x = np.array(s.x, dtype=float)
    for _ in range(substeps):
        k1 = a @ x + bu
        k2 = a @ (x + 0.5 * h * k1) + bu
        k3 = a @ (x + 0.5 * h * k2) + bu
        k4 = a @ (x + h * k3) + bu
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return PlantState(x, s.t + dt)
