"""
Per-axis PI current control in the dq0 frame.

The controller output ``u = kp*e + ki*integral(e)`` is turned into phase
modulation indices according to a command scaling:

``"per-unit"``
    ``u`` already is the modulation index (gains in per-unit/A).
``"half-link"``
    ``u`` is a voltage and is divided by ``v_dc / 2``.
``"full-link"``
    ``u`` is a voltage and is divided by ``v_dc``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from safegrid.frames import Dq0Frame, ThreePhase, inverse_park_matrix, park_matrix

SCALINGS = ("per-unit", "half-link", "full-link")


@dataclass(frozen=True)
class PiGains:
    kp: float
    ki: float

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ValueError(f"PI gains must be non-negative, got kp={self.kp}, ki={self.ki}")


@dataclass(frozen=True)
class PiState:
    """Integrated dq0 error (A*s)."""

    integrators: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ControlOutput:
    m_abc: ThreePhase
    v_cmd_dq0: Dq0Frame


def pi_reset(s: PiState | None = None) -> PiState:
    return PiState()


def command_divisor(scaling: str, v_dc: float) -> float:
    if scaling == "per-unit":
        return 1.0
    if scaling == "half-link":
        return v_dc / 2.0
    if scaling == "full-link":
        return v_dc
    raise ValueError(f"unknown command scaling {scaling!r}; expected one of {SCALINGS}")


def pi_step(
    g: PiGains,
    s: PiState,
    i_meas_abc,
    i_ref_dq0,
    theta: float,
    dt: float,
    v_dc: float,
    scaling: str = "half-link",
    anti_windup: bool = False,
) -> tuple[ControlOutput, PiState]:
    """
    Advance the PI law by one control period.

    The integrator uses forward-Euler accumulation. With ``anti_windup`` the
    integrator is held for the step whenever the unclamped output of any
    phase leaves [-1, 1] (conditional integration).

    Returns
    -------
    (ControlOutput, PiState)
        Saturated modulation indices in [-1, 1] and the updated state.
    """
    if dt <= 0 or v_dc <= 0:
        raise ValueError("dt and v_dc must be positive")
    e = np.asarray(i_ref_dq0, dtype=float) - park_matrix(theta) @ np.asarray(i_meas_abc, dtype=float)
    integ_old = np.asarray(s.integrators, dtype=float)
    integ = integ_old + e * dt
    v_cmd = g.kp * e + g.ki * integ
    inv = inverse_park_matrix(theta)
    m_raw = inv @ v_cmd / command_divisor(scaling, v_dc)
    if anti_windup and np.any(np.abs(m_raw) > 1.0):
        integ = integ_old
        v_cmd = g.kp * e + g.ki * integ
        m_raw = inv @ v_cmd / command_divisor(scaling, v_dc)
    m = np.clip(m_raw, -1.0, 1.0)
    out = ControlOutput(ThreePhase(*m.tolist()), Dq0Frame(*v_cmd.tolist()))
    return out, PiState(tuple(integ.tolist()))
