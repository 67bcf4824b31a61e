"""
Amplitude-invariant Park transformation between the abc and dq0 frames.

The d axis is aligned with phase a at ``theta = 0``; the 2/3 scaling keeps
the amplitude of a balanced set, so ``A*cos(theta - phi_p)`` maps to
``(A, 0, 0)``.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

PHASE_SHIFTS = np.array([0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0])


class ThreePhase(NamedTuple):
    """Signal samples of the three phases a, b, c."""

    a: float
    b: float
    c: float


class Dq0Frame(NamedTuple):
    """Signal samples in the rotating frame."""

    d: float
    q: float
    zero: float


def park_matrix(theta: float) -> np.ndarray:
    """Return the 3x3 abc -> dq0 matrix for angle ``theta``."""
    angles = theta - PHASE_SHIFTS
    return (2.0 / 3.0) * np.array([np.cos(angles), -np.sin(angles), [0.5, 0.5, 0.5]])


def inverse_park_matrix(theta: float) -> np.ndarray:
    """Return the 3x3 dq0 -> abc matrix, the exact inverse of :func:`park_matrix`."""
    angles = theta - PHASE_SHIFTS
    return np.column_stack([np.cos(angles), -np.sin(angles), np.ones(3)])


def park(x, theta: float) -> Dq0Frame:
    """
    Map a three-phase sample to the rotating dq0 frame.

    Parameters
    ----------
    x : ThreePhase or array_like, shape (3,)
        Values of phases a, b and c.
    theta : float
        Frame angle in radians.

    Returns
    -------
    Dq0Frame
    """
    return Dq0Frame(*(park_matrix(theta) @ np.asarray(x, dtype=float)).tolist())


def inverse_park(x, theta: float) -> ThreePhase:
    """Map a dq0 sample back to the abc frame."""
    return ThreePhase(*(inverse_park_matrix(theta) @ np.asarray(x, dtype=float)).tolist())


def grid_angle(t: float, f_grid: float) -> float:
    """Open-loop frame angle ``2*pi*f_grid*t``; zero at blackstart."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return 2.0 * math.pi * f_grid * t
