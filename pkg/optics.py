"""
Polarization optics module for the Stokes workbench.

This module handles the SU(2) mode rotations u(theta, phi), the Jones-type
matrices of rotated quarter- and half-wave plates, and the Q-Q-H gadget
(two quarter-wave plates and one half-wave plate on a common axis) that
realizes the measurement rotations on the bench.

Convention: u(theta, phi) = [[cos t, e^{i phi} sin t], [-e^{-i phi} sin t, cos t]]
and a gadget Q_{q1} Q_{q2} H_{h} is the matrix product in that written order
(the leftmost plate acts last on the beam).
"""

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

UNITARY_TOLERANCE = 1e-12
FAMILY_TOLERANCE = 1e-9
MIXED_SETTING = (np.pi / 4, np.pi / 4)

SUPPORTED_FAMILIES = "phi = 0 (any theta), phi = pi/2 (any theta), or (theta, phi) = (pi/4, pi/4)"


class GadgetError(ValueError):
    """Raised when no Q-Q-H setting is known for a rotation."""


@dataclass(frozen=True)
class SU2Element:
    """A 2x2 unitary mode transformation b = m a."""

    m: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.m, dtype=complex)
        if matrix.shape != (2, 2):
            raise ValueError(f"SU2Element needs a 2x2 matrix, got shape {matrix.shape}")
        if not np.allclose(matrix.conj().T @ matrix, np.eye(2), rtol=0, atol=UNITARY_TOLERANCE):
            raise ValueError("SU2Element matrix is not unitary")
        matrix.setflags(write=False)
        object.__setattr__(self, 'm', matrix)

    def __matmul__(self, other: 'SU2Element') -> 'SU2Element':
        return SU2Element(self.m @ other.m)

    @property
    def inverse(self) -> 'SU2Element':
        return SU2Element(self.m.conj().T)

    @property
    def det(self) -> complex:
        return complex(np.linalg.det(self.m))


class PlateKind(str, Enum):
    QUARTER = 'quarter'
    HALF = 'half'


class WavePlateSetting(BaseModel):
    """A wave plate rotated by `angle` radians about the beam axis."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: PlateKind
    angle: float

    @field_validator('angle')
    @classmethod
    def _wrap(cls, angle: float) -> float:
        """Store the angle in [0, pi); plate matrices depend only on 2*angle."""
        wrapped = float(np.mod(angle, np.pi))
        # np.mod rounds tiny negative angles up to pi itself
        return 0.0 if wrapped >= np.pi else wrapped

    def matrix(self) -> SU2Element:
        if self.kind is PlateKind.QUARTER:
            return quarter_wave(self.angle)
        return half_wave(self.angle)


class GadgetSetting(BaseModel):
    """Rotation angles (radians) of the plates in a Q-Q-H stack."""

    model_config = ConfigDict(frozen=True, extra='forbid')

    q1: float
    q2: float
    h: float

    def plates(self) -> Tuple[WavePlateSetting, WavePlateSetting, WavePlateSetting]:
        return (
            WavePlateSetting(kind=PlateKind.QUARTER, angle=self.q1),
            WavePlateSetting(kind=PlateKind.QUARTER, angle=self.q2),
            WavePlateSetting(kind=PlateKind.HALF, angle=self.h),
        )

    def degrees(self) -> Tuple[float, float, float]:
        return tuple(float(np.degrees(angle)) for angle in (self.q1, self.q2, self.h))


def su2(theta: float, phi: float) -> SU2Element:
    """
    Canonical mode rotation u(theta, phi).

    Args:
        theta: Mixing angle in radians
        phi: Relative phase in radians

    Returns:
        SU2Element: Determinant-one rotation

    Raises:
        ValueError: If an angle is not finite
    """
    if not (np.isfinite(theta) and np.isfinite(phi)):
        raise ValueError(f"angles must be finite, got theta={theta}, phi={phi}")

    c, s = np.cos(theta), np.sin(theta)
    return SU2Element(np.array([
        [c, np.exp(1j * phi) * s],
        [-np.exp(-1j * phi) * s, c],
    ]))


def half_wave(phi: float) -> SU2Element:
    """H_phi = i [[cos 2phi, sin 2phi], [sin 2phi, -cos 2phi]]."""
    c, s = np.cos(2 * phi), np.sin(2 * phi)
    return SU2Element(1j * np.array([[c, s], [s, -c]]))


def quarter_wave(phi: float) -> SU2Element:
    """Q_phi = (i/sqrt 2) [[cos 2phi - i, sin 2phi], [sin 2phi, -cos 2phi - i]]."""
    c, s = np.cos(2 * phi), np.sin(2 * phi)
    return SU2Element(1j / np.sqrt(2) * np.array([[c - 1j, s], [s, -c - 1j]]))


def _same_angle(a: float, b: float) -> bool:
    return abs(a - b) <= FAMILY_TOLERANCE


def is_supported(theta: float, phi: float) -> bool:
    """True when gadget_for knows plate angles for (theta, phi)."""
    return (
        _same_angle(phi, 0.0)
        or _same_angle(phi, np.pi / 2)
        or (_same_angle(theta, MIXED_SETTING[0]) and _same_angle(phi, MIXED_SETTING[1]))
    )


def gadget_for(theta: float, phi: float) -> GadgetSetting:
    """
    Plate angles of the Q-Q-H gadget realizing u(theta, phi).

    Args:
        theta: Mixing angle in radians
        phi: Relative phase in radians; 0 or pi/2, or pi/4 with theta = pi/4

    Returns:
        GadgetSetting: Angles (q1, q2, h) in radians

    Raises:
        GadgetError: If (theta, phi) is outside the supported families
    """
    if _same_angle(phi, 0.0):
        return GadgetSetting(q1=np.pi / 4, q2=np.pi / 4, h=-np.pi / 4 + theta / 2)

    if _same_angle(phi, np.pi / 2):
        return GadgetSetting(q1=np.pi / 2, q2=theta + np.pi / 2, h=theta / 2)

    if _same_angle(theta, MIXED_SETTING[0]) and _same_angle(phi, MIXED_SETTING[1]):
        offset = np.arctan(np.sqrt(2)) / 2
        return GadgetSetting(q1=np.pi / 4 + offset, q2=5 * np.pi / 12 + offset, h=np.pi / 12)

    raise GadgetError(
        f"no Q-Q-H setting for (theta={theta:.6g}, phi={phi:.6g}); supported: {SUPPORTED_FAMILIES}"
    )


def compose_gadget(g: GadgetSetting) -> SU2Element:
    """Matrix of the stack, Q_{q1} Q_{q2} H_{h} in written order."""
    return quarter_wave(g.q1) @ quarter_wave(g.q2) @ half_wave(g.h)


def projective_distance(m1, m2) -> float:
    """
    Max-entry distance between two matrices after removing a global phase.

    The phase is the one maximizing Re tr(m2† lambda^-1 m1), which is exact
    for matrices that agree up to phase.
    """
    a = np.asarray(getattr(m1, 'm', m1), dtype=complex)
    b = np.asarray(getattr(m2, 'm', m2), dtype=complex)
    inner = np.vdot(b, a)
    phase = inner / abs(inner) if abs(inner) > 0 else 1.0
    return float(np.max(np.abs(a - phase * b)))
