"""Array geometry: rotations, planar element layouts, direction cosines.

Arrays start out vertical in the yz-plane with their centroid at the node
position. The orientation of a node is the composition
``Rz(varphi) @ Ry(vartheta) @ Rx(Phi)`` with a counter-clockwise turn about z
and clockwise turns about y and x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import speed_of_light

TWO_PI = 2.0 * math.pi


def _wrap(angle: float) -> float:
    wrapped = math.fmod(float(angle), TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    # fmod of a value just below 2*pi can round up to exactly 2*pi
    return 0.0 if wrapped >= TWO_PI else wrapped


@dataclass(frozen=True)
class Orientation:
    """Array orientation angles in radians, each wrapped into [0, 2*pi)."""

    varphi: float = 0.0
    vartheta: float = 0.0
    Phi: float = 0.0

    def __post_init__(self):
        for name in ("varphi", "vartheta", "Phi"):
            object.__setattr__(self, name, _wrap(getattr(self, name)))

    @classmethod
    def vertical(cls) -> "Orientation":
        return cls(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class DirectionAngles:
    """Polar angle ``theta`` in [0, pi] and azimuth ``phi`` in [0, 2*pi)."""

    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "phi", _wrap(self.phi))

    @classmethod
    def from_vector(cls, v) -> "DirectionAngles":
        v = np.asarray(v, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError("direction of a zero vector is undefined")
        x, y, z = v / norm
        return cls(math.acos(min(1.0, max(-1.0, z))), math.atan2(y, x))


def rotation_matrix(o: Orientation) -> np.ndarray:
    """Return ``Rz(varphi) @ Ry(vartheta) @ Rx(Phi)`` for an orientation."""
    cz, sz = math.cos(o.varphi), math.sin(o.varphi)
    cy, sy = math.cos(o.vartheta), math.sin(o.vartheta)
    cx, sx = math.cos(o.Phi), math.sin(o.Phi)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    # clockwise about y and x: transposes of the usual right-handed rotations
    ry = np.array([[cy, 0.0, -sy], [0.0, 1.0, 0.0], [sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, sx], [0.0, -sx, cx]])
    return rz @ ry @ rx


def upa_offsets(n_elements: int, spacing: float) -> np.ndarray:
    """Element offsets of a square uniform planar array in the yz-plane.

    Parameters
    ----------
    n_elements : int
        Number of elements; must be a perfect square.
    spacing : float
        Distance between neighbouring elements in meters.

    Returns
    -------
    np.ndarray
        ``(n_elements, 3)`` offsets with zero x-component and zero centroid.
    """
    n_elements = int(n_elements)
    if n_elements < 1:
        raise ValueError("an array needs at least one element")
    side = math.isqrt(n_elements)
    if side * side != n_elements:
        raise ValueError(f"n_elements must be a perfect square, got {n_elements}")
    ticks = (np.arange(side) - (side - 1) / 2.0) * spacing
    yy, zz = np.meshgrid(ticks, ticks, indexing="ij")
    offsets = np.zeros((n_elements, 3))
    offsets[:, 1] = yy.ravel()
    offsets[:, 2] = zz.ravel()
    return offsets


def direction_cosine(d: DirectionAngles) -> np.ndarray:
    st = math.sin(d.theta)
    return np.array([st * math.cos(d.phi), st * math.sin(d.phi), math.cos(d.theta)])


def steering_delay(element_pos, d: DirectionAngles) -> float:
    """Delay (s) of an element relative to the array centroid for direction ``d``."""
    return float(direction_cosine(d) @ np.asarray(element_pos, dtype=float)) / speed_of_light


def aperture(n_elements, wavelength: float):
    """Effective aperture ``N * lambda**2 / 4`` of an N-element array (m^2); broadcasts."""
    n = np.asarray(n_elements, dtype=float)
    if np.any(n < 1):
        raise ValueError("an array needs at least one element")
    out = n * wavelength**2 / 4.0
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ArraySpec:
    """Square planar array description.

    ``element_offsets`` are pre-rotation positions relative to the centroid.
    """

    n_elements: int
    element_spacing: float
    element_offsets: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def upa(cls, n_elements: int, spacing: float) -> "ArraySpec":
        offsets = upa_offsets(n_elements, spacing)
        offsets.setflags(write=False)
        return cls(int(n_elements), float(spacing), offsets)

    @classmethod
    def half_wavelength(cls, n_elements: int, wavelength: float) -> "ArraySpec":
        return cls.upa(n_elements, wavelength / 2.0)

    def rotated_offsets(self, orientation: Orientation) -> np.ndarray:
        return self.element_offsets @ rotation_matrix(orientation).T
