"""Propagation models and single element-pair link SNR.

The SNR returned here deliberately excludes any array gain; the Fisher
information blocks carry the element counts of both ends explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import Boltzmann, speed_of_light

from .waveform import PulseSpec, effective_bandwidth

PATH_LOSS_KINDS = ("free_space", "free_space_absorption", "two_ray", "two_ray_absorption")

#: oxygen absorption base per meter at 60 GHz (about 17 dB/km)
OXYGEN_L0_60GHZ = 10.0**0.0017


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class RadioConfig:
    f_c: float = 60e9
    tx_power_dbm: float = 20.0
    noise_figure_db: float = 4.0
    system_temp_k: float = 300.0
    pulse: PulseSpec = field(default_factory=lambda: PulseSpec(2.16e9, 0.6))

    def __post_init__(self):
        if not self.f_c > 0.0:
            raise ValueError("carrier frequency must be positive")
        if not self.system_temp_k > 0.0:
            raise ValueError("system temperature must be positive")

    @property
    def wavelength(self) -> float:
        return speed_of_light / self.f_c

    @property
    def tx_power_w(self) -> float:
        return 1e-3 * 10.0 ** (self.tx_power_dbm / 10.0)

    @property
    def noise_density(self) -> float:
        """``N0 = k T F`` in W/Hz."""
        return Boltzmann * self.system_temp_k * 10.0 ** (self.noise_figure_db / 10.0)

    @property
    def noise_power_w(self) -> float:
        return self.noise_density * self.pulse.bandwidth

    @property
    def beta(self) -> float:
        return effective_bandwidth(self.pulse)


@dataclass(frozen=True)
class PathLossModel:
    kind: str = "free_space"
    L0: float = OXYGEN_L0_60GHZ
    #: ground reflection coefficient of the two-ray models; -1 is a perfect reflector
    reflection_coefficient: float = -1.0

    def __post_init__(self):
        if self.kind not in PATH_LOSS_KINDS:
            raise ValueError(f"unknown path-loss kind {self.kind!r}; expected one of {PATH_LOSS_KINDS}")
        if self.L0 < 1.0:
            raise ValueError("L0 must be >= 1")

    @property
    def absorbing(self) -> bool:
        return self.kind.endswith("_absorption")

    @property
    def two_ray(self) -> bool:
        return self.kind.startswith("two_ray")


@dataclass(frozen=True)
class LinkGeometry:
    distance: float
    h_tx: float = 0.0
    h_rx: float = 0.0

    def __post_init__(self):
        if not self.distance > 0.0:
            raise ValueError("link distance must be positive")
        if self.h_tx < 0.0 or self.h_rx < 0.0:
            raise ValueError("antenna heights must be non-negative")


def link_feasible(g: int, h: int, delta: float, r_max: float) -> bool:
    """Whether nodes ``g`` and ``h`` on a line of spacing ``delta`` are in range."""
    if g == h:
        raise ValueError("a node has no link to itself")
    # small slack so r_max = k * delta is not lost to rounding
    return abs(g - h) * delta <= r_max * (1.0 + 1e-12)


def path_gain(model: PathLossModel, distance, wavelength: float, h_tx=0.0, h_rx=0.0):
    """Power gain of a link; broadcasts over array-valued distance and heights.

    Free-space kinds use ``(lambda / (4 pi d))**2``. Two-ray kinds add a
    ground-reflected path with the exact path-length difference.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("link distance must be positive")
    if model.two_ray:
        ht = np.asarray(h_tx, dtype=float)
        hr = np.asarray(h_rx, dtype=float)
        d_los = np.hypot(d, ht - hr)
        d_ref = np.hypot(d, ht + hr)
        # difference formed without cancellation
        extra = 4.0 * ht * hr / (d_ref + d_los)
        k = 2.0 * math.pi / wavelength
        field_ = 1.0 + model.reflection_coefficient * (d_los / d_ref) * np.exp(-1j * k * extra)
        gain = (wavelength / (4.0 * math.pi * d_los)) ** 2 * np.abs(field_) ** 2
    else:
        gain = (wavelength / (4.0 * math.pi * d)) ** 2
    if model.absorbing:
        gain = gain * model.L0 ** (-d)
    return gain if np.ndim(gain) else float(gain)


def link_geometry_gain(model: PathLossModel, geom: LinkGeometry, wavelength: float) -> float:
    return path_gain(model, geom.distance, wavelength, geom.h_tx, geom.h_rx)


def link_snr(radio: RadioConfig, gain):
    """Single element-pair SNR ``P_tx * gain / (k T B F)``."""
    g = np.asarray(gain, dtype=float)
    if np.any(g <= 0.0):
        raise ValueError("path gain must be positive")
    snr = radio.tx_power_w * g / radio.noise_power_w
    return snr if np.ndim(snr) else float(snr)
