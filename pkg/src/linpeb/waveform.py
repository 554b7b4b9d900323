"""Root raised-cosine pulse spectrum and its RMS (effective) bandwidth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class PulseSpec:
    """Unit-energy root raised-cosine pulse.

    ``bandwidth`` is the full two-sided occupied width including the roll-off
    excess, so the power spectrum vanishes outside ``[-B/2, B/2]``.
    """

    bandwidth: float
    rolloff: float = 0.6

    def __post_init__(self):
        if not self.bandwidth > 0.0:
            raise ValueError("bandwidth must be positive")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must lie in [0, 1]")

    @property
    def symbol_rate(self) -> float:
        return self.bandwidth / (1.0 + self.rolloff)

    @property
    def flat_edge(self) -> float:
        """Frequency where the cosine taper starts."""
        return (1.0 - self.rolloff) * self.symbol_rate / 2.0

    @property
    def band_edge(self) -> float:
        return self.bandwidth / 2.0


def rrc_power_spectrum(f, spec: PulseSpec):
    """``|P(f)|^2`` of a unit-energy RRC pulse (a raised-cosine shape, 1/Hz)."""
    f = np.abs(np.asarray(f, dtype=float))
    rs = spec.symbol_rate
    f1, f2 = spec.flat_edge, spec.band_edge
    out = np.zeros_like(f)
    out[f <= f1] = 1.0 / rs
    taper = (f > f1) & (f <= f2)
    if spec.rolloff > 0.0:
        out[taper] = 0.5 / rs * (1.0 + np.cos(math.pi / (spec.rolloff * rs) * (f[taper] - f1)))
    return out if out.ndim else float(out)


def rrc_amplitude_spectrum(f, spec: PulseSpec):
    """Real, non-negative ``P(f)`` (the square root of the power spectrum)."""
    return np.sqrt(rrc_power_spectrum(f, spec))


@lru_cache(maxsize=64)
def _normalized_moments(rolloff: float) -> tuple[float, float]:
    # work on B = 1 so the absolute tolerance is meaningful; beta scales with B
    spec = PulseSpec(1.0, rolloff)
    edges = sorted({0.0, spec.flat_edge, spec.band_edge})
    energy = 0.0
    second = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        energy += integrate.quad(lambda f: rrc_power_spectrum(f, spec), lo, hi,
                                 epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        second += integrate.quad(lambda f: f * f * rrc_power_spectrum(f, spec), lo, hi,
                                 epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    # one-sided integrals; the spectrum is even
    return 2.0 * energy, 2.0 * second


def spectrum_energy(spec: PulseSpec) -> float:
    """Numerically integrated ``int |P(f)|^2 df`` (should be 1)."""
    return _normalized_moments(spec.rolloff)[0]


def effective_bandwidth(spec: PulseSpec) -> float:
    """RMS bandwidth ``sqrt(int f^2 |P|^2 df / int |P|^2 df)`` in Hz."""
    energy, second = _normalized_moments(spec.rolloff)
    return spec.bandwidth * math.sqrt(second / energy)
