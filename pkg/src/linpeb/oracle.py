"""Waveform-level Fisher information for a single directional link.

Evaluates the received element signals of a beamformed transmission,

    X_m(f) = sqrt(E / N_tx) P(f) a exp(j k_f u.r_m) exp(-j k_f D) sum_i w_i exp(-j k_f u.t_i)

with ``k_f = 2 pi (f + f_c) / c``, ``u`` the unit vector from the receiver
centroid towards the transmitter centroid, ``r_m``/``t_i`` the rotated
element offsets and ``w_i`` the transmit phase weights fixed at the carrier.
The FIM is ``(2 / N0) sum_m int Re{dX_m^* dX_m^T} df`` over the occupied band.

This is the independent check on the closed-form blocks in :mod:`linpeb.fim`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import speed_of_light

from .geometry import DirectionAngles, direction_cosine
from .scenario import GeophoneNode
from .waveform import PulseSpec, rrc_amplitude_spectrum

RX_POSITION = "rx_position"
TX_POSITION = "tx_position"


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SignalModelContext:
    """One directional link ``rx <- tx``.

    ``steering`` is expressed in the same convention as the arrival angle at
    the receiver, so perfect alignment means ``steering`` equals that angle.
    ``None`` selects the perfectly aligned beam for the nominal geometry.
    """

    tx: GeophoneNode
    rx: GeophoneNode
    pulse: PulseSpec
    f_c: float
    steering: DirectionAngles | None = None
    amplitude: float = 1.0
    energy: float = 1.0
    noise_density: float = 1.0
    n_quad: int = 48

    @property
    def gamma(self) -> float:
        """Per element-pair SNR ``E a^2 / N0`` matching the closed-form blocks."""
        return self.energy * self.amplitude**2 / self.noise_density

    @property
    def nominal_direction(self) -> np.ndarray:
        q = self.tx.position - self.rx.position
        return q / np.linalg.norm(q)

    @property
    def steering_vector(self) -> np.ndarray:
        if self.steering is None:
            return self.nominal_direction
        return direction_cosine(self.steering)


def frequency_grid(pulse: PulseSpec, n_per_panel: int = 48) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights over ``[-B/2, B/2]``, split at the taper edges."""
    edges = sorted({-pulse.band_edge, -pulse.flat_edge, pulse.flat_edge, pulse.band_edge})
    x, w = np.polynomial.legendre.leggauss(n_per_panel)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        half = 0.5 * (hi - lo)
        nodes.append(0.5 * (hi + lo) + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


class _Link:
    """Precomputed quantities of a context at its nominal geometry."""

    def __init__(self, ctx: SignalModelContext, freqs: np.ndarray):
        self.ctx = ctx
        self.f = np.asarray(freqs, dtype=float)
        self.k = 2.0 * math.pi * (self.f + ctx.f_c) / speed_of_light  # (F,)
        self.r = ctx.rx.array.rotated_offsets(ctx.rx.orientation)  # (Nh, 3)
        self.t = ctx.tx.array.rotated_offsets(ctx.tx.orientation)  # (Ng, 3)
        self.q0 = ctx.tx.position - ctx.rx.position
        self.D0 = float(np.linalg.norm(self.q0))
        self.u0 = self.q0 / self.D0
        kc = 2.0 * math.pi * ctx.f_c / speed_of_light
        self.weights = np.exp(1j * kc * (self.t @ ctx.steering_vector))  # (Ng,)
        # per-element transmit terms at the nominal direction
        self.c0 = self.weights[None, :] * np.exp(-1j * self.k[:, None] * (self.t @ self.u0)[None, :])  # (F, Ng)
        self.af0 = self.c0.sum(axis=1)  # (F,)
        amp = math.sqrt(ctx.energy / ctx.tx.n_elements) * ctx.amplitude
        self.scale = amp * rrc_amplitude_spectrum(self.f, ctx.pulse)  # (F,)
        self.rx_phase0 = np.exp(1j * self.k[:, None] * (self.r @ self.u0)[None, :])  # (F, Nh)

    def x0(self) -> np.ndarray:
        """Signals at the nominal geometry, phase-referenced to the nominal delay."""
        return self.scale[:, None] * self.rx_phase0 * self.af0[:, None]

    def perturbed(self, dq: np.ndarray) -> tuple[float, np.ndarray]:
        """``(D - D0, u - u0)`` for separation ``q0 + dq`` without cancellation."""
        q = self.q0 + dq
        D = float(np.linalg.norm(q))
        dD = float(dq @ (q + self.q0)) / (D + self.D0)
        du = dq / D - self.q0 * (dD / (D * self.D0))
        return dD, du

    def log_ratio(self, dq: np.ndarray) -> np.ndarray:
        """``log(X(q0 + dq) / X(q0))`` per frequency and receive element."""
        dD, du = self.perturbed(dq)
        rx = 1j * self.k[:, None] * (self.r @ du)[None, :]
        rng = -1j * self.k * dD
        tx_terms = np.expm1(-1j * self.k[:, None] * (self.t @ du)[None, :])
        tx = np.log1p((self.c0 * tx_terms).sum(axis=1) / self.af0)
        return rx + (rng + tx)[:, None]

    def dlog_dq(self) -> np.ndarray:
        """Analytic ``d log X / dq`` at the nominal geometry, shape ``(F, Nh, 3)``."""
        P = np.eye(3) - np.outer(self.u0, self.u0)
        rx_aoa = (self.r @ P) / self.D0  # (Nh, 3)
        tx_aoa = (self.c0 @ (self.t @ P)) / self.D0 / self.af0[:, None]  # (F, 3)
        k = self.k[:, None, None]
        return (1j * k * (rx_aoa[None, :, :] - self.u0[None, None, :])
                - 1j * k * tx_aoa[:, None, :])


def received_signal(ctx: SignalModelContext, f, m: int | None = None):
    """Noise-free received signal ``X_m(f)`` including the absolute propagation phase.

    ``m`` selects one receive element; ``None`` returns all of them.
    """
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if np.any(np.abs(f) > ctx.pulse.band_edge * (1 + 1e-12)):
        raise ValueError("frequency outside the occupied band")
    link = _Link(ctx, f)
    x = link.x0() * np.exp(-1j * link.k * link.D0)[:, None]
    x = x if m is None else x[:, m]
    return x[0] if x.shape[0] == 1 and np.ndim(f) <= 1 and f.size == 1 else x


def signal_derivative(ctx: SignalModelContext, wrt: str = RX_POSITION, method: str = "analytic",
                      freqs: np.ndarray | None = None, step: float | None = None) -> np.ndarray:
    """``dX_m(f) / d position`` of shape ``(F, Nh, 3)`` at the given frequencies.

    ``method`` is ``"analytic"`` or ``"finite_difference"`` (central differences
    with step ``1e-6 * lambda`` by default).
    """
    if wrt not in (RX_POSITION, TX_POSITION):
        raise ValueError(f"wrt must be {RX_POSITION!r} or {TX_POSITION!r}")
    if freqs is None:
        freqs, _ = frequency_grid(ctx.pulse, ctx.n_quad)
    link = _Link(ctx, freqs)
    # the signal depends on q = p_tx - p_rx only
    sign = -1.0 if wrt == RX_POSITION else 1.0
    if method == "analytic":
        dlog = link.dlog_dq()
    elif method == "finite_difference":
        h = 1e-6 * speed_of_light / ctx.f_c if step is None else step
        dlog = np.empty(link.x0().shape + (3,), dtype=complex)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            dlog[..., a] = (link.log_ratio(e) - link.log_ratio(-e)) / (2.0 * h)
    else:
        raise ValueError(f"unknown derivative method {method!r}")
    return sign * link.x0()[..., None] * dlog


def numeric_fim_block(ctx: SignalModelContext, wrt: str = RX_POSITION, method: str = "analytic") -> np.ndarray:
    """3x3 Fisher information about the receiver or transmitter position."""
    freqs, weights = frequency_grid(ctx.pulse, ctx.n_quad)
    dx = signal_derivative(ctx, wrt, method, freqs)
    integrand = np.einsum("fma,fmb->fab", dx.conj(), dx).real
    J = 2.0 / ctx.noise_density * np.einsum("f,fab->ab", weights, integrand)
    if not np.all(np.isfinite(J)):
        raise QuadratureError("non-finite Fisher information; check the frequency grid")
    return 0.5 * (J + J.T)


def converged_fim_block(ctx: SignalModelContext, wrt: str = RX_POSITION, method: str = "analytic",
                        rtol: float = 1e-8, max_nodes: int = 1024) -> np.ndarray:
    """Double the quadrature order until the block changes by less than ``rtol``."""
    n = ctx.n_quad
    prev = numeric_fim_block(ctx, wrt, method)
    while n < max_nodes:
        n *= 2
        nxt = numeric_fim_block(_replace(ctx, n_quad=n), wrt, method)
        if np.max(np.abs(nxt - prev)) <= rtol * np.max(np.abs(nxt)):
            return nxt
        prev = nxt
    raise QuadratureError(f"quadrature did not converge to {rtol:g} with {max_nodes} nodes per panel")


def _replace(ctx: SignalModelContext, **changes) -> SignalModelContext:
    from dataclasses import replace
    return replace(ctx, **changes)
