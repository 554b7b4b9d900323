"""Closed-form per-link Fisher information and block-banded network assembly.

For nodes on the x-axis each directional measurement ``rx <- tx`` yields a
diagonal 3x3 block about the receiver position::

    K = 8 pi^2 gamma (beta^2 + f_c^2) / c^2
    xx = K * N_tx * N_rx
    yy = K * N_tx (N_rx - 1) A_rx / (12 dist^2) * (cos^2 varphi + sin^2 varphi sin^2 vartheta)
    zz = K * N_tx (N_rx - 1) A_rx / (12 dist^2) * cos^2 vartheta

with ``A_rx = N_rx lambda^2 / 4`` and angles of the receiving array. The
signal depends on the two positions only through their difference, so the
same measurement carries an identical block about the transmitter position
and the negated block as the cross term. Position/amplitude cross terms
cancel, so the amplitude nuisance never has to be formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import speed_of_light

from .geometry import aperture
from .link_budget import link_snr, path_gain
from .scenario import GeophoneNode, Scenario


def orientation_factors(varphi, vartheta):
    """Angular weights of the (yy, zz) entries for given array orientation angles."""
    cp2 = np.cos(varphi) ** 2
    sp2 = np.sin(varphi) ** 2
    st2 = np.sin(vartheta) ** 2
    ct2 = np.cos(vartheta) ** 2
    return cp2 + sp2 * st2, ct2


def information_prefactor(gamma, beta: float, f_c: float):
    return 8.0 * math.pi**2 * np.asarray(gamma, dtype=float) * (beta**2 + f_c**2) / speed_of_light**2


def link_information(n_rx, n_tx, fy_rx, fz_rx, distance, gamma, beta: float, f_c: float) -> np.ndarray:
    """Diagonal ``(xx, yy, zz)`` of one directional link block; broadcasts."""
    wavelength = speed_of_light / f_c
    n_rx = np.asarray(n_rx, dtype=float)
    n_tx = np.asarray(n_tx, dtype=float)
    pref = information_prefactor(gamma, beta, f_c)
    angular = n_tx * (n_rx - 1.0) * aperture(n_rx, wavelength) / (12.0 * np.asarray(distance, dtype=float) ** 2)
    return np.stack(np.broadcast_arrays(pref * n_tx * n_rx, pref * angular * fy_rx, pref * angular * fz_rx), axis=-1)


def _check_on_axis(*nodes: GeophoneNode):
    for node in nodes:
        if abs(node.position[1]) > 1e-9 or abs(node.position[2]) > 1e-9:
            raise ValueError(
                f"node {node.index} is off the x-axis; the closed-form blocks assume a collinear topology "
                "(use the numeric oracle for general geometry)")


def fim_link_block(rx: GeophoneNode, tx: GeophoneNode, gamma: float, beta: float, f_c: float) -> np.ndarray:
    """Information about the receiver position from the measurement ``rx <- tx``."""
    if rx is tx or rx.index == tx.index:
        raise ValueError("receiver and transmitter must differ")
    _check_on_axis(rx, tx)
    dist = abs(rx.position[0] - tx.position[0])
    if dist == 0.0:
        raise ValueError("co-located nodes")
    fy, fz = orientation_factors(rx.orientation.varphi, rx.orientation.vartheta)
    return np.diag(link_information(rx.n_elements, tx.n_elements, fy, fz, dist, gamma, beta, f_c))


def fim_bidirectional_pair(u: GeophoneNode, g: GeophoneNode, gamma: float, beta: float, f_c: float,
                           gamma_reverse: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Blocks about ``u``'s position from the receptions at ``u`` and at ``g``.

    The second block is the measurement received at ``g`` from ``u``; it carries
    ``g``'s element count, aperture and orientation in the angular terms.
    """
    gamma_reverse = gamma if gamma_reverse is None else gamma_reverse
    return (fim_link_block(u, g, gamma, beta, f_c),
            fim_link_block(g, u, gamma_reverse, beta, f_c))


@dataclass
class BlockBandedFim:
    """Symmetric block-banded FIM over the agent positions.

    ``blocks[j, i]`` holds block ``(i, i + j)`` (zero-based agent indices);
    entries with ``i + j >= G`` are padding. The amplitude nuisance is
    decoupled and never stored.
    """

    blocks: np.ndarray
    nuisance_decoupled: bool = True

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks, dtype=float)
        if self.blocks.ndim != 4 or self.blocks.shape[2:] != (3, 3):
            raise ValueError("blocks must have shape (k + 1, G, 3, 3)")

    @property
    def G(self) -> int:
        return self.blocks.shape[1]

    @property
    def block_bandwidth(self) -> int:
        return self.blocks.shape[0] - 1

    def block(self, u: int, v: int) -> np.ndarray:
        if abs(u - v) > self.block_bandwidth:
            return np.zeros((3, 3))
        if u <= v:
            return self.blocks[v - u, u].copy()
        return self.blocks[u - v, v].T.copy()

    def to_dense(self) -> np.ndarray:
        G, k = self.G, self.block_bandwidth
        dense = np.zeros((3 * G, 3 * G))
        for j in range(k + 1):
            for i in range(G - j):
                b = self.blocks[j, i]
                dense[3 * i:3 * i + 3, 3 * (i + j):3 * (i + j) + 3] = b
                if j:
                    dense[3 * (i + j):3 * (i + j) + 3, 3 * i:3 * i + 3] = b.T
        return dense

    def is_diagonal(self) -> bool:
        off = self.blocks.copy()
        off[..., [0, 1, 2], [0, 1, 2]] = 0.0
        return not np.any(off)

    def diagonal_bands(self) -> np.ndarray:
        """Per-coordinate scalar bands ``(3, k + 1, G)``; only valid for diagonal blocks."""
        return np.moveaxis(np.diagonal(self.blocks, axis1=2, axis2=3), -1, 0).copy()

    @classmethod
    def from_dense(cls, dense: np.ndarray, block_bandwidth: int) -> "BlockBandedFim":
        dense = np.asarray(dense, dtype=float)
        G = dense.shape[0] // 3
        blocks = np.zeros((block_bandwidth + 1, G, 3, 3))
        for j in range(block_bandwidth + 1):
            for i in range(G - j):
                blocks[j, i] = dense[3 * i:3 * i + 3, 3 * (i + j):3 * (i + j) + 3]
        return cls(blocks)


def assemble_fim(scenario: Scenario) -> BlockBandedFim:
    """Assemble the agent-position FIM from every feasible directional link."""
    if not scenario.on_axis():
        raise ValueError("closed-form assembly requires every node on the x-axis")
    radio = scenario.radio
    beta, f_c = radio.beta, radio.f_c
    nodes = sorted(scenario.nodes, key=lambda nd: nd.position[0])
    G = scenario.G
    pairs = []
    for a_pos, a in enumerate(nodes):
        for b in nodes[a_pos + 1:]:
            if b.position[0] - a.position[0] > scenario.r_max * (1.0 + 1e-12):
                break
            if a.is_anchor and b.is_anchor:
                continue
            pairs.append((a, b))
    bandwidth = max([scenario.hops] + [abs(a.index - b.index) for a, b in pairs
                                       if not a.is_anchor and not b.is_anchor])
    blocks = np.zeros((bandwidth + 1, G, 3, 3))
    for a, b in pairs:
        gamma_ab = scenario.link_gamma(a, b)
        gamma_ba = scenario.link_gamma(b, a)
        # reception at a plus reception at b; both inform a's and b's positions alike
        w = fim_link_block(a, b, gamma_ab, beta, f_c) + fim_link_block(b, a, gamma_ba, beta, f_c)
        if not a.is_anchor:
            blocks[0, a.index - 1] += w
        if not b.is_anchor:
            blocks[0, b.index - 1] += w
        if not a.is_anchor and not b.is_anchor:
            lo, hi = sorted((a.index - 1, b.index - 1))
            blocks[hi - lo, lo] -= w
    return BlockBandedFim(blocks)


def assemble_diagonal_bands(scenario: Scenario, varphi=None, vartheta=None, heights=None) -> np.ndarray:
    """Vectorised assembly over a batch of orientation/height draws.

    Parameters
    ----------
    scenario : Scenario
        Line layout; per-node orientations and heights are taken from it
        unless overridden.
    varphi, vartheta, heights : array_like, optional
        ``(B, G + W)`` draws in line-slot order.

    Returns
    -------
    np.ndarray
        Scalar bands ``(B, 3, k + 1, G)`` per coordinate, the same matrix
        :func:`assemble_fim` builds for each draw.
    """
    nodes = scenario.by_slot()
    n = len(nodes)
    if varphi is None:
        varphi = np.array([[nd.orientation.varphi for nd in nodes]])
    if vartheta is None:
        vartheta = np.array([[nd.orientation.vartheta for nd in nodes]])
    if heights is None:
        heights = np.array([[nd.height for nd in nodes]])
    varphi, vartheta, heights = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (varphi, vartheta, heights))
    B = max(varphi.shape[0], vartheta.shape[0], heights.shape[0])
    varphi, vartheta, heights = (np.broadcast_to(a, (B, n)) for a in (varphi, vartheta, heights))
    fy, fz = orientation_factors(varphi, vartheta)

    radio = scenario.radio
    beta, f_c, wavelength = radio.beta, radio.f_c, radio.wavelength
    x = np.array([nd.position[0] for nd in nodes])
    n_el = np.array([nd.n_elements for nd in nodes], dtype=float)
    agent_idx = np.array([-1 if nd.is_anchor else nd.index - 1 for nd in nodes])
    k, G = scenario.hops, scenario.G
    bands = np.zeros((B, 3, k + 1, G))
    for h in range(1, k + 1):
        s = np.arange(n - h)
        t = s + h
        dist = np.abs(x[t] - x[s])
        gain = path_gain(scenario.path_loss, dist, wavelength, heights[:, s], heights[:, t])
        gamma = link_snr(radio, np.broadcast_to(gain, (B, n - h)))
        w = (link_information(n_el[t], n_el[s], fy[:, t], fz[:, t], dist, gamma, beta, f_c)
             + link_information(n_el[s], n_el[t], fy[:, s], fz[:, s], dist, gamma, beta, f_c))
        w = np.moveaxis(w, -1, 1)  # (B, 3, n - h)
        ia, ib = agent_idx[s], agent_idx[t]
        sel = ia >= 0
        bands[:, :, 0, ia[sel]] += w[:, :, sel]
        sel = ib >= 0
        bands[:, :, 0, ib[sel]] += w[:, :, sel]
        sel = (ia >= 0) & (ib >= 0)
        bands[:, :, ib[sel] - ia[sel], ia[sel]] -= w[:, :, sel]
    return bands
