"""Nodes on a line and the scenario object shared by assembly and solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import ArraySpec, Orientation
from .link_budget import PathLossModel, RadioConfig, link_snr, path_gain

AGENT = "agent"
ANCHOR = "anchor"


@dataclass(frozen=True)
class GeophoneNode:
    """One node. Agents are indexed 1..G and anchors G+1..G+W."""

    index: int
    role: str
    position: np.ndarray = field(compare=False)
    array: ArraySpec
    orientation: Orientation = Orientation()
    height: float = 0.0
    slot: int = 0

    def __post_init__(self):
        if self.role not in (AGENT, ANCHOR):
            raise ValueError(f"role must be 'agent' or 'anchor', got {self.role!r}")
        pos = np.array(self.position, dtype=float).reshape(3)
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)

    @property
    def n_elements(self) -> int:
        return self.array.n_elements

    @property
    def is_anchor(self) -> bool:
        return self.role == ANCHOR


def anchor_slots(G: int, W: int) -> list[int]:
    """Default anchor line slots: both endpoints plus evenly spaced interior slots."""
    n = G + W
    if W < 1:
        return []
    if W == 1:
        return [0]
    return [int(math.floor(k * (n - 1) / (W - 1) + 0.5)) for k in range(W)]


@dataclass(frozen=True)
class Scenario:
    nodes: tuple
    delta: float
    r_max: float
    radio: RadioConfig = RadioConfig()
    path_loss: PathLossModel = PathLossModel()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if not self.agents:
            raise ValueError("scenario has no agent nodes")
        if self.r_max < self.delta:
            raise ValueError("r_max must be at least the node spacing delta")
        expected = list(range(1, len(self.nodes) + 1))
        if sorted(n.index for n in self.nodes) != expected:
            raise ValueError("node indices must be 1..G+W")
        agent_idx = sorted(n.index for n in self.agents)
        if agent_idx != list(range(1, len(agent_idx) + 1)):
            raise ValueError("agents must carry indices 1..G")

    @property
    def agents(self) -> list[GeophoneNode]:
        return sorted((n for n in self.nodes if not n.is_anchor), key=lambda n: n.index)

    @property
    def anchors(self) -> list[GeophoneNode]:
        return sorted((n for n in self.nodes if n.is_anchor), key=lambda n: n.index)

    @property
    def G(self) -> int:
        return len(self.agents)

    @property
    def W(self) -> int:
        return len(self.nodes) - self.G

    @property
    def hops(self) -> int:
        """Block bandwidth ``k = floor(r_max / delta)``."""
        return int(math.floor(self.r_max / self.delta * (1.0 + 1e-12)))

    def by_slot(self) -> list[GeophoneNode]:
        return sorted(self.nodes, key=lambda n: n.slot)

    def on_axis(self) -> bool:
        return all(abs(n.position[1]) < 1e-12 and abs(n.position[2]) < 1e-12 for n in self.nodes)

    def link_gamma(self, rx: GeophoneNode, tx: GeophoneNode) -> float:
        dist = float(np.linalg.norm(rx.position - tx.position))
        gain = path_gain(self.path_loss, dist, self.radio.wavelength, tx.height, rx.height)
        return link_snr(self.radio, gain)


def _per_slot(value, n, default):
    if value is None:
        return [default] * n
    if isinstance(value, (Orientation, int, float)):
        return [value] * n
    value = list(value)
    if len(value) != n:
        raise ValueError(f"expected {n} per-node values, got {len(value)}")
    return value


def build_line_scenario(
    G: int,
    W: int,
    delta: float,
    r_max: float,
    radio: RadioConfig | None = None,
    path_loss: PathLossModel | None = None,
    agent_elements: int = 25,
    anchor_elements: int | None = None,
    spacing: float | None = None,
    orientations: Orientation | Sequence[Orientation] | None = None,
    heights: float | Sequence[float] | None = None,
    slots: Sequence[int] | None = None,
) -> Scenario:
    """Place ``G + W`` nodes on the x-axis at multiples of ``delta``.

    ``orientations`` and ``heights`` are either one value for every node or a
    sequence in line-slot order. ``slots`` overrides the anchor slots.
    """
    radio = radio or RadioConfig()
    path_loss = path_loss or PathLossModel()
    if G < 1:
        raise ValueError("G must be at least 1")
    if W < 0:
        raise ValueError("W must be non-negative")
    n = G + W
    slots = anchor_slots(G, W) if slots is None else [int(s) for s in slots]
    if len(slots) != W or len(set(slots)) != W or any(not 0 <= s < n for s in slots):
        raise ValueError(f"anchor slots {slots} are not {W} distinct values in [0, {n})")
    anchor_elements = agent_elements if anchor_elements is None else anchor_elements
    spacing = radio.wavelength / 2.0 if spacing is None else spacing
    agent_array = ArraySpec.upa(agent_elements, spacing)
    anchor_array = ArraySpec.upa(anchor_elements, spacing)
    orients = _per_slot(orientations, n, Orientation.vertical())
    hts = _per_slot(heights, n, 0.0)

    anchor_set = set(slots)
    nodes = []
    next_agent, next_anchor = 1, G + 1
    for s in range(n):
        is_anchor = s in anchor_set
        if is_anchor:
            idx, next_anchor = next_anchor, next_anchor + 1
        else:
            idx, next_agent = next_agent, next_agent + 1
        nodes.append(GeophoneNode(
            index=idx,
            role=ANCHOR if is_anchor else AGENT,
            position=(s * delta, 0.0, 0.0),
            array=anchor_array if is_anchor else agent_array,
            orientation=orients[s],
            height=float(hts[s]),
            slot=s,
        ))
    return Scenario(tuple(nodes), float(delta), float(r_max), radio, path_loss)
