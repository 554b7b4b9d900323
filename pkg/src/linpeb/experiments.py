"""Monte Carlo averaging, maximum line length search and the TOA baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.constants import speed_of_light

from .fim import assemble_diagonal_bands, link_information
from .geometry import TWO_PI
from .link_budget import PathLossModel, RadioConfig, link_snr, path_gain
from .scenario import Scenario, build_line_scenario
from .solver import (
    ClosedFormParams,
    PebReport,
    SingularFimError,
    center_index,
    closed_form_1hop_center,
    scalar_bands_center_variance,
    scalar_bands_inverse_diagonal,
)
from .waveform import PulseSpec

VERTICAL = "vertical"
UNIFORM_RANDOM = "uniform_random"
ORIENTATION_MODES = (VERTICAL, UNIFORM_RANDOM)

STAT_TOTAL = "total"
STAT_COORDINATE = "coordinate"
STATISTICS = (STAT_COORDINATE, STAT_TOTAL)


@dataclass(frozen=True)
class MonteCarloSpec:
    """Randomisation of array orientations and antenna heights.

    Every trial owns a generator seeded with ``(seed, trial)``, so a trial's
    draws do not depend on how trials are batched.
    """

    n_trials: int = 1000
    seed: int = 0
    orientation_mode: str = UNIFORM_RANDOM
    height_range: tuple[float, float] = (0.1, 0.2)
    chunk_size: int = 100

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.orientation_mode not in ORIENTATION_MODES:
            raise ValueError(f"orientation_mode must be one of {ORIENTATION_MODES}")
        lo, hi = self.height_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("height range must satisfy 0 <= lo <= hi <= 1 m")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be positive")
        object.__setattr__(self, "height_range", (float(lo), float(hi)))


def draw_trial(mc: MonteCarloSpec, trial: int, n_nodes: int) -> dict[str, np.ndarray]:
    """Per-node draws in line-slot order for one trial.

    Angles are always drawn (and then zeroed in vertical mode) so both modes
    see the same heights for a given trial.
    """
    rng = np.random.default_rng([mc.seed, trial])
    angles = rng.uniform(0.0, TWO_PI, size=(3, n_nodes))
    heights = rng.uniform(*mc.height_range, size=n_nodes)
    if mc.orientation_mode == VERTICAL:
        angles[:] = 0.0
    return {"varphi": angles[0], "vartheta": angles[1], "Phi": angles[2], "heights": heights}


def draw_trials(mc: MonteCarloSpec, trials: range, n_nodes: int) -> dict[str, np.ndarray]:
    draws = [draw_trial(mc, t, n_nodes) for t in trials]
    return {k: np.stack([d[k] for d in draws]) for k in draws[0]}


def _chunks(mc: MonteCarloSpec):
    for start in range(0, mc.n_trials, mc.chunk_size):
        yield range(start, min(start + mc.chunk_size, mc.n_trials))


@dataclass
class MonteCarloResult:
    """Trial-averaged bounds; ``mean`` holds the arithmetic mean of per-trial PEBs."""

    mean: PebReport
    std_total: np.ndarray
    n_trials: int
    seed: int
    orientation_mode: str


def monte_carlo_peb(scenario: Scenario, mc: MonteCarloSpec) -> MonteCarloResult:
    """Average every agent's bound over randomised orientations and heights."""
    n = len(scenario.nodes)
    sums = []
    sq = []
    shift = None  # first trial's bounds; shifting avoids cancellation in the variance
    rc_min = math.inf
    for trials in _chunks(mc):
        d = draw_trials(mc, trials, n)
        bands = assemble_diagonal_bands(scenario, d["varphi"], d["vartheta"], d["heights"])
        var, rcond = scalar_bands_inverse_diagonal(bands)  # (B, 3, G)
        rc_min = min(rc_min, float(np.min(rcond)))
        coords = np.sqrt(var)
        total = np.sqrt(var.sum(axis=1))
        stacked = np.concatenate([total[:, None, :], coords], axis=1)  # (B, 4, G)
        if shift is None:
            shift = total[0].copy()
        sums.append(stacked.sum(axis=0))
        sq.append(np.stack([(total - shift).sum(axis=0), ((total - shift) ** 2).sum(axis=0)]))
    mean = np.sum(np.stack(sums), axis=0) / mc.n_trials
    m1, m2 = np.sum(np.stack(sq), axis=0) / mc.n_trials
    std = np.sqrt(np.maximum(m2 - m1**2, 0.0))
    report = PebReport(mean[0], mean[1], mean[2], mean[3], "banded", 1.0 / rc_min,
                       metadata={"n_trials": mc.n_trials, "seed": mc.seed,
                                 "orientation_mode": mc.orientation_mode})
    return MonteCarloResult(report, std, mc.n_trials, mc.seed, mc.orientation_mode)


def center_statistics(scenario: Scenario, mc: MonteCarloSpec) -> dict[str, float]:
    """Trial-averaged bounds of agent ``G/2`` (rounded up for odd G).

    Returns the mean total PEB and the largest of the three mean
    per-coordinate bounds.
    """
    n = len(scenario.nodes)
    c = center_index(scenario.G) - 1
    acc = []
    for trials in _chunks(mc):
        d = draw_trials(mc, trials, n)
        bands = assemble_diagonal_bands(scenario, d["varphi"], d["vartheta"], d["heights"])
        if np.array_equal(bands[:, 1], bands[:, 2]):
            # vertical arrays: the y and z problems coincide
            var = scalar_bands_center_variance(bands[:, :2], c)[:, [0, 1, 1]]
        else:
            var = scalar_bands_center_variance(bands, c)  # (B, 3)
        acc.append(np.concatenate([np.sqrt(var.sum(axis=1))[:, None], np.sqrt(var)], axis=1).sum(axis=0))
    mean = np.sum(np.stack(acc), axis=0) / mc.n_trials
    return {STAT_TOTAL: float(mean[0]), STAT_COORDINATE: float(mean[1:].max()),
            "x": float(mean[1]), "y": float(mean[2]), "z": float(mean[3])}


# ---------------------------------------------------------------------------
# maximum G


@dataclass(frozen=True)
class LineConfig:
    """Everything but ``G`` for a line with evenly placed anchors."""

    W: int = 2
    delta: float = 25.0
    r_max: float = 25.0
    agent_elements: int = 25
    anchor_elements: int | None = None
    radio: RadioConfig = field(default_factory=RadioConfig)
    path_loss: PathLossModel = field(default_factory=PathLossModel)

    def scenario(self, G: int) -> Scenario:
        return build_line_scenario(G, self.W, self.delta, self.r_max, self.radio, self.path_loss,
                                   self.agent_elements, self.anchor_elements)

    @property
    def hops(self) -> int:
        return int(math.floor(self.r_max / self.delta * (1.0 + 1e-12)))


class ThresholdUnreachable(RuntimeError):
    """Even the shortest line (G = 2) misses the accuracy target."""

    def __init__(self, value: float, threshold: float):
        super().__init__(f"PEB at G=2 is {value:.4g} m, above the {threshold:g} m target")
        self.value = value
        self.threshold = threshold


@dataclass
class MaxGResult:
    G: int
    statistic: str
    threshold: float
    value: float
    value_next: float
    method: str
    evaluations: dict[int, dict[str, float]]
    cross_check: float | None = None


def closed_form_applicable(line: LineConfig, mc: MonteCarloSpec) -> bool:
    """Symmetric two-anchor, one-hop line with deterministic link gains."""
    anchors_match = line.anchor_elements in (None, line.agent_elements)
    deterministic = mc.orientation_mode == VERTICAL and not line.path_loss.two_ray
    return line.W == 2 and line.hops == 1 and anchors_match and deterministic


def one_hop_block(line: LineConfig) -> np.ndarray:
    """``J_A``: the per-agent diagonal block of the vertical one-hop line."""
    radio = line.radio
    gamma = link_snr(radio, path_gain(line.path_loss, line.delta, radio.wavelength))
    N = line.agent_elements
    single = link_information(N, N, 1.0, 1.0, line.delta, gamma, radio.beta, radio.f_c)
    return np.diag(4.0 * single)


def closed_form_center_statistics(line: LineConfig, G: int) -> dict[str, float]:
    C, total = closed_form_1hop_center(ClosedFormParams(one_hop_block(line), 0.0, G))
    coords = np.sqrt(np.diag(C))
    return {STAT_TOTAL: total, STAT_COORDINATE: float(coords.max()),
            "x": float(coords[0]), "y": float(coords[1]), "z": float(coords[2])}


def _search(evaluate: Callable[[int], dict], statistic: str, threshold: float, max_G: int):
    cache: dict[int, dict] = {}

    def value(G):
        if G not in cache:
            cache[G] = evaluate(G)
        return cache[G][statistic]

    first = value(2)
    if first > threshold:
        raise ThresholdUnreachable(first, threshold)
    lo, hi = 2, 4
    while value(hi) <= threshold:
        lo, hi = hi, 2 * hi
        if hi > max_G:
            raise RuntimeError(f"search exceeded G = {max_G}; the target may not be binding")
    while hi - lo > 2:
        mid = (lo + hi) // 4 * 2
        if value(mid) <= threshold:
            lo = mid
        else:
            hi = mid
    return lo, cache


def max_g_search(line: LineConfig, mc: MonteCarloSpec | None = None, threshold: float = 1.0,
                 statistic: str = STAT_COORDINATE, max_G: int = 1 << 20,
                 cache: dict[int, dict] | None = None) -> MaxGResult:
    """Largest even G whose center-agent bound stays within ``threshold``.

    Doubling from G = 2 brackets the answer, bisection over even G narrows it.
    ``statistic`` is ``"coordinate"`` (largest per-coordinate bound) or
    ``"total"`` (3-D PEB). ``cache`` may be shared between statistics.
    """
    if statistic not in STATISTICS:
        raise ValueError(f"statistic must be one of {STATISTICS}")
    if not threshold > 0.0:
        raise ValueError("threshold must be positive")
    mc = mc or MonteCarloSpec(n_trials=1, orientation_mode=VERTICAL)
    use_closed = closed_form_applicable(line, mc)
    shared = {} if cache is None else cache

    def evaluate(G):
        if G not in shared:
            if use_closed:
                shared[G] = closed_form_center_statistics(line, G)
            else:
                shared[G] = center_statistics(line.scenario(G), mc)
        return shared[G]

    G, _ = _search(evaluate, statistic, threshold, max_G)
    result = MaxGResult(G, statistic, threshold, shared[G][statistic], shared[G + 2][statistic],
                        "closed_form" if use_closed else "banded", shared)
    if use_closed:
        banded = center_statistics(line.scenario(G), replace(mc, n_trials=1))
        result.cross_check = abs(banded[statistic] / result.value - 1.0)
    return result


def two_hop_ratio(line: LineConfig, h_tx: float = 0.0, h_rx: float = 0.0) -> float:
    """``d``: two-hop over one-hop ratio of the angular FIM entries."""
    radio = line.radio
    g1 = path_gain(line.path_loss, line.delta, radio.wavelength, h_tx, h_rx)
    g2 = path_gain(line.path_loss, 2.0 * line.delta, radio.wavelength, h_tx, h_rx)
    return g2 / g1 / 4.0


# ---------------------------------------------------------------------------
# TOA baseline


@dataclass(frozen=True)
class UwbBaselineSpec:
    """Single-antenna TOA ranging; ``n_elements > 1`` adds beamforming gain only."""

    f_c: float = 4e9
    tx_power_dbm: float = -8.0
    n_elements: int = 1
    bandwidth: float = 2.16e9
    rolloff: float = 0.6

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError("n_elements must be at least 1")

    def radio(self, like: RadioConfig | None = None) -> RadioConfig:
        like = like or RadioConfig()
        return replace(like, f_c=self.f_c, tx_power_dbm=self.tx_power_dbm,
                       pulse=PulseSpec(self.bandwidth, self.rolloff))


def toa_range_std(beta: float, snr) -> np.ndarray:
    """Ranging accuracy ``c / (2 sqrt(2) pi beta sqrt(SNR))``."""
    return speed_of_light / (2.0 * math.sqrt(2.0) * math.pi * beta * np.sqrt(snr))


def toa_bands(scenario: Scenario, radio: RadioConfig, n_elements: int, heights) -> np.ndarray:
    """Scalar x-coordinate bands ``(B, k + 1, G)`` of the TOA network FIM.

    Each feasible pair contributes two range measurements (one per direction).
    """
    nodes = scenario.by_slot()
    n = len(nodes)
    heights = np.atleast_2d(np.asarray(heights, dtype=float))
    B = heights.shape[0]
    x = np.array([nd.position[0] for nd in nodes])
    idx = np.array([-1 if nd.is_anchor else nd.index - 1 for nd in nodes])
    k, G = scenario.hops, scenario.G
    bands = np.zeros((B, k + 1, G))
    beta = radio.beta
    for h in range(1, k + 1):
        s = np.arange(n - h)
        t = s + h
        gain = path_gain(scenario.path_loss, np.abs(x[t] - x[s]), radio.wavelength, heights[:, s], heights[:, t])
        snr = link_snr(radio, np.broadcast_to(gain, (B, n - h))) * float(n_elements) ** 2
        w = 2.0 / toa_range_std(beta, snr) ** 2
        ia, ib = idx[s], idx[t]
        sel = ia >= 0
        bands[:, 0, ia[sel]] += w[:, sel]
        sel = ib >= 0
        bands[:, 0, ib[sel]] += w[:, sel]
        sel = (ia >= 0) & (ib >= 0)
        bands[:, ib[sel] - ia[sel], ia[sel]] -= w[:, sel]
    return bands


def uwb_toa_peb(scenario: Scenario, spec: UwbBaselineSpec, mc: MonteCarloSpec | None = None) -> np.ndarray:
    """Trial-averaged x-coordinate bound of every agent under TOA ranging.

    The scenario supplies topology and path loss; carrier, power and pulse
    come from ``spec``.
    """
    radio = spec.radio(scenario.radio)
    mc = mc or MonteCarloSpec(n_trials=1, orientation_mode=VERTICAL)
    n = len(scenario.nodes)
    acc = []
    for trials in _chunks(mc):
        d = draw_trials(mc, trials, n)
        var, _ = scalar_bands_inverse_diagonal(toa_bands(scenario, radio, spec.n_elements, d["heights"]))
        acc.append(np.sqrt(var).sum(axis=0))
    return np.sum(np.stack(acc), axis=0) / mc.n_trials


def mmwave_x_peb(scenario: Scenario, mc: MonteCarloSpec | None = None) -> np.ndarray:
    """Trial-averaged x-coordinate bound of the array system.

    The x coordinate decouples, so only its band is inverted; this also
    covers single-element nodes whose angular entries vanish.
    """
    mc = mc or MonteCarloSpec(n_trials=1, orientation_mode=VERTICAL)
    n = len(scenario.nodes)
    acc = []
    for trials in _chunks(mc):
        d = draw_trials(mc, trials, n)
        bands = assemble_diagonal_bands(scenario, d["varphi"], d["vartheta"], d["heights"])
        var, _ = scalar_bands_inverse_diagonal(bands[:, 0])
        acc.append(np.sqrt(var).sum(axis=0))
    return np.sum(np.stack(acc), axis=0) / mc.n_trials


__all__ = [
    "MonteCarloSpec", "MonteCarloResult", "monte_carlo_peb", "center_statistics", "draw_trial",
    "LineConfig", "MaxGResult", "ThresholdUnreachable", "max_g_search", "closed_form_applicable",
    "one_hop_block", "two_hop_ratio", "UwbBaselineSpec", "uwb_toa_peb", "toa_range_std",
    "mmwave_x_peb", "SingularFimError",
]
