import math
from dataclasses import replace

import numpy as np
import pytest

from linpeb.experiments import (
    STAT_COORDINATE,
    STAT_TOTAL,
    UNIFORM_RANDOM,
    VERTICAL,
    LineConfig,
    MonteCarloSpec,
    ThresholdUnreachable,
    UwbBaselineSpec,
    center_statistics,
    closed_form_applicable,
    draw_trial,
    max_g_search,
    mmwave_x_peb,
    monte_carlo_peb,
    toa_range_std,
    two_hop_ratio,
    uwb_toa_peb,
)
from linpeb.fim import assemble_fim
from linpeb.link_budget import OXYGEN_L0_60GHZ, PathLossModel, RadioConfig
from linpeb.scenario import build_line_scenario
from linpeb.solver import peb_all

FREE = PathLossModel("free_space")
ABSORB = PathLossModel("free_space_absorption")


def line_scenario(G=12, W=2, hops=1, path_loss=FREE, radio=None, **kw):
    return build_line_scenario(G, W, 25.0, 25.0 * hops, radio or RadioConfig(), path_loss, **kw)


def test_trial_draws_are_reproducible_and_shared_across_modes():
    a = draw_trial(MonteCarloSpec(seed=5), 3, 10)
    b = draw_trial(MonteCarloSpec(seed=5), 3, 10)
    v = draw_trial(MonteCarloSpec(seed=5, orientation_mode=VERTICAL), 3, 10)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    np.testing.assert_array_equal(a["heights"], v["heights"])
    assert np.all(v["varphi"] == 0.0) and np.any(a["varphi"] != 0.0)
    assert np.all((a["heights"] >= 0.1) & (a["heights"] <= 0.2))
    assert not np.array_equal(draw_trial(MonteCarloSpec(seed=6), 3, 10)["heights"], a["heights"])


def test_monte_carlo_is_deterministic_and_chunk_independent():
    sc = line_scenario(G=10, W=3, hops=2, path_loss=PathLossModel("two_ray_absorption"))
    mc = MonteCarloSpec(n_trials=37, seed=9, chunk_size=100)
    r1 = monte_carlo_peb(sc, mc)
    r2 = monte_carlo_peb(sc, mc)
    r3 = monte_carlo_peb(sc, replace(mc, chunk_size=5))
    np.testing.assert_array_equal(r1.mean.total, r2.mean.total)
    np.testing.assert_allclose(r3.mean.total, r1.mean.total, rtol=1e-13)
    assert np.all(r1.std_total > 0.0)


def test_vertical_free_space_has_no_spread_and_matches_single_solve():
    sc = line_scenario(G=9, W=2)
    res = monte_carlo_peb(sc, MonteCarloSpec(n_trials=20, orientation_mode=VERTICAL))
    ref = peb_all(assemble_fim(sc))
    np.testing.assert_allclose(res.mean.total, ref.total, rtol=1e-12)
    np.testing.assert_allclose(res.std_total, 0.0, atol=1e-12 * ref.total.max())


def test_random_orientation_never_beats_vertical():
    sc = line_scenario(G=20, W=4, hops=2)
    v = monte_carlo_peb(sc, MonteCarloSpec(n_trials=50, orientation_mode=VERTICAL))
    r = monte_carlo_peb(sc, MonteCarloSpec(n_trials=50, orientation_mode=UNIFORM_RANDOM))
    assert np.all(r.mean.total >= v.mean.total * (1 - 1e-12))
    np.testing.assert_allclose(r.mean.x, v.mean.x, rtol=1e-12)


def test_center_statistics_agree_with_full_inversion():
    sc = line_scenario(G=15, W=3, hops=2, path_loss=PathLossModel("two_ray"))
    mc = MonteCarloSpec(n_trials=25, seed=2)
    stats = center_statistics(sc, mc)
    full = monte_carlo_peb(sc, mc).mean
    c = full.center()
    assert stats[STAT_TOTAL] == pytest.approx(full.total[c], rel=1e-10)
    for k in "xyz":
        assert stats[k] == pytest.approx(getattr(full, k)[c], rel=1e-10)
    assert stats[STAT_COORDINATE] == max(stats["x"], stats["y"], stats["z"])


def test_peb_scales_with_inverse_root_power():
    lo = peb_all(assemble_fim(line_scenario(radio=RadioConfig(tx_power_dbm=10.0))))
    hi = peb_all(assemble_fim(line_scenario(radio=RadioConfig(tx_power_dbm=40.0))))
    np.testing.assert_allclose(hi.total / lo.total, 10 ** -1.5, rtol=1e-10)


def test_two_hop_ratio():
    assert two_hop_ratio(LineConfig(r_max=50.0, path_loss=FREE)) == pytest.approx(1 / 16)
    assert two_hop_ratio(LineConfig(r_max=50.0, path_loss=ABSORB)) == pytest.approx(OXYGEN_L0_60GHZ ** -25 / 16)


@pytest.mark.parametrize("statistic", [STAT_COORDINATE, STAT_TOTAL])
@pytest.mark.parametrize("line", [LineConfig(W=2, path_loss=ABSORB, radio=RadioConfig(tx_power_dbm=10.0)),
                                  LineConfig(W=4, r_max=50.0, agent_elements=9, path_loss=ABSORB)])
def test_max_g_brackets_threshold(line, statistic):
    res = max_g_search(line, threshold=1.0, statistic=statistic)
    assert res.G % 2 == 0
    assert res.value <= 1.0 < res.value_next
    values = [res.evaluations[g][statistic] for g in sorted(res.evaluations)]
    assert values == sorted(values)
    if closed_form_applicable(line, MonteCarloSpec(n_trials=1, orientation_mode=VERTICAL)):
        assert res.method == "closed_form" and res.cross_check < 1e-9
    else:
        assert res.method == "banded" and res.cross_check is None
        direct = center_statistics(line.scenario(res.G), MonteCarloSpec(n_trials=1, orientation_mode=VERTICAL))
        assert direct[statistic] == pytest.approx(res.value, rel=1e-12)


def test_coordinate_statistic_allows_longer_lines():
    line = LineConfig(W=2, path_loss=ABSORB)
    cache = {}
    g_coord = max_g_search(line, statistic=STAT_COORDINATE, cache=cache).G
    g_total = max_g_search(line, statistic=STAT_TOTAL, cache=cache).G
    assert g_coord >= g_total


def test_unreachable_threshold():
    with pytest.raises(ThresholdUnreachable) as exc:
        max_g_search(LineConfig(path_loss=ABSORB), threshold=1e-6)
    assert exc.value.value > 1e-6
    with pytest.raises(ValueError):
        max_g_search(LineConfig(), threshold=0.0)
    with pytest.raises(ValueError):
        max_g_search(LineConfig(), statistic="median")


def test_toa_range_std():
    beta, snr = 4e8, 100.0
    want = 299792458.0 / (2 * math.sqrt(2) * math.pi * beta * 10.0)
    assert toa_range_std(beta, snr) == pytest.approx(want)


@pytest.mark.parametrize("N", [1, 4, 25])
def test_array_vs_toa_at_matched_snr(N):
    radio = RadioConfig()
    sc = line_scenario(G=14, W=2, hops=2, agent_elements=N, anchor_elements=N, path_loss=ABSORB)
    mm = mmwave_x_peb(sc)
    toa = uwb_toa_peb(line_scenario(G=14, W=2, hops=2, path_loss=ABSORB),
                      UwbBaselineSpec(f_c=radio.f_c, tx_power_dbm=radio.tx_power_dbm, n_elements=1))
    expected = 1.0 / (N * math.sqrt(1.0 + radio.f_c**2 / radio.beta**2))
    np.testing.assert_allclose(mm / toa, expected, rtol=1e-10)


def test_toa_beamforming_gain_is_n_squared_snr():
    sc = line_scenario(G=8, W=2)
    one = uwb_toa_peb(sc, UwbBaselineSpec(n_elements=1))
    many = uwb_toa_peb(sc, UwbBaselineSpec(n_elements=5))
    np.testing.assert_allclose(many, one / 5.0, rtol=1e-12)


@pytest.mark.parametrize("kwargs", [dict(n_trials=0), dict(orientation_mode="tilted"), dict(height_range=(0.3, 0.1)),
                                    dict(seed=-1), dict(chunk_size=0)])
def test_monte_carlo_spec_validation(kwargs):
    with pytest.raises(ValueError):
        MonteCarloSpec(**kwargs)
