import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetnet_hotspot import link
from hetnet_hotspot.network import (
    SmallCell,
    associate,
    g_factor,
    sinr_macro,
    sinr_small,
    traffic_density,
)
from hetnet_hotspot.static import (
    Regime,
    _association_threshold,
    _far_side_mass,
    _macro_rate_threshold,
    _near_side_mass,
    _small_rate_threshold,
    absorption_coefficient,
    ccdf_curve,
    ccdf_macro,
    ccdf_macro_only,
    ccdf_small,
    coverage_split,
    disk_mass,
    empirical_ccdf,
    macro_mass_above,
    monte_carlo_ccdf,
    sample_positions,
    small_mass_above,
)

PEAK = 98.0


def _polar_grid(sc, n_r=1500, n_t=1440):
    R = sc.cell_radius_km
    r = (np.arange(n_r) + 0.5) * R / n_r
    t = (np.arange(n_t) + 0.5) * 2 * math.pi / n_t
    rr, tt = np.meshgrid(r, t, indexing="ij")
    w = traffic_density(rr, tt, sc) * (R / n_r) * (2 * math.pi / n_t)
    return rr, tt, w


@pytest.fixture(scope="module")
def grid60(offset60):
    rr, tt, w = _polar_grid(offset60)
    small = associate(rr, tt, offset60)
    with np.errstate(divide="ignore"):
        macro_rate = link.throughput_of_sinr(sinr_macro(rr, tt, offset60), offset60.link)
        small_rate = link.throughput_of_sinr(sinr_small(rr, tt, offset60), offset60.link)
    return dict(w=w, small=small, macro_rate=macro_rate, small_rate=small_rate)


def test_disk_mass_matches_grid(perfect):
    rr, tt, w = _polar_grid(perfect, 800, 720)
    assert disk_mass(perfect) == pytest.approx(w.sum(), rel=1e-5)
    assert 0.0 < disk_mass(perfect) < 1.0


def test_split_matches_grid(offset60, grid60):
    split = coverage_split(offset60)
    w, small = grid60["w"], grid60["small"]
    assert split.small_mass == pytest.approx(w[small].sum(), rel=2e-3)
    assert split.macro_mass == pytest.approx(w[~small].sum(), rel=2e-3)
    assert split.total == pytest.approx(disk_mass(offset60), rel=1e-9)
    assert split.macro_share + split.small_share == pytest.approx(1.0)


@pytest.mark.parametrize("level", [5.0, 20.0, 45.0, 70.0, 90.0])
def test_ccdf_matches_grid(offset60, grid60, level):
    split = coverage_split(offset60)
    w, small = grid60["w"], grid60["small"]
    grid_macro = w[~small & (grid60["macro_rate"] >= level)].sum() / w[~small].sum()
    grid_small = w[small & (grid60["small_rate"] >= level)].sum() / w[small].sum()
    assert ccdf_macro(level, offset60, split=split) == pytest.approx(grid_macro, abs=2e-3)
    assert ccdf_small(level, offset60, split=split) == pytest.approx(grid_small, abs=2e-3)


@pytest.mark.parametrize("r", [0.1, 0.3, 0.45, 0.49, 0.51])
@pytest.mark.parametrize("level", [10.0, 60.0])
def test_arc_masses_match_pointwise_indicator(offset60, r, level):
    sc = offset60
    t = np.linspace(0, 2 * math.pi, 400_001)[:-1]
    dt = t[1] - t[0]
    dens = traffic_density(r, t, sc)
    small = associate(np.full_like(t, r), t, sc)
    with np.errstate(divide="ignore"):
        m_rate = link.throughput_of_sinr(sinr_macro(r, t, sc), sc.link)
        s_rate = link.throughput_of_sinr(sinr_small(r, t, sc), sc.link)
    psi_l = link.psi(level, sc.link)
    assoc = _association_threshold(r, sc)
    assert _near_side_mass(r, assoc, sc) == pytest.approx(dens[small].sum() * dt, abs=1e-5)
    assert _far_side_mass(r, assoc, sc) == pytest.approx(dens[~small].sum() * dt, abs=1e-5)
    # macro: not small-served and rate above level
    t2 = max(_macro_rate_threshold(r, psi_l, sc), assoc)
    assert _far_side_mass(r, t2, sc) == pytest.approx(dens[~small & (m_rate >= level)].sum() * dt, abs=1e-5)
    t3 = min(_small_rate_threshold(r, psi_l, 1.0, sc), assoc)
    assert _near_side_mass(r, t3, sc) == pytest.approx(dens[small & (s_rate >= level)].sum() * dt, abs=1e-5)


def test_ccdf_boundaries(offset60, baseline):
    split = coverage_split(offset60)
    for regime in Regime:
        assert ccdf_macro(0.0, offset60, regime, split) == 1.0
        assert ccdf_small(0.0, offset60, regime, split) == 1.0
        assert ccdf_macro(PEAK + 1e-9, offset60, regime, split) == 0.0
        assert ccdf_small(PEAK + 1.0, offset60, regime, split) == 0.0
    assert ccdf_macro_only(0.0, baseline) == 1.0
    assert ccdf_macro_only(120.0, baseline) == 0.0
    # the cap atom: a positive share reaches exactly the peak rate
    assert ccdf_macro_only(PEAK, baseline) > 0.0


def test_ccdf_macro_only_bessel_vs_grid(baseline):
    rr, tt, w = _polar_grid(baseline, 1000, 720)
    rate = link.throughput_of_sinr(1.0 / np.maximum(g_factor(rr, baseline), 1e-300), baseline.link)
    for level in (10.0, 40.0, 80.0):
        assert ccdf_macro_only(level, baseline) == pytest.approx(w[rate >= level].sum() / w.sum(), abs=1e-3)


def test_curves_monotone(offset120):
    levels = np.linspace(0, PEAK, 25)
    for cell in ("macro", "small"):
        for regime in Regime:
            c = ccdf_curve(offset120, cell, regime, levels)
            assert np.all(np.diff(c.probs) <= 1e-12)
            assert np.all((c.probs >= 0) & (c.probs <= 1))
    base = ccdf_curve(offset120, "macro_only", levels=levels)
    assert np.all(np.diff(base.probs) <= 1e-12)


@settings(max_examples=15)
@given(st.floats(0.5, PEAK))
def test_without_peer_dominates(level):
    from hetnet_hotspot.config import preset_scenario

    sc = preset_scenario(offset_m=60.0)
    split = _split_cache(sc)
    assert ccdf_macro(level, sc, Regime.WITHOUT_PEER, split) >= ccdf_macro(level, sc, Regime.WITH_PEER, split) - 1e-9
    assert ccdf_small(level, sc, Regime.WITHOUT_PEER, split) >= ccdf_small(level, sc, Regime.WITH_PEER, split) - 1e-9


@settings(max_examples=15)
@given(st.floats(0.5, PEAK))
def test_small_cell_removes_macro_mass(level):
    # the deployed small cell can only remove UEs above a level from the macro
    from hetnet_hotspot.config import preset_scenario

    sc = preset_scenario(offset_m=60.0)
    base_mass = disk_mass(sc) * ccdf_macro_only(level, sc)
    assert macro_mass_above(level, sc) <= base_mass * (1 + 1e-7) + 1e-10


_SPLITS = {}


def _split_cache(sc):
    if sc not in _SPLITS:
        _SPLITS[sc] = coverage_split(sc)
    return _SPLITS[sc]


def test_vanishing_small_cell_recovers_macro_only(baseline):
    faint = baseline.with_small_cell(SmallCell(0.5, math.pi / 3, 1e-12))
    for level in (5.0, 30.0, 70.0):
        assert ccdf_macro(level, faint) == pytest.approx(ccdf_macro_only(level, baseline), abs=1e-5)
    off = baseline.with_small_cell(SmallCell(0.5, math.pi / 3, 0.0))
    assert ccdf_macro(30.0, off) == ccdf_macro_only(30.0, baseline)
    assert absorption_coefficient(off) == 0.0
    with pytest.raises(ValueError):
        ccdf_small(10.0, off)


def test_mass_weight_of_one_is_mass(offset60):
    one = lambda r, t: np.ones_like(t)  # noqa: E731
    assert macro_mass_above(30.0, offset60, weight=one) == pytest.approx(macro_mass_above(30.0, offset60), rel=1e-7)
    assert small_mass_above(30.0, offset60, weight=one) == pytest.approx(small_mass_above(30.0, offset60), rel=1e-7)


def test_absorption_decreases_with_offset(perfect, offset60, offset120):
    a = [absorption_coefficient(s) for s in (perfect, offset60, offset120)]
    assert a[0] > a[1] > a[2] > 0


def test_monte_carlo_deterministic_and_consistent(offset60):
    levels = np.array([0.0, 10.0, 50.0, PEAK])
    a = monte_carlo_ccdf(offset60, 20_000, seed=7, levels=levels)
    b = monte_carlo_ccdf(offset60, 20_000, seed=7, levels=levels)
    assert np.array_equal(a.macro.probs, b.macro.probs)
    assert a.n_macro + a.n_small == 20_000
    split = coverage_split(offset60)
    assert a.split.small_share == pytest.approx(split.small_share, abs=5 * a.split_stderr)
    closed = ccdf_macro(50.0, offset60, split=split)
    se = math.sqrt(closed * (1 - closed) / a.n_macro)
    assert a.macro.probs[2] == pytest.approx(closed, abs=5 * se)


def test_monte_carlo_single_sample(offset60):
    res = monte_carlo_ccdf(offset60, 1, seed=1, levels=np.array([0.0, 10.0]))
    assert res.n_macro + res.n_small == 1
    pos = sample_positions(offset60, 5, seed=3)
    assert np.all(pos.r < offset60.cell_radius_km)
    with pytest.raises(ValueError):
        sample_positions(offset60, 0, seed=3)


def test_empirical_ccdf():
    c = empirical_ccdf(np.array([1.0, 2.0, 3.0, 4.0]), np.array([0.0, 2.0, 4.5]), "macro", Regime.WITH_PEER)
    assert list(c.probs) == [1.0, 0.75, 0.0]
    empty = empirical_ccdf(np.empty(0), np.array([0.0, 1.0]), "small", Regime.WITH_PEER)
    assert list(empty.probs) == [0.0, 0.0]
    text = c.to_csv().splitlines()
    assert text[0] == "level_mbps,prob,stderr"


@given(st.floats(1e-3, 0.52), st.floats(0.0, 2 * math.pi))
def test_small_cell_never_raises_macro_rate_pointwise(r, t):
    from hetnet_hotspot.config import preset_scenario

    sc = preset_scenario(offset_m=60.0)
    with_sc = link.throughput_of_sinr(sinr_macro(r, t, sc), sc.link)
    alone = link.throughput_of_sinr(1.0 / g_factor(r, sc), sc.link)
    assert with_sc <= alone
