import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetnet_hotspot.network import (
    Cell,
    Hotspot,
    Scenario,
    SmallCell,
    associate,
    db_to_linear,
    effective_power_mw,
    equal_area_radius,
    g_bruteforce,
    g_factor,
    g_inverse,
    hexagonal_omega,
    lattice_sites,
    sinr_macro,
    sinr_small,
    thermal_noise_mw,
    traffic_density,
)
from hetnet_hotspot.numerics import DomainError


def test_preset_derived_constants(perfect):
    assert perfect.kappa == pytest.approx(10 ** (-2.5), rel=1e-12)
    assert perfect.half_exponent == pytest.approx(1.88)
    assert perfect.cell_radius_km == pytest.approx(math.sqrt(math.sqrt(3) / (2 * math.pi)), rel=1e-15)
    assert perfect.macro_power_mw == pytest.approx(10 ** ((46 + 18 - 151) / 10), rel=1e-12)
    noise_dbm = -174 + 10 * math.log10(20e6) + 9
    assert perfect.noise_mw == pytest.approx(10 ** (noise_dbm / 10), rel=1e-12)
    assert perfect.noise_mw / perfect.macro_power_mw == pytest.approx(0.31698, rel=1e-4)


def test_db_helpers():
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(30.0) == pytest.approx(1000.0)
    assert effective_power_mw(30.0, 6.0, 148.0) == pytest.approx(10 ** (-11.2))
    assert thermal_noise_mw(1e-6, 0.0) == pytest.approx(10 ** (-17.4))
    assert equal_area_radius(2.0) == pytest.approx(2 * math.sqrt(math.sqrt(3) / (2 * math.pi)))
    # disk area equals hexagon area sqrt(3)/2 delta^2
    assert math.pi * equal_area_radius(1.0) ** 2 == pytest.approx(math.sqrt(3) / 2)


def test_omega_is_lattice_constant():
    # sum over the unit lattice of |site|^-2b equals 6 omega(b)
    b = 1.88
    sites = lattice_sites(300, 1.0)
    total = math.fsum(np.sort(np.abs(sites) ** (-2 * b)))
    # tail beyond ring N: 6 sites per ring n at distance ~ n, integral approximation
    n = 300
    tail = 6.0 * (n + 0.5) ** (2 - 2 * b) / (2 * b - 2) * (2 / math.sqrt(3)) ** 0
    assert (total + tail) / 6 == pytest.approx(hexagonal_omega(b), rel=2e-4)


def test_lattice_sites():
    ring1 = lattice_sites(1, 2.0)
    assert ring1.size == 6
    assert np.allclose(np.abs(ring1), 2.0)
    assert lattice_sites(3).size == 3 * 3 * 4
    with pytest.raises(ValueError):
        lattice_sites(0)


def test_traffic_density_normalization():
    hs = Hotspot(0.3, 1.0, 0.2)
    sc = _scenario(hotspot=hs)
    r = np.linspace(0, 3.0, 3001)[:, None]
    t = np.linspace(0, 2 * math.pi, 721)[None, :]
    dens = traffic_density(r, t, sc)
    total = np.trapezoid(np.trapezoid(dens, t[0], axis=1), r[:, 0])
    assert total == pytest.approx(1.0, rel=1e-6)
    assert traffic_density(0.3, 1.0, sc) == pytest.approx(0.3 / (2 * math.pi * 0.04))
    assert np.all(dens >= 0)


def test_traffic_density_rayleigh_disk():
    sc = _scenario(hotspot=Hotspot(0.0, 0.0, 0.2))
    R = sc.cell_radius_km
    r = np.linspace(0, R, 4001)
    radial = 2 * math.pi * traffic_density(r, 0.0, sc)
    assert np.trapezoid(radial, r) == pytest.approx(1 - math.exp(-R * R / (2 * 0.04)), rel=1e-7)


def _scenario(kappa=10 ** (-2.5), rs=0.5, ts=math.pi / 3, hotspot=None, **kw):
    base = dict(
        delta_km=1.0,
        cell_radius_km=equal_area_radius(1.0),
        macro_power_mw=10 ** (-8.7),
        half_exponent=1.88,
        interferer_load=1.0,
        noise_mw=10 ** (-8.7) * 0.317,
        hotspot=hotspot or Hotspot(0.5, math.pi / 3, 0.2),
        small_cell=None if kappa is None else SmallCell(rs, ts, kappa),
    )
    base.update(kw)
    return Scenario(**base)


def test_scenario_validation():
    with pytest.raises(ValueError):
        _scenario(cell_radius_km=1.0)
    with pytest.raises(ValueError):
        _scenario(half_exponent=1.0)
    with pytest.raises(ValueError):
        _scenario(interferer_load=1.5)
    with pytest.raises(ValueError):
        _scenario(hotspot=Hotspot(0.6, 0.0, 0.2))
    with pytest.raises(ValueError):
        SmallCell(0.1, 0.0, 1.5)
    with pytest.raises(ValueError):
        Hotspot(0.1, 0.0, 0.0)


def test_associate_rules():
    sc = _scenario()
    assert associate(0.5, math.pi / 3, sc) is Cell.SMALL
    assert associate(0.05, 0.0, sc) is Cell.MACRO
    assert associate(0.3, 1.0, _scenario(kappa=0.0)) is Cell.MACRO
    assert associate(0.3, 1.0, _scenario(kappa=None)) is Cell.MACRO
    # equal received powers: kappa = 1 and equal distances -> macro
    tie = _scenario(kappa=1.0, rs=0.5, ts=0.0)
    assert associate(0.25, 0.0, tie) is Cell.MACRO
    assert associate(0.2500001, 0.0, tie) is Cell.SMALL


@given(st.floats(0.0, 0.52), st.floats(0.0, 2 * math.pi))
def test_associate_partition(r, t):
    sc = _scenario()
    arr = associate(np.array([r]), np.array([t]), sc)
    assert arr.dtype == bool and arr.shape == (1,)
    assert associate(r, t, sc) in (Cell.MACRO, Cell.SMALL)
    assert (associate(r, t, sc) is Cell.SMALL) == bool(arr[0])


def test_g_factor_basics(perfect):
    assert g_factor(0.0, perfect) == 0.0
    quiet = replace(perfect, interferer_load=0.0, noise_mw=0.0)
    assert np.all(g_factor(np.linspace(0, 0.5, 11), quiet) == 0.0)
    with pytest.raises(DomainError):
        g_factor(1.0, perfect)
    r = np.linspace(0, perfect.cell_radius_km, 5001)
    g = g_factor(r, perfect)
    assert np.all(np.diff(g) > 0)
    assert np.all(g >= perfect.noise_mw / perfect.macro_power_mw * r ** (2 * 1.88) * (1 - 1e-15))


def test_g_bruteforce_ring_one(perfect):
    r, t = 0.3, 0.7
    z = r * np.exp(1j * t)
    sites = np.exp(1j * math.pi / 3 * np.arange(6))
    b = perfect.half_exponent
    interference = perfect.macro_power_mw * sum(abs(z - s) ** (-2 * b) for s in sites)
    expected = (interference + perfect.noise_mw) / (perfect.macro_power_mw * r ** (-2 * b))
    assert g_bruteforce(r, t, 1, perfect) == pytest.approx(expected, rel=1e-13)
    assert g_bruteforce(0.0, t, 5, perfect) == 0.0
    vals = [g_bruteforce(r, t, k, perfect) for k in (1, 2, 5, 10, 30)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_g_closed_form_near_lattice_at_half_delta(perfect):
    from hetnet_hotspot.network import g_bruteforce_mean

    assert g_factor(0.5, perfect) == pytest.approx(g_bruteforce_mean(0.5, 30, perfect), rel=0.05)


def test_g_inverse(perfect):
    assert g_inverse(0.0, perfect) == 0.0
    assert g_inverse(float(g_factor(0.25, perfect)), perfect) == pytest.approx(0.25, abs=1e-12)
    assert g_inverse(10 * perfect.g_at_cell_edge, perfect) == perfect.cell_radius_km
    with pytest.raises(DomainError):
        g_inverse(-1.0, perfect)


@given(st.floats(1e-3, 0.52))
def test_g_inverse_roundtrip(r):
    sc = _scenario()
    assert g_inverse(float(g_factor(r, sc)), sc) == pytest.approx(r, abs=1e-11)


def test_sinr_rules():
    sc = _scenario()
    no_sc = _scenario(kappa=0.0)
    assert sinr_macro(0.3, 1.0, no_sc) == pytest.approx(1.0 / g_factor(0.3, no_sc))
    assert sinr_macro(0.5, math.pi / 3, sc) == 0.0
    assert sinr_small(0.0, 0.0, sc) == 0.0
    assert sinr_small(0.5, math.pi / 3, sc) == math.inf
    near = [sinr_small(0.5 + d, math.pi / 3, sc) for d in (1e-2, 1e-3, 1e-4)]
    assert near[0] < near[1] < near[2]
    free = sinr_small(0.4, 1.0, sc, interference_free=True)
    busy = sinr_small(0.4, 1.0, sc)
    assert free > busy
    g = g_factor(0.4, sc)
    assert free / busy == pytest.approx((g + 1) / g, rel=1e-13)
    with pytest.raises(ValueError):
        sinr_small(0.3, 0.0, _scenario(kappa=None))


@given(st.floats(0.01, 0.5), st.floats(0.0, 2 * math.pi))
def test_sinr_matches_explicit_lattice(r, t):
    sc = _scenario()
    b = sc.half_exponent
    P, Ps = sc.macro_power_mw, sc.kappa * sc.macro_power_mw
    z = r * np.exp(1j * t)
    zs = 0.5 * np.exp(1j * math.pi / 3)
    ds = abs(z - zs)
    if ds < 1e-6:
        return
    gb = g_bruteforce(r, t, 8, sc)
    interference = gb * P * r ** (-2 * b) - sc.noise_mw
    explicit = P * r ** (-2 * b) / (interference + Ps * ds ** (-2 * b) + sc.noise_mw)
    substituted = 1.0 / (gb + sc.kappa * ds ** (-2 * b) * r ** (2 * b))
    assert substituted == pytest.approx(explicit, rel=1e-10)
    # the closed form differs only through g
    via_g = sinr_macro(r, t, sc)
    assert via_g == pytest.approx(1.0 / (g_factor(r, sc) + sc.kappa * ds ** (-2 * b) * r ** (2 * b)), rel=1e-12)
