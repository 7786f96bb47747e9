"""Static (snapshot) analysis: throughput CCDFs, coverage split, mean rates.

The closed forms integrate the hotspot measure over radius, and for each
radius over the arc of angles that satisfies the association/throughput
condition. Every condition has the shape ``|z - z_s|^2 >= T(r)`` (macro
side) or its complement (small side), so the admissible arc is solved
exactly and only a smooth integrand is left to the quadrature.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from . import link
from .network import (
    Scenario,
    associate,
    g_factor,
    g_inverse,
    sinr_macro,
    sinr_small,
)
from .numerics import QuadratureSpec, bessel_i0e, integrate_1d

# inner (angular) integrals are nested in the radial ones: keep them tighter
INNER_QUADRATURE = QuadratureSpec(abs_tol=1e-11, rel_tol=1e-9, max_subdivisions=10_000)
OUTER_QUADRATURE = QuadratureSpec(abs_tol=1e-9, rel_tol=1e-7, max_subdivisions=10_000)

TWO_PI = 2.0 * math.pi


class Regime(enum.Enum):
    WITH_PEER = "with_peer"
    WITHOUT_PEER = "without_peer"


class MonteCarloError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoverageSplit:
    macro_mass: float
    small_mass: float

    @property
    def total(self) -> float:
        return self.macro_mass + self.small_mass

    @property
    def small_share(self) -> float:
        return self.small_mass / self.total if self.total > 0 else 0.0

    @property
    def macro_share(self) -> float:
        return self.macro_mass / self.total if self.total > 0 else 0.0


@dataclass(frozen=True)
class CcdfCurve:
    """Sampled CCDF of peak throughput, ``P(rate >= level)``."""

    cell: str
    regime: Regime
    levels: np.ndarray
    probs: np.ndarray
    stderr: np.ndarray | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["level_mbps", "prob", "stderr"])
        for i, (lv, p) in enumerate(zip(self.levels, self.probs)):
            se = "" if self.stderr is None else repr(float(self.stderr[i]))
            writer.writerow([repr(float(lv)), repr(float(p)), se])
        return buf.getvalue()


def default_levels(curve: link.LinkCurve, n: int = 200, lowest: float = 0.1) -> np.ndarray:
    """Log-spaced levels over (lowest, peak], led by a 0 level (probability 1)."""
    return np.concatenate([[0.0], np.geomspace(lowest, curve.peak_mbps, n)])


# ---------------------------------------------------------------------------
# angular building blocks


def _angular_factor(r: float, scenario: Scenario) -> tuple[float, float]:
    """Return (prefactor, concentration) so that the density at angle theta is
    ``prefactor * exp(-concentration * (1 - cos(theta - theta_h)))``."""
    hs = scenario.hotspot
    a2 = hs.spread_km**2
    pref = r / (TWO_PI * a2) * math.exp(-((r - hs.radius_km) ** 2) / (2.0 * a2))
    return pref, r * hs.radius_km / a2


def _full_circle_mass(r, scenario: Scenario):
    """Density integrated over the whole circle of radius r (Bessel form)."""
    hs = scenario.hotspot
    a2 = hs.spread_km**2
    r = np.asarray(r, dtype=float)
    return r / a2 * np.exp(-((r - hs.radius_km) ** 2) / (2.0 * a2)) * bessel_i0e(r * hs.radius_km / a2)


def _arc_integral(r: float, lo: float, hi: float, scenario: Scenario, weight=None) -> float:
    """Integral of the density at radius r over theta in [lo, hi].

    ``weight(r, theta)`` optionally multiplies the density.
    """
    if hi <= lo:
        return 0.0
    pref, conc = _angular_factor(r, scenario)
    if pref == 0.0:
        return 0.0
    th = scenario.hotspot.angle
    if weight is None:
        def f(t):
            return np.exp(-conc * (1.0 - np.cos(t - th)))
    else:
        def f(t):
            return weight(r, t) * np.exp(-conc * (1.0 - np.cos(t - th)))
    return pref * integrate_1d(f, lo, hi, INNER_QUADRATURE)


def _half_width(r: float, threshold: float, scenario: Scenario) -> float:
    """Half-width w of the arc ``|z - z_s|^2 < threshold`` centred on theta_s.

    0 when the arc is empty, pi when it is the whole circle.
    """
    rs = scenario.small_cell.radius_km
    if threshold <= (r - rs) ** 2:
        return 0.0
    if threshold > (r + rs) ** 2:
        return math.pi
    c = (r * r + rs * rs - threshold) / (2.0 * r * rs)
    return math.acos(min(1.0, max(-1.0, c)))


def _far_side_mass(r: float, threshold: float, scenario: Scenario, weight=None) -> float:
    """Density mass at radius r where ``|z - z_s|^2 >= threshold``."""
    w = _half_width(r, threshold, scenario)
    if w == 0.0 and weight is None:
        return float(_full_circle_mass(r, scenario))
    ts = scenario.small_cell.angle
    return _arc_integral(r, ts + w, ts + TWO_PI - w, scenario, weight)


def _near_side_mass(r: float, threshold: float, scenario: Scenario, weight=None) -> float:
    """Density mass at radius r where ``|z - z_s|^2 < threshold``."""
    w = _half_width(r, threshold, scenario)
    if w == math.pi and weight is None:
        return float(_full_circle_mass(r, scenario))
    ts = scenario.small_cell.angle
    return _arc_integral(r, ts - w, ts + w, scenario, weight)


# thresholds on |z - z_s|^2; cosine forms are g_i = (R_s^2 + r^2 - T_i) / (2 r R_s)


def _association_threshold(r: float, scenario: Scenario) -> float:
    return scenario.kappa ** (1.0 / scenario.half_exponent) * r * r


def _macro_rate_threshold(r: float, psi_l: float, scenario: Scenario) -> float:
    slack = psi_l - float(g_factor(r, scenario))
    if slack <= 0:
        return math.inf
    b = scenario.half_exponent
    return scenario.kappa ** (1.0 / b) * r * r * slack ** (-1.0 / b)


def _small_rate_threshold(r: float, psi_l: float, peer: float, scenario: Scenario) -> float:
    b = scenario.half_exponent
    denom = float(g_factor(r, scenario)) + peer
    if denom <= 0:
        return math.inf
    return (psi_l * scenario.kappa) ** (1.0 / b) * r * r * denom ** (-1.0 / b)


def cosine_thresholds(r: float, level: float, scenario: Scenario) -> dict[str, float]:
    """Cosine bounds g1, g2, g3 at radius r for a throughput level (diagnostic)."""
    psi_l = link.psi(level, scenario.link)
    rs = scenario.small_cell.radius_km

    def to_cos(t):
        return (rs * rs + r * r - t) / (2.0 * r * rs)

    return {
        "g1": to_cos(_association_threshold(r, scenario)),
        "g2": to_cos(_macro_rate_threshold(r, psi_l, scenario)),
        "g3": to_cos(_small_rate_threshold(r, psi_l, 1.0, scenario)),
    }


def _association_breaks(scenario: Scenario) -> tuple[float, ...]:
    # radial extent of the small-cell association disk
    k = scenario.kappa ** (1.0 / (2.0 * scenario.half_exponent))
    rs = scenario.small_cell.radius_km
    pts = [rs / (1.0 + k)]
    if k < 1:
        pts.append(rs / (1.0 - k))
    return tuple(pts)


def _arc_breaks(threshold, lo: float, hi: float, scenario: Scenario, n_grid: int = 512) -> tuple[float, ...]:
    """Radii in (lo, hi) where the arc ``|z - z_s|^2 < threshold(r)`` appears or fills the circle.

    The arc can open within a tiny radial window (a threshold diverging at
    the level radius), which adaptive quadrature would otherwise step over.
    """
    if hi <= lo:
        return ()
    rs = scenario.small_cell.radius_km
    grid = np.linspace(lo, hi, n_grid + 1)
    out = []
    for sign in (-1.0, 1.0):
        def h(r):
            t = threshold(r)
            return 1.0 if t == math.inf else math.copysign(1.0, t - (r + sign * rs) ** 2)

        vals = [h(float(r)) for r in grid]
        for a, b, va, vb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if va == vb:
                continue
            a, b = float(a), float(b)
            for _ in range(60):
                m = 0.5 * (a + b)
                if not a < m < b:
                    break
                if h(m) == va:
                    a = m
                else:
                    b = m
            out.append(0.5 * (a + b))
    return tuple(sorted(x for x in out if lo < x < hi))


def _radial_integral(fn, lo: float, hi: float, scenario: Scenario, extra=()) -> float:
    if hi <= lo:
        return 0.0
    pts = tuple(extra)
    if scenario.has_small_cell:
        pts = pts + _association_breaks(scenario)
    return integrate_1d(
        lambda rr: np.array([fn(float(x)) for x in rr]), lo, hi, OUTER_QUADRATURE, points=pts
    )


def _require_common_exponent(scenario: Scenario):
    if scenario.small_half_exponent not in (None, scenario.half_exponent):
        raise ValueError("closed forms need one pathloss exponent for both cells")


def _level_radius(value: float, scenario: Scenario) -> float:
    """min(g^-1(value), R), with 0 for negative values."""
    if value <= 0:
        return 0.0
    return g_inverse(value, scenario)


# ---------------------------------------------------------------------------
# closed forms


def disk_mass(scenario: Scenario) -> float:
    """Hotspot mass inside the studied disk."""
    return _radial_integral(
        lambda r: float(_full_circle_mass(r, scenario)), 0.0, scenario.cell_radius_km,
        scenario.with_small_cell(None),
    )


def coverage_split(scenario: Scenario) -> CoverageSplit:
    R = scenario.cell_radius_km
    total = disk_mass(scenario)
    if not scenario.has_small_cell:
        return CoverageSplit(total, 0.0)
    _require_common_exponent(scenario)
    small = _radial_integral(
        lambda r: _near_side_mass(r, _association_threshold(r, scenario), scenario), 0.0, R, scenario
    )
    return CoverageSplit(total - small, small)


def absorption_coefficient(scenario: Scenario) -> float:
    """Share of the hotspot mass served by the small cell."""
    return coverage_split(scenario).small_share


def ccdf_macro_only(level: float, scenario: Scenario) -> float:
    """Macro throughput CCDF with no small cell (Bessel closed form)."""
    curve = scenario.link
    if level > curve.peak_mbps:
        return 0.0
    if level <= 0:
        return 1.0
    base = scenario.with_small_cell(None)
    lam = _level_radius(link.psi(level, curve), base)

    def radial(r):
        return float(_full_circle_mass(r, base))

    total = _radial_integral(radial, 0.0, base.cell_radius_km, base)
    if lam >= base.cell_radius_km:
        return 1.0
    return _radial_integral(radial, 0.0, lam, base) / total


def macro_mass_above(level: float, scenario: Scenario, regime: Regime = Regime.WITH_PEER,
                     weight=None) -> float:
    """Hotspot mass of macro-served UEs whose rate is at least ``level``.

    ``weight(r, theta)`` turns the mass into a weighted integral over the
    same set of positions. ``WITHOUT_PEER`` keeps the association region but
    drops the small-cell interference.
    """
    _require_common_exponent(scenario)
    R = scenario.cell_radius_km

    def assoc_only(r):
        return _far_side_mass(r, _association_threshold(r, scenario), scenario, weight)

    if level > scenario.link.peak_mbps:
        return 0.0
    if level <= 0:
        return _radial_integral(assoc_only, 0.0, R, scenario)
    psi_l = link.psi(level, scenario.link)
    lam = _level_radius(psi_l, scenario)
    if regime is Regime.WITHOUT_PEER:
        return _radial_integral(assoc_only, 0.0, lam, scenario)
    lam0 = _level_radius(psi_l - 1.0, scenario)

    def rate_limited(r):
        return _far_side_mass(r, _macro_rate_threshold(r, psi_l, scenario), scenario, weight)

    breaks = _arc_breaks(lambda r: _macro_rate_threshold(r, psi_l, scenario), lam0, lam, scenario)
    return _radial_integral(assoc_only, 0.0, lam0, scenario) + _radial_integral(
        rate_limited, lam0, lam, scenario, breaks
    )


def small_mass_above(level: float, scenario: Scenario, regime: Regime = Regime.WITH_PEER,
                     weight=None) -> float:
    """Hotspot mass of small-cell-served UEs whose rate is at least ``level``.

    ``WITHOUT_PEER`` removes the serving macro from the interference.
    """
    _require_common_exponent(scenario)
    R = scenario.cell_radius_km

    def assoc_only(r):
        return _near_side_mass(r, _association_threshold(r, scenario), scenario, weight)

    if level > scenario.link.peak_mbps:
        return 0.0
    if level <= 0:
        return _radial_integral(assoc_only, 0.0, R, scenario)
    psi_l = link.psi(level, scenario.link)
    peer = 1.0 if regime is Regime.WITH_PEER else 0.0
    # below this radius the association arc is the binding one
    lam0 = _level_radius(psi_l - peer, scenario)

    def rate_limited(r):
        return _near_side_mass(r, _small_rate_threshold(r, psi_l, peer, scenario), scenario, weight)

    breaks = _arc_breaks(lambda r: _small_rate_threshold(r, psi_l, peer, scenario), lam0, R, scenario)
    return _radial_integral(assoc_only, 0.0, lam0, scenario) + _radial_integral(
        rate_limited, lam0, R, scenario, breaks
    )


def ccdf_macro(level: float, scenario: Scenario, regime: Regime = Regime.WITH_PEER,
               split: CoverageSplit | None = None) -> float:
    """Throughput CCDF of macro-served UEs when the small cell is deployed."""
    if not scenario.has_small_cell:
        return ccdf_macro_only(level, scenario)
    if level > scenario.link.peak_mbps:
        return 0.0
    if level <= 0:
        return 1.0
    split = split or coverage_split(scenario)
    if split.macro_mass <= 0:
        return 0.0
    return min(1.0, macro_mass_above(level, scenario, regime) / split.macro_mass)


def ccdf_macro_with_sc(level: float, scenario: Scenario, split: CoverageSplit | None = None) -> float:
    return ccdf_macro(level, scenario, Regime.WITH_PEER, split)


def ccdf_small(level: float, scenario: Scenario, regime: Regime = Regime.WITH_PEER,
               split: CoverageSplit | None = None) -> float:
    """Throughput CCDF of small-cell-served UEs."""
    if not scenario.has_small_cell:
        raise ValueError("ccdf_small needs a small cell with positive power")
    if level > scenario.link.peak_mbps:
        return 0.0
    if level <= 0:
        return 1.0
    split = split or coverage_split(scenario)
    if split.small_mass <= 0:
        return 0.0
    return min(1.0, small_mass_above(level, scenario, regime) / split.small_mass)


def ccdf_curve(scenario: Scenario, cell: str, regime: Regime = Regime.WITH_PEER,
               levels: np.ndarray | None = None) -> CcdfCurve:
    """Closed-form CCDF sampled on a level grid."""
    levels = default_levels(scenario.link) if levels is None else np.asarray(levels, dtype=float)
    if cell == "macro_only":
        probs = [ccdf_macro_only(lv, scenario) for lv in levels]
        cell_tag = "macro"
    else:
        split = coverage_split(scenario)
        fn = ccdf_macro if cell == "macro" else ccdf_small
        probs = [fn(lv, scenario, regime, split) for lv in levels]
        cell_tag = cell
    return CcdfCurve(cell_tag, regime, levels, np.array(probs))


# ---------------------------------------------------------------------------
# mean peak throughput


@dataclass(frozen=True)
class MeanThroughput:
    macro: float
    small: float
    overall: float


def _macro_rate_on_arc(r: float, lo: float, hi: float, scenario: Scenario) -> float:
    if hi <= lo:
        return 0.0
    pref, conc = _angular_factor(r, scenario)
    if pref == 0.0:
        return 0.0
    th = scenario.hotspot.angle

    def f(t):
        rate = link.throughput_of_sinr(sinr_macro(r, t, scenario), scenario.link)
        return rate * np.exp(-conc * (1.0 - np.cos(t - th)))

    return pref * integrate_1d(f, lo, hi, INNER_QUADRATURE)


def _small_rate_on_arc(r: float, lo: float, hi: float, scenario: Scenario) -> float:
    if hi <= lo:
        return 0.0
    pref, conc = _angular_factor(r, scenario)
    if pref == 0.0:
        return 0.0
    th = scenario.hotspot.angle

    def f(t):
        rate = link.throughput_of_sinr(sinr_small(r, t, scenario), scenario.link)
        return rate * np.exp(-conc * (1.0 - np.cos(t - th)))

    return pref * integrate_1d(f, lo, hi, INNER_QUADRATURE)


def mean_peak_throughput(scenario: Scenario) -> MeanThroughput:
    """Hotspot-weighted mean of the per-position peak rate, per serving cell."""
    R = scenario.cell_radius_km
    if not scenario.has_small_cell:
        base = scenario.with_small_cell(None)
        total = disk_mass(base)

        def radial(r):
            rate = link.throughput_of_sinr(1.0 / float(g_factor(r, base)), base.link) if r > 0 else base.link.peak_mbps
            return rate * float(_full_circle_mass(r, base))

        knee = _level_radius(1.0 / base.link.saturation_sinr, base)
        mean = _radial_integral(radial, 0.0, R, base, extra=(knee,)) / total
        return MeanThroughput(mean, 0.0, mean)

    _require_common_exponent(scenario)
    split = coverage_split(scenario)
    ts = scenario.small_cell.angle

    def macro_radial(r):
        w = _half_width(r, _association_threshold(r, scenario), scenario)
        return _macro_rate_on_arc(r, ts + w, ts + TWO_PI - w, scenario)

    def small_radial(r):
        w = _half_width(r, _association_threshold(r, scenario), scenario)
        return _small_rate_on_arc(r, ts - w, ts + w, scenario)

    macro_sum = _radial_integral(macro_radial, 0.0, R, scenario)
    small_sum = _radial_integral(small_radial, 0.0, R, scenario)
    macro = macro_sum / split.macro_mass if split.macro_mass > 0 else 0.0
    small = small_sum / split.small_mass if split.small_mass > 0 else 0.0
    overall = (macro_sum + small_sum) / split.total
    return MeanThroughput(macro, small, overall)


# ---------------------------------------------------------------------------
# Monte Carlo oracle


@dataclass(frozen=True)
class PositionSample:
    """UE positions drawn from the hotspot measure restricted to the disk."""

    r: np.ndarray
    theta: np.ndarray
    acceptance: float  # fraction of Gaussian draws inside the disk (its hotspot mass)


def sample_positions(scenario: Scenario, n_samples: int, seed: int) -> PositionSample:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    hs = scenario.hotspot
    cx = hs.radius_km * math.cos(hs.angle)
    cy = hs.radius_km * math.sin(hs.angle)
    R2 = scenario.cell_radius_km ** 2
    xs, ys = [], []
    accepted = 0
    draws = 0
    batch = max(1024, n_samples)
    while accepted < n_samples:
        if draws > 1000 * n_samples + 10**6:
            raise MonteCarloError("hotspot mass inside the disk is too small to sample")
        pts = rng.normal(size=(batch, 2)) * hs.spread_km
        x = pts[:, 0] + cx
        y = pts[:, 1] + cy
        keep = x * x + y * y < R2
        xs.append(x[keep])
        ys.append(y[keep])
        accepted += int(keep.sum())
        draws += batch
    x = np.concatenate(xs)[:n_samples]
    y = np.concatenate(ys)[:n_samples]
    return PositionSample(np.hypot(x, y), np.arctan2(y, x), accepted / draws)


@dataclass(frozen=True)
class SampledRates:
    """Per-position peak rates of a position sample, by serving cell."""

    small_served: np.ndarray
    macro_with_peer: np.ndarray
    macro_without_peer: np.ndarray
    small_with_peer: np.ndarray
    small_without_peer: np.ndarray


def sampled_rates(scenario: Scenario, pos: PositionSample) -> SampledRates:
    curve = scenario.link
    r, t = pos.r, pos.theta
    if scenario.has_small_cell:
        small = np.asarray(associate(r, t, scenario), dtype=bool)
    else:
        small = np.zeros(r.shape, dtype=bool)
    rm, tm = r[~small], t[~small]
    with np.errstate(divide="ignore"):
        no_peer = link.throughput_of_sinr(1.0 / np.asarray(g_factor(rm, scenario)), curve)
    with_peer = link.throughput_of_sinr(sinr_macro(rm, tm, scenario), curve) if scenario.has_small_cell else no_peer
    if small.any():
        rs, ts = r[small], t[small]
        s_with = link.throughput_of_sinr(sinr_small(rs, ts, scenario), curve)
        s_without = link.throughput_of_sinr(sinr_small(rs, ts, scenario, interference_free=True), curve)
    else:
        s_with = s_without = np.empty(0)
    return SampledRates(small, np.atleast_1d(with_peer), np.atleast_1d(no_peer),
                        np.atleast_1d(s_with), np.atleast_1d(s_without))


def empirical_ccdf(rates: np.ndarray, levels: np.ndarray, cell: str, regime: Regime) -> CcdfCurve:
    n = rates.size
    if n == 0:
        probs = np.zeros(levels.shape)
        return CcdfCurve(cell, regime, levels, probs, np.zeros(levels.shape))
    srt = np.sort(rates)
    probs = (n - np.searchsorted(srt, levels, side="left")) / n
    probs = np.where(levels <= 0, 1.0, probs)
    return CcdfCurve(cell, regime, levels, probs, np.sqrt(probs * (1.0 - probs) / n))


@dataclass(frozen=True)
class MonteCarloResult:
    macro: CcdfCurve
    small: CcdfCurve
    macro_without_peer: CcdfCurve
    small_without_peer: CcdfCurve
    split: CoverageSplit
    n_macro: int
    n_small: int
    split_stderr: float


def monte_carlo_ccdf(scenario: Scenario, n_samples: int, seed: int,
                     levels: np.ndarray | None = None) -> MonteCarloResult:
    """Sampling estimate of the CCDFs and the coverage split.

    The split masses are scaled by the disk mass, estimated from the
    acceptance ratio of the Gaussian draws.
    """
    levels = default_levels(scenario.link) if levels is None else np.asarray(levels, dtype=float)
    pos = sample_positions(scenario, n_samples, seed)
    rates = sampled_rates(scenario, pos)
    n_small = int(rates.small_served.sum())
    n_macro = n_samples - n_small
    disk = pos.acceptance
    frac_small = n_small / n_samples
    split = CoverageSplit(disk * (1.0 - frac_small), disk * frac_small)
    return MonteCarloResult(
        macro=empirical_ccdf(rates.macro_with_peer, levels, "macro", Regime.WITH_PEER),
        small=empirical_ccdf(rates.small_with_peer, levels, "small", Regime.WITH_PEER),
        macro_without_peer=empirical_ccdf(rates.macro_without_peer, levels, "macro", Regime.WITHOUT_PEER),
        small_without_peer=empirical_ccdf(rates.small_without_peer, levels, "small", Regime.WITHOUT_PEER),
        split=split,
        n_macro=n_macro,
        n_small=n_small,
        split_stderr=math.sqrt(frac_small * (1.0 - frac_small) / n_samples),
    )

