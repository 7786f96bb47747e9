"""Discretize throughput distributions into flow classes.

Each cell's users are cut into equal-probability bins of the peak rate
observed while the other cell is active. A class carries two rates: the
one with the peer cell active and the one with the peer idle.

Two pairings of the idle-peer rate are available. ``quantile`` reads it at
the same quantile positions of the idle-peer curve, assuming both rates
rank users identically. ``conditional`` (default) integrates the idle-peer
rate over exactly the users of the bin, which stays accurate where the
ranking assumption breaks down (low-rate macro users near the small cell).
"""

from __future__ import annotations

import csv
import enum
import io
import warnings
from dataclasses import dataclass

import numpy as np

from . import link
from .network import Scenario, g_factor, sinr_small
from .static import (
    CcdfCurve,
    CoverageSplit,
    Regime,
    ccdf_curve,
    coverage_split,
    default_levels,
    macro_mass_above,
    sample_positions,
    sampled_rates,
    small_mass_above,
)


class RateRule(enum.Enum):
    MEAN = "mean"
    MAX = "max"


class Pairing(enum.Enum):
    QUANTILE = "quantile"
    CONDITIONAL = "conditional"


@dataclass(frozen=True)
class FlowClass:
    p: float
    rate_no_peer: float  # Mbps, peer cell idle
    rate_with_peer: float  # Mbps, peer cell busy


@dataclass(frozen=True)
class FlowClassSet:
    macro: tuple[FlowClass, ...]
    small: tuple[FlowClass, ...]
    split: CoverageSplit

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "class", "p", "rate_no_peer_mbps", "rate_with_peer_mbps"])
        for cell, classes in (("macro", self.macro), ("small", self.small)):
            for k, c in enumerate(classes, start=1):
                w.writerow([cell, k, repr(float(c.p)), repr(float(c.rate_no_peer)), repr(float(c.rate_with_peer))])
        return buf.getvalue()


def _cdf_knots(curve: CcdfCurve, peak: float) -> tuple[np.ndarray, np.ndarray]:
    """Knots (u_j, x_j) of the piecewise-linear quantile function of a curve."""
    levels = np.asarray(curve.levels, dtype=float)
    cdf = 1.0 - np.asarray(curve.probs, dtype=float)
    if levels[0] > 0:
        levels = np.concatenate([[0.0], levels])
        cdf = np.concatenate([[0.0], cdf])
    else:
        cdf[0] = 0.0
    # atom at the cap: the CDF reaches 1 right at the peak rate
    x = np.concatenate([levels, [peak]])
    u = np.concatenate([cdf, [1.0]])
    return np.maximum.accumulate(np.clip(u, 0.0, 1.0)), x


def _quantile(u: np.ndarray, x: np.ndarray, q: float) -> float:
    """Smallest rate whose CDF reaches q."""
    j = int(np.searchsorted(u, q, side="left"))
    if j == 0:
        return float(x[0])
    if j >= len(u):
        return float(x[-1])
    du = u[j] - u[j - 1]
    if du <= 0:
        return float(x[j])
    return float(x[j - 1] + (q - u[j - 1]) / du * (x[j] - x[j - 1]))


def _quantile_mean(u: np.ndarray, x: np.ndarray, q1: float, q2: float) -> float:
    """Mean of the quantile function over [q1, q2]."""
    total = 0.0
    for j in range(len(u) - 1):
        a, b = max(q1, u[j]), min(q2, u[j + 1])
        if b <= a or u[j + 1] <= u[j]:
            continue
        slope = (x[j + 1] - x[j]) / (u[j + 1] - u[j])
        qa = x[j] + (a - u[j]) * slope
        qb = x[j] + (b - u[j]) * slope
        total += 0.5 * (b - a) * (qa + qb)
    return total / (q2 - q1)


def _merge(classes: list[FlowClass]) -> tuple[FlowClass, ...]:
    merged: list[FlowClass] = []
    for c in classes:
        if merged and np.isclose(merged[-1].rate_with_peer, c.rate_with_peer, rtol=1e-9, atol=0) and \
                np.isclose(merged[-1].rate_no_peer, c.rate_no_peer, rtol=1e-9, atol=0):
            prev = merged.pop()
            merged.append(FlowClass(prev.p + c.p, prev.rate_no_peer, prev.rate_with_peer))
        else:
            merged.append(c)
    return tuple(merged)


def _bin_edges(with_peer: CcdfCurve, n_classes: int, peak: float) -> list[tuple[float, float, float, float]]:
    """(q1, q2, level at q1, level at q2) for each equal-probability bin."""
    u1, x1 = _cdf_knots(with_peer, peak)
    edges = np.linspace(0.0, 1.0, n_classes + 1)
    return [(q1, q2, _quantile(u1, x1, q1), _quantile(u1, x1, q2)) for q1, q2 in zip(edges[:-1], edges[1:])]


def _classes_from_curves(with_peer: CcdfCurve, no_peer: CcdfCurve, n_classes: int,
                         rule: RateRule, peak: float, idle_rate=None) -> tuple[FlowClass, ...]:
    """Quantile bins of ``with_peer``.

    ``idle_rate(lo, hi)``, when given, returns the mean idle-peer rate of the
    users whose busy-peer rate lies in [lo, hi) (with hi at the peak
    including the cap atom); otherwise the idle rate is read from ``no_peer``
    at the same quantiles.
    """
    u1, x1 = _cdf_knots(with_peer, peak)
    u0, x0 = _cdf_knots(no_peer, peak)
    distinct = int(np.count_nonzero(np.diff(u1) > 0))
    if n_classes > distinct:
        warnings.warn(f"{n_classes} classes requested but the curve has {distinct} "
                      "distinct levels; identical classes are merged", stacklevel=3)
    edges = np.linspace(0.0, 1.0, n_classes + 1)
    out = []
    for q1, q2 in zip(edges[:-1], edges[1:]):
        if rule is RateRule.MEAN:
            r1 = _quantile_mean(u1, x1, q1, q2)
            if idle_rate is not None:
                r0 = idle_rate(_quantile(u1, x1, q1), _quantile(u1, x1, q2))
            else:
                r0 = _quantile_mean(u0, x0, q1, q2)
        else:
            r1 = _quantile(u1, x1, q2)
            r0 = _quantile(u0, x0, q2)
        out.append(FlowClass(1.0 / n_classes, float(max(r0, r1)), float(r1)))
    return _merge(out)


def extract_classes(macro_pair: tuple[CcdfCurve, CcdfCurve],
                    small_pair: tuple[CcdfCurve, CcdfCurve] | None,
                    n_macro: int, n_small: int, split: CoverageSplit,
                    rule: RateRule = RateRule.MEAN, peak: float = 98.0,
                    macro_idle_rate=None, small_idle_rate=None) -> FlowClassSet:
    """Build flow classes from (busy-peer, idle-peer) CCDF pairs of each cell.

    ``small_pair`` may be None when no small cell serves traffic. The
    optional ``*_idle_rate(lo, hi)`` callables switch the idle-peer rate to
    conditional pairing (see :func:`conditional_idle_rate`).
    """
    if n_macro < 1 or n_small < 1:
        raise ValueError("class counts must be >= 1")
    macro = _classes_from_curves(macro_pair[0], macro_pair[1], n_macro, rule, peak, macro_idle_rate)
    small: tuple[FlowClass, ...] = ()
    if small_pair is not None and split.small_mass > 0:
        small = _classes_from_curves(small_pair[0], small_pair[1], n_small, rule, peak, small_idle_rate)
    return FlowClassSet(macro, small, split)


def conditional_idle_rate(scenario: Scenario, cell: str):
    """Mean idle-peer rate over users whose busy-peer rate lies in a band.

    Returns ``fn(lo, hi)``. The band is [lo, hi); a band reaching the peak
    rate also covers the users capped at the peak.
    """
    curve = scenario.link
    peak = curve.peak_mbps
    if cell == "macro":
        mass_above = macro_mass_above

        def weight(r, t):
            g = np.asarray(g_factor(r, scenario), dtype=float)
            with np.errstate(divide="ignore"):
                sinr = np.where(g > 0, 1.0 / np.maximum(g, 1e-300), np.inf)
            return np.broadcast_to(link.throughput_of_sinr(sinr, curve), np.shape(t))
    elif cell == "small":
        mass_above = small_mass_above

        def weight(r, t):
            return link.throughput_of_sinr(sinr_small(r, t, scenario, interference_free=True), curve)
    else:
        raise ValueError(f"unknown cell {cell!r}")

    cache: dict[float, tuple[float, float]] = {}

    def above(level: float) -> tuple[float, float]:
        if level not in cache:
            cache[level] = (mass_above(level, scenario, Regime.WITH_PEER),
                            mass_above(level, scenario, Regime.WITH_PEER, weight))
        return cache[level]

    def fn(lo: float, hi: float) -> float:
        n_lo, w_lo = above(lo)
        if hi >= peak:
            n_hi = w_hi = 0.0
        else:
            n_hi, w_hi = above(hi)
        mass = n_lo - n_hi
        if mass <= 1e-14 * max(n_lo, 1e-300):
            # degenerate band (inside the cap atom): use the users at the band itself
            n_lo, w_lo = above(min(lo, peak))
            return w_lo / n_lo if n_lo > 0 else peak
        return (w_lo - w_hi) / mass

    return fn


def build_classes(scenario: Scenario, n_macro: int = 10, n_small: int = 10,
                  rule: RateRule = RateRule.MEAN, pairing: Pairing = Pairing.CONDITIONAL,
                  levels: np.ndarray | None = None) -> FlowClassSet:
    """Closed-form curves of a scenario turned into flow classes."""
    levels = default_levels(scenario.link) if levels is None else levels
    split = coverage_split(scenario)
    peak = scenario.link.peak_mbps
    if not scenario.has_small_cell:
        base = ccdf_curve(scenario, "macro_only", levels=levels)
        return extract_classes((base, base), None, n_macro, n_small, split, rule, peak)
    curves = {(c, r): ccdf_curve(scenario, c, r, levels) for c in ("macro", "small") for r in Regime}
    cond = pairing is Pairing.CONDITIONAL
    return extract_classes(
        (curves["macro", Regime.WITH_PEER], curves["macro", Regime.WITHOUT_PEER]),
        (curves["small", Regime.WITH_PEER], curves["small", Regime.WITHOUT_PEER]),
        n_macro, n_small, split, rule, peak,
        macro_idle_rate=conditional_idle_rate(scenario, "macro") if cond else None,
        small_idle_rate=conditional_idle_rate(scenario, "small") if cond else None,
    )


def _classes_from_samples(with_peer: np.ndarray, no_peer: np.ndarray, n_classes: int,
                          rule: RateRule) -> tuple[FlowClass, ...]:
    if with_peer.size == 0:
        return ()
    order = np.lexsort((no_peer, with_peer))
    out = []
    for idx in np.array_split(order, n_classes):
        if idx.size == 0:
            continue
        agg = np.mean if rule is RateRule.MEAN else np.max
        out.append(FlowClass(idx.size / with_peer.size, float(agg(no_peer[idx])), float(agg(with_peer[idx]))))
    return _merge(out)


def monte_carlo_classes(scenario: Scenario, n_macro: int, n_small: int, n_samples: int, seed: int,
                        rule: RateRule = RateRule.MEAN) -> FlowClassSet:
    """Position-sampling counterpart of :func:`extract_classes`.

    Both rates are computed at each sampled position; users are binned by
    their busy-peer rate, so the pairing is exact per user.
    """
    pos = sample_positions(scenario, n_samples, seed)
    rates = sampled_rates(scenario, pos)
    n_s = int(rates.small_served.sum())
    disk = pos.acceptance
    split = CoverageSplit(disk * (n_samples - n_s) / n_samples, disk * n_s / n_samples)
    macro = _classes_from_samples(rates.macro_with_peer, rates.macro_without_peer, n_macro, rule)
    small = _classes_from_samples(rates.small_with_peer, rates.small_without_peer, n_small, rule)
    return FlowClassSet(macro, small, split)
