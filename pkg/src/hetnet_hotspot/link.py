"""Link-level curve: SINR to peak user throughput."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import DomainError


@dataclass(frozen=True)
class LinkCurve:
    """Modified Shannon fit ``min(k1 * W * ln(1 + k2 * sinr), peak)``.

    Defaults are the UE category 3 / 20 MHz fit.
    """

    k1: float = 0.85
    k2: float = 1.9
    bandwidth_mhz: float = 20.0
    peak_mbps: float = 98.0

    def __post_init__(self):
        for name in ("k1", "k2", "bandwidth_mhz", "peak_mbps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"LinkCurve.{name} must be > 0")

    @property
    def saturation_sinr(self) -> float:
        """Linear SINR at which the curve reaches its cap."""
        return math.expm1(self.peak_mbps / (self.k1 * self.bandwidth_mhz)) / self.k2


def throughput_of_sinr(sinr, curve: LinkCurve):
    """Peak throughput in Mbps for a linear SINR (scalar or array)."""
    arr = np.asarray(sinr, dtype=float)
    if np.any(arr < 0):
        raise DomainError("SINR must be non-negative")
    with np.errstate(over="ignore"):
        rate = curve.k1 * curve.bandwidth_mhz * np.log1p(curve.k2 * arr)
    out = np.minimum(rate, curve.peak_mbps)
    return out if out.ndim else float(out)


def psi(level_mbps: float, curve: LinkCurve) -> float:
    """Threshold on the inverse SINR: ``rate >= level`` iff ``1/sinr <= psi(level)``.

    Only defined for ``0 < level <= peak``; callers handle the other cases.
    """
    level = float(level_mbps)
    if not level > 0:
        raise DomainError("psi is undefined for non-positive levels")
    if level > curve.peak_mbps:
        raise DomainError(f"level {level} above the throughput cap {curve.peak_mbps}")
    return curve.k2 / math.expm1(level / (curve.k1 * curve.bandwidth_mhz))
