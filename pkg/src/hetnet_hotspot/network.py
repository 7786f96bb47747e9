"""Network geometry: macro lattice, small cell, hotspot measure, SINRs.

Positions are polar ``(r, theta)`` around the serving macro site, in km and
radians. Powers are effective linear mW at 1 km: they already include
antenna gains and the pathloss constant, so the received power at distance
``d`` is ``P * d ** (-2b)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .link import LinkCurve
from .numerics import DomainError, hurwitz_zeta, invert_monotone, riemann_zeta


class Cell(enum.Enum):
    MACRO = "macro"
    SMALL = "small"


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def effective_power_mw(tx_dbm: float, antenna_gain_db: float, pathloss_at_1km_db: float) -> float:
    """Linear received power at 1 km (mW) for a transmitter and its pathloss law."""
    return float(db_to_linear(tx_dbm + antenna_gain_db - pathloss_at_1km_db))


def thermal_noise_mw(bandwidth_mhz: float, noise_figure_db: float = 9.0) -> float:
    """kTB at 290 K (-174 dBm/Hz) plus receiver noise figure, in mW."""
    dbm = -174.0 + 10.0 * math.log10(bandwidth_mhz * 1e6) + noise_figure_db
    return float(db_to_linear(dbm))


def equal_area_radius(delta_km: float) -> float:
    """Radius of the disk with the same area as a hexagonal cell."""
    return delta_km * math.sqrt(math.sqrt(3.0) / (2.0 * math.pi))


def hexagonal_omega(b: float) -> float:
    """Lattice constant ``3^-b zeta(b) (zeta(b, 1/3) - zeta(b, 2/3))``."""
    return 3.0**-b * riemann_zeta(b) * (hurwitz_zeta(b, 1.0 / 3.0) - hurwitz_zeta(b, 2.0 / 3.0))


@dataclass(frozen=True)
class SmallCell:
    radius_km: float
    angle: float
    power_ratio: float

    def __post_init__(self):
        if self.radius_km < 0:
            raise ValueError("small cell radius must be >= 0")
        if not 0.0 <= self.power_ratio <= 1.0:
            raise ValueError("small cell power ratio must lie in [0, 1]")


@dataclass(frozen=True)
class Hotspot:
    radius_km: float
    angle: float
    spread_km: float

    def __post_init__(self):
        if self.radius_km < 0:
            raise ValueError("hotspot radius must be >= 0")
        if not self.spread_km > 0:
            raise ValueError("hotspot spread must be > 0")


@dataclass(frozen=True)
class Scenario:
    """Immutable description of the macro network, small cell and hotspot.

    ``small_half_exponent`` differs from ``half_exponent`` only for the
    sampling path; the closed forms refuse such scenarios.
    ``omega_override`` replaces the lattice constant (used for calibration
    runs and for negative controls of the validation suite).
    """

    delta_km: float
    cell_radius_km: float
    macro_power_mw: float
    half_exponent: float
    interferer_load: float
    noise_mw: float
    hotspot: Hotspot
    link: LinkCurve = field(default_factory=LinkCurve)
    small_cell: SmallCell | None = None
    small_half_exponent: float | None = None
    omega_override: float | None = None

    def __post_init__(self):
        if not self.delta_km > 0:
            raise ValueError("inter-site distance must be > 0")
        if not 0 < self.cell_radius_km < self.delta_km:
            raise ValueError("cell radius must satisfy 0 < R < delta")
        if not self.macro_power_mw > 0:
            raise ValueError("macro power must be > 0")
        if not self.half_exponent > 1:
            raise ValueError("pathloss half-exponent b must be > 1")
        if self.small_half_exponent is not None and not self.small_half_exponent > 1:
            raise ValueError("small-cell half-exponent must be > 1")
        if not 0.0 <= self.interferer_load <= 1.0:
            raise ValueError("interferer load must lie in [0, 1]")
        if self.noise_mw < 0:
            raise ValueError("noise power must be >= 0")
        if not self.hotspot.radius_km < self.cell_radius_km:
            raise ValueError("hotspot centre must lie inside the cell (R_h < R)")

    @property
    def kappa(self) -> float:
        return 0.0 if self.small_cell is None else self.small_cell.power_ratio

    @property
    def b_small(self) -> float:
        return self.half_exponent if self.small_half_exponent is None else self.small_half_exponent

    @property
    def has_small_cell(self) -> bool:
        return self.small_cell is not None and self.small_cell.power_ratio > 0

    @cached_property
    def omega(self) -> float:
        if self.omega_override is not None:
            return self.omega_override
        return hexagonal_omega(self.half_exponent)

    @cached_property
    def g_at_cell_edge(self) -> float:
        return float(g_factor(self.cell_radius_km, self))

    def with_small_cell(self, small_cell: SmallCell | None) -> "Scenario":
        return replace(self, small_cell=small_cell)

    def with_hotspot(self, hotspot: Hotspot) -> "Scenario":
        return replace(self, hotspot=hotspot)


def _distance_sq(r, theta, radius, angle):
    # |r e^{i theta} - radius e^{i angle}|^2
    return r * r + radius * radius - 2.0 * r * radius * np.cos(theta - angle)


def traffic_density(r, theta, scenario: Scenario):
    """Hotspot measure per ``dr dtheta`` (Gaussian in the plane, times r)."""
    hs = scenario.hotspot
    a2 = hs.spread_km**2
    d2 = _distance_sq(np.asarray(r, dtype=float), theta, hs.radius_km, hs.angle)
    return np.exp(-d2 / (2.0 * a2)) * r / (2.0 * math.pi * a2)


def _small_over_macro_rx(r, theta, scenario: Scenario):
    """Received small-cell power divided by received serving-macro power."""
    sc = scenario.small_cell
    r = np.asarray(r, dtype=float)
    d2 = _distance_sq(r, theta, sc.radius_km, sc.angle)
    b, bs = scenario.half_exponent, scenario.b_small
    with np.errstate(divide="ignore", invalid="ignore"):
        return sc.power_ratio * r ** (2.0 * b) / d2**bs


def associate(r, theta, scenario: Scenario):
    """Serving cell per position: True where the small cell wins the RSRP race.

    Ties go to the macro cell. Returns a bool array (or a Cell for scalars).
    """
    r_arr = np.asarray(r, dtype=float)
    if not scenario.has_small_cell:
        small = np.zeros(np.broadcast(r_arr, np.asarray(theta)).shape, dtype=bool)
    else:
        ratio = _small_over_macro_rx(r_arr, theta, scenario)
        small = np.where(np.isnan(ratio), True, ratio > 1.0)
    if small.ndim == 0:
        return Cell.SMALL if bool(small) else Cell.MACRO
    return small


def g_factor(r, scenario: Scenario):
    """Interference-plus-noise factor of the macro-only hexagonal network."""
    r = np.asarray(r, dtype=float)
    delta = scenario.delta_km
    if np.any(r >= delta) or np.any(r < 0):
        raise DomainError("g_factor requires 0 <= r < delta")
    b = scenario.half_exponent
    x2 = (r / delta) ** 2
    shape = (1.0 + (1.0 - b) ** 2 * x2) / (1.0 - x2) ** (2.0 * b - 1.0) + scenario.omega - 1.0
    noise = scenario.noise_mw / scenario.macro_power_mw
    out = 6.0 * scenario.interferer_load * x2**b * shape + noise * r ** (2.0 * b)
    return out if out.ndim else float(out)


def lattice_sites(rings: int, delta_km: float = 1.0) -> np.ndarray:
    """Complex positions of the macro sites within ``rings`` hexagonal rings, origin excluded."""
    if rings < 1:
        raise ValueError("rings must be >= 1")
    idx = np.arange(-rings, rings + 1)
    p, q = np.meshgrid(idx, idx, indexing="ij")
    hexdist = np.maximum(np.maximum(np.abs(p), np.abs(q)), np.abs(p + q))
    keep = (hexdist >= 1) & (hexdist <= rings)
    return delta_km * (p[keep] + q[keep] * np.exp(1j * math.pi / 3.0))


def g_bruteforce(r: float, theta: float, rings: int, scenario: Scenario) -> float:
    """Interference factor summed directly over the lattice sites."""
    if r >= scenario.delta_km:
        raise DomainError("g_bruteforce requires r < delta")
    if r == 0:
        return 0.0
    b = scenario.half_exponent
    z = r * np.exp(1j * theta)
    sites = lattice_sites(rings, scenario.delta_km)
    # sort so the float summation order is fixed and small terms go first
    terms = np.sort(np.abs(z - sites) ** (-2.0 * b))
    interference = scenario.interferer_load * scenario.macro_power_mw * math.fsum(terms)
    return (interference + scenario.noise_mw) / (scenario.macro_power_mw * r ** (-2.0 * b))


def g_bruteforce_mean(r: float, rings: int, scenario: Scenario, n_angles: int = 360) -> float:
    """Angle average of :func:`g_bruteforce` over a uniform grid."""
    angles = 2.0 * math.pi * np.arange(n_angles) / n_angles
    return math.fsum(g_bruteforce(r, t, rings, scenario) for t in angles) / n_angles


def g_inverse(y: float, scenario: Scenario, tol: float = 1e-13) -> float:
    """Radius where g reaches ``y``, saturating at the cell radius."""
    if y < 0:
        raise DomainError("g_inverse requires y >= 0")
    R = scenario.cell_radius_km
    if y >= scenario.g_at_cell_edge:
        return R
    return invert_monotone(lambda x: float(g_factor(x, scenario)), y, 0.0, R, tol)


def sinr_macro(r, theta, scenario: Scenario):
    """SINR of a macro-served UE, interfered by the small cell when one is active."""
    r = np.asarray(r, dtype=float)
    g = g_factor(r, scenario)
    if not scenario.has_small_cell:
        with np.errstate(divide="ignore"):
            out = 1.0 / np.asarray(g)
        return out if out.ndim else float(out)
    ratio = _small_over_macro_rx(r, theta, scenario)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 / (g + ratio)
    out = np.where(np.isnan(ratio) | np.isinf(ratio), 0.0, out)
    return out if out.ndim else float(out)


def sinr_small(r, theta, scenario: Scenario, interference_free: bool = False):
    """SINR of a small-cell-served UE.

    With ``interference_free`` the serving macro's own interference is
    dropped, leaving only the other macro sites and noise.
    """
    if scenario.small_cell is None:
        raise ValueError("sinr_small needs a configured small cell")
    r = np.asarray(r, dtype=float)
    g = np.asarray(g_factor(r, scenario))
    ratio = _small_over_macro_rx(r, theta, scenario)
    denom = g if interference_free else g + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ratio / denom
    # r = 0: serving-macro power diverges
    out = np.where(r == 0, 0.0, out)
    out = np.where(np.isnan(out), np.inf, out)
    return out if out.ndim else float(out)
