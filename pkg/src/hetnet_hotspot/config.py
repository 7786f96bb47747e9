"""Run configuration: INI-style file with fixed sections, and the built-in preset.

Units live in key names. Angles are given in multiples of pi
(``theta_h_pi = 0.3333333333333333`` is pi/3).
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .link import LinkCurve
from .network import (
    Hotspot,
    Scenario,
    SmallCell,
    db_to_linear,
    effective_power_mw,
    equal_area_radius,
    thermal_noise_mw,
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the file line when known."""


@dataclass
class NetworkSection:
    delta_km: float = 1.0
    cell_radius_km: float | None = None  # default: equal-area disk
    macro_power_dbm: float = 46.0
    macro_antenna_gain_db: float = 18.0
    macro_pathloss_db: float = 151.0
    macro_pathloss_slope_db: float = 37.6
    interferer_load: float = 1.0
    noise_figure_db: float = 9.0
    noise_power_dbm: float | None = None  # overrides thermal noise + figure
    omega_override: float | None = None


@dataclass
class HotspotSection:
    r_h_km: float = 0.5
    theta_h_pi: float = 1.0 / 3.0
    spread_km: float = 0.2


@dataclass
class SmallCellSection:
    enabled: bool = True
    power_dbm: float = 30.0
    antenna_gain_db: float = 6.0
    pathloss_db: float = 148.0
    pathloss_slope_db: float = 36.7
    # the closed forms need one exponent; the small-cell slope is only
    # honoured by the sampling path when this is set
    own_slope_for_sampling: bool = False
    offset_m: float = 0.0  # radial positioning error between hotspot and small cell
    offset_direction: str = "outward"  # outward: R_s = R_h + offset; inward: towards the macro
    theta_s_pi: float | None = None  # default: same angle as the hotspot


@dataclass
class LinkSection:
    k1: float = 0.85
    k2: float = 1.9
    bandwidth_mhz: float = 20.0
    peak_mbps: float = 98.0


@dataclass
class TrafficSection:
    file_size_mbit: float = 2.0
    classes_macro: int = 10
    classes_small: int = 10
    rate_rule: str = "mean"


@dataclass
class SweepSection:
    r_h_start_km: float = 0.05
    r_h_stop_km: float = 0.5
    r_h_step_km: float = 0.05
    offsets_m: list[float] = field(default_factory=lambda: [0.0, 60.0, 120.0])
    lambda_start: float = 0.0
    lambda_stop: float = 20.0
    lambda_step: float = 2.0
    ccdf_levels: int = 200
    mc_samples: int = 1_000_000


@dataclass
class SimSection:
    seed: int = 12345
    warmup_events: int | None = None  # default: 20% of measured
    measured_events: int = 1_000_000
    replications: int = 10
    guard: int = 10_000


@dataclass
class ExperimentConfig:
    network: NetworkSection = field(default_factory=NetworkSection)
    hotspot: HotspotSection = field(default_factory=HotspotSection)
    small_cell: SmallCellSection = field(default_factory=SmallCellSection)
    link: LinkSection = field(default_factory=LinkSection)
    traffic: TrafficSection = field(default_factory=TrafficSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    sim: SimSection = field(default_factory=SimSection)

    # -- derived objects -------------------------------------------------

    def link_curve(self) -> LinkCurve:
        s = self.link
        return LinkCurve(s.k1, s.k2, s.bandwidth_mhz, s.peak_mbps)

    def macro_power_mw(self) -> float:
        n = self.network
        return effective_power_mw(n.macro_power_dbm, n.macro_antenna_gain_db, n.macro_pathloss_db)

    def small_power_mw(self) -> float:
        s = self.small_cell
        return effective_power_mw(s.power_dbm, s.antenna_gain_db, s.pathloss_db)

    def noise_mw(self) -> float:
        n = self.network
        if n.noise_power_dbm is not None:
            return float(db_to_linear(n.noise_power_dbm))
        return thermal_noise_mw(self.link.bandwidth_mhz, n.noise_figure_db)

    def small_cell_at(self, r_h_km: float, offset_m: float) -> SmallCell:
        theta = self.small_cell.theta_s_pi
        angle = math.pi * (self.hotspot.theta_h_pi if theta is None else theta)
        kappa = self.small_power_mw() / self.macro_power_mw()
        sign = 1.0 if self.small_cell.offset_direction == "outward" else -1.0
        radial = r_h_km + sign * offset_m / 1000.0
        if radial < 0:
            # passed through the macro site: same distance to the hotspot, opposite side
            radial, angle = -radial, angle + math.pi
        return SmallCell(radial, angle, kappa)

    def scenario(self, r_h_km: float | None = None, offset_m: float | None = None,
                 small_cell: bool | None = None) -> Scenario:
        """Scenario for the configured (or overridden) hotspot and small cell."""
        n, h = self.network, self.hotspot
        r_h = h.r_h_km if r_h_km is None else r_h_km
        offset = self.small_cell.offset_m if offset_m is None else offset_m
        enabled = self.small_cell.enabled if small_cell is None else small_cell
        radius = equal_area_radius(n.delta_km) if n.cell_radius_km is None else n.cell_radius_km
        small_b = None
        if self.small_cell.own_slope_for_sampling:
            small_b = self.small_cell.pathloss_slope_db / 20.0
        return Scenario(
            delta_km=n.delta_km,
            cell_radius_km=radius,
            macro_power_mw=self.macro_power_mw(),
            half_exponent=n.macro_pathloss_slope_db / 20.0,
            interferer_load=n.interferer_load,
            noise_mw=self.noise_mw(),
            hotspot=Hotspot(r_h, math.pi * h.theta_h_pi, h.spread_km),
            link=self.link_curve(),
            small_cell=self.small_cell_at(r_h, offset) if enabled else None,
            small_half_exponent=small_b,
            omega_override=n.omega_override,
        )

    # -- (de)serialization -------------------------------------------------

    def to_ini(self) -> str:
        out = io.StringIO()
        for sec in fields(self):
            out.write(f"[{sec.name}]\n")
            section = getattr(self, sec.name)
            for f in fields(section):
                value = getattr(section, f.name)
                if value is None:
                    continue
                out.write(f"{f.name} = {_format_value(value)}\n")
            out.write("\n")
        return out.getvalue()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


_SECTION_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None:
            m = re.match(r"\s*([^=:#;\s]+)\s*[=:]", line)
            if m and m.group(1).strip().lower() == key:
                return lineno
    return None


def _convert(raw: str, annotation: str, where: str):
    ann = annotation.replace(" | None", "")
    raw = raw.strip()
    try:
        if ann == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if ann == "int":
            return int(raw)
        if ann == "float":
            return float(raw)
        if ann == "list[float]":
            return [float(x) for x in raw.split(",") if x.strip()]
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {ann}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse INI text; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in _SECTION_TYPES:
            line = _line_of(text, section, None)
            raise ConfigError(f"{source}:{line}: unknown section [{section}]")
        target = getattr(cfg, section)
        annotations = {f.name: f.type for f in fields(target)}
        for key, raw in parser.items(section):
            line = _line_of(text, section, key)
            where = f"{source}:{line}"
            if key not in annotations:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
            setattr(target, key, _convert(raw, annotations[key], where))
    validate_config(cfg, text, source)
    return cfg


def validate_config(cfg: ExperimentConfig, text: str = "", source: str = "<config>") -> None:
    def fail(section, key, msg):
        line = _line_of(text, section, key) if text else None
        raise ConfigError(f"{source}:{line}: [{section}] {key}: {msg}")

    if cfg.network.delta_km <= 0:
        fail("network", "delta_km", "must be > 0")
    if not 0 <= cfg.network.interferer_load <= 1:
        fail("network", "interferer_load", "must lie in [0, 1]")
    if cfg.network.macro_pathloss_slope_db <= 20:
        fail("network", "macro_pathloss_slope_db", "pathloss exponent must exceed 2")
    if cfg.hotspot.spread_km <= 0:
        fail("hotspot", "spread_km", "must be > 0")
    if cfg.traffic.file_size_mbit <= 0:
        fail("traffic", "file_size_mbit", "must be > 0")
    if cfg.traffic.classes_macro < 1:
        fail("traffic", "classes_macro", "must be >= 1")
    if cfg.traffic.classes_small < 1:
        fail("traffic", "classes_small", "must be >= 1")
    if cfg.traffic.rate_rule not in ("mean", "max"):
        fail("traffic", "rate_rule", "must be 'mean' or 'max'")
    if cfg.small_cell.offset_direction not in ("outward", "inward"):
        fail("small_cell", "offset_direction", "must be 'outward' or 'inward'")
    if cfg.sim.measured_events <= 0:
        fail("sim", "measured_events", "must be > 0")
    if cfg.sim.replications < 1:
        fail("sim", "replications", "must be >= 1")
    if cfg.sim.guard <= 0:
        fail("sim", "guard", "must be > 0")
    if cfg.sweep.lambda_step <= 0:
        fail("sweep", "lambda_step", "must be > 0")
    if cfg.sweep.r_h_step_km <= 0:
        fail("sweep", "r_h_step_km", "must be > 0")
    for key in ("k1", "k2", "bandwidth_mhz", "peak_mbps"):
        if getattr(cfg.link, key) <= 0:
            fail("link", key, "must be > 0")
    try:
        cfg.scenario()
    except ValueError as exc:
        raise ConfigError(f"{source}: inconsistent scenario: {exc}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def preset_config() -> ExperimentConfig:
    """Default parameter preset (hotspot at 0.5 km, pi/3)."""
    return ExperimentConfig()


def preset_scenario(offset_m: float = 0.0, small_cell: bool = True, r_h_km: float | None = None) -> Scenario:
    return preset_config().scenario(r_h_km=r_h_km, offset_m=offset_m, small_cell=small_cell)
