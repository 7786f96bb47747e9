"""Experiment families, validation suite and run manifests.

Every command writes its CSVs into one output directory together with the
resolved ``config.ini`` and a ``manifest.json`` listing sha256 checksums of
all outputs. Rerunning a command on the stored config reproduces the
analytic CSVs byte for byte; simulation CSVs are identical for equal seeds.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .classes import FlowClass, FlowClassSet, RateRule, build_classes, monte_carlo_classes
from .config import ExperimentConfig
from .dynamics import (
    InstabilityError,
    TrafficModel,
    class_throughput,
    fixed_point_loads,
    solve_loads,
)
from .network import Scenario, g_bruteforce_mean, g_factor
from .simulator import SimConfig, SimulationInstabilityError
from .simulator import run as simulate
from .static import (
    Regime,
    ccdf_curve,
    coverage_split,
    default_levels,
    mean_peak_throughput,
    monte_carlo_ccdf,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# output plumbing


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return repr(x) if math.isfinite(x) else ("" if math.isnan(x) else repr(x))


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return buf.getvalue()


@dataclass
class RunManifest:
    command: str
    config: dict
    config_ini: str
    seeds: dict
    version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


class RunWriter:
    """Collects the output files of one command and its manifest."""

    def __init__(self, out_dir: str | Path, command: str, cfg: ExperimentConfig, seeds: dict | None = None):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        ini = cfg.to_ini()
        self.manifest = RunManifest(command, cfg.to_dict(), ini, seeds or {"sim_seed": cfg.sim.seed})
        self.write_text("config.ini", ini)

    def write_text(self, name: str, text: str) -> Path:
        path = self.out / name
        data = text.encode("utf-8")
        path.write_bytes(data)
        self.manifest.outputs[name] = hashlib.sha256(data).hexdigest()
        return path

    def write_csv(self, name: str, header: list[str], rows: list[list]) -> Path:
        return self.write_text(name, _csv_text(header, rows))

    def add_file(self, name: str) -> None:
        self.manifest.outputs[name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()

    def finish(self) -> Path:
        path = self.out / "manifest.json"
        path.write_text(self.manifest.to_json() + "\n")
        return path


def _map(fn, items: list, jobs: int) -> list:
    """Ordered map, optionally over worker processes."""
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _offset_tag(offset_m: float) -> str:
    return f"{offset_m:g}".replace("-", "m").replace(".", "p")


def _grid(start: float, stop: float, step: float) -> np.ndarray:
    if stop < start:
        return np.zeros(0)
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 12)


def _plot(writer: RunWriter, name: str, x, series: dict, xlabel: str, ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in series.items():
        ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(writer.out / name, dpi=120, metadata={"Software": None})
    plt.close(fig)
    writer.add_file(name)


# ---------------------------------------------------------------------------
# static CCDF curves


def _static_task(args):
    cfg, offset, levels = args
    sc = cfg.scenario(offset_m=offset)
    curves = {
        "macro": ccdf_curve(sc, "macro", Regime.WITH_PEER, levels),
        "small": ccdf_curve(sc, "small", Regime.WITH_PEER, levels),
        "macro_idle_peer": ccdf_curve(sc, "macro", Regime.WITHOUT_PEER, levels),
        "small_isolated": ccdf_curve(sc, "small", Regime.WITHOUT_PEER, levels),
    }
    # per-cell curves rescaled to all hotspot users in the disk
    split = coverage_split(sc)
    curves["macro_system"] = replace(curves["macro"], probs=curves["macro"].probs * split.macro_share)
    curves["small_system"] = replace(curves["small"], probs=curves["small"].probs * split.small_share)
    return offset, {k: v.to_csv() for k, v in curves.items()}, curves


def cmd_static_ccdf(cfg: ExperimentConfig, out: str | Path, jobs: int = 1, plot: bool = False) -> RunWriter:
    """Throughput CCDFs: macro-only network, then each small-cell offset."""
    w = RunWriter(out, "static-ccdf", cfg)
    levels = default_levels(cfg.link_curve(), cfg.sweep.ccdf_levels)
    base = cfg.scenario(small_cell=False)
    base_curve = ccdf_curve(base, "macro_only", levels=levels)
    w.write_text("ccdf_macro_only.csv", base_curve.to_csv())
    series = {"macro only": base_curve.probs}
    if cfg.small_cell.enabled and cfg.scenario().has_small_cell:
        for offset, texts, curves in _map(_static_task, [(cfg, o, levels) for o in cfg.sweep.offsets_m], jobs):
            tag = _offset_tag(offset)
            for kind, text in texts.items():
                w.write_text(f"ccdf_offset_{tag}m_{kind}.csv", text)
            series[f"macro, {offset:g} m"] = curves["macro"].probs
            series[f"small, {offset:g} m"] = curves["small"].probs
    if plot:
        _plot(w, "ccdf.png", levels, series, "peak throughput (Mbps)", "CCDF")
    w.finish()
    return w


# ---------------------------------------------------------------------------
# mean throughput versus hotspot position


def _sweep_task(args):
    cfg, r_h, offset = args
    n = cfg.network
    radius = cfg.scenario(small_cell=False).cell_radius_km
    if r_h >= radius:
        return r_h, offset, None, f"R_h = {r_h} km is not inside the cell (R = {radius:.6g} km)"
    if offset is not None:
        sc_pos = cfg.small_cell_at(r_h, offset)
        if sc_pos.radius_km >= n.delta_km:
            return r_h, offset, None, f"R_h + error = {sc_pos.radius_km:.6g} km reaches the next site"
    sc = cfg.scenario(r_h_km=r_h, offset_m=offset, small_cell=offset is not None)
    return r_h, offset, mean_peak_throughput(sc), None


def cmd_sweep_hotspot(cfg: ExperimentConfig, out: str | Path, jobs: int = 1, plot: bool = False) -> RunWriter:
    """Mean peak throughput against hotspot distance, baseline and each offset."""
    w = RunWriter(out, "sweep-hotspot", cfg)
    s = cfg.sweep
    grid = _grid(s.r_h_start_km, s.r_h_stop_km, s.r_h_step_km)
    offsets = list(s.offsets_m) if cfg.small_cell.enabled else []
    tasks = [(cfg, float(r), o) for r in grid for o in [None, *offsets]]
    results = _map(_sweep_task, tasks, jobs)
    table: dict = {}
    for r_h, offset, mt, why in results:
        if why:
            warnings.warn(f"sweep point skipped: {why}", stacklevel=2)
            log.warning("sweep point skipped: %s", why)
        table[(r_h, offset)] = mt
    header = ["r_h_km", "baseline_mbps"] + [f"offset_{_offset_tag(o)}m_mbps" for o in offsets]
    rows, detail = [], []
    for r in grid:
        r = float(r)
        row = [r]
        for o in [None, *offsets]:
            mt = table.get((r, o))
            row.append(None if mt is None else mt.overall)
            if mt is not None:
                detail.append(["baseline" if o is None else "small_cell", "" if o is None else _fmt(o), r,
                               mt.macro, mt.small, mt.overall])
        rows.append(row)
    w.write_csv("sweep_hotspot.csv", header, rows)
    w.write_csv("sweep_hotspot_detail.csv",
                ["scenario", "offset_m", "r_h_km", "macro_mbps", "small_mbps", "overall_mbps"], detail)
    if plot and rows:
        series = {h: [np.nan if x[i] is None else x[i] for x in rows] for i, h in enumerate(header) if i > 0}
        _plot(w, "sweep_hotspot.png", grid, series, "R_h (km)", "mean peak throughput (Mbps)")
    w.finish()
    return w


# ---------------------------------------------------------------------------
# absorption coefficient


def cmd_absorption(cfg: ExperimentConfig, out: str | Path, seed: int | None = None, simulate_mc: bool = False,
                   jobs: int = 1, plot: bool = False) -> RunWriter:
    """Traffic shares of both cells against the positioning error."""
    seed = cfg.sim.seed if seed is None else seed
    w = RunWriter(out, "absorption", cfg, {"mc_seed": seed})
    header = ["offset_m", "macro_share", "small_share"]
    if simulate_mc:
        header += ["mc_small_share", "mc_small_share_stderr"]
    rows = []
    for i, o in enumerate(cfg.sweep.offsets_m):
        sc = cfg.scenario(offset_m=o)
        split = coverage_split(sc)
        row = [o, split.macro_share, split.small_share]
        if simulate_mc:
            from .static import sample_positions, sampled_rates

            n = cfg.sweep.mc_samples
            pos = sample_positions(sc, n, _point_seed(seed, 0, i))
            share = float(sampled_rates(sc, pos).small_served.mean())
            row += [share, math.sqrt(share * (1.0 - share) / n)]
        rows.append(row)
    w.write_csv("absorption.csv", header, rows)
    if plot and rows:
        x = [r[0] for r in rows]
        _plot(w, "absorption.png", x, {"small share": [r[2] for r in rows], "macro share": [r[1] for r in rows]},
              "positioning error (m)", "traffic share")
    w.finish()
    return w


# ---------------------------------------------------------------------------
# dynamic level


def _point_seed(base: int, *key: int) -> int:
    return int(np.random.SeedSequence([int(base) % 2**63, *key]).generate_state(1, dtype=np.uint64)[0] % 2**63)


def scenario_classes(cfg: ExperimentConfig, sc: Scenario) -> FlowClassSet:
    t = cfg.traffic
    return build_classes(sc, t.classes_macro, t.classes_small, RateRule(t.rate_rule),
                         levels=default_levels(cfg.link_curve(), cfg.sweep.ccdf_levels))


def _dynamic_scenarios(cfg: ExperimentConfig) -> list[tuple[str, float | None, Scenario]]:
    out = [("baseline", None, cfg.scenario(small_cell=False))]
    if cfg.small_cell.enabled:
        out += [("small_cell", float(o), cfg.scenario(offset_m=o)) for o in cfg.sweep.offsets_m]
    return out


def _classes_task(args):
    cfg, sc = args
    return scenario_classes(cfg, sc)


def _dynamic_point(args):
    traffic, sim_cfg, do_sim = args
    try:
        perf = class_throughput(traffic, solve_loads(traffic))
    except InstabilityError as exc:
        return None, None, str(exc)
    stats = None
    if do_sim:
        try:
            stats = simulate(traffic, sim_cfg)
        except SimulationInstabilityError as exc:
            return perf, None, str(exc)
    return perf, stats, None


def cmd_dynamic(cfg: ExperimentConfig, out: str | Path, seed: int | None = None, do_sim: bool = False,
                jobs: int = 1, plot: bool = False) -> RunWriter:
    """Loads, flow counts and throughputs against the total arrival rate."""
    seed = cfg.sim.seed if seed is None else seed
    w = RunWriter(out, "dynamic", cfg, {"sim_seed": seed})
    s = cfg.sweep
    lambdas = _grid(s.lambda_start, s.lambda_stop, s.lambda_step)
    scen = _dynamic_scenarios(cfg)
    class_sets = _map(_classes_task, [(cfg, sc) for _, _, sc in scen], jobs)
    tasks, keys = [], []
    for i, ((name, off, _), fcs) in enumerate(zip(scen, class_sets)):
        tag = "baseline" if off is None else f"offset_{_offset_tag(off)}m"
        w.write_text(f"classes_{tag}.csv", fcs.to_csv())
        base = TrafficModel(0.0, cfg.traffic.file_size_mbit, fcs)
        for j, lam in enumerate(lambdas):
            sim_cfg = SimConfig(_point_seed(seed, i, j), cfg.sim.warmup_events, cfg.sim.measured_events,
                                cfg.sim.replications, cfg.sim.guard)
            tasks.append((base.with_lambda(float(lam)), sim_cfg, do_sim))
            keys.append((name, off, float(lam)))
    results = _map(_dynamic_point, tasks, jobs)

    load_h = ["scenario", "offset_m", "lambda_total", "unstable", "rho", "rho_small"]
    flow_h = ["scenario", "offset_m", "lambda_total", "unstable", "N_macro", "N_small"]
    if do_sim:
        load_h += ["sim_rho", "sim_rho_ci95", "sim_rho_small", "sim_rho_small_ci95"]
        flow_h += ["sim_N_macro", "sim_N_macro_ci95", "sim_N_small", "sim_N_small_ci95"]
    thr_h = ["scenario", "offset_m", "lambda_total", "unstable", "v_eq29_macro_mbps", "v_little_macro_mbps",
             "v_eq29_small_mbps", "v_little_small_mbps"]
    loads, flows, thr, perf_rows, sim_rows = [], [], [], [], []
    for (name, off, lam), (perf, stats, err) in zip(keys, results):
        off_s = "" if off is None else _fmt(off)
        unstable = perf is None
        if err:
            log.info("%s offset %s lambda %s: %s", name, off_s, lam, err)
        lr = [name, off_s, lam, unstable]
        fr = [name, off_s, lam, unstable]
        tr = [name, off_s, lam, unstable]
        if perf is None:
            lr += [None, None]
            fr += [None, None]
            tr += [None] * 4
        else:
            has_small = perf.small.p.size > 0
            lr += [perf.loads.rho, perf.loads.rho_small]
            fr += [perf.macro.total_flows, perf.small.total_flows]
            tr += [perf.macro.mean_v_eq29, perf.macro.mean_v_little,
                   perf.small.mean_v_eq29 if has_small else None, perf.small.mean_v_little if has_small else None]
            for cell, rep in (("macro", perf.macro), ("small", perf.small)):
                for k in range(rep.p.size):
                    perf_rows.append([name, off_s, lam, cell, k + 1, rep.arrival_rate[k], rep.mean_flows[k],
                                      rep.sojourn_s[k], rep.v_eq29[k], rep.v_little[k]])
        if do_sim:
            if stats is None:
                lr += [None] * 4
                fr += [None] * 4
            else:
                lr += [stats.load.mean, stats.load.ci95_halfwidth, stats.load_small.mean,
                       stats.load_small.ci95_halfwidth]
                fr += [stats.total_flows.mean, stats.total_flows.ci95_halfwidth, stats.total_flows_small.mean,
                       stats.total_flows_small.ci95_halfwidth]
                for line in stats.to_csv().splitlines()[1:]:
                    sim_rows.append([name, off_s, _fmt(lam), *line.split(",")])
        loads.append(lr)
        flows.append(fr)
        thr.append(tr)
    w.write_csv("dynamic_loads.csv", load_h, loads)
    w.write_csv("dynamic_flows.csv", flow_h, flows)
    w.write_csv("dynamic_throughput.csv", thr_h, thr)
    w.write_csv("dynamic_classes.csv", ["scenario", "offset_m", "lambda_total", "cell", "class", "lambda",
                                        "N_mean", "sojourn_s", "v_eq29_mbps", "v_little_mbps"], perf_rows)
    if do_sim:
        w.write_csv("dynamic_simulation.csv", ["scenario", "offset_m", "lambda_total", "cell", "metric", "mean",
                                               "ci95_halfwidth", "replications"], sim_rows)
    if plot:
        series = {}
        for name, off, _ in scen:
            label = name if off is None else f"{off:g} m"
            sel = [r for r in loads if r[0] == name and r[1] == ("" if off is None else _fmt(off))]
            series[f"rho {label}"] = [np.nan if r[4] is None else r[4] for r in sel]
            if off is not None:
                series[f"rho small {label}"] = [np.nan if r[5] is None else r[5] for r in sel]
        _plot(w, "dynamic_loads.png", lambdas, series, "lambda_Tot (flows/s)", "load")
    w.finish()
    return w


# ---------------------------------------------------------------------------
# validation suite


@dataclass
class Check:
    name: str
    passed: bool
    measured: dict
    tolerance: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "measured": self.measured,
                "tolerance": self.tolerance}


A1_RADII = (0.1, 0.2, 0.3, 0.37)
A1_RINGS = 30


def check_interference(sc: Scenario, rings: int = A1_RINGS, n_angles: int = 360) -> Check:
    """Closed-form g against the angle-averaged lattice sum."""
    errs = {}
    for x in A1_RADII:
        r = x * sc.delta_km
        ref = g_bruteforce_mean(r, rings, sc, n_angles)
        errs[f"r={x}delta"] = abs(float(g_factor(r, sc)) / ref - 1.0)
    worst = max(errs.values())
    return Check("interference_closed_form_vs_lattice", worst <= 0.05,
                 {"relative_error": errs, "max_relative_error": worst, "omega": sc.omega},
                 {"max_relative_error": 0.05})


def calibrated_omega(sc: Scenario, rings: int = A1_RINGS, n_angles: int = 360) -> float:
    """Lattice constant that best matches the lattice sum (least squares on relative error)."""
    b = sc.half_exponent
    delta = sc.delta_km
    num = den = 0.0
    for x in A1_RADII:
        r = x * delta
        ref = g_bruteforce_mean(r, rings, sc, n_angles)
        # g is affine in omega: g = c0 + c1 * omega
        c1 = 6.0 * sc.interferer_load * x ** (2 * b)
        c0 = float(g_factor(r, replace(sc, omega_override=0.0)))
        num += c1 * (ref - c0) / ref**2
        den += c1 * c1 / ref**2
    return num / den


def check_ccdf(cfg: ExperimentConfig, seed: int, n_levels: int = 50) -> Check:
    """Closed-form CCDFs against position sampling, 3 standard errors at 95% of levels."""
    measured = {}
    ok = True
    levels = np.linspace(0.0, cfg.link.peak_mbps, n_levels + 1)[1:]
    for i, o in enumerate(cfg.sweep.offsets_m):
        sc = cfg.scenario(offset_m=o)
        mc = monte_carlo_ccdf(sc, cfg.sweep.mc_samples, _point_seed(seed, 1, i), levels)
        split = coverage_split(sc)
        pairs = {
            "macro": (mc.macro, ccdf_curve(sc, "macro", Regime.WITH_PEER, levels)),
            "small": (mc.small, ccdf_curve(sc, "small", Regime.WITH_PEER, levels)),
            "small_isolated": (mc.small_without_peer, ccdf_curve(sc, "small", Regime.WITHOUT_PEER, levels)),
        }
        for kind, (emp, cf) in pairs.items():
            n_cell = mc.n_macro if kind == "macro" else mc.n_small
            # binomial standard error under the closed-form probability
            se = np.sqrt(np.clip(cf.probs * (1.0 - cf.probs), 0.0, None) / n_cell)
            inside = np.abs(cf.probs - emp.probs) <= 3.0 * se
            # exact zeros on both sides count as agreement
            inside |= (emp.probs == 0) & (cf.probs == 0)
            frac = float(np.mean(inside))
            measured[f"offset_{_offset_tag(o)}m_{kind}"] = frac
            ok &= frac >= 0.95
        measured[f"offset_{_offset_tag(o)}m_small_share"] = {"closed_form": split.small_share,
                                                             "monte_carlo": mc.split.small_share}
    return Check("ccdf_closed_form_vs_monte_carlo", ok, measured,
                 {"fraction_within_3_stderr": 0.95, "levels": n_levels, "samples": cfg.sweep.mc_samples})


def check_peak_cap(cfg: ExperimentConfig, seed: int) -> Check:
    sc = cfg.scenario()
    peak = cfg.link.peak_mbps
    above = np.array([peak * (1 + 1e-9), peak + 1.0, 2 * peak])
    vals = {}
    for cell in (["macro", "small"] if sc.has_small_cell else []) + ["macro_only"]:
        target = sc if cell != "macro_only" else cfg.scenario(small_cell=False)
        vals[cell] = float(np.max(ccdf_curve(target, cell, Regime.WITH_PEER, above).probs))
    mc = monte_carlo_ccdf(sc, 100_000, _point_seed(seed, 2), above)
    vals["monte_carlo_macro"] = float(np.max(mc.macro.probs))
    if sc.has_small_cell:
        vals["monte_carlo_small"] = float(np.max(mc.small.probs))
    return Check("ccdf_zero_above_peak", all(v == 0.0 for v in vals.values()), vals, {"value": 0.0})


def _random_traffic(rng: np.random.Generator) -> TrafficModel:
    from .static import CoverageSplit

    def cell(n):
        p = rng.dirichlet(np.ones(n))
        e0 = rng.uniform(5.0, 98.0, n)
        e1 = e0 * rng.uniform(0.2, 1.0, n)
        return tuple(FlowClass(float(a), float(b), float(c)) for a, b, c in zip(p, e0, e1))

    s = float(rng.uniform(0.1, 0.9))
    fcs = FlowClassSet(cell(int(rng.integers(1, 6))), cell(int(rng.integers(1, 6))), CoverageSplit(1 - s, s))
    return TrafficModel(float(rng.uniform(0.1, 30.0)), float(rng.uniform(0.5, 4.0)), fcs)


def random_stable_instances(n: int, seed: int) -> list[TrafficModel]:
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        t = _random_traffic(rng)
        try:
            solve_loads(t)
        except InstabilityError:
            continue
        out.append(t)
    return out


def hand_instance() -> TrafficModel:
    """Single class per cell with a0 = 0.2, a1 = 0.4, a0~ = 0.3, a1~ = 0.5."""
    from .static import CoverageSplit

    fcs = FlowClassSet((FlowClass(1.0, 5.0, 2.5),), (FlowClass(1.0, 1.0 / 0.3, 2.0),), CoverageSplit(0.5, 0.5))
    return TrafficModel(2.0, 1.0, fcs)


def check_loads(seed: int) -> Check:
    worst = 0.0
    for t in random_stable_instances(100, seed):
        a, b = solve_loads(t), fixed_point_loads(t)
        worst = max(worst, abs(a.rho - b.rho), abs(a.rho_small - b.rho_small))
    hand = solve_loads(hand_instance())
    hand_err = max(abs(hand.rho - 0.26 / 0.96), abs(hand.rho_small - 0.34 / 0.96))
    return Check("loads_closed_form_vs_fixed_point", worst <= 1e-10 and hand_err <= 1e-12,
                 {"max_abs_difference": worst, "hand_instance_error": hand_err, "instances": 100},
                 {"max_abs_difference": 1e-10, "hand_instance_error": 1e-12})


def check_simulation(cfg: ExperimentConfig, seed: int, max_rho: float = 0.8, tol: float = 0.10) -> Check:
    """Analytic loads and flow counts against the CTMC simulation, perfect positioning."""
    sc = cfg.scenario(offset_m=0.0)
    fcs = scenario_classes(cfg, sc)
    base = TrafficModel(0.0, cfg.traffic.file_size_mbit, fcs)
    s = cfg.sweep
    measured = {}
    ok = True
    for j, lam in enumerate(_grid(s.lambda_start, s.lambda_stop, s.lambda_step)):
        if lam <= 0:
            continue
        t = base.with_lambda(float(lam))
        try:
            loads = solve_loads(t)
        except InstabilityError:
            continue
        if max(loads.rho, loads.rho_small) > max_rho:
            continue
        perf = class_throughput(t, loads)
        st = simulate(t, SimConfig(_point_seed(seed, 3, j), cfg.sim.warmup_events, cfg.sim.measured_events,
                                   cfg.sim.replications, cfg.sim.guard))
        errs = {
            "rho": st.load.mean / loads.rho - 1.0,
            "rho_small": st.load_small.mean / loads.rho_small - 1.0 if loads.rho_small > 0 else 0.0,
            "N_macro": st.total_flows.mean / perf.macro.total_flows - 1.0,
            "N_small": st.total_flows_small.mean / perf.small.total_flows - 1.0 if perf.small.total_flows > 0 else 0.0,
        }
        measured[f"lambda={lam:g}"] = errs
        ok &= all(abs(v) <= tol for v in errs.values())
    return Check("analytics_vs_simulation", ok and bool(measured), measured,
                 {"max_relative_error": tol, "max_analytic_load": max_rho})


def class_rate_errors(analytic: FlowClassSet, oracle: FlowClassSet) -> dict[str, float]:
    out = {}
    for cell in ("macro", "small"):
        a, b = getattr(analytic, cell), getattr(oracle, cell)
        if len(a) != len(b):
            out[f"{cell}_class_count_mismatch"] = float("inf")
            continue
        for k, (x, y) in enumerate(zip(a, b), start=1):
            out[f"{cell}_{k}_with_peer"] = abs(x.rate_with_peer / y.rate_with_peer - 1.0)
            out[f"{cell}_{k}_no_peer"] = abs(x.rate_no_peer / y.rate_no_peer - 1.0)
    return out


def check_classes(cfg: ExperimentConfig, seed: int, tol: float = 0.05) -> Check:
    sc = cfg.scenario(offset_m=0.0)
    t = cfg.traffic
    analytic = scenario_classes(cfg, sc)
    oracle = monte_carlo_classes(sc, t.classes_macro, t.classes_small, cfg.sweep.mc_samples,
                                 _point_seed(seed, 4), RateRule(t.rate_rule))
    errs = class_rate_errors(analytic, oracle)
    worst = max(errs.values()) if errs else 0.0
    return Check("class_extraction_vs_position_oracle", worst <= tol,
                 {"max_relative_error": worst, "per_class": errs}, {"max_relative_error": tol})


def cmd_validate(cfg: ExperimentConfig, out: str | Path, seed: int | None = None, jobs: int = 1) -> tuple[RunWriter, bool]:
    """Run all oracle checks and write ``validation_report.json``."""
    seed = cfg.sim.seed if seed is None else seed
    w = RunWriter(out, "validate", cfg, {"seed": seed})
    sc = cfg.scenario()
    checks = [check_interference(sc)]
    info = {"omega_closed_form": sc.omega, "omega_calibrated": calibrated_omega(sc)}
    if not checks[0].passed:
        # calibrated mode: does a fitted lattice constant restore agreement?
        cal = check_interference(replace(sc, omega_override=info["omega_calibrated"]))
        cal.name = "interference_calibrated_omega"
        cal.tolerance = {"max_relative_error": 0.01}
        cal.passed = cal.measured["max_relative_error"] <= 0.01
        checks.append(cal)
    if sc.has_small_cell:
        checks.append(check_ccdf(cfg, seed))
    checks.append(check_peak_cap(cfg, seed))
    checks.append(check_loads(seed))
    if sc.has_small_cell:
        checks.append(check_simulation(cfg, seed))
        checks.append(check_classes(cfg, seed))
    passed = all(c.passed for c in checks)
    report = {"schema": 1, "passed": passed, "info": info, "checks": [c.to_dict() for c in checks]}
    w.write_text("validation_report.json", json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")
    w.finish()
    return w, passed
