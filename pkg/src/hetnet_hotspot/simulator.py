"""Event-driven simulation of the coupled two-cell processor-sharing CTMC.

The state is the per-class flow count of each cell. With exponential flow
sizes of mean sigma0 and egalitarian sharing, a class-k macro flow leaves at
rate ``n_k * eta_k / (|n| * sigma0)``, where ``eta_k`` is the idle-peer rate
while the small cell is empty and the busy-peer rate otherwise.

Each replication draws its uniforms from its own ``numpy`` generator seeded
by spawning the base seed, so results do not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .dynamics import TrafficModel, arrival_split

Z95 = 1.959963984540054


class SimulationInstabilityError(RuntimeError):
    """A replication exceeded the flow-count guard."""


@dataclass(frozen=True)
class SimConfig:
    seed: int = 12345
    warmup_events: int | None = None  # default: 20% of measured
    measured_events: int = 1_000_000
    replications: int = 10
    guard: int = 10_000

    def __post_init__(self):
        if self.measured_events <= 0:
            raise ValueError("measured events must be > 0")
        if self.warmup_events is not None and self.warmup_events < 0:
            raise ValueError("warmup events must be >= 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.guard <= 0:
            raise ValueError("guard must be > 0")

    @property
    def warmup(self) -> int:
        return self.measured_events // 5 if self.warmup_events is None else self.warmup_events


@dataclass
class SimState:
    clock: float
    n: np.ndarray
    n_small: np.ndarray

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        self.n_small = np.asarray(self.n_small, dtype=np.int64)
        if np.any(self.n < 0) or np.any(self.n_small < 0):
            raise ValueError("flow counts must be >= 0")

    @property
    def total(self) -> int:
        return int(self.n.sum())

    @property
    def total_small(self) -> int:
        return int(self.n_small.sum())


@dataclass(frozen=True)
class _Inputs:
    lam: np.ndarray
    lam_small: np.ndarray
    eta0: np.ndarray
    eta1: np.ndarray
    eta0_small: np.ndarray
    eta1_small: np.ndarray
    sigma0: float


def _inputs(traffic: TrafficModel) -> _Inputs:
    lam, lam_s = arrival_split(traffic)
    m, s = traffic.classes.macro, traffic.classes.small
    return _Inputs(
        np.ascontiguousarray(lam, dtype=float),
        np.ascontiguousarray(lam_s, dtype=float),
        np.array([c.rate_no_peer for c in m], dtype=float),
        np.array([c.rate_with_peer for c in m], dtype=float),
        np.array([c.rate_no_peer for c in s], dtype=float),
        np.array([c.rate_with_peer for c in s], dtype=float),
        float(traffic.file_size_mbit),
    )


def transition_rates(state: SimState, traffic: TrafficModel) -> list[tuple[tuple[tuple[int, ...], tuple[int, ...]], float]]:
    """Outgoing transitions of a state as ``((n, n_small), rate)`` pairs (zero rates omitted)."""
    inp = _inputs(traffic)
    n, ns = state.n, state.n_small
    if n.shape != inp.lam.shape or ns.shape != inp.lam_small.shape:
        raise ValueError("state shape does not match the class counts")
    out = []

    def moved(vec, k, step):
        v = vec.copy()
        v[k] += step
        return tuple(int(x) for x in v)

    tot, tot_s = state.total, state.total_small
    for k, lk in enumerate(inp.lam):
        if lk > 0:
            out.append(((moved(n, k, 1), tuple(int(x) for x in ns)), float(lk)))
    for k, lk in enumerate(inp.lam_small):
        if lk > 0:
            out.append(((tuple(int(x) for x in n), moved(ns, k, 1)), float(lk)))
    eta = inp.eta0 if tot_s == 0 else inp.eta1
    for k in range(n.size):
        if n[k] > 0:
            out.append(((moved(n, k, -1), tuple(int(x) for x in ns)), float(n[k] * eta[k] / (tot * inp.sigma0))))
    eta_s = inp.eta0_small if tot == 0 else inp.eta1_small
    for k in range(ns.size):
        if ns[k] > 0:
            out.append(((tuple(int(x) for x in n), moved(ns, k, -1)), float(ns[k] * eta_s[k] / (tot_s * inp.sigma0))))
    return out


@numba.njit(cache=True)
def _kernel(lam, lam_s, e0, e1, f0, f1, sigma0, uniforms, warmup, guard):
    """Run ``uniforms.shape[0]`` events; statistics cover events after ``warmup``.

    Returns (status, measured_time, busy_time, busy_time_small, area, area_small,
    arrivals, departures, final_n, final_n_small, final_clock). status is 0 on
    success, otherwise the event index at which the guard was exceeded.
    """
    K = lam.shape[0]
    L = lam_s.shape[0]
    n = np.zeros(K, np.int64)
    ns = np.zeros(L, np.int64)
    arrivals = np.zeros(K + L, np.int64)
    departures = np.zeros(K + L, np.int64)
    area = np.zeros(K)
    area_s = np.zeros(L)
    rates = np.zeros(2 * (K + L))
    lam_tot = 0.0
    for k in range(K):
        rates[k] = lam[k]
        lam_tot += lam[k]
    for k in range(L):
        rates[K + k] = lam_s[k]
        lam_tot += lam_s[k]
    tot = 0
    tot_s = 0
    clock = 0.0
    t_meas = 0.0
    busy = 0.0
    busy_s = 0.0
    n_events = uniforms.shape[0]
    status = 0
    for ev in range(n_events):
        total = lam_tot
        base = K + L
        if tot > 0:
            for k in range(K):
                eta = e0[k] if tot_s == 0 else e1[k]
                r = n[k] * eta / (tot * sigma0)
                rates[base + k] = r
                total += r
        else:
            for k in range(K):
                rates[base + k] = 0.0
        if tot_s > 0:
            for k in range(L):
                eta = f0[k] if tot == 0 else f1[k]
                r = ns[k] * eta / (tot_s * sigma0)
                rates[base + K + k] = r
                total += r
        else:
            for k in range(L):
                rates[base + K + k] = 0.0
        if total <= 0.0:
            break
        dt = -math.log1p(-uniforms[ev, 0]) / total
        clock += dt
        if ev >= warmup:
            t_meas += dt
            if tot > 0:
                busy += dt
            if tot_s > 0:
                busy_s += dt
            for k in range(K):
                area[k] += n[k] * dt
            for k in range(L):
                area_s[k] += ns[k] * dt
        # proportional event selection
        target = uniforms[ev, 1] * total
        acc = 0.0
        pick = -1
        last = -1
        for j in range(rates.shape[0]):
            if rates[j] > 0.0:
                last = j
                acc += rates[j]
                if target < acc:
                    pick = j
                    break
        if pick < 0:
            pick = last
        if pick < K:
            n[pick] += 1
            tot += 1
            arrivals[pick] += 1
        elif pick < K + L:
            ns[pick - K] += 1
            tot_s += 1
            arrivals[pick] += 1
        elif pick < K + L + K:
            k = pick - K - L
            n[k] -= 1
            tot -= 1
            departures[k] += 1
        else:
            k = pick - 2 * K - L
            ns[k] -= 1
            tot_s -= 1
            departures[K + k] += 1
        if tot + tot_s > guard:
            status = ev + 1
            break
    return status, t_meas, busy, busy_s, area, area_s, arrivals, departures, n, ns, clock


@dataclass(frozen=True)
class Replication:
    busy_fraction: float
    busy_fraction_small: float
    mean_flows: np.ndarray
    mean_flows_small: np.ndarray
    arrivals: np.ndarray  # per class, macro classes first
    departures: np.ndarray
    final_n: np.ndarray
    final_n_small: np.ndarray
    clock: float

    def conserves_flows(self) -> bool:
        final = np.concatenate([self.final_n, self.final_n_small])
        return bool(np.array_equal(self.arrivals, self.departures + final))


def _replication_uniforms(seed_seq: np.random.SeedSequence, n_events: int) -> np.ndarray:
    return np.random.default_rng(seed_seq).random((n_events, 2))


def run_replication(inp: _Inputs, config: SimConfig, seed_seq: np.random.SeedSequence,
                    index: int = 0) -> Replication:
    warm = config.warmup
    u = _replication_uniforms(seed_seq, warm + config.measured_events)
    status, t, busy, busy_s, area, area_s, arr, dep, n, ns, clock = _kernel(
        inp.lam, inp.lam_small, inp.eta0, inp.eta1, inp.eta0_small, inp.eta1_small,
        inp.sigma0, u, warm, config.guard,
    )
    if status:
        raise SimulationInstabilityError(
            f"replication {index}: {int(n.sum())} macro + {int(ns.sum())} small flows exceed the guard "
            f"{config.guard} after {status} events (clock {clock:.6g} s); the input is likely unstable"
        )
    if not t > 0:
        # no measured time: empty system with no arrivals
        return Replication(0.0, 0.0, np.zeros(inp.lam.size), np.zeros(inp.lam_small.size),
                           arr, dep, n, ns, clock)
    return Replication(busy / t, busy_s / t, area / t, area_s / t, arr, dep, n, ns, clock)


@dataclass(frozen=True)
class Estimate:
    mean: float
    ci95_halfwidth: float
    values: tuple[float, ...]


def _estimate(values) -> Estimate:
    arr = np.asarray(values, dtype=float)
    mean = math.fsum(arr) / arr.size
    if arr.size < 2:
        return Estimate(mean, 0.0, tuple(arr.tolist()))
    half = Z95 * float(np.std(arr, ddof=1)) / math.sqrt(arr.size)
    return Estimate(mean, half, tuple(arr.tolist()))


@dataclass(frozen=True)
class SimStats:
    load: Estimate
    load_small: Estimate
    flows: tuple[Estimate, ...]  # per macro class
    flows_small: tuple[Estimate, ...]
    total_flows: Estimate
    total_flows_small: Estimate
    replications: tuple[Replication, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "metric", "mean", "ci95_halfwidth", "replications"])
        n_rep = len(self.replications)
        rows = [("macro", "busy_fraction", self.load), ("macro", "mean_flows", self.total_flows)]
        rows += [("macro", f"mean_flows_class_{k + 1}", e) for k, e in enumerate(self.flows)]
        rows += [("small", "busy_fraction", self.load_small), ("small", "mean_flows", self.total_flows_small)]
        rows += [("small", f"mean_flows_class_{k + 1}", e) for k, e in enumerate(self.flows_small)]
        for cell, metric, e in rows:
            w.writerow([cell, metric, repr(float(e.mean)), repr(float(e.ci95_halfwidth)), n_rep])
        return buf.getvalue()


def _summarize(reps: list[Replication]) -> SimStats:
    K = reps[0].mean_flows.size
    L = reps[0].mean_flows_small.size
    return SimStats(
        _estimate([r.busy_fraction for r in reps]),
        _estimate([r.busy_fraction_small for r in reps]),
        tuple(_estimate([r.mean_flows[k] for r in reps]) for k in range(K)),
        tuple(_estimate([r.mean_flows_small[k] for r in reps]) for k in range(L)),
        _estimate([math.fsum(r.mean_flows) for r in reps]),
        _estimate([math.fsum(r.mean_flows_small) for r in reps]),
        tuple(reps),
    )


def _worker(args):
    inp, config, seed_seq, index = args
    return run_replication(inp, config, seed_seq, index)


def run(traffic: TrafficModel, config: SimConfig = SimConfig(), jobs: int = 1) -> SimStats:
    """Independent replications of the CTMC, summarized with normal 95% CIs.

    Raises:
        SimulationInstabilityError: a replication exceeded the flow guard.
    """
    inp = _inputs(traffic)
    seeds = np.random.SeedSequence(config.seed).spawn(config.replications)
    tasks = [(inp, config, s, i) for i, s in enumerate(seeds)]
    if jobs > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reps = list(pool.map(_worker, tasks))
    else:
        reps = [_worker(t) for t in tasks]
    return _summarize(reps)
