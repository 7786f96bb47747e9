"""Flow-level analysis of the coupled macro / small-cell processor-sharing system.

Each cell is a multi-class processor-sharing queue. A macro flow of class k
is served at peak rate ``eta_k0`` while the small cell is idle and
``eta_k1`` while it is busy (and symmetrically for the small cell). The
closed forms decouple the two queues by mixing both rates with the peer's
idle probability.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .classes import FlowClass, FlowClassSet
from .numerics import log_gamma


class InstabilityError(ValueError):
    """The offered traffic cannot be carried (some load reaches 1)."""


@dataclass(frozen=True)
class TrafficModel:
    lambda_total: float  # flows/s over the whole hotspot
    file_size_mbit: float  # mean flow size sigma0
    classes: FlowClassSet

    def __post_init__(self):
        if not (math.isfinite(self.lambda_total) and self.lambda_total >= 0):
            raise ValueError("lambda_total must be finite and >= 0")
        if not self.file_size_mbit > 0:
            raise ValueError("file size must be > 0")
        for cell in (self.classes.macro, self.classes.small):
            for c in cell:
                if not (c.rate_no_peer >= c.rate_with_peer > 0):
                    raise ValueError(f"class rates must satisfy eta0 >= eta1 > 0, got {c}")

    def with_lambda(self, lambda_total: float) -> "TrafficModel":
        return TrafficModel(lambda_total, self.file_size_mbit, self.classes)


@dataclass(frozen=True)
class CellLoads:
    rho: float
    rho_small: float

    @property
    def p0(self) -> float:
        return 1.0 - self.rho

    @property
    def p0_small(self) -> float:
        return 1.0 - self.rho_small


def _rates(classes: tuple[FlowClass, ...]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = np.array([c.p for c in classes], dtype=float)
    eta0 = np.array([c.rate_no_peer for c in classes], dtype=float)
    eta1 = np.array([c.rate_with_peer for c in classes], dtype=float)
    return p, eta0, eta1


def arrival_split(traffic: TrafficModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-class Poisson intensities (macro, small)."""
    split = traffic.classes.split
    total = split.total
    macro_share = split.macro_mass / total if total > 0 else 1.0
    if not traffic.classes.small:
        macro_share = 1.0
    p, _, _ = _rates(traffic.classes.macro)
    pt, _, _ = _rates(traffic.classes.small)
    lam = traffic.lambda_total * macro_share * p
    lam_small = traffic.lambda_total * (1.0 - macro_share) * pt
    return lam, lam_small


@dataclass(frozen=True)
class _Offered:
    """Per-class offered loads with the peer idle (a0) and busy (a1)."""

    a0: np.ndarray
    a1: np.ndarray
    at0: np.ndarray
    at1: np.ndarray


def _offered(traffic: TrafficModel) -> _Offered:
    lam, lam_s = arrival_split(traffic)
    s0 = traffic.file_size_mbit
    _, e0, e1 = _rates(traffic.classes.macro)
    _, f0, f1 = _rates(traffic.classes.small)
    return _Offered(lam * s0 / e0, lam * s0 / e1, lam_s * s0 / f0, lam_s * s0 / f1)


def _load_update(off: _Offered, loads: CellLoads) -> CellLoads:
    # rho from the small cell's idle probability and vice versa
    p0s, p0 = 1.0 - loads.rho_small, 1.0 - loads.rho
    rho = math.fsum(p0s * off.a0 + (1.0 - p0s) * off.a1)
    rho_s = math.fsum(p0 * off.at0 + (1.0 - p0) * off.at1)
    return CellLoads(rho, rho_s)


def solve_loads(traffic: TrafficModel, residual_tol: float = 1e-12) -> CellLoads:
    """Closed-form cell loads of the coupled system.

    Raises:
        InstabilityError: coupling denominator <= 0 or a load >= 1.
    """
    off = _offered(traffic)
    A0, D = math.fsum(off.a0), math.fsum(off.a1 - off.a0)
    B0, E = math.fsum(off.at0), math.fsum(off.at1 - off.at0)
    denom = 1.0 - D * E
    if not denom > 0:
        raise InstabilityError(f"coupling denominator {denom} <= 0")
    rho = (A0 + D * B0) / denom
    rho_s = (B0 + E * A0) / denom
    if not rho < 1.0:
        raise InstabilityError(f"macro load {rho} >= 1")
    if not rho_s < 1.0:
        raise InstabilityError(f"small-cell load {rho_s} >= 1")
    loads = CellLoads(rho, rho_s)
    back = _load_update(off, loads)
    res = max(abs(back.rho - rho), abs(back.rho_small - rho_s))
    if res > residual_tol * max(1.0, rho, rho_s):
        raise ArithmeticError(f"closed-form loads fail the fixed-point identities (residual {res})")
    return loads


def fixed_point_loads(traffic: TrafficModel, damping: float = 0.5, tol: float = 1e-12,
                      max_iter: int = 1_000_000) -> CellLoads:
    """Damped iteration of the two load identities from (0, 0)."""
    off = _offered(traffic)
    loads = CellLoads(0.0, 0.0)
    for _ in range(max_iter):
        nxt = _load_update(off, loads)
        new = CellLoads(
            (1.0 - damping) * loads.rho + damping * nxt.rho,
            (1.0 - damping) * loads.rho_small + damping * nxt.rho_small,
        )
        step = max(abs(new.rho - loads.rho), abs(new.rho_small - loads.rho_small))
        loads = new
        if loads.rho >= 1.0 or loads.rho_small >= 1.0:
            raise InstabilityError(f"fixed point left the stable region: {loads}")
        if step < tol:
            return loads
    raise InstabilityError(f"fixed point did not converge in {max_iter} iterations")


def _check_stable(loads: CellLoads):
    if not (0.0 <= loads.rho < 1.0 and 0.0 <= loads.rho_small < 1.0):
        raise InstabilityError(f"unstable loads {loads}")


# ---------------------------------------------------------------------------
# stationary distribution (product form of the decoupled model)


def _log_cell_weights(counts: np.ndarray, lam_s0: np.ndarray, eta0: np.ndarray, eta1: np.ndarray,
                      peer_rho: float) -> float:
    # log of |n|! prod (lam s0)^n / ((peer n)! ((1-peer) n)! eta0^{(1-peer)n} eta1^{peer n})
    n = counts.astype(float)
    out = float(log_gamma(n.sum() + 1.0))
    for k in np.nonzero(counts)[0]:
        nk = n[k]
        out += nk * math.log(lam_s0[k])
        out -= float(log_gamma(peer_rho * nk + 1.0)) + float(log_gamma((1.0 - peer_rho) * nk + 1.0))
        out -= (1.0 - peer_rho) * nk * math.log(eta0[k]) + peer_rho * nk * math.log(eta1[k])
    return out


def log_stationary_prob(n, n_small, loads: CellLoads, traffic: TrafficModel) -> float:
    """Log of the product-form stationary probability of state (n, n_small).

    Factorials of non-integer arguments are read as Gamma(x + 1).
    """
    _check_stable(loads)
    n = np.asarray(n, dtype=np.int64)
    ns = np.asarray(n_small, dtype=np.int64)
    if n.shape != (len(traffic.classes.macro),) or ns.shape != (len(traffic.classes.small),):
        raise ValueError("state shape does not match the class counts")
    if np.any(n < 0) or np.any(ns < 0):
        raise ValueError("flow counts must be >= 0")
    lam, lam_s = arrival_split(traffic)
    s0 = traffic.file_size_mbit
    _, e0, e1 = _rates(traffic.classes.macro)
    _, f0, f1 = _rates(traffic.classes.small)
    if np.any((n > 0) & (lam == 0)) or np.any((ns > 0) & (lam_s == 0)):
        return -math.inf
    out = math.log1p(-loads.rho) + math.log1p(-loads.rho_small)
    out += _log_cell_weights(n, lam * s0, e0, e1, loads.rho_small)
    out += _log_cell_weights(ns, lam_s * s0, f0, f1, loads.rho)
    return out


def stationary_prob(n, n_small, loads: CellLoads, traffic: TrafficModel) -> float:
    return math.exp(log_stationary_prob(n, n_small, loads, traffic))


def _cell_mass_by_total(lam_s0, eta0, eta1, peer_rho, max_total) -> np.ndarray:
    """Sum of the unnormalized cell weights over states with |n| = m, m = 0..max_total."""
    j = np.arange(max_total + 1, dtype=float)
    lg_j = log_gamma(j + 1.0)
    poly = np.zeros(max_total + 1)
    poly[0] = 1.0
    for a, e0, e1 in zip(lam_s0, eta0, eta1):
        if a == 0:
            continue
        # coefficient of x^j in the generating series of one class
        logc = (j * math.log(a) - log_gamma(peer_rho * j + 1.0) - log_gamma((1.0 - peer_rho) * j + 1.0)
                - (1.0 - peer_rho) * j * math.log(e0) - peer_rho * j * math.log(e1))
        poly = np.convolve(poly, np.exp(logc))[: max_total + 1]
    # restore the |n|! factor of each total
    return poly * np.exp(lg_j)


def normalization_mass(loads: CellLoads, traffic: TrafficModel, max_total: int = 40) -> float:
    """Total probability of the product form over |n| <= max_total and |n_small| <= max_total.

    Equals 1 for an exact distribution up to truncation; reported as a
    diagnostic of the approximation.
    """
    _check_stable(loads)
    lam, lam_s = arrival_split(traffic)
    s0 = traffic.file_size_mbit
    _, e0, e1 = _rates(traffic.classes.macro)
    _, f0, f1 = _rates(traffic.classes.small)
    macro = _cell_mass_by_total(lam * s0, e0, e1, loads.rho_small, max_total)
    small = _cell_mass_by_total(lam_s * s0, f0, f1, loads.rho, max_total)
    return (1.0 - loads.rho) * math.fsum(macro) * (1.0 - loads.rho_small) * math.fsum(small)


# ---------------------------------------------------------------------------
# expanded decoupled model and performance metrics


@dataclass(frozen=True)
class Subclass:
    parent: int  # index of the originating class
    arrival_rate: float
    peak_rate: float
    load: float


@dataclass(frozen=True)
class ExpandedModel:
    macro: tuple[Subclass, ...]
    small: tuple[Subclass, ...]

    @property
    def macro_load(self) -> float:
        return math.fsum(s.load for s in self.macro)

    @property
    def small_load(self) -> float:
        return math.fsum(s.load for s in self.small)

    def mean_counts(self, cell: str) -> np.ndarray:
        """Exact multi-class PS means rho_i / (1 - rho) summed back onto parent classes."""
        subs = self.macro if cell == "macro" else self.small
        rho = self.macro_load if cell == "macro" else self.small_load
        n_parents = 1 + max((s.parent for s in subs), default=-1)
        out = np.zeros(n_parents)
        for s in subs:
            out[s.parent] += s.load / (1.0 - rho)
        return out


def expanded_decoupled_model(traffic: TrafficModel, loads: CellLoads) -> ExpandedModel:
    """Split every class into a peer-idle and a peer-busy subclass.

    With the peer idle a fraction P0 of the time, a class k becomes
    (lambda_k P0, eta_k0) and (lambda_k (1 - P0), eta_k1). Subclasses with
    zero arrival rate are kept so the mapping stays one-to-two.
    """
    _check_stable(loads)
    lam, lam_s = arrival_split(traffic)
    s0 = traffic.file_size_mbit

    def expand(lams, classes, peer_idle):
        out = []
        for k, (lk, c) in enumerate(zip(lams, classes)):
            for share, rate in ((peer_idle, c.rate_no_peer), (1.0 - peer_idle, c.rate_with_peer)):
                if share == 0.0:
                    continue
                out.append(Subclass(k, lk * share, rate, lk * share * s0 / rate))
        return tuple(out)

    return ExpandedModel(
        expand(lam, traffic.classes.macro, loads.p0_small),
        expand(lam_s, traffic.classes.small, loads.p0),
    )


def _sojourn(s0: float, eta0: np.ndarray, eta1: np.ndarray, own: float, peer: float) -> np.ndarray:
    return s0 * (peer / eta1 + (1.0 - peer) / eta0) / (1.0 - own)


def mean_flows(traffic: TrafficModel, loads: CellLoads | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Mean number of flows per class (macro, small)."""
    loads = solve_loads(traffic) if loads is None else loads
    _check_stable(loads)
    lam, lam_s = arrival_split(traffic)
    s0 = traffic.file_size_mbit
    _, e0, e1 = _rates(traffic.classes.macro)
    _, f0, f1 = _rates(traffic.classes.small)
    n = lam * _sojourn(s0, e0, e1, loads.rho, loads.rho_small)
    ns = lam_s * _sojourn(s0, f0, f1, loads.rho_small, loads.rho)
    return n, ns


@dataclass(frozen=True)
class CellReport:
    p: np.ndarray
    arrival_rate: np.ndarray
    mean_flows: np.ndarray
    sojourn_s: np.ndarray
    v_eq29: np.ndarray  # arithmetic mixture of the two peak rates, scaled by the idle probability
    v_little: np.ndarray  # sigma0 / sojourn (harmonic mixture)

    @property
    def total_flows(self) -> float:
        return float(np.sum(self.mean_flows))

    def _weighted(self, values: np.ndarray) -> float:
        # arrival-rate weights are proportional to p, which also covers lambda = 0
        if self.p.size == 0:
            return float("nan")
        return float(np.dot(self.p, values) / np.sum(self.p))

    @property
    def mean_v_eq29(self) -> float:
        return self._weighted(self.v_eq29)

    @property
    def mean_v_little(self) -> float:
        return self._weighted(self.v_little)


@dataclass(frozen=True)
class PerfReport:
    loads: CellLoads
    macro: CellReport
    small: CellReport

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "class", "lambda", "N_mean", "sojourn_s", "v_eq29_mbps", "v_little_mbps"])
        for name, rep in (("macro", self.macro), ("small", self.small)):
            for k in range(rep.p.size):
                w.writerow([name, k + 1, repr(float(rep.arrival_rate[k])), repr(float(rep.mean_flows[k])),
                            repr(float(rep.sojourn_s[k])), repr(float(rep.v_eq29[k])),
                            repr(float(rep.v_little[k]))])
        return buf.getvalue()


def class_throughput(traffic: TrafficModel, loads: CellLoads | None = None) -> PerfReport:
    """Per-class flow counts, sojourn times and both throughput definitions."""
    loads = solve_loads(traffic) if loads is None else loads
    _check_stable(loads)
    lam, lam_s = arrival_split(traffic)
    s0 = traffic.file_size_mbit
    rho, rho_s = loads.rho, loads.rho_small

    def report(classes, lams, own, peer):
        p, e0, e1 = _rates(classes)
        tau = _sojourn(s0, e0, e1, own, peer)
        v29 = (peer * e1 + (1.0 - peer) * e0) * (1.0 - own)
        return CellReport(p, lams, lams * tau, tau, v29, s0 / tau)

    return PerfReport(
        loads,
        report(traffic.classes.macro, lam, rho, rho_s),
        report(traffic.classes.small, lam_s, rho_s, rho),
    )
