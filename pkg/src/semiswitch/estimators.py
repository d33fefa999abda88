"""Occupation histograms, total-variation diagnostics and invasion rates."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats

from .dynamics import VectorField
from .errors import AxisMismatch, DegenerateThreshold
from .laws import HoldingLaw
from .process import TrajectoryRecord, sample_states, simulate, states_on_grid
from .switching import HybridState, JumpMatrix, RateFunction, SwitchedSystem


@dataclass
class Histogram:
    """Counts over (x_1..x_d, tau, i); edges per continuous axis."""

    edges: list[np.ndarray]
    n_states: int
    counts: np.ndarray

    @classmethod
    def from_samples(cls, x: np.ndarray, tau: np.ndarray, i: np.ndarray,
                     edges: Sequence[np.ndarray], n_states: int, weights=None) -> "Histogram":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[0] != np.size(tau):
            x = x.T
        cols = [x[:, k] for k in range(x.shape[1])] + [np.asarray(tau, dtype=float)]
        idx = []
        for c, e in zip(cols, edges):
            # values beyond the range are folded into the edge bins
            idx.append(np.clip(np.searchsorted(e, c, side="right") - 1, 0, e.size - 2))
        shape = tuple(e.size - 1 for e in edges) + (n_states,)
        flat = np.ravel_multi_index(tuple(idx) + (np.asarray(i, dtype=int),), shape)
        counts = np.bincount(flat, weights=weights, minlength=int(np.prod(shape)))
        return cls([np.asarray(e, float) for e in edges], n_states, counts.reshape(shape))

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def normalized(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def same_axes(self, other: "Histogram") -> bool:
        return (self.n_states == other.n_states and len(self.edges) == len(other.edges)
                and all(a.shape == b.shape and np.allclose(a, b)
                        for a, b in zip(self.edges, other.edges)))

    def marginal(self, axis: int) -> np.ndarray:
        p = self.normalized()
        other = tuple(k for k in range(p.ndim) if k != axis)
        return p.sum(axis=other)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = len(self.edges) - 1
        w.writerow([f"x_{k + 1}_lo" for k in range(d)] + ["tau_lo", "i", "mass"])
        p = self.normalized()
        for idx in np.ndindex(p.shape):
            lows = [repr(float(self.edges[k][idx[k]])) for k in range(len(self.edges))]
            w.writerow(lows + [idx[-1], repr(float(p[idx]))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"edges": [e.tolist() for e in self.edges],
                           "n_states": self.n_states,
                           "mass": self.normalized().tolist()})


def default_edges(system: SwitchedSystem, tau_max: float, x_bins: int = 64,
                  tau_bins: int = 32) -> list[np.ndarray]:
    M = system.compact
    if M is None:
        raise ValueError("system has no compact set to bin over")
    lo = getattr(M, "lo", None)
    if lo is None:
        lo, hi = M.center - M.radius, M.center + M.radius
    else:
        hi = M.hi
    return [np.linspace(l, h, x_bins + 1) for l, h in zip(lo, hi)] + \
        [np.linspace(0.0, tau_max, tau_bins + 1)]


def holding_quantile(system: SwitchedSystem, q: float = 0.999) -> float:
    """Largest q-quantile of the holding times over the states."""
    return float(max(law.isf(1.0 - q) / r.lambda_min for law, r in zip(system.laws, system.rates)))


def occupation_measure(system: SwitchedSystem, z0: HybridState, t_end: float,
                       burn_in: float = 0.0, seed: int = 0, replicas: int | None = None,
                       dt: float = 0.01, edges=None, tau_max: float | None = None,
                       x_bins: int = 64, tau_bins: int = 32) -> Histogram:
    """Time-average histogram of (X, tau, I) over (burn_in, t_end].

    States are read on the grid burn_in + dt, burn_in + 2 dt, ..., t_end.  With
    replicas=None this is one long path; otherwise the time averages of that
    many replicas are pooled, which estimates the same mu_t.
    """
    if not t_end > burn_in:
        raise ValueError("need t_end > burn_in")
    if tau_max is None:
        tau_max = holding_quantile(system)
    edges = edges or default_edges(system, tau_max, x_bins, tau_bins)
    n = max(1, int(round((t_end - burn_in) / dt)))
    grid = np.linspace(burn_in, t_end, n + 1)[1:]
    if replicas is None:
        rec = simulate(system, z0, t_end, seed, grid=grid)
        g = rec.grid
        return Histogram.from_samples(g["x"], g["tau"], g["i"], edges, system.n_states)
    ps = sample_states(system, z0, grid, replicas, seed)
    return Histogram.from_samples(ps.x.reshape(-1, system.dim), ps.tau.ravel(), ps.i.ravel(),
                                  edges, system.n_states)


def tv_distance(h1: Histogram, h2: Histogram) -> float:
    if not h1.same_axes(h2):
        raise AxisMismatch("histograms use different bins")
    return 0.5 * float(np.abs(h1.normalized() - h2.normalized()).sum())


def convergence_diagnostic(system: SwitchedSystem, z_a: HybridState, z_b: HybridState,
                           times: Sequence[float], replicas: int, seed: int = 0,
                           edges=None, n_boot: int = 20) -> list[dict]:
    """TV(t) between the laws of Z_t started from z_a and z_b.

    stderr is a bootstrap over replicas.
    """
    times = np.sort(np.asarray(times, dtype=float))
    A = sample_states(system, z_a, times, replicas, seed)
    B = sample_states(system, z_b, times, replicas, seed + 1)
    if edges is None:
        tau_max = float(max(A.tau.max(), B.tau.max())) + 1e-9
        edges = default_edges(system, tau_max, 10, 4)
    rng = np.random.default_rng(seed + 2)
    rows = []
    for k, t in enumerate(times):
        def hist(P, pick):
            return Histogram.from_samples(P.x[pick, k], P.tau[pick, k], P.i[pick, k],
                                          edges, system.n_states)
        allr = np.arange(replicas)
        tv = tv_distance(hist(A, allr), hist(B, allr))
        boots = [tv_distance(hist(A, rng.integers(replicas, size=replicas)),
                             hist(B, rng.integers(replicas, size=replicas)))
                 for _ in range(n_boot)]
        rows.append({"t": float(t), "tv": tv, "stderr": float(np.std(boots, ddof=1))})
    return rows


# --- path integrals ----------------------------------------------------

_GX, _GW = leggauss(24)


def path_integral(rec: TrajectoryRecord, h: Callable, edges: np.ndarray,
                  max_piece: float = 0.5):
    """Integrals of h(X_t, I_t) dt over consecutive windows, and per segment.

    edges are window boundaries inside [0, t_end].  Each piece between
    jumps and window edges is split to length <= max_piece and integrated
    with 24-point Gauss-Legendre along the exact flow.
    Returns (window_integrals, segment_integrals).
    """
    sysm = rec.system
    seg_start = rec.times
    seg_end = np.append(rec.times[1:], rec.t_end)
    cuts = np.union1d(np.union1d(seg_start, [rec.t_end]), edges)
    cuts = cuts[(cuts >= 0) & (cuts <= rec.t_end)]
    a, b = cuts[:-1], cuts[1:]
    # subdivide long pieces
    nsub = np.maximum(1, np.ceil((b - a) / max_piece)).astype(int)
    starts = np.repeat(a, nsub) + (np.concatenate([np.arange(n) for n in nsub])
                                   * np.repeat((b - a) / nsub, nsub))
    lens = np.repeat((b - a) / nsub, nsub)
    k = np.searchsorted(seg_start, starts + 0.5 * lens, side="right") - 1
    nodes = starts[:, None] + 0.5 * lens[:, None] * (_GX[None, :] + 1)
    dt = nodes - seg_start[k][:, None]
    X = np.empty(nodes.shape + (rec.xs.shape[1],))
    idx = rec.states[k]
    for i in np.unique(idx):
        sel = idx == i
        pts = np.repeat(rec.xs[k[sel]], _GX.size, axis=0)
        X[sel] = sysm.flow(int(i), dt[sel].ravel(), pts).reshape(-1, _GX.size, pts.shape[1])
    vals = h(X, idx[:, None] * np.ones_like(dt, dtype=int))
    piece = 0.5 * lens * (vals * _GW[None, :]).sum(axis=1)
    win = np.searchsorted(edges, starts + 0.5 * lens, side="right") - 1
    nwin = len(edges) - 1
    ok = (win >= 0) & (win < nwin)
    window_int = np.bincount(win[ok], weights=piece[ok], minlength=nwin)
    seg_int = np.bincount(k, weights=piece, minlength=len(seg_start))
    return window_int, seg_int


# --- Lotka-Volterra face ----------------------------------------------

@dataclass
class LVParams:
    """Per-environment coefficients, each a pair (environment 0, environment 1).

    Resident x: dx = alpha x (1 - a x - b y); invader y: dy = beta y (1 - c x - d y).
    """

    alpha: tuple[float, float]
    a: tuple[float, float]
    beta: tuple[float, float]
    b: tuple[float, float]
    c: tuple[float, float]
    d: tuple[float, float]

    @property
    def p(self) -> tuple[float, float]:
        return (1.0 / self.a[0], 1.0 / self.a[1])


def dwell_threshold(params: LVParams) -> float:
    """delta_1 = c1 p1 / (alpha1 (c1 p1 - 1)) ln(p1 / p0)."""
    p0, p1 = params.p
    c1, al1 = params.c[1], params.alpha[1]
    if c1 * p1 <= 1:
        raise DegenerateThreshold("needs c1 p1 > 1")
    if p0 > p1:
        # environments are labelled so that p0 <= p1
        raise DegenerateThreshold("needs p0 <= p1")
    return c1 * p1 / (al1 * (c1 * p1 - 1)) * np.log(p1 / p0)


def excursion_bound(params: LVParams, T: float) -> float:
    """Upper bound on int_0^T h(X_t, 1) dt for an environment-1 stay of length T."""
    p0, p1 = params.p
    b1, c1, al1 = params.beta[1], params.c[1], params.alpha[1]
    return b1 * T * (1 - c1 * p1) + b1 * c1 * p1 / al1 * np.log(p1 / p0)


def logistic_field(alpha: float, a: float, name: str = "") -> VectorField:
    p = 1.0 / a

    def rhs(x):
        return alpha * x * (1 - a * x)

    def fl(t, x):
        e = np.exp(-alpha * np.asarray(t, dtype=float))[..., None]
        return p * x / (x + (p - x) * e)

    def horizon(x):
        v = float(np.ravel(x)[0])
        if 0 < v <= p:
            return np.inf
        if v > p:
            return -np.log(1 - p / v) / alpha
        return np.inf if v == 0 else -np.log(1 - p / v) / alpha

    return VectorField(rhs, 1, jac=lambda x: np.array([[alpha * (1 - 2 * a * float(np.ravel(x)[0]))]]),
                       flow=fl, backward_horizon=horizon, name=name)


def lv_face_system(params: LVParams, laws: Sequence[HoldingLaw]) -> SwitchedSystem:
    from .dynamics import Box
    p0, p1 = params.p
    fields = [logistic_field(params.alpha[k], params.a[k], f"logistic{k}") for k in range(2)]
    return SwitchedSystem(fields, [RateFunction.const(1.0)] * 2, list(laws),
                          JumpMatrix([[0.0, 1.0], [1.0, 0.0]]), Box([min(p0, p1)], [max(p0, p1)]),
                          name="lv-face")


def invasion_function(params: LVParams):
    beta, c = np.asarray(params.beta), np.asarray(params.c)

    def h(x, i):
        return beta[i] * (1 - c[i] * x[..., 0])

    return h


@dataclass
class InvasionEstimate:
    rate: float
    ci_low: float
    ci_high: float
    stderr: float
    excursions: np.ndarray = field(repr=False)
    durations: np.ndarray = field(repr=False)
    delta1: float = np.nan

    def to_dict(self) -> dict:
        return {"rate": self.rate, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "stderr": self.stderr, "n_excursions": int(self.excursions.size),
                "max_excursion_integral": float(self.excursions.max(initial=-np.inf)),
                "min_excursion_duration": float(self.durations.min(initial=np.inf)),
                "delta1": self.delta1}


def invasion_rate(params: LVParams, laws: Sequence[HoldingLaw], T: float, seed: int = 0,
                  z0: HybridState | None = None, batches: int = 50) -> InvasionEstimate:
    """Time average of h(X_t, I_t) on the resident face, with a batch-means CI.

    excursions lists int h dt over every complete stay in environment 1.
    """
    sysm = lv_face_system(params, laws)
    p0, p1 = params.p
    z0 = z0 or HybridState([p0], 0.0, 1)
    rec = simulate(sysm, z0, T, seed)
    h = invasion_function(params)
    edges = np.linspace(0.0, T, batches + 1)
    win, seg = path_integral(rec, h, edges)
    means = win / np.diff(edges)
    rate = float(win.sum() / T)
    se = float(means.std(ddof=1) / np.sqrt(batches))
    q = stats.t.ppf(0.975, batches - 1)
    # complete stays: both ends are jump times (the last segment is censored)
    complete = np.arange(rec.n_jumps + 1) < rec.n_jumps
    if z0.s > 0:
        complete[0] = False
    env1 = complete & (rec.states == 1)
    dur = np.append(np.diff(rec.times), rec.t_end - rec.times[-1])
    try:
        d1 = dwell_threshold(params)
    except DegenerateThreshold:
        d1 = np.nan
    return InvasionEstimate(rate, rate - q * se, rate + q * se, se, seg[env1], dur[env1], d1)
