"""Construction of the switched process from its marked point process.

One replica consumes an independent counter-based random stream seeded by
(master seed, replica index).  Each jump draws U_k then V_k from it, so a
replica's path does not depend on how replicas are scheduled.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BackwardHorizonExceeded, JumpBudgetExceeded, OutOfRange
from .integrate import FlowConfig
from .switching import (HybridState, SwitchedSystem, cumulative_rate, holding_and_endpoint,
                        in_K, post_jump, post_jump_batch, sample_dominating)

JUMP_CAP = 1_000_000


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replica)])))


@dataclass
class TrajectoryRecord:
    """Marks (T_k, X_k, tau_k, I_k), k = 0..K, with T_K <= t_end < T_{K+1}."""

    system: SwitchedSystem = field(repr=False)
    times: np.ndarray
    xs: np.ndarray
    taus: np.ndarray
    states: np.ndarray
    t_end: float
    next_jump: float = np.inf
    seed: int | None = None
    replica: int | None = None
    grid: dict | None = field(default=None, repr=False)

    @property
    def n_jumps(self) -> int:
        return len(self.times) - 1

    def to_marks_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.xs.shape[1]
        w.writerow(["T_k"] + [f"x_{k + 1}" for k in range(d)] + ["i"])
        for t, x, i in zip(self.times, self.xs, self.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [int(i)])
        return buf.getvalue()


def _flow_config(system: SwitchedSystem, t_end: float, config: FlowConfig | None):
    cfg = config or system.flow_config
    if cfg.max_step is None and cfg.method == "dopri5" and np.isfinite(t_end) and t_end > 0:
        cfg = cfg.with_max_step(t_end / 100)
    return cfg


def simulate(system: SwitchedSystem, z0: HybridState, t_end: float,
             rng: np.random.Generator | int = 0, jump_cap: int = JUMP_CAP,
             grid: np.ndarray | None = None, config: FlowConfig | None = None,
             replica: int = 0) -> TrajectoryRecord:
    """Simulate one path on [0, t_end]; rng may be a generator or a master seed."""
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = replica_rng(seed, replica)
    cfg = _flow_config(system, t_end, config)
    z = HybridState(z0.x, z0.s, z0.i)
    if not in_K(system, z):
        from .errors import NotInK
        raise NotInK("initial state is not in K")
    lam0 = cumulative_rate(system, z, 0.0) if z.s > 0 else 0.0
    T = 0.0
    times, xs, taus, states = [0.0], [z.x.copy()], [z.s], [z.i]
    nxt = np.inf
    n = 0
    while True:
        u, v = 1.0 - rng.random(2)
        S, x_jump = holding_and_endpoint(system, z, u, lam0, cfg)
        if T + S > t_end:
            nxt = T + S
            break
        n += 1
        if n > jump_cap:
            raise JumpBudgetExceeded(f"more than {jump_cap} jumps before t={t_end}")
        T += S
        j = post_jump(system, x_jump, z.i, v)
        z = HybridState(x_jump, 0.0, j)
        lam0 = 0.0
        times.append(T)
        xs.append(z.x.copy())
        taus.append(0.0)
        states.append(j)
    rec = TrajectoryRecord(system, np.array(times), np.array(xs), np.array(taus),
                           np.array(states, dtype=int), float(t_end), nxt, seed, replica)
    if grid is not None:
        rec.grid = states_on_grid(rec, np.asarray(grid, dtype=float), cfg)
    return rec


def states_on_grid(traj: TrajectoryRecord, grid: np.ndarray, config: FlowConfig | None = None):
    """Vectorised Z_t on a time grid inside [0, t_end]; returns a dict of arrays."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < 0 or grid.max() > traj.t_end * (1 + 1e-12)):
        raise OutOfRange("grid leaves the simulated window")
    k = np.searchsorted(traj.times, grid, side="right") - 1
    dt = grid - traj.times[k]
    idx = traj.states[k]
    x = np.empty((grid.size, traj.xs.shape[1]))
    sysm = traj.system
    for i in np.unique(idx):
        sel = idx == i
        x[sel] = sysm.flow(int(i), dt[sel], traj.xs[k[sel]], config)
    return {"t": grid, "x": x, "tau": traj.taus[k] + dt, "i": idx, "n": k}


def state_at(traj: TrajectoryRecord, t: float) -> HybridState:
    if t < 0 or t > traj.t_end:
        raise OutOfRange(f"t={t} outside [0, {traj.t_end}]")
    g = states_on_grid(traj, np.array([t]))
    return HybridState(g["x"][0], float(g["tau"][0]), int(g["i"][0]))


def jump_count(traj: TrajectoryRecord, t: float) -> int:
    """N_t: number of jumps in (0, t]."""
    if t < 0 or t > traj.t_end:
        raise OutOfRange(f"t={t} outside [0, {traj.t_end}]")
    return int(np.searchsorted(traj.times, t, side="right") - 1)


def trajectory_rows(traj: TrajectoryRecord, dt: float):
    """Rows (t, x_1..x_d, tau, i) on the grid 0, dt, 2dt, ... <= t_end."""
    grid = np.arange(0.0, traj.t_end + 0.5 * dt, dt)
    grid = grid[grid <= traj.t_end]
    g = states_on_grid(traj, grid)
    return [[float(t), *map(float, x), float(s), int(i)]
            for t, x, s, i in zip(g["t"], g["x"], g["tau"], g["i"])]


def simulate_many(system: SwitchedSystem, z0: HybridState, t_end: float, replicas: int,
                  seed: int = 0, threads: int = 1, grid=None, jump_cap: int = JUMP_CAP,
                  config: FlowConfig | None = None) -> list[TrajectoryRecord]:
    def one(r):
        return simulate(system, z0, t_end, replica_rng(seed, r), jump_cap, grid, config, r)

    if threads <= 1:
        recs = [one(r) for r in range(replicas)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            recs = list(pool.map(one, range(replicas)))
    for r in recs:
        r.seed = seed
    return recs


@dataclass
class PathSample:
    """Replica states at fixed times: x (R, n, d), tau (R, n), i (R, n), jumps (R, n)."""

    times: np.ndarray
    x: np.ndarray
    tau: np.ndarray
    i: np.ndarray
    jumps: np.ndarray


def sample_states(system: SwitchedSystem, z0: HybridState | Sequence[HybridState],
                  times, replicas: int, seed: int = 0, jump_cap: int = JUMP_CAP,
                  config: FlowConfig | None = None) -> PathSample:
    """Z_t at the given times for many replicas.

    With constant rates all replicas advance together, one jump per round,
    using vectorised flows; otherwise each replica is simulated alone.  In
    both cases replica r uses the stream replica_rng(seed, r), so the two
    paths give the same states.  z0 may be one state or one per replica;
    times may be shared, shape (n,), or per replica, shape (R, n).
    """
    times = np.sort(np.atleast_1d(np.asarray(times, dtype=float)), axis=-1)
    per_replica = times.ndim == 2
    tgrid = times if per_replica else np.broadcast_to(times, (replicas, times.size))
    t_stop = tgrid[:, -1]
    t_max = float(t_stop.max())
    starts = [z0] * replicas if isinstance(z0, HybridState) else list(z0)
    if len(starts) != replicas:
        raise ValueError("need one initial state per replica")
    cfg = _flow_config(system, t_max, config)
    R, n, d = replicas, tgrid.shape[1], system.dim
    X = np.zeros((R, n, d))
    TAU = np.zeros((R, n))
    I = np.zeros((R, n), dtype=int)
    NJ = np.zeros((R, n), dtype=int)

    if not system.constant_rates:
        for r in range(R):
            rec = simulate(system, starts[r], float(t_stop[r]), replica_rng(seed, r), jump_cap,
                           tgrid[r], cfg, r)
            X[r], TAU[r], I[r], NJ[r] = rec.grid["x"], rec.grid["tau"], rec.grid["i"], rec.grid["n"]
        return PathSample(times, X, TAU, I, NJ)

    for z in starts:
        if not in_K(system, z):
            from .errors import NotInK
            raise NotInK("initial state is not in K")
    gens = [replica_rng(seed, r) for r in range(R)]
    x = np.array([z.x for z in starts], dtype=float)
    s = np.array([z.s for z in starts], dtype=float)
    i = np.array([z.i for z in starts], dtype=int)
    T = np.zeros(R)
    count = np.zeros(R, dtype=int)
    active = np.ones(R, dtype=bool)
    lam_c = np.array([r.constant for r in system.rates])
    while active.any():
        a = np.flatnonzero(active)
        uv = 1.0 - np.array([gens[r].random(2) for r in a])
        u, v = uv[:, 0], uv[:, 1]
        S = np.empty(a.size)
        for k, law in enumerate(system.laws):
            sel = i[a] == k
            if sel.any():
                lam = lam_c[k]
                p = u[sel] * law.survival(lam * s[a][sel])
                S[sel] = np.maximum(law.isf(p) / lam - s[a][sel], 0.0)
        T_next = T[a] + S
        # fill requested times that fall in [T, T_next)
        ta = tgrid[a]
        hit = (ta >= T[a][:, None]) & (ta < T_next[:, None])
        rows, cols = np.nonzero(hit)
        if rows.size:
            ra = a[rows]
            dt = ta[rows, cols] - T[ra]
            for k in range(system.n_states):
                sel = i[ra] == k
                if sel.any():
                    X[ra[sel], cols[sel]] = system.flow(k, dt[sel], x[ra[sel]], cfg)
            TAU[ra, cols] = s[ra] + dt
            I[ra, cols] = i[ra]
            NJ[ra, cols] = count[ra]
        done = T_next > t_stop[a]
        active[a[done]] = False
        go = ~done
        if not go.any():
            break
        b = a[go]
        count[b] += 1
        if np.any(count[b] > jump_cap):
            raise JumpBudgetExceeded(f"more than {jump_cap} jumps before t={t_max}")
        xj = np.empty((b.size, d))
        for k in range(system.n_states):
            sel = i[b] == k
            if sel.any():
                xj[sel] = system.flow(k, S[go][sel], x[b[sel]], cfg)
        i[b] = post_jump_batch(system, xj, i[b], v[go])
        x[b] = xj
        s[b] = 0.0
        T[b] = T_next[go]
    return PathSample(times, X, TAU, I, NJ)


def in_K_M(system: SwitchedSystem, z: HybridState, M=None, tol: float = 0.0) -> bool:
    """z in K_M: z in K with x and phi^i_{-s}(x) both in the compact M."""
    M = M if M is not None else system.compact
    if M is None:
        raise ValueError("no compact set given")
    if not bool(M.contains(z.x, tol)):
        return False
    if not in_K(system, z):
        return False
    try:
        back = system.flow(z.i, -z.s, z.x) if z.s > 0 else z.x
    except BackwardHorizonExceeded:
        return False
    return bool(np.all(np.isfinite(back))) and bool(M.contains(back, tol))


def expected_jump_bound(system: SwitchedSystem, t: float, n: int = 10_000,
                        rng: np.random.Generator | int = 0, k_max: int = 100_000):
    """Monte Carlo value of 1 + sum_k P(t >= T~_k) and its standard error.

    T~_k are partial sums of i.i.d. draws with survival H.  Returns
    (bound, stderr).
    """
    if not isinstance(rng, np.random.Generator):
        rng = replica_rng(int(rng), 0)
    total = np.zeros(n)
    counts = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    for _ in range(k_max):
        if not alive.any():
            break
        a = np.flatnonzero(alive)
        total[a] += sample_dominating(system, rng, a.size)
        inside = total[a] <= t
        counts[a[inside]] += 1
        alive[a[~inside]] = False
    else:
        raise JumpBudgetExceeded("dominating renewal process did not pass t")
    vals = 1.0 + counts
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))
