"""Run the experiments declared in a scenario and write their artifacts.

Every experiment returns a JSON-ready dict; run_scenario collects them in
report.json next to the CSV/JSON files they produce.  Outputs depend only
on the seed, never on the thread count.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Callable

import numpy as np

from .accessibility import approximate_admissible, is_admissible, one_d_accessible_point
from .config import Scenario, resolve_number, resolve_tree, state_from
from .dynamics import ControlSequence, bracket_rank
from .errors import BackwardHorizonExceeded, ConfigError, SemiSwitchError
from .ergodicity import LyapunovParams, drift_check, submersion_certificate
from .estimators import (LVParams, convergence_diagnostic, dwell_threshold, occupation_measure,
                         invasion_rate)
from .process import (expected_jump_bound, in_K_M, sample_states, simulate, simulate_many,
                      trajectory_rows)
from .switching import HybridState


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _rows_json(header: list[str], rows) -> str:
    return json.dumps([dict(zip(header, r)) for r in rows])


class Context:
    """Run settings shared by the experiments of one scenario."""

    def __init__(self, sc: Scenario, out: Path | None, seed: int, t_end: float, replicas: int,
                 threads: int = 1, fmt: str = "csv"):
        self.sc, self.out, self.seed = sc, out, int(seed)
        self.t_end, self.replicas, self.threads, self.fmt = float(t_end), int(replicas), int(threads), fmt
        self.files: list[str] = []

    @property
    def system(self):
        return self.sc.system

    def num(self, v) -> float:
        return resolve_number(v, self.sc.params)

    def state(self, spec) -> HybridState:
        return state_from(spec, self.sc.params) if spec is not None else self.sc.initial

    def write(self, name: str, text: str):
        if self.out is None:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)
        if name not in self.files:
            self.files.append(name)

    def table(self, stem: str, header: list[str], rows):
        if self.fmt == "json":
            self.write(f"{stem}.json", _rows_json(header, rows))
        else:
            self.write(f"{stem}.csv", _csv(header, rows))


def _grid_dt(ctx: Context) -> float:
    return ctx.num(ctx.sc.run.get("grid_dt", ctx.t_end / 1000))


# --- experiment kinds ----------------------------------------------------

def exp_simulate(ctx: Context, e: dict) -> dict:
    sysm, z0 = ctx.system, ctx.state(e.get("initial"))
    rec = simulate(sysm, z0, ctx.t_end, ctx.seed)
    d = sysm.dim
    header = ["t"] + [f"x_{k + 1}" for k in range(d)] + ["tau", "i"]
    ctx.table("trajectories", header, trajectory_rows(rec, float(e.get("grid_dt", _grid_dt(ctx)))))
    if ctx.fmt == "json":
        ctx.write("marks.json", _rows_json(["T_k"] + header[1:-2] + ["i"],
                                           [[float(t), *map(float, x), int(i)]
                                            for t, x, i in zip(rec.times, rec.xs, rec.states)]))
    else:
        ctx.write("marks.csv", rec.to_marks_csv())
    out = {"n_jumps": rec.n_jumps, "x_end": rec.xs[-1].tolist()}
    # jump counts across replicas against the renewal bound
    R = int(e.get("replicas", ctx.replicas))
    if R > 1:
        if sysm.constant_rates:
            counts = sample_states(sysm, z0, [ctx.t_end], R, ctx.seed).jumps[:, 0]
        else:
            counts = np.array([r.n_jumps for r in simulate_many(sysm, z0, ctx.t_end, R, ctx.seed,
                                                                ctx.threads)])
        bound, bse = expected_jump_bound(sysm, ctx.t_end, n=int(e.get("bound_samples", 10_000)),
                                         rng=ctx.seed)
        mean = float(counts.mean())
        se = float(counts.std(ddof=1) / np.sqrt(R))
        out.update({"replicas": R, "mean_jumps": mean, "mean_jumps_stderr": se,
                    "jump_bound": bound, "jump_bound_stderr": bse,
                    "pass": bool(mean <= bound + 3 * np.hypot(se, bse))})
    return out


def exp_occupation(ctx: Context, e: dict) -> dict:
    sysm, z0 = ctx.system, ctx.state(e.get("initial"))
    mode = e.get("mode", "path")
    h = occupation_measure(sysm, z0, ctx.t_end, burn_in=ctx.num(e.get("burn_in", 0.0)),
                           seed=ctx.seed, replicas=ctx.replicas if mode == "replicas" else None,
                           dt=ctx.num(e.get("dt", 0.01)),
                           x_bins=int(e.get("x_bins", 64)), tau_bins=int(e.get("tau_bins", 32)))
    if ctx.fmt == "json":
        ctx.write("histogram.json", h.to_json())
    else:
        ctx.write("histogram.csv", h.to_csv())
        ctx.write("histogram.json", h.to_json())
    return {"mode": mode, "index_marginal": h.marginal(h.counts.ndim - 1).tolist()}


def _lyapunov(ctx: Context, e: dict) -> LyapunovParams:
    p = e.get("lyapunov", {})
    return LyapunovParams(ctx.num(p.get("delta", 0.5)), ctx.num(p.get("beta", 1.0)),
                          ctx.num(p.get("C", 1.0)), ctx.system.lambda_min)


def exp_drift(ctx: Context, e: dict) -> dict:
    params = _lyapunov(ctx, e)
    params.validate(ctx.system)
    starts = [ctx.state(s) for s in e.get("starts", [None])]
    times = [ctx.num(t) for t in e.get("times", [1.0])]
    recs = []
    for k, z in enumerate(starts):
        for t in times:
            recs.append(drift_check(ctx.system, z, t, params, ctx.replicas, ctx.seed + k).to_dict())
    ctx.table("drift", ["x", "s", "i", "t", "bound", "estimate", "stderr", "pass"],
              [[float(r["z"]["x"][0]), float(r["z"]["s"]), r["z"]["i"], r["t"], r["bound"],
                r["estimate"], r["stderr"], int(r["pass"])] for r in recs])
    return {"gamma": params.gamma, "checks": recs, "pass": all(r["pass"] for r in recs)}


def monotone_with_inversions(values, stderr, allowed: int = 1) -> bool:
    """Decreasing up to noise, with at most `allowed` larger inversions."""
    bad = 0
    for k in range(1, len(values)):
        if values[k] > values[k - 1] + 2 * np.hypot(stderr[k], stderr[k - 1]):
            return False
        if values[k] > values[k - 1]:
            bad += 1
    return bad <= allowed


def exp_tv_decay(ctx: Context, e: dict) -> dict:
    za, zb = ctx.state(e["z_a"]), ctx.state(e["z_b"])
    times = [ctx.num(t) for t in e.get("times", [1, 2, 4, 8, 16])]
    R = int(e.get("replicas", ctx.replicas))
    rows = convergence_diagnostic(ctx.system, za, zb, times, R, ctx.seed)
    ctx.table("tv", ["t", "tv", "stderr"], [[r["t"], r["tv"], r["stderr"]] for r in rows])
    tv = [r["tv"] for r in rows]
    se = [r["stderr"] for r in rows]
    final_max = float(e.get("final_max", 0.1))
    return {"replicas": R, "series": rows, "decreasing": monotone_with_inversions(tv, se),
            "final": tv[-1], "pass": monotone_with_inversions(tv, se) and tv[-1] < final_max}


def exp_invasion(ctx: Context, e: dict) -> dict:
    lv = e["lv"]
    params = LVParams(**{k: tuple(resolve_tree(lv[k], ctx.sc.params))
                         for k in ("alpha", "a", "beta", "b", "c", "d")})
    est = invasion_rate(params, ctx.system.laws, ctx.t_end, ctx.seed, ctx.state(e.get("initial")),
                        batches=int(e.get("batches", 50)))
    out = est.to_dict()
    out["delta1"] = float(dwell_threshold(params))
    out["all_excursions_nonpositive"] = bool(np.all(est.excursions <= 1e-8))
    out["pass"] = bool(est.ci_high < 0 and out["all_excursions_nonpositive"])
    ctx.table("excursions", ["duration", "integral"],
              [[float(a), float(b)] for a, b in zip(est.durations, est.excursions)])
    return out


def _sequence(ctx: Context, spec: dict) -> ControlSequence:
    return ControlSequence(tuple(ctx.num(t) for t in spec["times"]),
                           tuple(int(i) for i in spec["indices"]))


def exp_certify(ctx: Context, e: dict) -> dict:
    cs = _sequence(ctx, e["sequence"])
    m = len(cs) - 2
    T = ctx.num(e.get("T", sum(cs.times[: m + 1])))
    cert = submersion_certificate(ctx.system, ctx.state(e.get("initial")), cs, T)
    return cert.to_dict()


def exp_plan_access(ctx: Context, e: dict) -> dict:
    sysm = ctx.system
    eps = ctx.num(e.get("eps", 1e-2))
    rng = np.random.default_rng(ctx.seed)
    if "targets" in e:
        targets = [(np.atleast_1d(resolve_tree(t.get("x", ctx.sc.initial.x.tolist()), ctx.sc.params)),
                    _sequence(ctx, t)) for t in e["targets"]]
    else:
        n, legs, tmax = int(e.get("n_targets", 10)), int(e.get("legs", 3)), ctx.num(e.get("max_time", 1.0))
        pts = sysm.compact.sample(n, rng)
        targets = []
        for x in pts:
            idx = rng.integers(sysm.n_states, size=legs)
            targets.append((x, ControlSequence(tuple(tmax * (0.1 + 0.9 * rng.random(legs))),
                                               tuple(int(i) for i in idx))))
    plans = []
    for x, cs in targets:
        p = approximate_admissible(sysm, x, cs, eps, rng)
        plans.append({"x": x.tolist(), "legs": len(cs), "steps": len(p.sequence),
                      "iterations": p.iterations, "step_bound": p.step_bound, "error": p.error,
                      "admissible": p.admissible,
                      "pass": bool(p.admissible and p.error <= eps
                                   and p.iterations <= 10 * max(p.step_bound, 1))})
    return {"eps": eps, "plans": plans, "pass": all(p["pass"] for p in plans)}


def exp_fixedpoint(ctx: Context, e: dict) -> dict:
    t0, t1 = ctx.num(e.get("t0", np.log(2))), ctx.num(e.get("t1", np.log(2)))
    eps = ctx.num(e.get("eps", 1e-6))
    z, cs, res = one_d_accessible_point(ctx.system, t0, t1, ctx.num(e.get("x_init", 0.0)), eps,
                                        int(e.get("reps", 40)))
    start = HybridState(z.x, 0.0, 1)
    rep = is_admissible(ctx.system, start, cs)
    out = {"x_star": res.x_star, "factor": res.factor, "iterations": res.iterations,
           "template_admissible": bool(rep)}
    if rep:
        out["template_endpoint"] = float(rep.endpoint.x[0])
    return out


def km_boundary(system, i: int, xs: np.ndarray, s_cap: float, tol: float = 1e-12) -> np.ndarray:
    """sup{s : (x, s, i) in K_M} on a grid of points, by bisection in s."""
    law, rate = system.laws[i], system.rates[i]
    hi_s = law.tbar / rate.lambda_min if np.isfinite(law.tbar) else s_cap
    hi_s = min(hi_s, s_cap)
    X = np.atleast_2d(xs.T).T if xs.ndim == 1 else xs

    def member(s: np.ndarray) -> np.ndarray:
        if rate.constant is not None:
            try:
                back = system.flow(i, -s, X)
                ok = np.all(np.isfinite(back), axis=-1) & system.compact.contains(back, 0.0)
                return ok & (law.survival(rate.constant * s) > 0) & system.compact.contains(X, 0.0)
            except BackwardHorizonExceeded:
                pass
        return np.array([in_K_M(system, HybridState(x, float(v), i)) for x, v in zip(X, s)])

    lo = np.zeros(len(X))
    hi = np.full(len(X), hi_s)
    inside0 = member(lo)
    top = member(hi * (1 - 1e-15))
    for _ in range(200):
        if np.max(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        m = member(mid)
        lo = np.where(m, mid, lo)
        hi = np.where(m, hi, mid)
    out = np.where(top, hi_s, lo)
    return np.where(inside0, out, np.nan)


def exp_km_boundary(ctx: Context, e: dict) -> dict:
    sysm = ctx.system
    n = int(e.get("points", 1000))
    lo = np.asarray(sysm.compact.lo if hasattr(sysm.compact, "lo") else sysm.compact.center - sysm.compact.radius)
    hi = np.asarray(sysm.compact.hi if hasattr(sysm.compact, "hi") else sysm.compact.center + sysm.compact.radius)
    if sysm.dim != 1:
        raise ConfigError("km-boundary needs a one-dimensional system")
    xs = np.linspace(lo[0], hi[0], n)
    s_cap = ctx.num(e.get("s_cap", 50.0))
    rows = []
    out = {"points": n}
    for i in range(sysm.n_states):
        b = km_boundary(sysm, i, xs, s_cap)
        rows += [[int(i), float(x), float(s)] for x, s in zip(xs, b)]
        out[f"max_s_state_{i}"] = float(np.nanmax(b))
    ctx.table("kmboundary", ["i", "x", "s"], rows)
    return out


def exp_bracket_rank(ctx: Context, e: dict) -> dict:
    mode = e.get("mode", "strong")
    pts = [np.atleast_1d(resolve_tree(p, ctx.sc.params)) for p in e["points"]]
    ranks = [bracket_rank(ctx.system.fields, p, mode, depth=int(e.get("depth", 3))).rank for p in pts]
    out = {"mode": mode, "points": [p.tolist() for p in pts], "ranks": ranks}
    if "expected" in e:
        out["pass"] = ranks == [int(r) for r in e["expected"]]
    return out


# --- invariant checks ----------------------------------------------------

def _grid(ctx: Context, e: dict) -> np.ndarray:
    dt = float(e.get("grid_dt", _grid_dt(ctx)))
    return np.arange(0.0, ctx.t_end + 0.5 * dt, dt)[: int(np.floor(ctx.t_end / dt + 1e-9)) + 1]


def inv_index_block(ctx: Context, e: dict) -> dict:
    z0 = ctx.state(e.get("initial"))
    allowed = [int(a) for a in e["allowed"]]
    frozen = [int(k) for k in e.get("frozen", [])]
    ps = sample_states(ctx.system, z0, _grid(ctx, e), ctx.replicas, ctx.seed)
    in_block = bool(np.isin(ps.i, allowed).all())
    drift = float(np.max(np.abs(ps.x[..., frozen] - z0.x[frozen]))) if frozen else 0.0
    return {"replicas": ctx.replicas, "indices_seen": sorted(int(v) for v in np.unique(ps.i)),
            "index_stays_in_block": in_block, "frozen_max_change": drift,
            "pass": in_block and drift == 0.0}


def inv_norm_floor(ctx: Context, e: dict) -> dict:
    z0 = ctx.state(e.get("initial"))
    factor = ctx.num(e["factor"])
    ps = sample_states(ctx.system, z0, _grid(ctx, e), ctx.replicas, ctx.seed)
    ratio = float(np.min(np.linalg.norm(ps.x, axis=-1)) / np.linalg.norm(z0.x))
    return {"replicas": ctx.replicas, "floor": factor, "min_ratio": ratio,
            "pass": bool(ratio >= factor)}


def inv_interval_trap(ctx: Context, e: dict) -> dict:
    grid = _grid(ctx, e)
    groups = []
    ok = True
    for g in e["groups"]:
        lo, hi = ctx.num(g["lo"]), ctx.num(g["hi"])
        seen_lo, seen_hi = np.inf, -np.inf
        for x0 in g["starts"]:
            z0 = HybridState([ctx.num(x0)], 0.0, int(g.get("i", 0)))
            for rec in simulate_many(ctx.system, z0, ctx.t_end, ctx.replicas, ctx.seed,
                                     ctx.threads, grid=grid):
                x = rec.grid["x"][:, 0]
                # the extremes of a monotone flow piece sit at the jump points
                allx = np.concatenate([x, rec.xs[:, 0]])
                seen_lo, seen_hi = min(seen_lo, allx.min()), max(seen_hi, allx.max())
        good = bool(seen_lo >= lo and seen_hi <= hi)
        ok &= good
        groups.append({"lo": lo, "hi": hi, "seen_min": float(seen_lo), "seen_max": float(seen_hi),
                       "pass": good})
    return {"groups": groups, "pass": ok}


def inv_first_jump(ctx: Context, e: dict) -> dict:
    starts = [ctx.state(s) for s in e["starts"]]
    expected = [ctx.num(v) for v in e.get("expected", [])]
    firsts = []
    for z in starts:
        rec = simulate(ctx.system, z, ctx.num(e.get("horizon", 10.0)), ctx.seed)
        firsts.append(float(rec.times[1]) if rec.n_jumps else float(rec.next_jump))
    out = {"first_jumps": firsts}
    if expected:
        err = float(np.max(np.abs(np.array(firsts) - np.array(expected))))
        out.update({"expected": expected, "max_error": err, "pass": err <= 1e-9})
    return out


INVARIANTS: dict[str, Callable[[Context, dict], dict]] = {
    "index-block": inv_index_block,
    "norm-floor": inv_norm_floor,
    "interval-trap": inv_interval_trap,
    "first-jump": inv_first_jump,
}


def exp_invariant(ctx: Context, e: dict) -> dict:
    check = e.get("check")
    if check not in INVARIANTS:
        raise ConfigError(f"unknown invariant check {check!r}")
    return {"check": check, **INVARIANTS[check](ctx, e)}


EXPERIMENTS: dict[str, Callable[[Context, dict], dict]] = {
    "simulate": exp_simulate,
    "occupation": exp_occupation,
    "drift": exp_drift,
    "tv-decay": exp_tv_decay,
    "invasion": exp_invasion,
    "certify-submersion": exp_certify,
    "plan-access": exp_plan_access,
    "fixedpoint": exp_fixedpoint,
    "km-boundary": exp_km_boundary,
    "bracket-rank": exp_bracket_rank,
    "invariant": exp_invariant,
}


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else str(f)
    return v


def run_scenario(sc: Scenario, out: str | Path | None = None, seed: int | None = None,
                 t_end: float | None = None, replicas: int | None = None, threads: int = 1,
                 fmt: str = "csv", only: list[str] | None = None) -> dict:
    """Run every experiment of sc; write artifacts under out and return the report."""
    if fmt not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    run = sc.run
    ctx = Context(sc, Path(out) if out is not None else None,
                  seed if seed is not None else int(run.get("seed", 0)),
                  t_end if t_end is not None else sc.number(run.get("t_end", 10.0)),
                  replicas if replicas is not None else int(run.get("replicas", 100)),
                  threads, fmt)
    results = []
    for e in sc.experiments:
        kind = e.get("kind")
        if only and kind not in only:
            continue
        if kind not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        try:
            res = EXPERIMENTS[kind](ctx, e)
        except SemiSwitchError as exc:
            res = {"error": f"{type(exc).__name__}: {exc}", "pass": False}
        results.append({"kind": kind, **res})
    report = _clean({"scenario": sc.name, "anchor": sc.anchor, "seed": ctx.seed,
                     "t_end": ctx.t_end, "replicas": ctx.replicas, "format": fmt,
                     "experiments": results})
    report["files"] = sorted(ctx.files + (["report.json"] if out is not None else []))
    ctx.write("report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report
