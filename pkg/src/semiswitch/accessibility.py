"""Admissible control sequences, reachable points and accessibility tools."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import Ball, ControlSequence, composite_flow, leg_endpoints, lipschitz_constants
from .errors import (IrreducibilityPathNotFound, NotAdmissible, NotContracting,
                     ZeroNotInSupport)
from .integrate import integrate_until
from .switching import (HybridState, SwitchedSystem, _augmented, cumulative_rate,
                        rate_integral)


@dataclass
class AdmissibilityReport:
    admissible: bool
    failures: list[str] = field(default_factory=list)
    endpoint: HybridState | None = None

    def __bool__(self) -> bool:
        return self.admissible


def _tail_open(system: SwitchedSystem, i: int, lam_at: float) -> bool:
    """(a, inf) meets the support iff the rate integral at a is below tbar."""
    return lam_at < system.laws[i].tbar


def is_admissible(system: SwitchedSystem, z: HybridState, cs: ControlSequence,
                  eta: float = 1e-9) -> AdmissibilityReport:
    """Check every clause of admissibility of cs from z; list all failures."""
    m = len(cs)
    fails: list[str] = []
    if m == 0:
        return AdmissibilityReport(False, ["empty control sequence"])
    s, i = cs.times, cs.indices
    if i[0] != z.i:
        fails.append(f"i_1={i[0]} differs from the current index {z.i}")
    laws = system.laws
    # first leg, measured from the last switch: int_{-s}^{s_1} lam
    lam_first = cumulative_rate(system, z, s[0]) if i[0] == z.i else np.nan
    if m == 1:
        if i[0] == z.i and not _tail_open(system, i[0], lam_first):
            fails.append("tail: (s + s_1, inf) misses the support")
    if m > 1 and system.constant_rates and system.Q.constant is not None:
        # nothing below depends on the leg start points: check all legs at once
        if i[0] == z.i and not bool(laws[i[0]].in_support(lam_first, eta)):
            fails.append("leg 1: s + s_1 not in the support")
        idx = np.asarray(i)
        rates = np.array([r.constant for r in system.rates])
        lam = rates[idx] * np.asarray(s)
        zero_q = np.flatnonzero(~(system.Q.constant[idx[:-1], idx[1:]] > 0))
        for k in zero_q + 1:
            fails.append(f"leg {k + 1}: q_{i[k - 1]}{i[k]} = 0")
        ok = np.ones(m, dtype=bool)
        for j in np.unique(idx[1:-1]):
            sel = np.flatnonzero(idx == j)
            sel = sel[(sel > 0) & (sel < m - 1)]
            ok[sel] = laws[j].in_support(lam[sel], eta)
        for k in np.flatnonzero(~ok):
            fails.append(f"leg {k + 1}: s_{k + 1} not in the support")
        if not _tail_open(system, i[-1], lam[-1]):
            fails.append(f"tail: (s_{m}, inf) misses the support")
        pts = [composite_flow(system.fields, cs, z.x, system.flow_config)]
    else:
        pts = leg_endpoints(system.fields, cs, z.x, system.flow_config)
    if m > 1 and len(pts) > 1:
        if i[0] == z.i and not bool(laws[i[0]].in_support(lam_first, eta)):
            fails.append("leg 1: s + s_1 not in the support")
        for k in range(1, m):
            xk = pts[k]
            q = system.Q(xk)[i[k - 1], i[k]]
            if not q > 0:
                fails.append(f"leg {k + 1}: q_{i[k - 1]}{i[k]} = 0 at x_{k + 1}")
            lam = rate_integral(system, i[k], xk, s[k])
            if k < m - 1:
                if not bool(laws[i[k]].in_support(lam, eta)):
                    fails.append(f"leg {k + 1}: s_{k + 1} not in the support")
            elif not _tail_open(system, i[k], lam):
                fails.append(f"tail: (s_{m}, inf) misses the support")
    endpoint = None
    if not fails:
        x_end = pts[-1]
        s_star = z.s + s[0] if m == 1 else s[-1]
        endpoint = HybridState(x_end, s_star, i[-1])
    return AdmissibilityReport(not fails, fails, endpoint)


def reach_endpoint(system: SwitchedSystem, z: HybridState, cs: ControlSequence) -> HybridState:
    rep = is_admissible(system, z, cs)
    if not rep:
        raise NotAdmissible("; ".join(rep.failures))
    return rep.endpoint


# --- approximation by admissible sequences -----------------------------

def time_to_rate(system: SwitchedSystem, y, j: int, S: float) -> float:
    """inf{t : int_0^t lam^j(phi^j_r y) dr >= S}."""
    rate = system.rates[j]
    if rate.constant is not None:
        return S / rate.constant
    t_max = S / rate.lambda_min * (1 + 1e-9) + 1e-12
    t, _ = integrate_until(_augmented(system, j), np.append(y, 0.0), np.size(y), S, t_max)
    return float(t)


@dataclass
class AccessPlan:
    sequence: ControlSequence
    endpoint: np.ndarray
    target: np.ndarray
    error: float
    eps: float
    h: float
    iterations: int
    step_bound: int
    admissible: bool
    constants: tuple[float, float] = (0.0, 0.0)


def approximate_admissible(system: SwitchedSystem, x, target: ControlSequence, eps: float,
                           rng: np.random.Generator | None = None, safety: float = 2.0,
                           check: bool = True) -> AccessPlan:
    """Admissible sequence from (x, 0, i_1) ending within eps of Phi_s^i(x).

    Each target leg is walked in small admissible steps of law-support
    length; consecutive steps of the same field, and changes between
    target fields, are joined by short positive-probability detours.
    Requires 0 in the support of every law and a positive path between
    any two states at every point.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = len(target)
    for j, law in enumerate(system.laws):
        if law.support_min > 0:
            raise ZeroNotInSupport(f"law {j} has support starting at {law.support_min}")
    # walked legs overshoot by at most h each and detours add at most h;
    # (m + 1) h <= min(eps, 1), so partial sums stay below total + min(eps, 1)
    T = target.total_time + min(eps, 1.0)
    C, L = lipschitz_constants(system.fields, Ball(x, 1.0), T, rng=rng,
                               config=system.flow_config)
    K = safety * C * np.exp(L * T)
    h = min(eps / ((m + 1) * K), 0.5 * min(target.times), 1.0 / (m + 1))
    if not h > 0:
        raise ValueError(f"step size underflowed (C={C:g}, L={L:g}, T={T:g})")
    lmin, lmax = system.lambda_min, system.lambda_max
    S = {}
    for j in set(target.indices) | set(range(system.n_states)):
        pt = system.laws[j].support_point_below(lmin * h)
        if pt is None or pt <= 0:
            raise ZeroNotInSupport(f"no positive support point of law {j} below {lmin * h:g}")
        S[j] = pt
    step_bound = int(np.ceil(max(target.times) * lmax / min(S[j] for j in target.indices)))
    # total detour time is at most h: split evenly over every possible detour
    n_detours = m * (step_bound + 1) + m
    budget = h / n_detours

    times: list[float] = []
    idx: list[int] = []
    y = x.copy()
    # with constant rates and Q the step times never look at y, so the
    # sequence is flowed once at the end
    lazy = system.constant_rates and system.Q.constant is not None

    def push(t, j):
        nonlocal y
        times.append(float(t))
        idx.append(int(j))
        if not lazy:
            y = np.asarray(system.flow(j, t, y), dtype=float)

    paths: dict[tuple[int, int], list[int]] = {}
    small: dict[tuple[int, int], float] = {}

    def detour(a: int, b: int):
        # with a constant Q the witness path does not depend on y
        path = paths.get((a, b)) if system.Q.constant is not None else None
        if path is None:
            path = system.Q.positive_path(y, a, b)
            if path is None:
                raise IrreducibilityPathNotFound(f"no path {a} -> {b} at {y}")
            paths[(a, b)] = path
        inner = path[1:-1]
        for j in inner:
            key = (j, len(inner))
            if key not in small:
                pt = system.laws[j].support_point_below(lmin * budget / len(inner))
                if pt is None or pt <= 0:
                    raise ZeroNotInSupport(f"law {j} has no small support point")
                small[key] = pt
            push(time_to_rate(system, y, j, small[key]), j)

    iterations = 0
    for l in range(m):
        il, sl = target.indices[l], target.times[l]
        walked = 0.0
        first = True
        while first or walked < sl - h:
            if not first:
                detour(il, il)
            t = time_to_rate(system, y, il, S[il])
            push(t, il)
            walked += t
            iterations += 1
            first = False
        if l < m - 1:
            detour(il, target.indices[l + 1])
    seq = ControlSequence(tuple(times), tuple(idx))
    if lazy:
        y = composite_flow(system.fields, seq, x, system.flow_config)
    goal = composite_flow(system.fields, target, x, system.flow_config)
    err = float(np.linalg.norm(y - goal))
    adm = bool(is_admissible(system, HybridState(x, 0.0, target.indices[0]), seq)) if check else True
    return AccessPlan(seq, y, goal, err, eps, h, iterations, m * step_bound, adm, (C, L))


# --- one-dimensional accessibility -------------------------------------

@dataclass
class FixedPointResult:
    x_star: float
    factor: float
    iterations: int


def fixed_point_1d(flow0: Callable, flow1: Callable, t0: float, t1: float, x_init: float,
                   tol: float = 1e-13, max_iter: int = 100_000) -> FixedPointResult:
    """Fixed point of Psi = phi^0_{t0} o phi^1_{t1} by Picard iteration.

    factor is the largest observed ratio |x_{n+1} - x_n| / |x_n - x_{n-1}|.
    """
    def psi(v):
        return float(np.asarray(flow0(t0, np.atleast_1d(flow1(t1, np.atleast_1d(v))))).ravel()[0])

    xs = [float(x_init)]
    factor = 0.0
    prev_step = None
    for n in range(max_iter):
        nxt = psi(xs[-1])
        step = abs(nxt - xs[-1])
        if prev_step is not None and prev_step > 1e-8:
            factor = max(factor, step / prev_step)
            if factor >= 1.0:
                raise NotContracting(f"observed contraction ratio {factor:g}")
        xs.append(nxt)
        if step < tol:
            return FixedPointResult(nxt, factor, n + 1)
        prev_step = step
    raise NotContracting("no convergence within the iteration budget")


def one_d_accessible_point(system: SwitchedSystem, t0: float, t1: float, x_init: float,
                           eps: float, reps: int = 40):
    """Candidate accessible point (x*, 0, 0) and a template control sequence.

    The template alternates (t1 on field 1, t0 on field 0) reps times and
    ends with eps on field 1; its reachable point tends to (x*, 0, 1) as
    reps grows and eps shrinks.
    """
    res = fixed_point_1d(lambda t, v: system.flow(0, t, v), lambda t, v: system.flow(1, t, v),
                         t0, t1, x_init)
    times = (t1, t0) * reps + (eps,)
    idx = (1, 0) * reps + (1,)
    return HybridState([res.x_star], 0.0, 0), ControlSequence(times, idx), res
