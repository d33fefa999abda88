"""Lyapunov drift, semigroup approximation and minorisation certificates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .accessibility import is_admissible
from .dynamics import ControlSequence, leg_endpoints, numerical_rank, submersion_jacobian
from .errors import DiscontinuousLaw, NoDensity
from .laws import HoldingLaw
from .process import replica_rng, sample_states
from .switching import (HybridState, SwitchedSystem, cumulative_rate, jump_density,
                        sample_dominating, sample_holding)

DENOM_FLOOR = 1e-12


@dataclass
class LyapunovParams:
    """Exponential-decay data: G^i(t) <= C e^{-beta t}, delta in (0, 1)."""

    delta: float
    beta: float
    C: float
    lambda_min: float

    @property
    def gamma(self) -> float:
        return self.delta * self.beta * self.lambda_min

    def validate(self, system: SwitchedSystem):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        for law in system.laws:
            law.check_exp_decay(self.C, self.beta)


def _truncated_moment(law: HoldingLaw, a: float, upper: float) -> float:
    """int_{[0, upper]} e^{a h} mu(dh)."""
    return law.expect(lambda h: np.exp(a * h), upper=upper)


def lyapunov_f(system: SwitchedSystem, z: HybridState, params: LyapunovParams,
               method: str = "auto", mc_n: int = 10_000, rng=None, return_stderr: bool = False):
    """f(x,s,i) = e^{-gs}/G^i(Lam) (E_{phi_{-s}x,0,i}[e^{g S_1} 1{S_1 <= s}] - 1) + 1.

    Lam = int_{-s}^0 lam^i.  Returns +inf when G^i(Lam) < 1e-12.
    method "quad" needs constant rates; "mc" uses mc_n holding draws.
    """
    g = params.gamma
    law = system.laws[z.i]
    rate = system.rates[z.i]
    lam0 = cumulative_rate(system, z, 0.0)
    denom = float(law.survival(lam0))
    if denom < DENOM_FLOOR:
        return (np.inf, 0.0) if return_stderr else np.inf
    if method == "auto":
        method = "quad" if rate.constant is not None else "mc"
    se = 0.0
    if z.s == 0.0:
        moment = float(1.0 - law.survival(0.0))  # mass of {S_1 = 0}
    elif method == "quad":
        if rate.constant is None:
            raise ValueError("quadrature route needs a constant rate")
        c = rate.constant
        moment = _truncated_moment(law, g / c, c * z.s)
    else:
        rng = rng if isinstance(rng, np.random.Generator) else replica_rng(int(rng or 0), 7)
        back = system.flow(z.i, -z.s, z.x) if z.s > 0 else z.x
        S = np.asarray(sample_holding(system, HybridState(back, 0.0, z.i), rng, mc_n))
        vals = np.exp(g * S) * (S <= z.s)
        moment = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(mc_n)) * np.exp(-g * z.s) / denom
    f = np.exp(-g * z.s) / denom * (moment - 1.0) + 1.0
    return (f, se) if return_stderr else f


_GL_X, _GL_W = leggauss(48)


def lyapunov_f_batch(system: SwitchedSystem, params: LyapunovParams, s: np.ndarray,
                     i: np.ndarray) -> np.ndarray:
    """Vectorised f for constant-rate systems (f then ignores x)."""
    if not system.constant_rates:
        raise ValueError("batch evaluation needs constant rates")
    g = params.gamma
    s = np.asarray(s, dtype=float)
    i = np.asarray(i, dtype=int)
    out = np.empty_like(s)
    for k, law in enumerate(system.laws):
        sel = i == k
        if not sel.any():
            continue
        c = system.rates[k].constant
        up = c * s[sel]
        moment = np.zeros_like(up)
        for a, b in law.intervals:
            lo = np.full_like(up, a)
            hi = np.minimum(b, up)
            ok = hi > lo
            mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
            nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
            dens = law._density(nodes)
            val = (half[:, None] * _GL_W * np.exp(g / c * nodes) * dens).sum(axis=1)
            moment += np.where(ok, val, 0.0)
        for a, w in zip(law.atoms, law.atom_weights):
            moment += np.where(a <= up, w * np.exp(g / c * a), 0.0)
        denom = law.survival(up)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.exp(-g * s[sel]) / denom * (moment - 1.0) + 1.0
        out[sel] = np.where(denom < DENOM_FLOOR, np.inf, f)
    return out


@dataclass
class DriftRecord:
    z: HybridState
    t: float
    bound: float
    estimate: float
    stderr: float
    passed: bool

    def to_dict(self) -> dict:
        return {"z": {"x": self.z.x.tolist(), "s": self.z.s, "i": self.z.i}, "t": self.t,
                "bound": self.bound, "estimate": self.estimate, "stderr": self.stderr,
                "pass": self.passed}


def drift_check(system: SwitchedSystem, z: HybridState, t: float, params: LyapunovParams,
                replicas: int = 10_000, seed: int = 0,
                f: Callable | None = None) -> DriftRecord:
    """Monte Carlo test of P_t f(z) <= e^{-gamma t} f(z) + 1 (3 standard errors)."""
    ps = sample_states(system, z, [t], replicas, seed)
    if f is None and system.constant_rates:
        vals = lyapunov_f_batch(system, params, ps.tau[:, 0], ps.i[:, 0])
        fz = lyapunov_f(system, z, params)
    else:
        fn = f or (lambda zz: lyapunov_f(system, zz, params))
        vals = np.array([fn(HybridState(ps.x[r, 0], ps.tau[r, 0], ps.i[r, 0]))
                         for r in range(replicas)])
        fz = fn(z)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(replicas))
    bound = float(np.exp(-params.gamma * t) * fz + 1.0)
    return DriftRecord(z, float(t), bound, est, se, bool(est <= bound + 3 * se))


# --- semigroup by iterating the renewal operator ------------------------

@dataclass
class GridFunction1D:
    """Values on x_grid x tau_grid x states, bilinear between nodes."""

    x_grid: np.ndarray
    tau_grid: np.ndarray
    values: np.ndarray
    error_bound: float = np.nan

    def __call__(self, x, s, i):
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        v = self.values[..., int(i)]
        xg, tg = self.x_grid, self.tau_grid
        ix = np.clip(np.searchsorted(xg, x) - 1, 0, xg.size - 2)
        it = np.clip(np.searchsorted(tg, s) - 1, 0, tg.size - 2)
        wx = np.clip((x - xg[ix]) / (xg[ix + 1] - xg[ix]), 0, 1)
        wt = np.clip((s - tg[it]) / (tg[it + 1] - tg[it]), 0, 1)
        return ((1 - wx) * (1 - wt) * v[ix, it] + wx * (1 - wt) * v[ix + 1, it]
                + (1 - wx) * wt * v[ix, it + 1] + wx * wt * v[ix + 1, it + 1])


def _interp_rows(W: np.ndarray, xg: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row interpolation of W (nx, p) at points y (clamped to the grid)."""
    y = np.clip(y, xg[0], xg[-1])
    ix = np.clip(np.searchsorted(xg, y) - 1, 0, xg.size - 2)
    w = ((y - xg[ix]) / (xg[ix + 1] - xg[ix]))[:, None]
    return (1 - w) * W[ix] + w * W[ix + 1]


def _lam_forward(system, j, xg, tg, refine=5):
    """int_0^{t_m} lam^j(phi^j_r x) dr on the x grid, trapezoid on a refined grid."""
    rate = system.rates[j]
    if rate.constant is not None:
        return np.broadcast_to(rate.constant * tg, (xg.size, tg.size)).copy()
    fine = np.linspace(0.0, tg[-1], (tg.size - 1) * refine + 1)
    X = system.flow(j, np.broadcast_to(fine, (xg.size, fine.size)).ravel(),
                    np.repeat(xg[:, None], fine.size, axis=0))
    lam = system.rates[j](X).reshape(xg.size, fine.size)
    dt = fine[1] - fine[0]
    cum = np.concatenate([np.zeros((xg.size, 1)),
                          np.cumsum(0.5 * dt * (lam[:, 1:] + lam[:, :-1]), axis=1)], axis=1)
    return cum[:, ::refine]


def semigroup_iterate(system: SwitchedSystem, f: Callable | GridFunction1D, t: float,
                      k_iters: int, x_grid=None, tau_grid=None, n_time: int = 200,
                      n_mc: int = 10_000, seed: int = 0) -> GridFunction1D:
    """k-fold renewal operator applied to Psi_0 = f, giving approx P_t f.

    (H Psi)(z, t) = f(phi_t z) G_z(t) + sum_j int_0^t Psi((phi_u x, 0, j), t-u) q_ij dmu_z(u).

    The time integral uses n_time cells with exact mu_z masses and the
    trapezoid rule for the integrand.  Only one-dimensional systems with
    continuous laws are supported.  error_bound holds a Monte Carlo value
    of (|Psi_0| + |f|) P(T~_{k-1} <= t).
    """
    if system.dim != 1:
        raise ValueError("grid iteration is implemented for one-dimensional systems")
    if any(not law.continuous for law in system.laws):
        raise DiscontinuousLaw("renewal iteration needs continuous survival functions")
    M = system.compact
    if x_grid is None:
        x_grid = np.linspace(float(M.lo[0]), float(M.hi[0]), 400)
    if tau_grid is None:
        tau_grid = np.linspace(0.0, 2.0, 200)
    xg, sg = np.asarray(x_grid, float), np.asarray(tau_grid, float)
    N = system.n_states
    ff = f if not isinstance(f, GridFunction1D) else (lambda x, s, i: f(x, s, i))
    tg = np.linspace(0.0, t, n_time + 1)

    if k_iters == 0:
        vals = np.stack([ff(xg[:, None], sg[None, :], i) * np.ones((xg.size, sg.size))
                         for i in range(N)], axis=-1)
        return GridFunction1D(xg, sg, vals, 0.0)

    # per state: flowed points y[a, m] = phi^j_{t_m}(x_a), survival and cell masses from tau = 0
    Y, G0, mass, Qrows = [], [], [], []
    for j in range(N):
        y = system.flow(j, np.broadcast_to(tg, (xg.size, tg.size)).ravel(),
                        np.repeat(xg[:, None], tg.size, axis=0)).reshape(xg.size, tg.size)
        lam = _lam_forward(system, j, xg, tg)
        G = system.laws[j].survival(lam)
        Y.append(y)
        G0.append(G)
        mass.append(G[:, :-1] - G[:, 1:])
        Qrows.append(np.array([[system.Q(np.array([v]))[j] for v in row] for row in y])
                     if system.Q.constant is None else None)

    def qcol(j, l, m):
        if Qrows[j] is None:
            return np.full(xg.size, system.Q.constant[j, l])
        return Qrows[j][:, m, l]

    # W[j][a, n] = H^k Psi((x_a, 0, j), t_n)
    W = [np.repeat(np.asarray(ff(xg, 0.0, j) * np.ones(xg.size))[:, None], tg.size, axis=1)
         for j in range(N)]
    head = [ff(Y[j], tg[None, :], j) * G0[j] for j in range(N)]
    for _ in range(k_iters - 1):
        newW = []
        for j in range(N):
            out = head[j].copy()
            for l in range(N):
                if system.Q.constant is not None and system.Q.constant[j, l] == 0:
                    continue
                for m in range(tg.size):
                    B = qcol(j, l, m)[:, None] * _interp_rows(W[l], xg, Y[j][:, m])
                    if m >= 1:
                        out[:, m:] += 0.5 * mass[j][:, m - 1, None] * B[:, :tg.size - m]
                    if m <= tg.size - 2:
                        out[:, m + 1:] += 0.5 * mass[j][:, m, None] * B[:, 1:tg.size - m]
            newW.append(out)
        W = newW

    # final application at general (x, s, i) and time t
    vals = np.zeros((xg.size, sg.size, N))
    L = tg.size - 1
    for i in range(N):
        rate = system.rates[i]
        lam_f = _lam_forward(system, i, xg, tg)
        if rate.constant is not None:
            lam_b = rate.constant * np.broadcast_to(sg, (xg.size, sg.size))
        else:
            lam_b = np.array([[cumulative_rate(system, HybridState([xa], sb, i), 0.0)
                               for sb in sg] for xa in xg])
        # Bt[l][a, m] = q_il(y_am) W[l](y_am, t - t_m)
        Bt = np.zeros((N, xg.size, tg.size))
        for l in range(N):
            for m in range(tg.size):
                Wi = _interp_rows(W[l][:, [L - m]], xg, Y[i][:, m])[:, 0]
                Bt[l, :, m] = qcol(i, l, m) * Wi
        law = system.laws[i]
        for b, s in enumerate(sg):
            g0 = law.survival(lam_b[:, b])
            with np.errstate(invalid="ignore", divide="ignore"):
                Gz = law.survival(lam_b[:, b, None] + lam_f) / g0[:, None]
            Gz = np.nan_to_num(Gz)
            mz = Gz[:, :-1] - Gz[:, 1:]
            acc = ff(Y[i][:, L], s + t, i) * Gz[:, L]
            for l in range(N):
                acc = acc + 0.5 * np.sum(mz * (Bt[l, :, :-1] + Bt[l, :, 1:]), axis=1)
            vals[:, b, i] = acc

    rng = replica_rng(seed, 11)
    if k_iters >= 2:
        tot = np.zeros(n_mc)
        for _ in range(k_iters - 1):
            tot += sample_dominating(system, rng, n_mc)
        p_tail = float(np.mean(tot <= t))
    else:
        p_tail = 1.0
    sup_f = float(np.max(np.abs(vals))) if np.all(np.isfinite(vals)) else np.inf
    sup0 = float(np.max(np.abs(np.stack([W[j] for j in range(N)]))))
    return GridFunction1D(xg, sg, vals, (sup0 + sup_f) * p_tail)


def resolvent_sample(system: SwitchedSystem, z0: HybridState, replicas: int, seed: int = 0):
    """States Z_T at independent T ~ Exp(1); returns (T, PathSample)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 2**31 - 1])))
    T = rng.exponential(1.0, replicas)
    return T, sample_states(system, z0, T[:, None], replicas, seed)


def regularity_probe(law: HoldingLaw, t: float, radius: float, n: int = 1000):
    """(is_regular, min density) over [t - r, t + r] intersected with (0, inf)."""
    if not law.continuous:
        raise NoDensity("regularity is defined for laws with a density")
    lo = max(t - radius, 0.0)
    grid = np.linspace(lo, t + radius, n)
    grid = grid[grid > 0]
    dmin = float(np.min(law.density(grid))) if grid.size else 0.0
    return dmin > 0, max(dmin, 0.0)


@dataclass
class SubmersionCertificate:
    passed: bool
    rank: int
    dim: int
    admissible: bool
    regular: list[bool] = field(default_factory=list)
    min_density: list[float] = field(default_factory=list)
    reasons: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"pass": self.passed, "rank": self.rank, "dim": self.dim,
                "admissible": self.admissible, "regular": self.regular,
                "min_density": self.min_density, "reasons": self.reasons}


def submersion_certificate(system: SwitchedSystem, z: HybridState, cs: ControlSequence,
                           T: float, radius: float | None = None) -> SubmersionCertificate:
    """Check (z, cs, T) certifies a local minorisation.

    cs has m + 2 legs whose first m + 1 times sum to T.  Needs cs admissible
    from z, a full-rank submersion Jacobian of the first m + 1 legs, s_1
    regular for mu_z and each later s_k regular for its own leg law.
    """
    m = len(cs) - 2
    reasons = []
    if m < 1:
        return SubmersionCertificate(False, 0, system.dim, False, reasons=["need m + 2 >= 3 legs"])
    if abs(sum(cs.times[: m + 1]) - T) > 1e-9 * max(1.0, T):
        reasons.append("first m + 1 times do not sum to T")
    adm = is_admissible(system, z, cs)
    if not adm:
        reasons += adm.failures
    J = submersion_jacobian(system.fields, z.x, cs.times[:m], cs.indices[: m + 1], T,
                            system.flow_config)
    rank = numerical_rank(J, atol=1e-6)
    if rank < system.dim:
        reasons.append(f"submersion rank {rank} < {system.dim}")
    pts = leg_endpoints(system.fields, cs, z.x, system.flow_config)
    regular, dens = [], []
    for k in range(m + 2):
        sk = cs.times[k]
        r = radius or min(0.05, 0.5 * sk) if sk > 0 else 0.0
        zk = z if k == 0 else HybridState(pts[k], 0.0, cs.indices[k])
        try:
            if r <= 0:
                raise NoDensity("zero-length leg")
            grid = np.linspace(sk - r, sk + r, 41)
            dmin = float(np.min(jump_density(system, zk, grid)))
        except NoDensity:
            dmin = 0.0
        regular.append(dmin > 0)
        dens.append(dmin)
        if dmin <= 0:
            reasons.append(f"s_{k + 1} is not regular")
    ok = not reasons
    return SubmersionCertificate(ok, rank, system.dim, bool(adm), regular, dens, reasons)
