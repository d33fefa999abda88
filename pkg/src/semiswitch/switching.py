"""Rates, jump matrix and the semi-Markov switching kernel.

For a hybrid state z = (x, s, i) the remaining holding time has survival

    G_z(t) = G^i(Lam(t)) / G^i(Lam(0)),   Lam(t) = int_{-s}^t lam^i(phi^i_r x) dr.

Since Lam is continuous and strictly increasing, the generalised inverse
psi_z(u) = inf{r >= 0 : G_z(r) <= u} equals the time at which Lam reaches
isf^i(u G^i(Lam(0))).  That reduction is exact for laws with atoms and
plateaus; only the rate integral needs a root search.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .dynamics import Box, Ball, VectorField, flow
from .errors import BackwardHorizonExceeded, InvalidSystem, NoDensity, NotInK
from .integrate import DEFAULT_CONFIG, FlowConfig, integrate, integrate_until
from .laws import HoldingLaw


@dataclass
class HybridState:
    x: np.ndarray
    s: float
    i: int

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.s = float(self.s)
        self.i = int(self.i)

    def as_tuple(self):
        return (self.x.copy(), self.s, self.i)


@dataclass
class RateFunction:
    """Jump rate lam(x) with declared bounds lambda_min <= lam <= lambda_max."""

    fn: Callable[[np.ndarray], np.ndarray]
    lambda_min: float
    lambda_max: float
    constant: float | None = None

    @classmethod
    def const(cls, c: float) -> "RateFunction":
        c = float(c)
        if c <= 0:
            raise InvalidSystem("rates must be positive")
        return cls(lambda x, c=c: np.full(np.shape(x)[:-1], c), c, c, c)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


class JumpMatrix:
    """Post-jump probabilities q_ij(x): constant matrix or callable."""

    def __init__(self, Q, n_states: int | None = None):
        if callable(Q):
            self._fn = Q
            self.constant = None
            if n_states is None:
                raise InvalidSystem("callable jump matrix needs n_states")
            self.n = n_states
        else:
            M = np.asarray(Q, dtype=float)
            self.constant = M
            self._fn = None
            self.n = M.shape[0]
            self.validate(M)
        self._cum = None if self.constant is None else np.cumsum(self.constant, axis=1)

    @staticmethod
    def validate(M: np.ndarray, tol: float = 1e-12):
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise InvalidSystem("jump matrix must be square")
        if np.any(M < -tol):
            raise InvalidSystem("negative jump probability")
        if np.any(np.abs(np.diag(M)) > tol):
            raise InvalidSystem("jump matrix must have zero diagonal")
        if np.any(np.abs(M.sum(axis=1) - 1.0) > tol):
            raise InvalidSystem("jump matrix rows must sum to 1")

    def __call__(self, x) -> np.ndarray:
        if self.constant is not None:
            return self.constant
        return np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)

    def positive_path(self, x, i: int, j: int, max_len: int | None = None):
        """Shortest path i -> ... -> j (at least one step) through q > 0 at x."""
        M = self(x)
        max_len = max_len or self.n + 1
        start = [(k, (i, k)) for k in range(self.n) if M[i, k] > 0]
        queue = deque(start)
        seen = set()
        while queue:
            node, path = queue.popleft()
            if node == j:
                return list(path)
            if len(path) > max_len or node in seen:
                continue
            seen.add(node)
            for k in range(self.n):
                if M[node, k] > 0:
                    queue.append((k, path + (k,)))
        return None

    def irreducible_at(self, x) -> bool:
        return all(self.positive_path(x, 0, j) is not None for j in range(self.n)) and \
            all(self.positive_path(x, j, 0) is not None for j in range(self.n))


@dataclass
class SwitchedSystem:
    fields: Sequence[VectorField]
    rates: Sequence[RateFunction]
    laws: Sequence[HoldingLaw]
    Q: JumpMatrix
    compact: Box | Ball | None = None
    name: str = ""
    flow_config: FlowConfig = field(default_factory=FlowConfig)

    def __post_init__(self):
        n = len(self.fields)
        if not (len(self.rates) == len(self.laws) == self.Q.n == n):
            raise InvalidSystem("fields, rates, laws and Q must agree on the number of states")
        dims = {f.dim for f in self.fields}
        if len(dims) != 1:
            raise InvalidSystem("all fields must share a dimension")
        for law in self.laws:
            if law.tbar <= 0:
                raise InvalidSystem("holding laws must put mass on (0, inf)")

    @property
    def n_states(self) -> int:
        return len(self.fields)

    @property
    def dim(self) -> int:
        return self.fields[0].dim

    @property
    def lambda_min(self) -> float:
        return min(r.lambda_min for r in self.rates)

    @property
    def lambda_max(self) -> float:
        return max(r.lambda_max for r in self.rates)

    @property
    def constant_rates(self) -> bool:
        return all(r.constant is not None for r in self.rates)

    def flow(self, i: int, t, x, config: FlowConfig | None = None):
        return flow(self.fields[i], t, x, config or self.flow_config)


# --- cumulative rate and conditional survival --------------------------

def _augmented(system: SwitchedSystem, i: int):
    F, lam = system.fields[i], system.rates[i]

    def rhs(y):
        return np.concatenate([F.rhs(y[:, :-1]), lam(y[:, :-1])[:, None]], axis=1)

    return rhs


_G8 = leggauss(8)
_G16 = leggauss(16)


def _gl(fn, a: np.ndarray, b: np.ndarray, rule) -> np.ndarray:
    """Gauss-Legendre integrals of fn over the panels [a_k, b_k], one call to fn."""
    xg, wg = rule
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * xg[None, :]
    vals = np.asarray(fn(nodes.ravel()), dtype=float).reshape(nodes.shape)
    return half * (vals * wg).sum(axis=1)


def _rate_panels(fn, t: float, tol: float = 1e-12, max_rounds: int = 40):
    """Adaptive panels on [0, t] for int fn; returns (edges, panel integrals).

    Panels are halved while the 8- and 16-point rules disagree by more than
    their share of tol.  All panels of one round are evaluated together.
    """
    n0 = max(4, int(np.ceil(abs(t) / 0.25)))
    edges = np.linspace(0.0, t, n0 + 1)
    a, b = edges[:-1], edges[1:]
    done_a, done_b, done_v = [], [], []
    for _ in range(max_rounds):
        fine = _gl(fn, a, b, _G16)
        coarse = _gl(fn, a, b, _G8)
        ok = np.abs(fine - coarse) <= tol * np.abs(b - a) / abs(t) + 1e-15 * np.abs(fine)
        done_a.append(a[ok]), done_b.append(b[ok]), done_v.append(fine[ok])
        if ok.all():
            break
        m = 0.5 * (a[~ok] + b[~ok])
        a, b = np.concatenate([a[~ok], m]), np.concatenate([m, b[~ok]])
    else:
        done_a.append(a), done_b.append(b), done_v.append(fine)
    a, b, v = np.concatenate(done_a), np.concatenate(done_b), np.concatenate(done_v)
    order = np.argsort(a) if t > 0 else np.argsort(-a)
    return np.append(a[order], b[order][-1]), v[order]


def _rate_along(system: SwitchedSystem, i: int, x: np.ndarray):
    F, rate = system.fields[i], system.rates[i]
    xb = x[None, :]
    return lambda r: rate(F.flow(r[:, None] * np.ones((1, 1)), xb).reshape(-1, x.size))


def rate_integral(system: SwitchedSystem, i: int, x, t: float) -> float:
    """int_0^t lam^i(phi^i_r x) dr for t >= 0 (t < 0 integrates backwards)."""
    rate = system.rates[i]
    if t == 0.0:
        return 0.0
    if rate.constant is not None:
        return rate.constant * t
    x = np.asarray(x, dtype=float)
    F = system.fields[i]
    if F.flow is not None:
        _, v = _rate_panels(_rate_along(system, i, x), float(t))
        return float(v.sum())
    cfg = FlowConfig(atol=1e-11, rtol=1e-11)
    y = integrate(_augmented(system, i), np.append(x, 0.0), t, cfg)
    return float(y[-1])


def cumulative_rate(system: SwitchedSystem, z: HybridState, t: float = 0.0) -> float:
    """Lam_z(t) = int_{-s}^{t} lam^i(phi^i_r x) dr."""
    rate = system.rates[z.i]
    if rate.constant is not None:
        return rate.constant * (t + z.s)
    past = -rate_integral(system, z.i, z.x, -z.s) if z.s > 0 else 0.0
    return past + (rate_integral(system, z.i, z.x, t) if t != 0 else 0.0)


def in_K(system: SwitchedSystem, z: HybridState) -> bool:
    """z in K: s >= 0, s below the backward horizon and Lam_z(0) < tbar^i."""
    if z.s < 0 or not (0 <= z.i < system.n_states):
        return False
    if z.s >= system.fields[z.i].horizon(z.x):
        return False
    try:
        lam0 = cumulative_rate(system, z, 0.0)
    except BackwardHorizonExceeded:
        return False
    return bool(lam0 < system.laws[z.i].tbar)


def _check_K(system, z):
    if not in_K(system, z):
        raise NotInK(f"state (x={z.x}, s={z.s}, i={z.i}) is not in K")


def survival(system: SwitchedSystem, z: HybridState, t) -> np.ndarray:
    """Conditional survival G_z(t) of the remaining holding time."""
    _check_K(system, z)
    law = system.laws[z.i]
    lam0 = cumulative_rate(system, z, 0.0)
    g0 = float(law.survival(lam0))
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    rate = system.rates[z.i]
    if rate.constant is not None:
        lam = rate.constant * (t_arr + z.s)
    else:
        lam = np.array([lam0 + rate_integral(system, z.i, z.x, tt) for tt in t_arr])
    out = np.where(t_arr < 0, 1.0, law.survival(lam) / g0)
    return out if np.ndim(t) else float(out[0])


def holding_and_endpoint(system: SwitchedSystem, z: HybridState, u: float,
                         lam0: float | None = None, config: FlowConfig | None = None):
    """(psi_z(u), phi^i_{psi}(x)): holding time and the pre-jump position."""
    i = z.i
    law = system.laws[i]
    rate = system.rates[i]
    cfg = config or system.flow_config
    if lam0 is None:
        lam0 = cumulative_rate(system, z, 0.0)
    target = float(law.isf(u * float(law.survival(lam0))))
    if target <= lam0:
        return 0.0, z.x.copy()
    if rate.constant is not None:
        S = max(target / rate.constant - z.s, 0.0)
        return S, np.asarray(system.flow(i, S, z.x, cfg), dtype=float) if S > 0 else z.x.copy()
    need = target - lam0
    if system.fields[i].flow is not None:
        # closed-form flow: tabulate the rate integral on adaptive panels over a
        # bracket from the rate bounds, then solve inside the crossing panel
        fn = _rate_along(system, i, z.x)
        hi = need / rate.lambda_min * (1 + 1e-8)
        edges, v = _rate_panels(fn, hi)
        cum = np.concatenate([[0.0], np.cumsum(v)])
        k = int(np.searchsorted(cum, need, side="left"))
        if k == 0:
            return 0.0, z.x.copy()
        k = min(k, len(v))
        a0, base = edges[k - 1], cum[k - 1]

        def gap(r):
            return base + float(_gl(fn, np.array([a0]), np.array([r]), _G16)[0]) - need

        lo_r, hi_r = a0, edges[k]
        if gap(hi_r) < 0:
            hi_r = edges[-1]
        S = brentq(gap, lo_r, hi_r, xtol=1e-13, rtol=4 * np.finfo(float).eps) if gap(lo_r) < 0 else lo_r
        return float(S), np.asarray(system.flow(i, S, z.x, cfg), dtype=float)
    t_max = need / rate.lambda_min * (1 + 1e-9) + 1e-12
    S, y = integrate_until(_augmented(system, i), np.append(z.x, lam0), z.x.size,
                           target, t_max, cfg)
    return float(S), y[:-1]


def inverse_survival(system: SwitchedSystem, z: HybridState, u):
    """psi_z(u) = inf{r >= 0 : G_z(r) <= u}, for u in (0, 1]."""
    _check_K(system, z)
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((u_arr <= 0) | (u_arr > 1)):
        raise ValueError("u must lie in (0, 1]")
    law = system.laws[z.i]
    rate = system.rates[z.i]
    lam0 = cumulative_rate(system, z, 0.0)
    if rate.constant is not None:
        target = law.isf(u_arr * float(law.survival(lam0)))
        out = np.maximum(target / rate.constant - z.s, 0.0)
    else:
        out = np.array([holding_and_endpoint(system, z, uu, lam0)[0] for uu in u_arr])
    return out if np.ndim(u) else float(out[0])


def sample_holding(system: SwitchedSystem, z: HybridState, rng: np.random.Generator, size=None):
    u = 1.0 - rng.random(size)
    return inverse_survival(system, z, u)


def post_jump(system: SwitchedSystem, x, i: int, v: float) -> int:
    """theta(x, i)(v): index j with v in the half-open cell (c_{j-1}, c_j]."""
    Q = system.Q
    cum = Q._cum[i] if Q.constant is not None else np.cumsum(Q(x)[i])
    j = int(np.searchsorted(cum, v, side="left"))
    if j >= Q.n:
        # v within rounding of 1: take the last state with positive mass
        row = Q(x)[i]
        j = int(np.flatnonzero(row > 0)[-1])
    return j


def post_jump_batch(system: SwitchedSystem, x: np.ndarray, i: np.ndarray, v: np.ndarray):
    Q = system.Q
    if Q.constant is None:
        return np.array([post_jump(system, xx, int(ii), vv) for xx, ii, vv in zip(x, i, v)],
                        dtype=int)
    cum = Q._cum[i]
    j = np.sum(cum < v[:, None], axis=1)
    over = j >= Q.n
    if over.any():
        last = np.array([np.flatnonzero(Q.constant[k] > 0)[-1] for k in range(Q.n)])
        j[over] = last[i[over]]
    return j


def jump_density(system: SwitchedSystem, z: HybridState, t) -> np.ndarray:
    """Density of the remaining holding time mu_z at t >= 0."""
    law = system.laws[z.i]
    if not law.continuous:
        raise NoDensity("law has atoms")
    _check_K(system, z)
    lam0 = cumulative_rate(system, z, 0.0)
    g0 = float(law.survival(lam0))
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    rate = system.rates[z.i]
    out = np.zeros_like(t_arr)
    for k, tt in enumerate(t_arr):
        if tt < 0:
            continue
        lam_t = lam0 + rate_integral(system, z.i, z.x, tt)
        xt = system.flow(z.i, tt, z.x) if tt > 0 else z.x
        out[k] = float(law.density(lam_t)) * float(rate(xt)) / g0
    return out if np.ndim(t) else float(out[0])


def dominating_survival(system: SwitchedSystem, t):
    """H(t) = min_i G^i(lambda_max t), a lower bound for every G_z(t)."""
    t = np.asarray(t, dtype=float)
    lm = system.lambda_max
    return np.min([law.survival(lm * t) for law in system.laws], axis=0)


def sample_dominating(system: SwitchedSystem, rng: np.random.Generator, size):
    """Draws with survival H: min_i isf^i(u) / lambda_max."""
    u = 1.0 - rng.random(size)
    return np.min([law.isf(u) for law in system.laws], axis=0) / system.lambda_max


def support_membership(system: SwitchedSystem, x, i: int, v: float, eta: float = 1e-9) -> bool:
    """v in supp mu_{x,i}  <=>  int_0^v lam^i(phi^i_r x) dr in supp mu^i."""
    lam = rate_integral(system, i, x, v)
    return bool(system.laws[i].in_support(lam, eta))
