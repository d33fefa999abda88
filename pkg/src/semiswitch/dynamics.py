"""Vector fields, their flows, Jacobians and Lie-bracket rank tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BackwardHorizonExceeded, DepthBudgetExceeded, DomainViolation
from .integrate import DEFAULT_CONFIG, FlowConfig, integrate


@dataclass
class VectorField:
    """Smooth autonomous field on R^d.

    rhs maps points of shape (..., d) to velocities of the same shape.
    flow, if given, is a closed form flow(t, x) broadcasting t over the
    leading axes of x.  backward_horizon(x) returns s^i(x), the largest
    backward time for which the flow exists; None means the field is
    globally integrable.
    """

    rhs: Callable[[np.ndarray], np.ndarray]
    dim: int
    jac: Callable[[np.ndarray], np.ndarray] | None = None
    flow: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    backward_horizon: Callable[[np.ndarray], float] | None = None
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        return self.rhs(np.asarray(x, dtype=float))

    def horizon(self, x) -> float:
        if self.backward_horizon is None:
            return np.inf
        return float(self.backward_horizon(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ControlSequence:
    """Pair (s, i) of leg durations and field indices of equal length."""

    times: tuple[float, ...]
    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if len(self.times) != len(self.indices):
            raise ValueError("times and indices must have equal length")
        if any(t < 0 for t in self.times):
            raise ValueError("leg durations must be nonnegative")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def total_time(self) -> float:
        return float(sum(self.times))


# compact sets -----------------------------------------------------------

@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x, tol: float = 1e-9):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)

    def boundary_distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.min(np.minimum(np.abs(x - self.lo), np.abs(x - self.hi)), axis=-1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def grow(self, r: float) -> "Box":
        return Box(self.lo - r, self.hi + r)


@dataclass
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, x, tol: float = 1e-9):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol

    def boundary_distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.abs(np.linalg.norm(x - self.center, axis=-1) - self.radius)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return self.center + g * r[:, None]

    def grow(self, r: float) -> "Ball":
        return Ball(self.center, self.radius + r)


# flows ------------------------------------------------------------------

def flow(F: VectorField, t, x, config: FlowConfig | None = None) -> np.ndarray:
    """phi_t(x) for scalar or batched (t, x); t < 0 flows backwards."""
    x = np.asarray(x, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if F.backward_horizon is not None and np.any(t_arr < 0):
        pts = np.atleast_2d(x)
        ts = np.broadcast_to(t_arr, (pts.shape[0],))
        for p, tt in zip(pts, ts):
            if tt < 0 and -tt >= F.horizon(p):
                raise BackwardHorizonExceeded(
                    f"backward time {-tt:g} exceeds horizon {F.horizon(p):g}")
    if F.flow is not None:
        if x.ndim == 1:
            return np.asarray(F.flow(t_arr, x), dtype=float)
        return np.asarray(F.flow(np.broadcast_to(t_arr, x.shape[:-1]), x), dtype=float)
    return integrate(F.rhs, x, t_arr, config or DEFAULT_CONFIG)


def composite_flow(fields: Sequence[VectorField], cs: ControlSequence, x,
                   config: FlowConfig | None = None) -> np.ndarray:
    """Phi^i_s(x) = phi^{i_m}_{s_m} o ... o phi^{i_1}_{s_1}(x)."""
    y = np.asarray(x, dtype=float)
    for s, i in zip(cs.times, cs.indices):
        if s > 0:
            # forward times only, so closed-form flows skip the horizon check
            F = fields[i]
            y = np.asarray(F.flow(s, y), dtype=float) if F.flow is not None else flow(F, s, y, config)
    return y


def leg_endpoints(fields, cs: ControlSequence, x, config=None) -> list[np.ndarray]:
    """Points x_1 = x, x_{k+1} = phi^{i_k}_{s_k}(x_k) for k = 1..m."""
    pts = [np.asarray(x, dtype=float)]
    for s, i in zip(cs.times, cs.indices):
        pts.append(flow(fields[i], s, pts[-1], config) if s > 0 else pts[-1])
    return pts


# derivatives ------------------------------------------------------------

def fd_steps(x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(x))


def jacobian(F: VectorField | Callable, x) -> np.ndarray:
    """DF(x); analytic if the field provides one, else central differences."""
    x = np.asarray(x, dtype=float)
    if isinstance(F, VectorField) and F.jac is not None:
        return np.asarray(F.jac(x), dtype=float).reshape(x.size, x.size)
    f = F.rhs if isinstance(F, VectorField) else F
    h = fd_steps(x)
    E = np.diag(h)
    # row j of f(x + E) is F(x + h_j e_j), i.e. column j of DF
    fp = np.asarray(f(x + E), dtype=float).reshape(x.size, -1)
    fm = np.asarray(f(x - E), dtype=float).reshape(x.size, -1)
    return ((fp - fm) / (2 * h[:, None])).T


def directional_derivative(g: Callable, x, w, h: float) -> np.ndarray:
    """Fourth-order central difference of g along w at x."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    nw = np.linalg.norm(w)
    if nw == 0.0:
        return np.zeros_like(np.asarray(g(x), dtype=float))
    u = w / nw
    pts = np.stack([x + 2 * h * u, x + h * u, x - h * u, x - 2 * h * u])
    gp2, gp1, gm1, gm2 = (np.asarray(g(p), dtype=float) for p in pts)
    return nw * (-gp2 + 8 * gp1 - 8 * gm1 + gm2) / (12 * h)


def lie_bracket(F: VectorField | Callable, G: VectorField | Callable, x) -> np.ndarray:
    """[F, G](x) = DG(x) F(x) - DF(x) G(x)."""
    x = np.asarray(x, dtype=float)
    fx = np.asarray(F(x), dtype=float)
    gx = np.asarray(G(x), dtype=float)
    return jacobian(G, x) @ fx - jacobian(F, x) @ gx


def numerical_rank(vectors, rtol: float = 1e-8, atol: float = 1e-12) -> int:
    A = np.atleast_2d(np.asarray(vectors, dtype=float))
    if A.size == 0:
        return 0
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size == 0 or sv[0] <= atol:
        return 0
    return int(np.sum(sv > max(rtol * sv[0], atol)))


# nested brackets lose accuracy level by level; these steps balance the
# truncation and rounding error of the 4th-order stencil at each depth
_LEVEL_STEPS = (1e-3, 1e-2, 2.5e-2, 5e-2)


@dataclass
class _Gen:
    fn: Callable[[np.ndarray], np.ndarray]
    level: int
    label: str


@dataclass
class BracketReport:
    rank: int
    depth: int
    dim: int
    vectors: np.ndarray = field(repr=False)
    labels: list[str] = field(default_factory=list)

    @property
    def full(self) -> bool:
        return self.rank == self.dim


def _bracket_gen(Fi: VectorField, name: str, V: _Gen) -> _Gen:
    h = _LEVEL_STEPS[min(V.level, len(_LEVEL_STEPS) - 1)]

    def W(x):
        fx = np.asarray(Fi(x), dtype=float)
        return directional_derivative(V.fn, x, fx, h) - jacobian(Fi, x) @ V.fn(x)

    return _Gen(W, V.level + 1, f"[{name},{V.label}]")


def bracket_rank(fields: Sequence[VectorField], x, mode: str = "weak", depth: int = 3,
                 dedup_tol: float = 1e-10, budget: int = 20000) -> BracketReport:
    """Rank of the weak or strong bracket family at x, breadth first.

    weak seeds with {F^i}; strong seeds with {F^i - F^j}.  Both grow by
    [F^i, V].  Stops early once the rank equals the dimension.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    names = [f.name or f"F{k}" for k, f in enumerate(fields)]
    if mode == "weak":
        seed = [_Gen(f.rhs, 0, names[k]) for k, f in enumerate(fields)]
    elif mode == "strong":
        seed = []
        for a in range(len(fields)):
            for b in range(len(fields)):
                if a != b:
                    Fa, Fb = fields[a], fields[b]
                    seed.append(_Gen(lambda y, Fa=Fa, Fb=Fb: Fa(y) - Fb(y), 0,
                                     f"{names[a]}-{names[b]}"))
    else:
        raise ValueError("mode must be 'weak' or 'strong'")

    kept: list[np.ndarray] = []
    labels: list[str] = []

    def admit(gens: list[_Gen]) -> list[_Gen]:
        fresh = []
        for g in gens:
            v = np.asarray(g.fn(x), dtype=float).reshape(d)
            if not np.all(np.isfinite(v)):
                raise DomainViolation(f"bracket {g.label} not finite at {x}")
            if any(np.max(np.abs(v - k)) <= dedup_tol for k in kept):
                continue
            kept.append(v)
            labels.append(g.label)
            fresh.append(g)
        return fresh

    frontier = admit(seed)
    level = 0
    generated = len(seed)
    while numerical_rank(kept) < d and level < depth and frontier:
        new = []
        for V in frontier:
            for k, Fi in enumerate(fields):
                new.append(_bracket_gen(Fi, names[k], V))
        generated += len(new)
        if generated > budget:
            raise DepthBudgetExceeded(f"more than {budget} brackets generated")
        frontier = admit(new)
        level += 1
    vecs = np.array(kept) if kept else np.zeros((0, d))
    return BracketReport(numerical_rank(vecs), level, d, vecs, labels)


# submersion map --------------------------------------------------------

def submersion_map(fields, x, v, indices, T, config=None) -> np.ndarray:
    """Psi(v) = phi^{i_{m+1}}_{T - sum v} o Phi^{i_1..i_m}_v (x)."""
    v = np.asarray(v, dtype=float)
    rest = T - v.sum()
    cs = ControlSequence(tuple(v) + (rest,), tuple(indices))
    return composite_flow(fields, cs, x, config)


def submersion_jacobian(fields, x, v, indices, T, config=None) -> np.ndarray:
    """d x m Jacobian of the submersion map at v by finite differences."""
    v = np.asarray(v, dtype=float)
    m = v.size
    if len(indices) != m + 1:
        raise ValueError("need m+1 indices for m free times")
    if v.sum() >= T:
        raise DomainViolation(f"free times sum to {v.sum():g} >= T = {T:g}")
    if np.any(v < 0):
        raise DomainViolation("free times must be nonnegative")
    closed = all(fields[i].flow is not None for i in indices)
    rel = 1e-6 if closed else 1e-4
    cfg = config or (None if closed else FlowConfig(atol=1e-12, rtol=1e-12))
    slack = T - v.sum()
    cols = []
    for k in range(m):
        h = rel * max(1.0, abs(v[k]))
        up = min(h, slack) if slack > 0 else 0.0
        down = min(h, v[k])
        if up + down == 0.0:
            raise ValueError("no room for a difference step; v on the boundary")
        vp, vm = v.copy(), v.copy()
        vp[k] += up
        vm[k] -= down
        cols.append((submersion_map(fields, x, vp, indices, T, cfg)
                     - submersion_map(fields, x, vm, indices, T, cfg)) / (up + down))
    return np.array(cols).T.reshape(np.size(x), m)


def lipschitz_constants(fields: Sequence[VectorField], compact, T: float, n: int = 1000,
                        rng: np.random.Generator | None = None, config=None):
    """Sampled (sup |F|, sup |DF|) over the flow-enlarged set M_T.

    The set is explored by flowing random points of the compact for random
    times in [0, T] along random fields.  Returns (C, L) with C >= 1, which
    is the constant the composite-flow estimate needs.
    """
    rng = rng or np.random.default_rng(0)
    pts = compact.sample(n, rng)
    times = T * rng.random(n)
    which = rng.integers(len(fields), size=n)
    moved = pts.copy()
    for k, F in enumerate(fields):
        sel = which == k
        if sel.any():
            moved[sel] = flow(F, times[sel], pts[sel], config)
    allpts = np.vstack([pts, moved])
    C, L = 0.0, 0.0
    for F in fields:
        C = max(C, float(np.max(np.linalg.norm(F(allpts), axis=-1))))
        J = np.stack([jacobian(F, p) for p in allpts[:: max(1, len(allpts) // 400)]])
        L = max(L, float(np.linalg.norm(J, 2, axis=(1, 2)).max()))
    return max(C, 1.0), L
