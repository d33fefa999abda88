"""Holding-time laws mu^i on [0, inf) described by their survival G.

Every law exposes survival G(t) = mu((t, inf)), the generalised inverse
isf(p) = inf{t >= 0 : G(t) <= p}, its support (closed intervals plus
atoms) and integration against the law.  Inputs are vectorised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, NoDensity, NoExpDecay


class HoldingLaw:
    kind = "abstract"
    intervals: list[tuple[float, float]] = []
    atoms: np.ndarray = np.zeros(0)
    atom_weights: np.ndarray = np.zeros(0)

    # --- to be provided by subclasses
    def survival(self, t):
        raise NotImplementedError

    def isf(self, p):
        raise NotImplementedError

    def _density(self, t):
        raise NotImplementedError

    # --- shared behaviour
    @property
    def has_atoms(self) -> bool:
        return self.atoms.size > 0

    @property
    def continuous(self) -> bool:
        return not self.has_atoms

    def density(self, t):
        if self.has_atoms:
            raise NoDensity(f"{self.kind} law has atoms")
        return self._density(np.asarray(t, dtype=float))

    @property
    def tbar(self) -> float:
        """inf{t : G(t) = 0}, the right end of the support."""
        ends = [b for _, b in self.intervals] + list(self.atoms)
        return float(max(ends)) if ends else 0.0

    @property
    def support_min(self) -> float:
        starts = [a for a, _ in self.intervals] + list(self.atoms)
        return float(min(starts))

    def in_support(self, t, eta: float = 1e-9):
        t = np.asarray(t, dtype=float)
        hit = np.zeros(t.shape, dtype=bool)
        for a, b in self.intervals:
            hit |= (t >= a - eta) & (t <= b + eta)
        if self.has_atoms:
            hit |= np.min(np.abs(t[..., None] - self.atoms), axis=-1) <= eta
        return hit

    def support_point_below(self, v: float) -> float | None:
        """Largest point of the support in [0, v], or None."""
        cands = [min(b, v) for a, b in self.intervals if a <= v]
        cands += [a for a in self.atoms if a <= v]
        return float(max(cands)) if cands else None

    def expect(self, fn: Callable, upper: float = np.inf, lower: float = 0.0) -> float:
        """Integral of fn over [lower, upper] against the law."""
        total = 0.0
        for a, b in self.intervals:
            lo, hi = max(a, lower), min(b, upper)
            if hi > lo:
                val, _ = quad(lambda t: fn(t) * float(self._density(np.asarray(t))),
                              lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
                total += val
        for a, w in zip(self.atoms, self.atom_weights):
            if lower <= a <= upper:
                total += w * fn(float(a))
        return float(total)

    def check_exp_decay(self, C: float, beta: float, horizon: float = 50.0, n: int = 2001):
        t = np.linspace(0.0, horizon, n)
        bad = self.survival(t) > C * np.exp(-beta * t) + 1e-15
        if bad.any():
            raise NoExpDecay(f"{self.kind}: G(t) > {C} exp(-{beta} t) at t={t[bad][0]:g}")

    def sample(self, rng: np.random.Generator, size=None):
        u = 1.0 - rng.random(size)
        return self.isf(u)

    def describe(self) -> dict:
        return {"kind": self.kind}


def _as_float_array(t):
    return np.asarray(t, dtype=float)


@dataclass
class Exponential(HoldingLaw):
    rate: float = 1.0
    kind = "exponential"

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigError("exponential rate must be positive")
        self.intervals = [(0.0, np.inf)]

    def survival(self, t):
        t = _as_float_array(t)
        return np.where(t < 0, 1.0, np.exp(-self.rate * np.maximum(t, 0.0)))

    def isf(self, p):
        p = _as_float_array(p)
        return np.where(p >= 1.0, 0.0, -np.log(np.minimum(p, 1.0)) / self.rate)

    def _density(self, t):
        return np.where(t < 0, 0.0, self.rate * np.exp(-self.rate * np.maximum(t, 0.0)))

    def describe(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass
class ShiftedExponential(HoldingLaw):
    shift: float = 0.0
    rate: float = 1.0
    kind = "shifted_exponential"

    def __post_init__(self):
        if self.rate <= 0 or self.shift < 0:
            raise ConfigError("shifted exponential needs rate > 0 and shift >= 0")
        self.intervals = [(self.shift, np.inf)]

    def survival(self, t):
        t = _as_float_array(t)
        return np.where(t < self.shift, 1.0, np.exp(-self.rate * np.maximum(t - self.shift, 0.0)))

    def isf(self, p):
        p = _as_float_array(p)
        return np.where(p >= 1.0, 0.0, self.shift - np.log(np.minimum(p, 1.0)) / self.rate)

    def _density(self, t):
        return np.where(t < self.shift, 0.0,
                        self.rate * np.exp(-self.rate * np.maximum(t - self.shift, 0.0)))

    def describe(self):
        return {"kind": self.kind, "shift": self.shift, "rate": self.rate}


class PiecewiseLinear(HoldingLaw):
    """Continuous law whose survival is piecewise linear between knots."""

    kind = "piecewise_linear"

    def __init__(self, knots, values):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.knots.size < 2 or np.any(np.diff(self.knots) <= 0):
            raise ConfigError("knots must be strictly increasing")
        if np.any(np.diff(self.values) > 1e-15) or abs(self.values[0] - 1) > 1e-12 \
                or abs(self.values[-1]) > 1e-12:
            raise ConfigError("survival values must fall from 1 to 0")
        self.knots[0] = max(self.knots[0], 0.0)
        slope = -np.diff(self.values) / np.diff(self.knots)
        self._slope = slope
        ivs = []
        for (a, b), s in zip(zip(self.knots[:-1], self.knots[1:]), slope):
            if s > 0:
                if ivs and ivs[-1][1] == a:
                    ivs[-1] = (ivs[-1][0], b)
                else:
                    ivs.append((a, b))
        self.intervals = ivs

    def survival(self, t):
        t = _as_float_array(t)
        return np.interp(t, self.knots, self.values, left=1.0, right=0.0)

    def isf(self, p):
        p = _as_float_array(p)
        # first knot index k with G_k <= p; G is nonincreasing
        k = np.searchsorted(-self.values, -p, side="left")
        k = np.clip(k, 1, self.knots.size - 1)
        g0, g1 = self.values[k - 1], self.values[k]
        t0, t1 = self.knots[k - 1], self.knots[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(g0 > g1, (g0 - p) / (g0 - g1), 1.0)
        out = t0 + np.clip(frac, 0.0, 1.0) * (t1 - t0)
        # rounding may leave G(out) a few ulps above p; step up until it is not
        for _ in range(8):
            high = (self.survival(out) > p) & (p < 1.0)
            if not high.any():
                break
            out = np.where(high, np.nextafter(out, np.inf), out)
        return np.where(p >= 1.0, 0.0, out)

    def _density(self, t):
        k = np.searchsorted(self.knots, t, side="right") - 1
        inside = (k >= 0) & (k < self._slope.size)
        return np.where(inside, self._slope[np.clip(k, 0, self._slope.size - 1)], 0.0)


class Uniform(PiecewiseLinear):
    kind = "uniform"

    def __init__(self, a: float, b: float):
        if not 0 <= a < b:
            raise ConfigError("uniform law needs 0 <= a < b")
        self.a, self.b = float(a), float(b)
        super().__init__([a, b], [1.0, 0.0])

    def describe(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


class UniformMixture(PiecewiseLinear):
    """Finite mixture of uniform laws, components given as (a, b, weight)."""

    kind = "uniform_mixture"

    def __init__(self, components):
        comps = [(float(a), float(b), float(w)) for a, b, w in components]
        if any(not 0 <= a < b or w <= 0 for a, b, w in comps):
            raise ConfigError("uniform mixture components need 0 <= a < b and w > 0")
        wsum = sum(w for _, _, w in comps)
        self.components = [(a, b, w / wsum) for a, b, w in comps]
        knots = np.unique([v for a, b, _ in comps for v in (a, b)])
        vals = np.zeros_like(knots)
        for a, b, w in self.components:
            vals += w * np.clip((b - knots) / (b - a), 0.0, 1.0)
        if knots[0] > 0:
            knots = np.concatenate([[0.0], knots])
            vals = np.concatenate([[1.0], vals])
        super().__init__(knots, vals)

    def describe(self):
        return {"kind": self.kind, "components": [list(c) for c in self.components]}


class AtomMixture(HoldingLaw):
    """Purely atomic law sum w_k delta_{t_k}."""

    kind = "atom_mixture"

    def __init__(self, atoms, weights=None):
        a = np.asarray(atoms, dtype=float)
        w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=float)
        if a.size == 0 or np.any(a <= 0) or np.any(w <= 0) or a.shape != w.shape:
            # an atom at 0 would allow instantaneous switches
            raise ConfigError("atom mixture needs positive atoms and positive weights")
        order = np.argsort(a, kind="stable")
        self.atoms = a[order]
        self.atom_weights = w[order] / w.sum()
        self._cdf = np.cumsum(self.atom_weights)
        self._cdf[-1] = 1.0
        self.intervals = []

    def survival(self, t):
        t = _as_float_array(t)
        k = np.searchsorted(self.atoms, t, side="right")
        cdf = np.concatenate([[0.0], self._cdf])
        return 1.0 - cdf[k]

    def isf(self, p):
        p = _as_float_array(p)
        # G(a_k) = 1 - cdf_k <= p  <=>  cdf_k >= 1 - p
        k = np.searchsorted(self._cdf, 1.0 - p - 1e-15, side="left")
        out = self.atoms[np.clip(k, 0, self.atoms.size - 1)]
        return np.where(p >= 1.0, 0.0, out)

    def _density(self, t):
        raise NoDensity("atomic law")

    def describe(self):
        return {"kind": self.kind, "atoms": [[float(a), float(w)] for a, w in
                                             zip(self.atoms, self.atom_weights)]}


class Dirac(AtomMixture):
    kind = "dirac"

    def __init__(self, t: float):
        if t <= 0:
            raise ConfigError("dirac location must be positive")
        self.t = float(t)
        super().__init__([t])

    def describe(self):
        return {"kind": self.kind, "t": self.t}


class Table(AtomMixture):
    """Right-continuous step survival: G = values[k] on [t_k, t_{k+1})."""

    kind = "table"

    def __init__(self, t, G):
        t = np.asarray(t, dtype=float)
        G = np.asarray(G, dtype=float)
        if t.shape != G.shape or np.any(np.diff(t) <= 0) or np.any(np.diff(G) > 0):
            raise ConfigError("table needs increasing t and nonincreasing G")
        if abs(G[-1]) > 1e-12 or G[0] > 1:
            raise ConfigError("table survival must end at 0")
        prev = np.concatenate([[1.0], G[:-1]])
        mass = prev - G
        keep = mass > 0
        super().__init__(t[keep], mass[keep])
        self.t_table, self.G_table = t, G

    def describe(self):
        return {"kind": self.kind, "t": self.t_table.tolist(), "G": self.G_table.tolist()}


class SurvivalLaw(HoldingLaw):
    """Law given only by a survival callable; isf by bracketing and bisection.

    intervals/atoms must still be declared for support queries.
    """

    kind = "survival"

    def __init__(self, G: Callable, intervals=(), atoms=(), weights=(), density=None,
                 tol: float = 1e-10):
        self._G = G
        self.intervals = list(intervals)
        self.atoms = np.asarray(atoms, dtype=float)
        self.atom_weights = np.asarray(weights, dtype=float)
        self._dens = density
        self.tol = tol

    def survival(self, t):
        return np.vectorize(lambda s: 1.0 if s < 0 else float(self._G(s)))(_as_float_array(t))

    def _isf1(self, p: float) -> float:
        if p >= 1.0:
            return 0.0
        lo, hi = 0.0, 1.0
        while float(self._G(hi)) > p:
            lo, hi = hi, 2 * hi
            if hi > 1e12:
                raise ConfigError("survival does not reach the requested level")
        if float(self._G(lo)) <= p:
            return lo
        # invariant G(lo) > p >= G(hi); converge on the leftmost such point
        while hi - lo > self.tol:
            mid = 0.5 * (lo + hi)
            if float(self._G(mid)) <= p:
                hi = mid
            else:
                lo = mid
        return hi

    def isf(self, p):
        return np.vectorize(self._isf1)(_as_float_array(p))

    def _density(self, t):
        if self._dens is None:
            raise NoDensity("no density supplied")
        return np.asarray(self._dens(t), dtype=float)


def rationals_in_unit_interval(n: int) -> list[Fraction]:
    """First n reduced fractions in (0, 1], ordered by denominator."""
    out: list[Fraction] = [Fraction(1)]
    q = 2
    while len(out) < n:
        for p in range(1, q):
            f = Fraction(p, q)
            if f.denominator == q:
                out.append(f)
                if len(out) == n:
                    break
        q += 1
    return out[:n]


def rational_atoms(count: int = 64) -> AtomMixture:
    """sum_i 2^-i delta_{q_i} over an enumeration of rationals in (0, 1], truncated."""
    qs = rationals_in_unit_interval(count)
    w = 0.5 ** np.arange(1, count + 1)
    return AtomMixture([float(q) for q in qs], w)


def law_from_dict(spec: dict) -> HoldingLaw:
    kind = spec.get("kind")
    try:
        if kind == "exponential":
            return Exponential(float(spec.get("rate", 1.0)))
        if kind == "uniform":
            return Uniform(spec["a"], spec["b"])
        if kind == "shifted_uniform":
            shift = float(spec.get("shift", 0.0))
            return Uniform(shift + float(spec.get("a", 0.0)), shift + float(spec["b"]))
        if kind == "uniform_mixture":
            return UniformMixture(spec["components"])
        if kind == "dirac":
            return Dirac(spec["t"])
        if kind == "atom_mixture":
            pairs = spec["atoms"]
            return AtomMixture([p[0] for p in pairs], [p[1] for p in pairs])
        if kind == "rational_atoms":
            return rational_atoms(int(spec.get("count", 64)))
        if kind == "shifted_exponential":
            return ShiftedExponential(float(spec.get("shift", 0.0)), float(spec.get("rate", 1.0)))
        if kind == "table":
            return Table(spec["t"], spec["G"])
    except KeyError as exc:
        raise ConfigError(f"law {kind!r} missing parameter {exc}") from None
    raise ConfigError(f"unknown law kind {kind!r}")
