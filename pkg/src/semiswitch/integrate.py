"""Vectorised explicit Runge-Kutta integration for autonomous fields.

Every routine integrates a batch of initial points, each with its own
signed horizon, so the same code serves single trajectories and replica
ensembles.  Step control is per element: a batch of n points behaves like
n independent scalar runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import IntegrationDiverged

Rhs = Callable[[np.ndarray], np.ndarray]

# Dormand-Prince 5(4) weights; stage coefficients are inlined in _dp_step
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@dataclass
class FlowConfig:
    """Integrator settings.

    method is "dopri5" (adaptive, embedded 5(4) pair) or "rk4" (fixed step).
    max_step=None means no cap for dopri5 and 1e-2 for rk4.
    """

    method: str = "dopri5"
    atol: float = 1e-9
    rtol: float = 1e-9
    max_step: float | None = None
    max_steps: int = 1_000_000

    def with_max_step(self, max_step: float | None) -> "FlowConfig":
        return FlowConfig(self.method, self.atol, self.rtol, max_step, self.max_steps)


DEFAULT_CONFIG = FlowConfig()


def _as_batch(x0, t):
    x0 = np.asarray(x0, dtype=float)
    scalar = x0.ndim == 1
    X = np.atleast_2d(x0).astype(float, copy=True)
    T = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],)).copy()
    return X, T, scalar


def _dp_step(f, y, k1, h):
    """One Dormand-Prince step; returns (y_new, k7, err)."""
    h = h[:, None]
    k2 = f(y + h * (0.2 * k1))
    k3 = f(y + h * (3 / 40 * k1 + 9 / 40 * k2))
    k4 = f(y + h * (44 / 45 * k1 - 56 / 15 * k2 + 32 / 9 * k3))
    k5 = f(y + h * (19372 / 6561 * k1 - 25360 / 2187 * k2 + 64448 / 6561 * k3
                    - 212 / 729 * k4))
    k6 = f(y + h * (9017 / 3168 * k1 - 355 / 33 * k2 + 46732 / 5247 * k3
                    + 49 / 176 * k4 - 5103 / 18656 * k5))
    y_new = y + h * (_B[0] * k1 + _B[2] * k3 + _B[3] * k4 + _B[4] * k5 + _B[5] * k6)
    k7 = f(y_new)
    err = h * (_E[0] * k1 + _E[2] * k3 + _E[3] * k4 + _E[4] * k5 + _E[5] * k6
               + _E[6] * k7)
    return y_new, k7, err


def _err_norm(err, y, y_new, atol, rtol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    with np.errstate(invalid="ignore"):
        return np.sqrt(np.mean((err / scale) ** 2, axis=1))


def integrate(rhs: Rhs, x0, t, config: FlowConfig | None = None) -> np.ndarray:
    """Integrate x' = rhs(x) from x0 over signed time t.

    x0 has shape (d,) or (n, d); t is a scalar or shape (n,).  Negative t
    integrates backwards.  Returns an array shaped like x0.
    """
    cfg = config or DEFAULT_CONFIG
    X, T, scalar = _as_batch(x0, t)
    if cfg.method == "rk4":
        out = _rk4(rhs, X, T, cfg)
    elif cfg.method == "dopri5":
        out = _dopri5(rhs, X, T, cfg)
    else:
        raise ValueError(f"unknown integrator {cfg.method!r}")
    return out[0] if scalar else out


def _dopri5(rhs, X, T, cfg):
    n = X.shape[0]
    sgn = np.sign(T)
    horizon = np.abs(T)
    elapsed = np.zeros(n)
    todo = horizon > 0
    max_step = np.inf if cfg.max_step is None else cfg.max_step
    if not todo.any():
        return X

    idx = np.flatnonzero(todo)
    K1 = np.zeros_like(X)
    K1[idx] = sgn[idx, None] * rhs(X[idx])
    # initial step from the usual d0/d1 heuristic
    sc = cfg.atol + cfg.rtol * np.abs(X[idx])
    d0 = np.sqrt(np.mean((X[idx] / sc) ** 2, axis=1))
    d1 = np.sqrt(np.mean((K1[idx] / sc) ** 2, axis=1))
    h0 = np.where((d0 > 1e-5) & (d1 > 1e-5), 0.01 * d0 / np.maximum(d1, 1e-300), 1e-6)
    H = np.zeros(n)
    H[idx] = np.minimum(np.minimum(h0, max_step), horizon[idx])

    steps = 0
    while todo.any():
        steps += 1
        if steps > cfg.max_steps:
            raise IntegrationDiverged("step budget exhausted")
        a = np.flatnonzero(todo)
        remaining = horizon[a] - elapsed[a]
        h = np.minimum(H[a], remaining)
        last = h >= remaining
        sa = sgn[a, None]

        def f(y):
            return sa * rhs(y)

        y = X[a]
        with np.errstate(over="ignore", invalid="ignore"):
            y_new, k7, err = _dp_step(f, y, K1[a], h)
            en = _err_norm(err, y, y_new, cfg.atol, cfg.rtol)
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(en)
        ok = finite & (en <= 1.0)

        acc = a[ok]
        X[acc] = y_new[ok]
        K1[acc] = k7[ok]
        elapsed[acc] = np.where(last[ok], horizon[acc], elapsed[acc] + h[ok])
        todo[acc[last[ok]]] = False

        with np.errstate(divide="ignore"):
            fac = np.where(en > 0, 0.9 * en ** -0.2, 5.0)
        fac = np.clip(np.where(finite, fac, 0.2), 0.2, 5.0)
        fac = np.where(ok, fac, np.minimum(fac, 1.0))
        # a truncated final step says nothing about the natural step size
        base = np.where(ok & last, np.maximum(H[a], h), h)
        H[a] = np.minimum(base * fac, max_step)
        tiny = H[a] < 1e-14 * np.maximum(1.0, horizon[a])
        if np.any(tiny & todo[a]):
            raise IntegrationDiverged("step size underflow; solution likely blows up")
    return X


def _rk4(rhs, X, T, cfg):
    max_step = 1e-2 if cfg.max_step is None else cfg.max_step
    sgn = np.sign(T)
    horizon = np.abs(T)
    nsteps = np.where(horizon > 0, np.ceil(horizon / max_step), 0).astype(int)
    h = np.where(nsteps > 0, horizon / np.maximum(nsteps, 1), 0.0)
    for k in range(int(nsteps.max(initial=0))):
        a = np.flatnonzero(nsteps > k)
        ha = (sgn[a] * h[a])[:, None]
        y = X[a]
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * ha * k1)
        k3 = rhs(y + 0.5 * ha * k2)
        k4 = rhs(y + ha * k3)
        X[a] = y + ha * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        if not np.all(np.isfinite(X[a])):
            raise IntegrationDiverged("non-finite state in fixed-step integration")
    return X


def integrate_until(rhs: Rhs, y0, component: int, target: float, t_max: float,
                    config: FlowConfig | None = None, xtol: float = 1e-12):
    """Integrate a single point forward until y[component] reaches target.

    The watched component must be nondecreasing along the solution (it is a
    cumulative rate in practice).  Returns (t, y(t)).  Raises
    IntegrationDiverged if the target is not reached by t_max.
    """
    cfg = config or DEFAULT_CONFIG
    y = np.asarray(y0, dtype=float).reshape(1, -1).copy()
    if y[0, component] >= target:
        return 0.0, y[0]
    max_step = np.inf if cfg.max_step is None else cfg.max_step
    t = 0.0
    k1 = rhs(y)
    h = np.array([min(1e-2, max_step, t_max)])
    for _ in range(cfg.max_steps):
        hh = np.minimum(h, t_max - t)
        y_new, k7, err = _dp_step(rhs, y, k1, hh)
        en = _err_norm(err, y, y_new, cfg.atol, cfg.rtol)[0]
        if np.all(np.isfinite(y_new)) and en <= 1.0:
            if y_new[0, component] >= target:
                y_start, k_start = y, k1

                def gap(tau):
                    if tau <= 0.0:
                        return y_start[0, component] - target
                    yt, _, _ = _dp_step(rhs, y_start, k_start, np.array([tau]))
                    return yt[0, component] - target

                tau = brentq(gap, 0.0, hh[0], xtol=xtol, rtol=4 * np.finfo(float).eps)
                yt, _, _ = _dp_step(rhs, y_start, k_start, np.array([tau]))
                return t + tau, yt[0]
            t += hh[0]
            y, k1 = y_new, k7
            if t >= t_max:
                break
        fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
        if not np.isfinite(en):
            fac = 0.2
        h = np.minimum(hh * fac, max_step)
        if h[0] < 1e-14 * max(1.0, t_max):
            raise IntegrationDiverged("step size underflow while locating event")
    raise IntegrationDiverged("event not reached before t_max")
