"""Scenario files: YAML documents describing a system and experiments.

Top-level keys: name, description, anchor, params, system, initial,
experiments, run.  Numeric entries anywhere in system/initial/experiments
may be expressions in the params (evaluated in declaration order).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .dynamics import Ball, Box, VectorField
from .errors import ConfigError, InvalidSystem, SemiSwitchError
from .estimators import logistic_field
from .expr import compile_expr, scalar_expr, vector_expr
from .integrate import FlowConfig
from .laws import law_from_dict
from .switching import HybridState, JumpMatrix, RateFunction, SwitchedSystem, in_K


@dataclass
class Scenario:
    name: str
    description: str
    anchor: str
    params: dict[str, float]
    system: SwitchedSystem
    initial: HybridState | None
    experiments: list[dict]
    run: dict
    raw: dict = field(repr=False, default_factory=dict)

    def number(self, value) -> float:
        return resolve_number(value, self.params)


def resolve_number(value, params: dict[str, float]) -> float:
    if isinstance(value, bool):
        raise ConfigError("booleans are not numbers")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return float(compile_expr(value, (), params)({}))
    raise ConfigError(f"expected a number or expression, got {value!r}")


def resolve_tree(value, params):
    """Resolve numbers inside nested lists."""
    if isinstance(value, list):
        return [resolve_tree(v, params) for v in value]
    return resolve_number(value, params)


def _params(raw: dict) -> dict[str, float]:
    out: dict[str, float] = {}
    for k, v in (raw or {}).items():
        out[str(k)] = resolve_number(v, out)
    return out


def _vec(value, d, params, key) -> np.ndarray:
    v = np.atleast_1d(np.asarray(resolve_tree(value, params), dtype=float))
    if v.shape != (d,):
        raise ConfigError(f"{key} must have {d} entries")
    return v


def _library_field(spec: dict, d: int, params, k: int) -> VectorField:
    """Fields named by kind: affine, constant, sink, logistic."""
    kind = spec["builtin"]
    name = str(spec.get("name", f"F{k}"))
    if kind == "affine":
        A = np.asarray(resolve_tree(spec["A"], params), dtype=float).reshape(d, d)
        b = _vec(spec.get("b", [0.0] * d), d, params, "b")
        return VectorField(lambda x: np.asarray(x, float) @ A.T + b, d, jac=lambda x: A.copy(),
                           name=name)
    if kind == "constant":
        c = _vec(spec["c"], d, params, "c")
        return VectorField(lambda x: np.broadcast_to(c, np.shape(x)).copy(), d,
                           jac=lambda x: np.zeros((d, d)),
                           flow=lambda t, x: x + np.asarray(t, float)[..., None] * c, name=name)
    if kind == "sink":
        target = _vec(spec["target"], d, params, "target")
        r = resolve_number(spec.get("rate", 1.0), params)
        return VectorField(lambda x: -r * (np.asarray(x, float) - target), d,
                           jac=lambda x: -r * np.eye(d),
                           flow=lambda t, x: target + (x - target)
                           * np.exp(-r * np.asarray(t, float))[..., None], name=name)
    if kind == "logistic":
        if d != 1:
            raise ConfigError("logistic fields are one-dimensional")
        return logistic_field(resolve_number(spec["alpha"], params),
                              resolve_number(spec["a"], params), name)
    raise ConfigError(f"unknown builtin field {kind!r}")


def _field(spec: dict, d: int, params, k: int) -> VectorField:
    if not isinstance(spec, dict):
        raise ConfigError("field must be a mapping")
    if "builtin" in spec:
        return _library_field(spec, d, params, k)
    if "rhs" not in spec:
        raise ConfigError(f"field {k} has no rhs")
    rhs = vector_expr(spec["rhs"], d, params)
    flow = None
    if "flow" in spec:
        g = vector_expr(spec["flow"], d, params, extra=("t",))

        def flow(t, x, g=g):
            return g(x, t=np.asarray(t, dtype=float))

    jac = None
    if "jacobian" in spec:
        rows = spec["jacobian"]
        if len(rows) != d or any(len(r) != d for r in rows):
            raise ConfigError(f"field {k}: jacobian must be {d}x{d}")
        entries = [[scalar_expr(e, d, params) for e in r] for r in rows]

        def jac(x, entries=entries):
            x = np.asarray(x, dtype=float)
            return np.array([[float(e(x)) for e in r] for r in entries])

    horizon = None
    if "backward_horizon" in spec:
        hz = scalar_expr(spec["backward_horizon"], d, params)

        def horizon(x, hz=hz):
            return float(hz(np.asarray(x, dtype=float)))

    return VectorField(rhs, d, jac=jac, flow=flow, backward_horizon=horizon,
                       name=str(spec.get("name", f"F{k}")))


def _rate(spec, d, params) -> RateFunction:
    if isinstance(spec, (int, float, str)):
        return RateFunction.const(resolve_number(spec, params))
    if not isinstance(spec, dict) or "expr" not in spec:
        raise ConfigError("state-dependent rates need {expr, min, max}")
    fn = scalar_expr(spec["expr"], d, params)
    lo, hi = resolve_number(spec["min"], params), resolve_number(spec["max"], params)
    if not 0 < lo <= hi:
        raise ConfigError("rate bounds need 0 < min <= max")
    return RateFunction(fn, lo, hi)


def _law(spec: dict, params):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("each law needs a kind")
    out = {"kind": spec["kind"]}
    for k, v in spec.items():
        if k != "kind":
            out[k] = resolve_tree(v, params)
    return law_from_dict(out)


def _jump(spec, d, params, n) -> JumpMatrix:
    if len(spec) != n or any(len(r) != n for r in spec):
        raise ConfigError(f"jump matrix must be {n}x{n}")
    symbolic = any(isinstance(v, str) for r in spec for v in r)
    if not symbolic:
        return JumpMatrix(np.asarray(spec, dtype=float))
    entries = [[scalar_expr(v, d, params) for v in r] for r in spec]

    def Q(x):
        x = np.asarray(x, dtype=float)
        return np.array([[float(e(x)) for e in r] for r in entries])

    return JumpMatrix(Q, n_states=n)


def _compact(spec, params):
    if spec is None:
        return None
    kind = spec.get("kind", "box")
    if kind == "box":
        return Box(resolve_tree(spec["lo"], params), resolve_tree(spec["hi"], params))
    if kind == "ball":
        return Ball(resolve_tree(spec["center"], params), resolve_number(spec["radius"], params))
    raise ConfigError(f"unknown compact kind {kind!r}")


class _at:
    """Prefix ConfigErrors raised inside the block with a key path."""

    def __init__(self, *path):
        self.path = path

    def __enter__(self):
        return self

    def __exit__(self, tp, exc, tb):
        if isinstance(exc, ConfigError):
            raise exc.located(self.path) from None
        if isinstance(exc, (KeyError, TypeError, ValueError)) and not isinstance(exc, SemiSwitchError):
            msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
            raise ConfigError(msg, self.path) from None
        return False


def _items(raw: dict, key: str):
    v = raw[key]
    if not isinstance(v, list):
        raise ConfigError("expected a list", (key,))
    return v


def build_system(raw: dict, params: dict, name: str = "") -> SwitchedSystem:
    try:
        with _at("dim"):
            d = int(raw["dim"])
        fields = []
        for k, f in enumerate(_items(raw, "fields")):
            with _at("fields", k):
                fields.append(_field(f, d, params, k))
        n = len(fields)
        rates, laws = [], []
        for k, r in enumerate(raw.get("rates", [1.0] * n)):
            with _at("rates", k):
                rates.append(_rate(r, d, params))
        for k, l in enumerate(_items(raw, "laws")):
            with _at("laws", k):
                laws.append(_law(l, params))
        with _at("jump"):
            Q = _jump(raw["jump"], d, params, n)
        integ = raw.get("integrator", {}) or {}
        cfg = FlowConfig(method=integ.get("method", "dopri5"),
                         atol=float(integ.get("atol", 1e-9)), rtol=float(integ.get("rtol", 1e-9)),
                         max_step=integ.get("max_step"))
        with _at("compact"):
            compact = _compact(raw.get("compact"), params)
        return SwitchedSystem(fields, rates, laws, Q, compact, name=name, flow_config=cfg)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    except InvalidSystem as exc:
        raise ConfigError(str(exc)) from None


def state_from(spec, params) -> HybridState:
    x = spec["x"] if isinstance(spec["x"], list) else [spec["x"]]
    return HybridState(resolve_tree(x, params), resolve_number(spec.get("s", 0.0), params),
                       int(spec.get("i", 0)))


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a mapping")
    for key in ("name", "system"):
        if key not in raw:
            raise ConfigError(f"scenario is missing {key!r}")
    with _at("params"):
        params = _params(raw.get("params"))
    with _at("system"):
        system = build_system(raw["system"], params, raw["name"])
    with _at("initial"):
        initial = state_from(raw["initial"], params) if raw.get("initial") else None
    exps = raw.get("experiments") or []
    if isinstance(exps, dict):
        exps = [exps]
    return Scenario(str(raw["name"]), str(raw.get("description", "")), str(raw.get("anchor", "")),
                    params, system, initial, exps, dict(raw.get("run") or {}), raw)


def builtin_names() -> list[str]:
    pkg = resources.files("semiswitch") / "scenarios"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".yaml"))


def load_scenario(ref: str | Path) -> Scenario:
    """Load a builtin by name or a YAML file by path."""
    ref = str(ref)
    if ref in builtin_names():
        text = (resources.files("semiswitch") / "scenarios" / f"{ref}.yaml").read_text()
    else:
        path = Path(ref)
        if not path.exists():
            raise ConfigError(f"no builtin or file named {ref!r}")
        text = path.read_text()
    try:
        raw = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    try:
        return scenario_from_dict(raw)
    except ConfigError as exc:
        raise exc.located(line=_line_of(root, exc.path)) from None


def _line_of(node, path) -> int | None:
    """1-based line of the deepest node along path in a composed YAML tree."""
    line = None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == str(key)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
        line = node.start_mark.line + 1
    return line


def validate_scenario(sc: Scenario, n_points: int = 64, seed: int = 0) -> list[str]:
    """Semantic checks beyond parsing; returns a list of problems (empty if valid)."""
    problems: list[str] = []
    sysm = sc.system
    rng = np.random.default_rng(seed)
    pts = sysm.compact.sample(n_points, rng) if sysm.compact is not None else \
        rng.standard_normal((n_points, sysm.dim))
    for x in pts:
        try:
            JumpMatrix.validate(sysm.Q(x), tol=1e-9)
        except InvalidSystem as exc:
            problems.append(f"jump matrix at {np.round(x, 4).tolist()}: {exc}")
            break
    for k, r in enumerate(sysm.rates):
        vals = r(pts)
        if np.any(vals < r.lambda_min - 1e-12) or np.any(vals > r.lambda_max + 1e-12):
            problems.append(f"rate {k} leaves its declared bounds on the compact")
    for k, F in enumerate(sysm.fields):
        if not np.all(np.isfinite(F(pts))):
            problems.append(f"field {k} is not finite on the compact")
        if F.flow is not None:
            h = 1e-6
            slope = (sysm.flow(k, h, pts[:8]) - pts[:8]) / h
            if np.max(np.abs(slope - F.rhs(pts[:8]))) > 1e-3 * (1 + np.max(np.abs(slope))):
                problems.append(f"field {k}: closed-form flow disagrees with its rhs")
    if sc.initial is not None:
        try:
            if not in_K(sysm, sc.initial):
                problems.append("initial state is not in K")
        except SemiSwitchError as exc:
            problems.append(f"initial state: {exc}")
    known = {"simulate", "occupation", "drift", "tv-decay", "invasion", "certify-submersion",
             "plan-access", "fixedpoint", "km-boundary", "bracket-rank", "invariant"}
    for e in sc.experiments:
        if e.get("kind") not in known:
            problems.append(f"unknown experiment kind {e.get('kind')!r}")
    return problems
