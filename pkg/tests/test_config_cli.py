import csv
import json
import textwrap

import numpy as np
import pytest

from semiswitch.cli import main
from semiswitch.config import builtin_names, load_scenario, scenario_from_dict, validate_scenario
from semiswitch.errors import ConfigError

BUILTINS = ["dwell-radial", "feller-dirac", "inflation", "km-example", "lv-dwell",
            "non-analytic", "non-irreducible", "rate-trap", "rational-atoms"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write(tmp_path, text, name="sc.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


SINK = """\
name: sinks
params: {k: 2.0}
system:
  dim: 1
  fields:
    - {builtin: sink, target: [0.0], rate: k}
    - {builtin: sink, target: [1.0], rate: 1}
  laws:
    - {kind: exponential, rate: 1}
    - {kind: exponential, rate: 1}
  jump: [[0, 1], [1, 0]]
  compact: {kind: box, lo: [0], hi: [1]}
initial: {x: 0.5, s: 0, i: 0}
run: {seed: 3, t_end: 20, replicas: 200}
experiments:
  - {kind: occupation, dt: 0.1, x_bins: 8, tau_bins: 4}
  - kind: drift
    lyapunov: {delta: 0.5, beta: 1.0, C: 1.0}
    times: [0.5]
  - kind: tv-decay
    z_a: {x: 0.0, s: 0, i: 0}
    z_b: {x: 1.0, s: 0, i: 1}
    times: [1, 4]
    final_max: 1.0
"""


# --- loading and validation ---------------------------------------------

@pytest.mark.parametrize("name", BUILTINS)
def test_builtin_loads_and_validates(name):
    sc = load_scenario(name)
    assert sc.name == name
    assert sc.anchor
    assert validate_scenario(sc) == []


def test_builtin_names_complete():
    assert builtin_names() == BUILTINS


def test_list_table(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    names = [ln.split()[0] for ln in lines]
    assert names == BUILTINS
    assert len(set(names)) == len(names)
    assert all(len(ln.split(None, 1)) == 2 for ln in lines)


def test_library_fields(tmp_path):
    sc = load_scenario(write(tmp_path, SINK))
    F0, F1 = sc.system.fields
    x = np.array([[0.25], [0.75]])
    assert np.allclose(F0(x), -2 * x)
    assert np.allclose(F1.flow(np.array([0.0, 1.0]), x), [[0.25], [1 - 0.25 * np.exp(-1)]])
    assert validate_scenario(sc) == []


def test_library_affine_and_logistic():
    raw = {"name": "lib", "system": {
        "dim": 1,
        "fields": [{"builtin": "affine", "A": [[-1.0]], "b": [0.5]},
                   {"builtin": "logistic", "alpha": 1.0, "a": 0.5}],
        "laws": [{"kind": "exponential", "rate": 1}] * 2,
        "jump": [[0, 1], [1, 0]], "compact": {"kind": "box", "lo": [0], "hi": [2]}}}
    sc = scenario_from_dict(raw)
    F0, F1 = sc.system.fields
    assert F0(np.array([1.0]))[0] == pytest.approx(-0.5)
    assert F1(np.array([1.0]))[0] == pytest.approx(0.5)
    raw["system"]["fields"][0] = {"builtin": "spiral"}
    with pytest.raises(ConfigError, match="spiral"):
        scenario_from_dict(raw)


def test_error_names_line_and_path(tmp_path):
    bad = SINK.replace("- {builtin: sink, target: [1.0], rate: 1}", "- {rhs: ['foo*x']}")
    p = write(tmp_path, bad)
    with pytest.raises(ConfigError) as info:
        load_scenario(p)
    msg = str(info.value)
    assert "system.fields[1]" in msg and "foo" in msg
    assert info.value.line == 7


def test_error_unknown_law_kind(tmp_path):
    p = write(tmp_path, SINK.replace("exponential, rate: 1}\n  jump", "weibull, rate: 1}\n  jump"))
    with pytest.raises(ConfigError, match=r"system\.laws\[1\]"):
        load_scenario(p)


def test_error_jump_shape(tmp_path):
    p = write(tmp_path, SINK.replace("jump: [[0, 1], [1, 0]]", "jump: [[0, 1, 0], [1, 0, 0]]"))
    with pytest.raises(ConfigError, match="jump"):
        load_scenario(p)


def test_validate_cli_reports_error(tmp_path, capsys):
    p = write(tmp_path, SINK.replace("rate: k}", "rate: kk}"))
    assert main(["validate", str(p)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("config error: line 6: system.fields[0]")


def test_unknown_scenario(capsys):
    assert main(["validate", "no-such-scenario"]) == 1
    assert "no builtin or file" in capsys.readouterr().err


# --- runs and artifacts ---------------------------------------------------

def run(tmp_path, *args, sub="out"):
    out = tmp_path / sub
    code = main(["run", *map(str, args), "--out", str(out)])
    return code, out


def test_km_example_artifacts(tmp_path):
    code, out = run(tmp_path, "km-example", "--t-end", 5, "--replicas", 20)
    assert code == 0
    traj = read_csv(out / "trajectories.csv")
    assert traj[0] == ["t", "x_1", "tau", "i"]
    assert all(len(r) == 4 for r in traj)
    marks = read_csv(out / "marks.csv")
    assert marks[0] == ["T_k", "x_1", "i"]
    km = read_csv(out / "kmboundary.csv")
    assert km[0] == ["i", "x", "s"]
    rows = np.array(km[1:], dtype=float)
    assert rows.shape == (2000, 3)
    i, x, s = rows.T
    with np.errstate(divide="ignore"):
        exact = np.minimum(-np.log(np.abs(i - x)), 2.0)
    assert np.max(np.abs(s - exact)) < 1e-9
    report = json.loads((out / "report.json").read_text())
    assert report["scenario"] == "km-example"
    assert {e["kind"] for e in report["experiments"]} == {"km-boundary", "simulate"}


def test_seed_gives_identical_bytes(tmp_path):
    _, a = run(tmp_path, "feller-dirac", "--seed", 5, "--t-end", 20, "--replicas", 50, sub="a")
    _, b = run(tmp_path, "feller-dirac", "--seed", 5, "--t-end", 20, "--replicas", 50, sub="b")
    _, c = run(tmp_path, "feller-dirac", "--seed", 6, "--t-end", 20, "--replicas", 50, sub="c")
    for f in ("trajectories.csv", "marks.csv", "report.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert (a / "marks.csv").read_bytes() != (c / "marks.csv").read_bytes()


def test_threads_do_not_change_results(tmp_path):
    _, a = run(tmp_path, "rational-atoms", "--seed", 2, "--t-end", 10, "--replicas", 40,
               "--threads", 1, sub="a")
    _, b = run(tmp_path, "rational-atoms", "--seed", 2, "--t-end", 10, "--replicas", 40,
               "--threads", 4, sub="b")
    for f in ("trajectories.csv", "marks.csv", "report.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_custom_scenario_csv_outputs(tmp_path):
    code, out = run(tmp_path, write(tmp_path, SINK))
    assert code == 0
    hist = read_csv(out / "histogram.csv")
    assert hist[0] == ["x_1_lo", "tau_lo", "i", "mass"]
    assert len(hist) == 1 + 8 * 4 * 2
    assert sum(float(r[-1]) for r in hist[1:]) == pytest.approx(1.0, abs=1e-12)
    assert read_csv(out / "tv.csv")[0] == ["t", "tv", "stderr"]
    drift = read_csv(out / "drift.csv")
    assert drift[0] == ["x", "s", "i", "t", "bound", "estimate", "stderr", "pass"]
    assert all(len(r) == 8 for r in drift)


def test_json_format(tmp_path):
    code, out = run(tmp_path, write(tmp_path, SINK), "--format", "json", "--only", "occupation")
    assert code == 0
    h = json.loads((out / "histogram.json").read_text())
    assert set(h) == {"edges", "n_states", "mass"}
    assert np.asarray(h["mass"]).shape == (8, 4, 2)
    report = json.loads((out / "report.json").read_text())
    assert [e["kind"] for e in report["experiments"]] == ["occupation"]


def test_lv_dwell_reports_rate_and_threshold(tmp_path):
    code, out = run(tmp_path, "lv-dwell", "--t-end", 2000)
    assert code == 0
    (e,) = json.loads((out / "report.json").read_text())["experiments"]
    assert e["delta1"] == pytest.approx(2 * np.log(4), rel=1e-12)
    assert e["ci_high"] < 0


def test_failed_experiment_exit_code(tmp_path):
    bad = SINK.replace("final_max: 1.0", "final_max: 0.0")
    code, _ = run(tmp_path, write(tmp_path, bad), "--only", "tv-decay")
    assert code == 2
