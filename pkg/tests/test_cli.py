import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ottoflow import cli
from ottoflow.battery import CHECKS, thread_cap
from ottoflow.errors import ConfigError, MissingColumn
from ottoflow.scenarios import number, run_scenario

MKV = {
    "kind": "mkv",
    "manifold": "circle",
    "fields": ["interaction(cos, 1)", "gradient_potential(0.5*sin)"],
    "initial": "cosine(0.5,1)",
    "params": {"P": 64, "h": "1e-2", "T": "0.2", "seed": "11", "record_every": 5},
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return path


def run(tmp_path, cfg, out="out"):
    return cli.main(["run", str(write(tmp_path, cfg)), "-o", str(tmp_path / out)])


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


# --- config validation ---------------------------------------------------------


@pytest.mark.parametrize(
    "cfg",
    [
        {"kind": "mkv", "params": {"h": 1, "T": 1}, "surprise": 1},
        {**MKV, "params": {**MKV["params"], "dt": 0.1}},
        {"kind": "nonsense"},
        {"kind": "mkv"},
        {"kind": "mkv", "params": {"h": 0.1}},
        {**MKV, "params": {**MKV["params"], "seed": "eleven"}},
        {**MKV, "fields": [{"unknown": 1}]},
        "{not json",
    ],
)
def test_malformed_configs_exit_2(tmp_path, cfg):
    assert run(tmp_path, cfg) == cli.EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_bad_values_caught_after_validation_exit_2(tmp_path):
    assert run(tmp_path, {**MKV, "initial": "pareto(2)"}) == 2
    assert run(tmp_path, {**MKV, "params": {**MKV["params"], "h": "-1e-2"}}) == 2
    sde = {"kind": "manifold_sde", "manifold": "sphere2", "fields": ["zero", "rotation(1, 2)"], "params": {"h": 0.1, "T": 1}}
    assert run(tmp_path, sde) == 2
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 2


def test_decimal_strings_and_numbers_agree():
    assert number({"h": "1e-3"}, "h") == number({"h": 1e-3}, "h") == 1e-3
    assert number({"seed": "12345678901234567890"}, "seed", kind=int) == 12345678901234567890
    assert number({"n": 64.0}, "n", kind=int) == 64
    for bad in (64.5, True, "6.4e1x"):
        with pytest.raises(ConfigError):
            number({"n": bad}, "n", kind=int)


@settings(max_examples=200)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_decimal_string_round_trip(x):
    assert number({"v": repr(x)}, "v") == x
    cli.validate_config({"kind": "mkv", "params": {"h": repr(x), "T": 1}})


# --- runs and artifacts -----------------------------------------------------------


def test_mkv_rerun_is_byte_identical(tmp_path):
    assert run(tmp_path, MKV, "a") == 0
    assert run(tmp_path, MKV, "b") == 0
    for name in ("results.csv", "diagnostics.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_csv(tmp_path / "a" / "results.csv")
    assert rows[0] == ["t", "w2_initial", "F_cos", "F_sin", "F_cos2", "residual"]
    assert [float(r[0]) for r in rows[1:]] == pytest.approx([0.0, 0.05, 0.1, 0.15, 0.2])


def test_manifest_records_hash_seed_and_versions(tmp_path):
    assert run(tmp_path, MKV) == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config_sha256"] == cli.config_hash(MKV)
    assert manifest["seeds"] == [11]
    assert set(manifest["versions"]) == {"python", "numpy", "scipy", "ottoflow"}
    diag = json.loads((tmp_path / "out" / "diagnostics.json").read_text())
    assert diag["passed"] and diag["invariants"]["picard_converged"]["pass"]
    assert len(diag["diagnostics"]["gaps"]) >= 1


def test_a_different_seed_changes_the_results(tmp_path):
    assert run(tmp_path, MKV, "a") == 0
    assert run(tmp_path, {**MKV, "params": {**MKV["params"], "seed": "12"}}, "b") == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() != (tmp_path / "b" / "results.csv").read_bytes()


def test_output_defaults_next_to_the_config(tmp_path):
    path = write(tmp_path, MKV, "scenario.json")
    assert cli.main(["run", str(path)]) == 0
    assert (tmp_path / "scenario_out" / "results.csv").exists()
    path = write(tmp_path, {**MKV, "output": "elsewhere"}, "other.json")
    assert cli.main(["run", str(path)]) == 0
    assert (tmp_path / "elsewhere" / "manifest.json").exists()


def test_seed_sweep_prepends_a_seed_column(tmp_path):
    params = {k: v for k, v in MKV["params"].items() if k != "seed"}
    cfg = {**MKV, "params": {**params, "seeds": ["1", 2]}}
    assert run(tmp_path, cfg) == 0
    rows = read_csv(tmp_path / "out" / "results.csv")
    assert rows[0][:2] == ["seed", "t"]
    assert {r[0] for r in rows[1:]} == {"1", "2"}
    diag = json.loads((tmp_path / "out" / "diagnostics.json").read_text())
    assert "monotone[seed=2]" in diag["invariants"]


SMALL = [
    {"kind": "manifold_sde", "manifold": "circle", "fields": ["rotation(0.5)", "rotation(1)"],
     "params": {"h": 0.01, "T": 0.1, "paths": 3}},
    {"kind": "manifold_sde", "manifold": "torus2", "fields": ["zero", "rotation(1, -1)", "height(0, 1, 1, 0)"],
     "params": {"h": 0.01, "T": 0.1, "paths": 3, "scheme": "ito_projected"}},
    {"kind": "manifold_sde", "manifold": "sphere3", "fields": ["rotation(1, 0, 0, 0, 0, 1)", "height(1, 0, 0, 0)"],
     "params": {"h": 0.01, "T": 0.1}},
    {"kind": "hopf", "fields": [{"rotation": [0, 0, 1], "vertical": 0.2}, {"potential": [1, 0, 0]}],
     "params": {"h": 0.01, "T": 0.2}},
    {"kind": "decompose", "manifold": "sphere3", "fields": [{"vertical": [0.1, 0, 0, 1]}, {"rotation": [0, 1, 0]}],
     "params": {"h": 0.01, "T": 0.2}},
    {"kind": "mkv", "manifold": "torus2", "fields": ["interaction(cos(1,0), 1)", "gradient_potential(0.3*sin(0,1))"],
     "initial": "cosine(0.3,1)", "params": {"P": 64, "h": 0.01, "T": 0.05, "solver": "sweep"}},
    {"kind": "wtransport", "manifold": "torus2", "fields": ["zero", "gradient_potential(0.3*sin(1,1))"],
     "initial": "cosine(0.3,1)", "v0": "sin(1,0)", "params": {"n": 16, "h": 0.01, "T": 0.05}},
    {"kind": "wtransport", "manifold": "circle", "fields": ["zero", "gradient_potential(0.5*sin)"],
     "initial": "cosine(0.5,1)", "v0": "cos2", "params": {"n": 64, "h": 0.01, "T": 0.1, "method": "ito"}},
    {"kind": "decompose", "manifold": "circle", "fields": ["zero", {"gradient": "gradient_potential(0.5*sin)",
                                                                    "vertical": 0.1}],
     "initial": "vonmises(1)", "params": {"n": 64, "h": 0.01, "T": 0.1}},
]


@pytest.mark.parametrize("cfg", SMALL, ids=lambda c: f"{c['kind']}-{c.get('manifold', '')}")
def test_every_kind_runs_and_passes_its_checks(cfg):
    cli.validate_config(cfg)
    res = run_scenario(cfg)
    assert res.passed, res.invariants
    assert res.columns[0] == "t" and len(res.rows) >= 2
    assert np.all(np.isfinite(np.array(res.rows, dtype=float)))


def test_forced_invariant_failure_exits_4(tmp_path):
    cfg = {"kind": "decompose", "manifold": "circle", "fields": ["zero", {"gradient": "gradient_potential(sin)",
                                                                           "vertical": 0.1}],
           "initial": "cosine(0.5,1)", "params": {"n": 32, "h": 0.05, "T": 0.5, "tol": "1e-14"}}
    assert run(tmp_path, cfg) == cli.EXIT_INVARIANT
    assert (tmp_path / "out" / "results.csv").exists()


def test_divergence_exits_3(tmp_path):
    cfg = {"kind": "manifold_sde", "manifold": "sphere2", "fields": ["zero", "height(0, 0, 50)"],
           "params": {"h": "1", "T": "5"}}
    assert run(tmp_path, cfg) == cli.EXIT_NUMERIC
    cfg = {"kind": "decompose", "manifold": "circle",
           "fields": [{"vertical": 0}, {"gradient": "gradient_potential(0.5*sin)", "vertical": 5}],
           "initial": "cosine(0.5,1)", "params": {"n": 64, "h": 0.1, "T": 1}}
    assert run(tmp_path, cfg) == cli.EXIT_NUMERIC


# --- invariant battery ----------------------------------------------------------------


def test_invariants_config_passes(tmp_path, capsys):
    assert run(tmp_path, {"kind": "invariants"}) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == len(CHECKS) and "FAIL" not in out
    rows = read_csv(tmp_path / "out" / "results.csv")
    assert rows[0] == ["check", "value", "tol", "pass"]
    assert all(r[3] == "1" for r in rows[1:])


def test_suite_subset_and_thread_cap(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("OTTO_THREADS", "2")
    assert thread_cap() == 2
    assert cli.main(["suite", "--check", "hodge_algebra_1d", "--check", "lipschitz", "-o", str(tmp_path / "s")]) == 0
    assert capsys.readouterr().out.count("PASS") == 2
    assert (tmp_path / "s" / "manifest.json").exists()
    monkeypatch.setenv("OTTO_THREADS", "0")
    assert cli.main(["suite", "--check", "lipschitz"]) == cli.EXIT_CONFIG
    monkeypatch.setenv("OTTO_THREADS", "many")
    assert cli.main(["suite", "--check", "lipschitz"]) == cli.EXIT_CONFIG
    monkeypatch.delenv("OTTO_THREADS")
    assert cli.main(["suite", "--check", "no_such_check"]) == cli.EXIT_CONFIG


def test_suite_is_deterministic_under_threads(tmp_path, monkeypatch):
    checks = ["hodge_algebra_1d", "normal_antisymmetry", "lipschitz", "picard_collapse"]
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("OTTO_THREADS", threads)
        args = ["suite", "-o", str(tmp_path / threads)]
        for c in checks:
            args += ["--check", c]
        assert cli.main(args) == 0
        outs.append((tmp_path / threads / "results.csv").read_bytes())
    assert outs[0] == outs[1]


# --- plot data ---------------------------------------------------------------------------


def test_plotdata_header_only(tmp_path):
    src = tmp_path / "r.csv"
    src.write_text("t,norm,verticality\n")
    assert cli.main(["plotdata", str(src)]) == 0
    assert (tmp_path / "r_long.csv").read_text() == "t,observable,value\n"


def test_plotdata_single_run_gives_one_series_per_observable(tmp_path):
    src = tmp_path / "r.csv"
    src.write_text("t,a,b\n0.0,1.0,2.0\n0.5,3.0,4.0\n")
    out = tmp_path / "long.csv"
    assert cli.main(["plotdata", str(src), "-o", str(out)]) == 0
    rows = read_csv(out)
    assert rows == [["t", "observable", "value"], ["0.0", "a", "1.0"], ["0.5", "a", "3.0"],
                    ["0.0", "b", "2.0"], ["0.5", "b", "4.0"]]


def test_plotdata_sweep_keeps_the_seed(tmp_path):
    params = {k: v for k, v in MKV["params"].items() if k != "seed"}
    assert run(tmp_path, {**MKV, "params": {**params, "seeds": [3, 4]}}) == 0
    assert cli.main(["plotdata", str(tmp_path / "out" / "results.csv")]) == 0
    rows = read_csv(tmp_path / "out" / "results_long.csv")
    assert rows[0] == ["seed", "t", "observable", "value"]
    assert {(r[0], r[2]) for r in rows[1:]} == {(s, o) for s in "34" for o in
                                                ("w2_initial", "F_cos", "F_sin", "F_cos2", "residual")}


def test_plotdata_missing_t(tmp_path):
    src = tmp_path / "r.csv"
    src.write_text("time,a\n0,1\n")
    assert cli.main(["plotdata", str(src)]) == cli.EXIT_CONFIG
    with pytest.raises(MissingColumn):
        cli.long_format("")


@given(st.integers(0, 6), st.lists(st.sampled_from("abcdef"), min_size=0, max_size=4, unique=True),
       st.booleans())
def test_long_format_preserves_every_cell(nrows, cols, sweep):
    header = (["seed"] if sweep else []) + ["t"] + cols
    table = [[str(i % 2)] * sweep + [repr(0.1 * i)] + [f"{c}{i}" for c in cols] for i in range(nrows)]
    text = cli.csv_text(header, table)
    rows = list(csv.reader(io.StringIO(cli.long_format(text))))
    assert len(rows) == 1 + nrows * len(cols)
    cells = {(r[-2], r[-1]) for r in rows[1:]}
    assert cells == {(c, f"{c}{i}") for c in cols for i in range(nrows)}
