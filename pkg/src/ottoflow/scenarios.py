"""Scenario runners behind the command line.

Each runner takes a validated config dictionary and returns a
:class:`ScenarioResult`: a table of time series, a JSON-ready diagnostics
dictionary and a set of named invariant checks.  Runners are pure functions
of the config, so identical configs give identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _spectral as sp
from .errors import ConfigError
from .fields import field_from_catalog, parse_potential
from .geometry import EmbeddedManifold, closest_point_project, get_manifold, tangent_project
from .integrators import SCHEMES, integrate_manifold_sde, rotation_field, sample_brownian, zero_field
from .mckean_vlasov import (
    MKVProblem,
    coupling_distance,
    monotonicity_violations,
    picard_solve,
    self_consistent_step_solve,
    verify_wasserstein_sde,
)
from .measures import TangentPotential, measure_family
from .submersion import HOPF, equivariant_decompose, lift_field
from .transport import (
    DiscreteDiffeo,
    FieldSum,
    LiftedField,
    VerticalField,
    equivariant_decompose_D,
    stochastic_parallel_transport_P,
)
from .wasserstein import w2_circle

KINDS = ("manifold_sde", "hopf", "mkv", "wtransport", "decompose", "invariants")


@dataclass
class ScenarioResult:
    columns: list
    rows: list
    diagnostics: dict = field(default_factory=dict)
    invariants: dict = field(default_factory=dict)

    def check(self, name: str, value: float, tol: float) -> None:
        value = float(value)
        self.invariants[name] = {"value": value, "tol": float(tol), "pass": bool(value <= tol)}

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.invariants.values())


# --------------------------------------------------------------------------
# parameter access


def number(params: dict, key: str, default=None, kind=float):
    """Read a numeric parameter given as a JSON number or a decimal string."""
    if key not in params:
        if default is None:
            raise ConfigError(f"missing parameter {key!r}")
        return default
    raw = params[key]
    try:
        if isinstance(raw, bool):
            raise ValueError
        if kind is int and isinstance(raw, float):
            if not raw.is_integer():
                raise ValueError
            return int(raw)
        return kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key!r} is not a valid {kind.__name__}: {raw!r}") from exc


def positive(params, key, default=None, kind=float):
    value = number(params, key, default, kind)
    if value <= 0:
        raise ConfigError(f"parameter {key!r} must be positive")
    return value


def _floats(values, name):
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of numbers") from exc


def _record_indices(K: int, every: int) -> list[int]:
    idx = list(range(0, K + 1, every))
    if idx[-1] != K:
        idx.append(K)
    return idx


# --------------------------------------------------------------------------
# fields on embedded manifolds


def _generator(M: EmbeddedManifold, coeffs) -> np.ndarray:
    pairs = [(i, j) for a, b in M.blocks for i in range(a, b) for j in range(i + 1, b)]
    if len(coeffs) != len(pairs):
        raise ConfigError(f"rotation on {M.name} takes {len(pairs)} coefficients, got {len(coeffs)}")
    S = np.zeros((M.ambient_dim, M.ambient_dim))
    for (i, j), c in zip(pairs, coeffs):
        S[i, j], S[j, i] = -c, c
    return S


def manifold_field(M: EmbeddedManifold, entry: str):
    """``zero``, ``rotation(c...)`` (generator entries within each sphere factor)
    or ``height(a...)`` (tangent part of a constant ambient vector)."""
    entry = entry.strip()
    if entry == "zero":
        return zero_field
    if "(" not in entry or not entry.endswith(")"):
        raise ConfigError(f"unrecognised manifold field {entry!r}")
    name, rest = entry[:-1].split("(", 1)
    coeffs = _floats([a for a in rest.split(",") if a.strip()], f"arguments of {entry!r}")
    if name.strip() == "rotation":
        return rotation_field(_generator(M, coeffs))
    if name.strip() == "height":
        if len(coeffs) != M.ambient_dim:
            raise ConfigError(f"height on {M.name} takes {M.ambient_dim} coefficients")
        a = np.array(coeffs)
        return lambda x: tangent_project(M, x, np.broadcast_to(a, np.shape(x)))
    raise ConfigError(f"unknown manifold field {name.strip()!r}")


def constraint_error(M: EmbeddedManifold, x) -> np.ndarray:
    x = np.asarray(x)
    errs = [np.abs(np.linalg.norm(x[..., a:b], axis=-1) - r) for (a, b), r in zip(M.blocks, M.radii)]
    return np.max(np.stack(errs), axis=0)


def _hopf_fields(entries):
    """Base fields on the radius-1/2 sphere plus right-invariant vertical parts.

    Each entry may carry ``potential`` (degree-one harmonic coefficients,
    gradient field), ``rotation`` (axis of a Killing field) and ``vertical``
    (``[b0, b1, b2, b3]`` for the fibre speed ``b0 + b . p(q)``, or a
    constant ``b0``).
    """
    base, total = [], []
    for e in entries:
        if not isinstance(e, dict):
            raise ConfigError("Hopf fields are objects with potential/rotation/vertical keys")
        a = np.array(_floats(e.get("potential", [0, 0, 0]), "potential"))
        w = np.array(_floats(e.get("rotation", [0, 0, 0]), "rotation"))
        v = e.get("vertical", 0)
        b = np.array(_floats(v if isinstance(v, list) else [v, 0, 0, 0], "vertical"))
        if a.shape != (3,) or w.shape != (3,) or b.shape != (4,):
            raise ConfigError("potential and rotation take 3 coefficients, vertical takes 4")

        def Y(y, a=a, w=w):
            y = np.asarray(y, dtype=float)
            return tangent_project(HOPF.base, y, np.broadcast_to(a, y.shape)) + np.cross(w, y)

        lifted = lift_field(Y)

        def A(q, lifted=lifted, b=b):
            s = b[0] + HOPF.project(q) @ b[1:]
            return lifted(q) + s[..., None] * HOPF.vertical(q)

        base.append(Y)
        total.append(A)
    return base, total


# --------------------------------------------------------------------------
# runners


def run_manifold_sde(cfg: dict) -> ScenarioResult:
    p = cfg.get("params", {})
    M = get_manifold(cfg.get("manifold", "sphere2"))
    fields = [manifold_field(M, e) for e in cfg.get("fields", ["zero", "zero"])]
    if len(fields) < 1:
        raise ConfigError("at least a drift field is required")
    h, T = positive(p, "h"), positive(p, "T")
    seed, paths = number(p, "seed", 0, int), positive(p, "paths", 1, int)
    scheme = p.get("scheme", "stratonovich_heun")
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    every = positive(p, "record_every", 1, int)
    tol = positive(p, "tol", 1e-6)
    x0 = p.get("x0")
    if x0 is None:
        x0 = np.concatenate([np.full(b - a, r / np.sqrt(b - a)) for (a, b), r in zip(M.blocks, M.radii)])
    x0 = closest_point_project(M, np.array(_floats(x0, "x0")))
    driver = sample_brownian(len(fields) - 1, T, h, seed, paths=paths)
    start = np.broadcast_to(x0, (paths, M.ambient_dim)).copy()
    path = integrate_manifold_sde(M, fields, start, driver, scheme)
    idx = _record_indices(driver.steps, every)
    cons = constraint_error(M, path.points)
    cols = ["t", "constraint"] + [f"mean_x{i}" for i in range(M.ambient_dim)]
    rows = [[path.times[k], float(np.max(cons[k]))] + list(np.mean(path.points[k], axis=0)) for k in idx]
    out = ScenarioResult(cols, rows, {"scheme": scheme, "paths": paths, "steps": driver.steps})
    out.check("constraint", np.max(cons), tol)
    return out


def run_hopf(cfg: dict) -> ScenarioResult:
    p = cfg.get("params", {})
    base, total = _hopf_fields(cfg.get("fields", []))
    if not total:
        raise ConfigError("at least a drift field is required")
    h, T = positive(p, "h"), positive(p, "T")
    seed = number(p, "seed", 0, int)
    every = positive(p, "record_every", 1, int)
    q0 = closest_point_project(HOPF.total, np.array(_floats(p.get("q0", [1, 0, 1, 0]), "q0")))
    driver = sample_brownian(len(total) - 1, T, h, seed)
    full = integrate_manifold_sde(HOPF.total, total, q0, driver)
    split = equivariant_decompose(total, q0, driver, seed=seed)
    below = integrate_manifold_sde(HOPF.base, base, HOPF.project(q0), driver)
    recon = np.linalg.norm(split.reconstruct() - full.points, axis=-1)
    base_err = np.linalg.norm(HOPF.project(full.points) - below.points, axis=-1)
    idx = _record_indices(driver.steps, every)
    cols = ["t", "phase", "reconstruction_error", "base_error"]
    rows = [[full.times[k], split.phase[k], recon[k], base_err[k]] for k in idx]
    out = ScenarioResult(cols, rows, {"steps": driver.steps, "final_phase": float(split.phase[-1])})
    out.check("reconstruction", np.max(recon), positive(p, "tol", 10 * h))
    out.check("base_projection", np.max(base_err), positive(p, "base_tol", 1e-2))
    return out


def _mkv_problem(cfg: dict) -> tuple[MKVProblem, dict]:
    p = cfg.get("params", {})
    manifold = cfg.get("manifold", "circle")
    dim = 2 if manifold == "torus2" else 1
    fields = [field_from_catalog(e, dim) for e in cfg.get("fields", ["zero"])]
    P = positive(p, "P", 256, int)
    n = positive(p, "n", P if dim == 1 else int(round(np.sqrt(P))), int)
    mu0 = measure_family(cfg.get("initial", "uniform"), n, dim)
    problem = MKVProblem(manifold, fields, mu0, P, positive(p, "h"), positive(p, "T"),
                         seed=number(p, "seed", 0, int), scheme=p.get("scheme", "euler"))
    return problem, p


# observables F_f(mu) = int f dmu reported along McKean-Vlasov runs
MKV_TESTS = {
    1: {"cos": "cos", "sin": "sin", "cos2": "cos(2)"},
    2: {"cosx": "cos(1,0)", "siny": "sin(0,1)", "cosxy": "cos(1,1)"},
}


def run_mkv(cfg: dict) -> ScenarioResult:
    problem, p = _mkv_problem(cfg)
    solver = p.get("solver", "picard")
    if solver == "picard":
        window = number(p, "window", 0.0)
        sol = picard_solve(problem, tol=positive(p, "tol", 1e-10), window=window if window > 0 else None)
    elif solver == "sweep":
        sol = self_consistent_step_solve(problem)
    else:
        raise ConfigError(f"unknown solver {solver!r}")
    dim = problem.dim
    names = MKV_TESTS[dim]
    tests = [parse_potential(t, dim) for t in names.values()]
    report = verify_wasserstein_sde(sol.path, problem.fields, tests, problem.driver)
    flow, weights = sol.flow, sol.path.weights
    idx = _record_indices(problem.steps, positive(p, "record_every", 1, int))
    first = sol.path.cloud(0)
    cols = ["t", "w2_initial" if dim == 1 else "coupling_initial"]
    cols += [f"F_{name}" for name in names] + ["residual"]
    rows = []
    for k in idx:
        mu = sol.path.cloud(k)
        gap = w2_circle(mu, first) if dim == 1 else coupling_distance(flow[k], flow[0], weights)
        obs = [mu.integrate(f.value(mu.points)) for f in tests]
        rows.append([sol.times[k], gap] + obs + [float(np.max(np.abs(report.residuals[:, k])))])
    diag = {key: val for key, val in sol.diagnostics.items()}
    diag["residual_sup"] = report.sup
    diag["tests"] = dict(names)
    out = ScenarioResult(cols, rows, diag)
    if dim == 1:
        out.check("monotone", monotonicity_violations(flow), 0)
    if solver == "picard":
        out.check("picard_converged", max(g[-1] for g in sol.diagnostics["gaps"]), positive(p, "tol", 1e-10))
    return out


def _initial_potential(expr: str, n: int, dim: int) -> TangentPotential:
    return TangentPotential(parse_potential(expr, dim).on_grid(n))


def run_wtransport(cfg: dict) -> ScenarioResult:
    p = cfg.get("params", {})
    manifold = cfg.get("manifold", "circle")
    if manifold not in ("circle", "torus2"):
        raise ConfigError("Wasserstein transport runs on the circle or the flat 2-torus")
    dim = 1 if manifold == "circle" else 2
    fields = [field_from_catalog(e, dim) for e in cfg.get("fields", ["zero"])]
    n = positive(p, "n", 128, int)
    h, T = positive(p, "h"), positive(p, "T")
    seed = number(p, "seed", 0, int)
    every = positive(p, "record_every", 1, int)
    method = p.get("method", "stratonovich")
    mu0 = measure_family(cfg.get("initial", "uniform"), n, dim)
    v0 = _initial_potential(cfg.get("v0", "sin" if dim == 1 else "sin(1,0)"), n, dim)
    driver = sample_brownian(len(fields) - 1, T, h, seed)
    run = stochastic_parallel_transport_P(fields, mu0, v0, driver, method=method, record_every=every)
    diag = run.transport.diagnostics
    t = run.times
    norm0 = v0.norm(mu0)
    drift = np.abs(run.norms - norm0)
    cols = ["t", "norm", "verticality", "hf_fraction"]
    gaps = None
    shift = number(p, "fiber_shift", 1.234)
    if dim == 1 and shift != 0.0:
        phi = DiscreteDiffeo.from_measure(mu0).rotated(shift)
        other = stochastic_parallel_transport_P(fields, mu0, v0, driver, phi0=phi, method=method, record_every=every)
        y = sp.grid(n) + 0.5 * sp.TWO_PI / n
        gaps = np.array([np.max(np.abs(other.field(k, y) - run.field(k, y))) for k in range(len(t))])
        cols.append("fiber_gap")
    rows = []
    for k in range(len(t)):
        row = [t[k], run.norms[k], diag["vertical_norm"][k], diag["high_frequency_fraction"][k]]
        rows.append(row + ([gaps[k]] if gaps is not None else []))
    out = ScenarioResult(cols, rows, {"method": method, "initial_norm": norm0, "steps": driver.steps})
    scale = np.maximum(t[1:], h)
    out.check("isometry", np.max(drift[1:] / scale) if len(t) > 1 else 0.0, positive(p, "tol", 1e-3))
    out.check("horizontality", np.max(diag["vertical_norm"][1:] / scale) if len(t) > 1 else 0.0,
              positive(p, "tol", 1e-3))
    if gaps is not None:
        out.check("fiber_independence", np.max(gaps), positive(p, "fiber_tol", 1e-6))
    return out


def _diffeo_fields(entries):
    out = []
    for e in entries:
        if isinstance(e, str):
            out.append(LiftedField(field_from_catalog(e, 1)))
            continue
        if not isinstance(e, dict):
            raise ConfigError("decomposition fields are catalogue strings or objects")
        parts = []
        if "gradient" in e:
            parts.append(LiftedField(field_from_catalog(e["gradient"], 1)))
        if "vertical" in e:
            f = parse_potential(e["functional"]) if "functional" in e else None
            parts.append(VerticalField(number(e, "vertical"), f))
        if not parts:
            raise ConfigError("a decomposition field needs a gradient or a vertical part")
        out.append(parts[0] if len(parts) == 1 else FieldSum(*parts))
    return out


def run_decompose(cfg: dict) -> ScenarioResult:
    manifold = cfg.get("manifold", "circle")
    if manifold == "sphere3":
        return run_hopf(cfg)
    if manifold != "circle":
        raise ConfigError("decompositions run on the circle (maps) or on sphere3 (Hopf bundle)")
    p = cfg.get("params", {})
    fields = _diffeo_fields(cfg.get("fields", []))
    if not fields:
        raise ConfigError("at least a drift field is required")
    n = positive(p, "n", 128, int)
    h, T = positive(p, "h"), positive(p, "T")
    every = positive(p, "record_every", 1, int)
    mu0 = measure_family(cfg.get("initial", "uniform"), n, 1)
    phi0 = DiscreteDiffeo.from_measure(mu0)
    driver = sample_brownian(len(fields) - 1, T, h, number(p, "seed", 0, int))
    dec = equivariant_decompose_D(fields, phi0, driver)
    err = dec.diagnostics["reconstruction_error"]
    x = sp.grid(n)
    idx = _record_indices(driver.steps, every)
    cols = ["t", "reconstruction_error", "group_shift", "horizontal_displacement"]
    rows = [[dec.times[k], err[k], float(np.mean(dec.g[k] - x)), float(np.sqrt(np.mean((dec.h[k] - phi0.values) ** 2)))]
            for k in idx]
    diag = {"group_w2": dec.diagnostics["group_w2"], "group_monotone": dec.diagnostics["group_monotone"]}
    out = ScenarioResult(cols, rows, diag)
    out.check("reconstruction", np.max(err), positive(p, "tol", 10 * h))
    out.check("group_preserves_volume", dec.diagnostics["group_w2"], positive(p, "w2_tol", 1e-4))
    return out


RUNNERS = {
    "manifold_sde": run_manifold_sde,
    "hopf": run_hopf,
    "mkv": run_mkv,
    "wtransport": run_wtransport,
    "decompose": run_decompose,
}


def run_scenario(cfg: dict) -> ScenarioResult:
    kind = cfg.get("kind")
    if kind == "invariants":
        from .battery import run_battery

        return run_battery(cfg)
    if kind not in RUNNERS:
        raise ConfigError(f"unknown scenario kind {kind!r}; choose from {KINDS}")
    return RUNNERS[kind](cfg)

