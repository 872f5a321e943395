"""Built-in invariant battery.

Every check is a small deterministic experiment returning a measured
discrepancy and the tolerance it must meet.  Checks are independent, so the
battery runs them on a thread pool whose size is capped by ``OTTO_THREADS``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _spectral as sp
from .errors import ConfigError, OttoError
from .fields import TrigPotential, field_from_catalog
from .geometry import closest_point_project, sphere, tangent_project
from .hodge import WeightedHodgeSolver, normal_tensor, oneill_adjoint, oneill_operator
from .integrators import integrate_manifold_sde, rotation_field, sample_brownian
from .mckean_vlasov import MKVProblem, monotonicity_violations, picard_solve, self_consistent_step_solve
from .measures import GridDensity, ParticleCloud, TangentPotential
from .scenarios import ScenarioResult, constraint_error
from .submersion import fibre_phase, horizontal_lift_diffusion
from .transport import (
    DiscreteDiffeo,
    FieldSum,
    LiftedField,
    VerticalField,
    equivariant_decompose_D,
    horizontal_lift_measure_diffusion,
    stochastic_parallel_transport_P,
)
from .wasserstein import potential_energy, w2_circle


def thread_cap() -> int:
    """Worker count: ``OTTO_THREADS`` if set, else the CPU count."""
    raw = os.environ.get("OTTO_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"OTTO_THREADS must be a positive integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"OTTO_THREADS must be a positive integer, got {raw!r}")
    return value


def _bump(n):
    return GridDensity(1 + 0.5 * np.cos(sp.grid(n)))


def _density(rng, n):
    x = sp.grid(n)
    return GridDensity(np.exp(sum(0.3 * rng.uniform(-1, 1) * np.cos(k * x + rng.uniform(0, 6)) for k in (1, 2, 3))))


def _field(rng, n):
    x = sp.grid(n)
    return sum(rng.normal() * np.cos(k * x + rng.uniform(0, 6)) for k in range(4))


def _catalog(entries, dim=1):
    return [field_from_catalog(e, dim) for e in entries]


# --------------------------------------------------------------------------
# checks


def sphere_constraint():
    M = sphere(2)
    fields = [rotation_field([[0, -1, 0], [1, 0, 0], [0, 0, 0]]),
              lambda x: tangent_project(M, x, np.broadcast_to([0.0, 0.0, 1.0], np.shape(x))),
              rotation_field([[0, 0, 1], [0, 0, 0], [-1, 0, 0]])]
    x0 = np.tile(closest_point_project(M, np.array([1.0, 0.5, 0.2])), (20, 1))
    path = integrate_manifold_sde(M, fields, x0, sample_brownian(2, 0.2, 1e-3, 1, paths=20))
    return float(np.max(constraint_error(M, path.points))), 1e-6


def hopf_holonomy():
    q0 = np.array([1.0, 0, 1.0, 0]) / np.sqrt(2)
    spin = 2 * np.pi * np.array([0.0, 0.0, 1.0])
    path = horizontal_lift_diffusion([lambda y: np.cross(spin, y)], q0, sample_brownian(0, 1.0, 1e-3, 0))
    area = 2 * np.pi * 0.25
    return float(abs(np.angle(np.exp(1j * (fibre_phase(q0, path.points[-1]) - 2 * area))))), 1e-6


def hodge_algebra_1d():
    rng = np.random.default_rng(4)
    S = WeightedHodgeSolver(_density(rng, 256))
    A = _field(rng, 256)
    H, V = S.horizontal(A), S.vertical(A)
    worst = max(np.max(np.abs(H + V - A)), abs(S.inner(H, V)), np.max(np.abs(S.horizontal(H) - H)))
    return float(worst), 1e-9


def hodge_algebra_2d():
    n = 32
    g = sp.grid2(n)
    x, y = g[..., 0], g[..., 1]
    S = WeightedHodgeSolver(GridDensity(np.exp(0.5 * np.cos(x) + 0.3 * np.sin(x + 2 * y))))
    A = np.stack([np.sin(2 * x) * np.cos(y) + 0.3, np.cos(x + y) ** 2 - 0.1 * np.sin(y)])
    H, V = S.horizontal(A), S.vertical(A)
    worst = max(np.max(np.abs(H + V - A)), abs(S.inner(H, V)), np.max(np.abs(S.horizontal(H) - H)))
    return float(worst), 1e-8


def normal_antisymmetry():
    rng = np.random.default_rng(5)
    S = WeightedHodgeSolver(_density(rng, 256))
    U, V = TangentPotential(_field(rng, 256)), TangentPotential(_field(rng, 256))
    a = normal_tensor(S, U, sp.derivative(V.values))
    b = normal_tensor(S, V, sp.derivative(U.values))
    return float(np.max(np.abs(a + b))), 1e-8


def oneill_adjointness():
    rng = np.random.default_rng(6)
    S = WeightedHodgeSolver(_density(rng, 256))
    U = TangentPotential(_field(rng, 256))
    B = _field(rng, 256)
    C = S.horizontal(_field(rng, 256))
    return abs(S.inner(oneill_adjoint(S, U, B), C) - S.inner(B, oneill_operator(S, U, C))), 1e-8


def picard_collapse():
    fields = _catalog(["gradient_potential(0.7*cos + 0.2*sin2)", "gradient_potential(0.5*sin)"])
    sol = picard_solve(MKVProblem("circle", fields, _bump(64), 64, 1e-3, 0.2, seed=11))
    if sol.diagnostics["iterations"] != [2]:
        return float("inf"), 1e-10
    return sol.diagnostics["gaps"][0][1], 1e-10


def mkv_monotone():
    fields = _catalog(["interaction(cos, 1)", "gradient_potential(0.5*sin)"])
    sol = self_consistent_step_solve(MKVProblem("circle", fields, _bump(128), 128, 1e-3, 0.2, seed=2))
    return float(monotonicity_violations(sol.flow)), 0.0


def lift_equivariance():
    fields = _catalog(["interaction(cos, 1)", "gradient_potential(0.5*sin)"])
    phi0 = DiscreteDiffeo.from_measure(_bump(128))
    drv = sample_brownian(1, 0.1, 1e-3, 3)
    a = horizontal_lift_measure_diffusion(fields, phi0, drv)
    b = horizontal_lift_measure_diffusion(fields, phi0.rotated(0.5), drv)
    return float(np.max(np.abs(b.values[-1] - a.diffeo(len(a) - 1).rotated(0.5).values))), 1e-10


def transport_isometry():
    n, h = 64, 1e-3
    mu = _bump(n)
    v0 = TangentPotential(np.sin(sp.grid(n)) + 0.3 * np.cos(2 * sp.grid(n)))
    out = stochastic_parallel_transport_P(_catalog(["interaction(cos, 1)", "gradient_potential(0.5*sin)"]),
                                          mu, v0, sample_brownian(1, 0.1, h, 3), record_every=20)
    t = out.times[1:]
    drift = np.abs(out.norms[1:] - v0.norm(mu)) / t
    vert = out.transport.diagnostics["vertical_norm"][1:] / t
    return float(max(drift.max(), vert.max())), 1e-3


def decomposition():
    n, h = 64, 1e-3
    Z0, Z1 = _catalog(["interaction(cos, 1)", "gradient_potential(0.5*sin)"])
    A = [FieldSum(LiftedField(Z0), VerticalField(0.7)), FieldSum(LiftedField(Z1), VerticalField(0.1))]
    dec = equivariant_decompose_D(A, DiscreteDiffeo.from_measure(_bump(n)), sample_brownian(1, 0.1, h, 5))
    return float(dec.diagnostics["reconstruction_error"].max()), 10 * h


def lipschitz():
    rng = np.random.default_rng(7)
    worst = -np.inf
    for _ in range(100):
        f = TrigPotential(tuple((rng.normal(), kind, (int(k),)) for kind, k in
                                zip(rng.choice(["cos", "sin"], 3), rng.integers(1, 4, 3))))
        a = ParticleCloud(rng.uniform(0, 7, 12), rng.random(12))
        b = ParticleCloud(rng.uniform(0, 7, 9), rng.random(9))
        gap = abs(potential_energy(f, a) - potential_energy(f, b))
        worst = max(worst, gap - f.sup_gradient * w2_circle(a, b))
    return float(max(worst, 0.0)), 1e-10


CHECKS = {
    "sphere_constraint": sphere_constraint,
    "hopf_holonomy": hopf_holonomy,
    "hodge_algebra_1d": hodge_algebra_1d,
    "hodge_algebra_2d": hodge_algebra_2d,
    "normal_antisymmetry": normal_antisymmetry,
    "oneill_adjointness": oneill_adjointness,
    "picard_collapse": picard_collapse,
    "mkv_monotone": mkv_monotone,
    "lift_equivariance": lift_equivariance,
    "transport_isometry": transport_isometry,
    "decomposition": decomposition,
    "lipschitz": lipschitz,
}


def _run_one(name):
    try:
        value, tol = CHECKS[name]()
        return name, float(value), float(tol), None
    except OttoError as exc:
        return name, float("inf"), 0.0, f"{type(exc).__name__}: {exc}"


def run_battery(cfg: dict | None = None) -> ScenarioResult:
    """Run the named checks (all by default); one result row per check."""
    cfg = cfg or {}
    names = list(cfg.get("checks", CHECKS))
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown invariant checks {unknown}; available: {sorted(CHECKS)}")
    with ThreadPoolExecutor(max_workers=min(thread_cap(), max(len(names), 1))) as pool:
        results = list(pool.map(_run_one, names))
    out = ScenarioResult(["check", "value", "tol", "pass"], [], {"errors": {}})
    for name, value, tol, err in results:
        out.check(name, value, tol)
        if err is not None:
            out.invariants[name]["pass"] = False
            out.diagnostics["errors"][name] = err
        out.rows.append([name, value, tol, int(out.invariants[name]["pass"])])
    return out
