"""Acceptance criteria, one test each, at the stated tolerances.

Every test records one ``PASS``/``FAIL`` line; the lines are printed in the
pytest terminal summary under "acceptance criteria".  Run standalone with
``python tests/test_acceptance.py``.
"""

import sys
import time

import numpy as np
import pytest
from _oracles import LampertiCircle, heat_solution_1d
from scipy.integrate import solve_ivp

from ottoflow import _spectral as sp
from ottoflow.fields import EntropyDrift, InteractionField, PotentialField, SumField, TrigPotential
from ottoflow.fields import field_from_catalog, parse_potential
from ottoflow.geometry import closest_point_project, get_manifold, tangent_project
from ottoflow.hodge import WeightedHodgeSolver, levi_civita_P, normal_tensor, oneill_adjoint, oneill_operator
from ottoflow.integrators import (
    integrate_manifold_sde,
    ito_stratonovich_convert,
    parallel_transport_along,
    rotation_field,
    sample_brownian,
)
from ottoflow.mckean_vlasov import (
    MKVProblem,
    density_spde_evolve,
    picard_solve,
    self_consistent_step_solve,
    verify_wasserstein_sde,
)
from ottoflow.measures import GridDensity, ParticleCloud, TangentPotential, kde, measure_family
from ottoflow.submersion import (
    HOPF,
    equivariant_decompose,
    fibre_phase,
    horizontal_lift_diffusion,
    horizontal_lift_vector,
    horizontal_transport,
    lift_field,
    project_path,
)
from ottoflow.integrators import BrownianDriver
from ottoflow.transport import (
    DiffeoTangent,
    DiscreteDiffeo,
    FieldSum,
    LiftedField,
    VerticalField,
    equivariant_decompose_D,
    horizontal_lift_measure_diffusion,
    integrate_Q,
    stochastic_parallel_transport_P,
    vertical_ito_drift,
)
from ottoflow.wasserstein import lagrangian_l2_error, ode_on_P, potential_energy, w2_circle

RESULTS: list[str] = []


def record(number: int, name: str, checks: dict) -> None:
    """Log one line for a criterion and assert every sub-check.

    ``checks`` maps a label to ``(value, bound)`` for an upper bound, or to
    ``(value, op, bound)`` with ``op`` one of ``"<"`` and ``">="``.
    """
    parts, failed = [], []
    for label, spec in checks.items():
        value, op, bound = (spec[0], "<=", spec[1]) if len(spec) == 2 else spec
        ok = {"<=": value <= bound, "<": value < bound, ">=": value >= bound}[op]
        parts.append(f"{label}={value:.3g} ({op} {bound:.3g})")
        if not ok:
            failed.append(label)
    line = f"{'FAIL' if failed else 'PASS'} A{number:02d} {name}: " + "; ".join(parts)
    RESULTS.append(line)
    assert not failed, line


def bump(n):
    return GridDensity(1 + 0.5 * np.cos(sp.grid(n)))


def catalog(entries, dim=1):
    return [field_from_catalog(e, dim) for e in entries]


INTERACTION = ["interaction(cos, 1)", "gradient_potential(0.5*sin)"]


def axis_rotation(axis, scale=1.0):
    a = np.asarray(axis, float) * scale
    return lambda y: np.cross(a, y)


def so3(axis):
    a = np.asarray(axis, float)
    return np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])


def slope(errors) -> float:
    """Least-squares rate of ``errors`` over successive step halvings."""
    e = np.log2(np.asarray(errors))
    return float(-np.polyfit(np.arange(len(e)), e, 1)[0])


# --------------------------------------------------------------------------


def test_a01_sphere_constraint():
    M = get_manifold("sphere2")
    fields = [lambda x: tangent_project(M, x, np.broadcast_to([0.0, 0.0, 0.5], np.shape(x)))]
    fields += [rotation_field(so3(e)) for e in np.eye(3)]
    x0 = np.tile(closest_point_project(M, np.array([1.0, 0.3, -0.2])), (100, 1))
    drv = sample_brownian(3, 1.0, 1e-4, 1, paths=100)
    checks = {}
    for scheme in ("stratonovich_heun", "ito_projected"):
        start = time.perf_counter()
        pts = integrate_manifold_sde(M, fields, x0, drv, scheme).points
        checks[f"{scheme} constraint"] = (float(np.max(np.abs(np.linalg.norm(pts, axis=-1) - 1))), 1e-6)
        checks[f"{scheme} seconds"] = (time.perf_counter() - start, 10.0)
    record(1, "manifold constraint on S2", checks)


def test_a02_scheme_order():
    M = get_manifold("circle")
    ode = LampertiCircle(0.8, 0.5, 0.7)
    strat = ode.stratonovich_fields()
    ito = ito_stratonovich_convert(M, strat, "to_ito")
    P, theta0 = 40_000, 0.3
    x0 = np.tile([np.cos(theta0), np.sin(theta0)], (P, 1))
    start = time.perf_counter()
    checks = {}
    for scheme, fields in (("ito_projected", ito), ("stratonovich_heun", strat)):
        drv = sample_brownian(1, 1.0, 1 / 128, 2024, paths=P)
        strong, weak = [], []
        for _ in range(3):
            end = integrate_manifold_sde(M, fields, x0, drv, scheme, stride=drv.steps).points[-1]
            exact = ode.solve(theta0, 1.0, drv.path[0, -1])
            theta = np.arctan2(end[:, 1], end[:, 0])
            strong.append(np.sqrt(np.mean(np.angle(np.exp(1j * (theta - exact))) ** 2)))
            weak.append(abs(np.mean(np.cos(theta) - np.cos(exact))))
            drv = drv.refine()
        checks[f"{scheme} strong rate"] = (slope(strong), ">=", 0.45)
        checks[f"{scheme} weak rate"] = (slope(weak), ">=", 0.9)
    checks["seconds"] = (time.perf_counter() - start, 60.0)
    record(2, "strong/weak order on S1 (h = 1/128..1/512)", checks)


def test_a03_hopf_holonomy():
    q0 = np.array([1.0, 0, 1.0, 0]) / np.sqrt(2)
    path = horizontal_lift_diffusion([axis_rotation([0, 0, 1], 2 * np.pi)], q0, sample_brownian(0, 1.0, 1e-4, 0))
    area = 2 * np.pi * 0.5**2  # hemisphere of the radius-1/2 base
    err = abs(np.angle(np.exp(1j * (fibre_phase(q0, path.end) - 2 * area))))
    closure = np.linalg.norm(HOPF.project(path.end) - HOPF.project(q0))
    # the equator lift stays in a plane orthogonal to the fibre direction, so
    # its phase is exact by symmetry; a latitude loop has no such symmetry
    polar = np.pi / 3
    q1 = np.array([np.cos(polar / 2), 0, np.sin(polar / 2), 0])
    lat = horizontal_lift_diffusion([axis_rotation([1, 0, 0], 2 * np.pi)], q1, sample_brownian(0, 1.0, 1e-4, 0))
    cap = 2 * np.pi * 0.25 * (1 - np.cos(polar))
    lat_err = abs(np.angle(np.exp(1j * (fibre_phase(q1, lat.end) + 2 * cap))))
    record(3, "Hopf holonomy, equator loop", {"phase error": (float(err), 1e-3), "base closure": (float(closure), 1e-3),
                                              "latitude pi/3 phase error": (float(lat_err), 1e-3)})


def test_a04_submersion_transport():
    fields = [axis_rotation([0.3, 0.2, 1.0]), axis_rotation([0, 1.0, 0], 1.5), axis_rotation([1.0, 0, 0])]
    q0 = closest_point_project(HOPF.total, np.array([1.0, 0.2, 0.5, -0.3]))
    path = horizontal_lift_diffusion(fields, q0, sample_brownian(2, 1.0, 1e-4, 3))
    v = tangent_project(HOPF.base, HOPF.project(q0), np.array([0.3, -1.0, 0.4]))
    lifted = horizontal_transport(path, horizontal_lift_vector(q0, v))
    direct = parallel_transport_along(HOPF.base, project_path(path), v)  # v is the pushforward of the lift
    err = np.max(np.linalg.norm(HOPF.push(path.points, lifted.vectors) - direct.vectors, axis=-1))
    record(4, "S3 horizontal transport vs S2 transport", {"sup error": (float(err), 1e-2)})


def test_a05_equivariant_factorisation():
    def full(base, coeff):
        lifted = lift_field(base)
        return lambda q: lifted(q) + coeff(HOPF.project(q))[..., None] * HOPF.vertical(q)

    fields = [full(axis_rotation([0.3, 0.2, 1.0]), lambda p: 1 + p[..., 0]),
              full(axis_rotation([1.0, 0, 0]), lambda p: 0.5 + p[..., 1])]
    h = 1e-3
    q0 = closest_point_project(HOPF.total, np.array([1.0, 0.2, 0.5, -0.3]))
    drv = sample_brownian(1, 1.0, h, 5)
    split = equivariant_decompose(fields, q0, drv)
    direct = integrate_manifold_sde(HOPF.total, fields, q0, drv)
    recon = np.max(np.linalg.norm(split.reconstruct() - direct.points, axis=-1))
    equi, conj = 0.0, 0.0
    for alpha in (0.4, 1.9, 4.1):
        moved = integrate_manifold_sde(HOPF.total, fields, HOPF.act(q0, alpha), drv)
        equi = max(equi, np.max(np.abs(HOPF.act(direct.points, alpha) - moved.points)))
        other = equivariant_decompose(fields, HOPF.act(q0, alpha), drv)
        conj = max(conj, np.max(np.abs(other.phase - split.phase)))
        # the horizontal factor moves by the same fibre rotation
        conj = max(conj, np.max(np.abs(HOPF.act(split.horizontal.points, alpha) - other.horizontal.points)))
    record(5, "equivariant factorisation on the Hopf bundle",
           {"reconstruction": (float(recon), 10 * h), "equivariance": (float(equi), 1e-9),
            "conjugation": (float(conj), 1e-9)})


def test_a06_hodge_algebra():
    rng = np.random.default_rng(0)
    x = sp.grid(256)
    alg1 = anti = adj = 0.0
    for _ in range(10):
        S = WeightedHodgeSolver(GridDensity(np.exp(sum(0.3 * rng.uniform(-1, 1) * np.cos(k * x + rng.uniform(0, 6))
                                                       for k in (1, 2, 3)))))
        fld = lambda: sum(rng.normal() * np.cos(k * x + rng.uniform(0, 6)) for k in range(4))
        A, B, C = fld(), fld(), fld()
        H, V = S.horizontal(A), S.vertical(A)
        alg1 = max(alg1, np.max(np.abs(H + V - A)), abs(S.inner(H, S.vertical(B))),
                   np.max(np.abs(S.horizontal(H) - H)), np.max(np.abs(S.vertical(V) - V)))
        U, W = TangentPotential(fld()), TangentPotential(fld())
        anti = max(anti, np.max(np.abs(normal_tensor(S, U, sp.derivative(W.values))
                                       + normal_tensor(S, W, sp.derivative(U.values)))))
        Ch = S.horizontal(C)
        adj = max(adj, abs(S.inner(oneill_adjoint(S, U, B), Ch) - S.inner(B, oneill_operator(S, U, Ch))))

    n = 128
    g = sp.grid2(n)
    X, Y = g[..., 0], g[..., 1]
    S = WeightedHodgeSolver(GridDensity(np.exp(0.5 * np.cos(X) + 0.3 * np.sin(X + 2 * Y))))
    A = np.stack([np.sin(2 * X) * np.cos(Y) + 0.3, np.cos(X + Y) ** 2 - 0.1 * np.sin(Y)])
    B = np.stack([np.cos(3 * Y) - 0.2, np.sin(X - Y)])
    H, V = S.horizontal(A), S.vertical(A)
    alg2 = max(np.max(np.abs(H + V - A)), abs(S.inner(H, S.vertical(B))),
               np.max(np.abs(S.horizontal(H) - H)), np.max(np.abs(S.vertical(V) - V)))
    U = TangentPotential(np.sin(X) * np.cos(Y))
    W = TangentPotential(np.cos(2 * X - Y))
    anti = max(anti, np.max(np.abs(normal_tensor(S, U, sp.gradient2(W.values))
                                   + normal_tensor(S, W, sp.gradient2(U.values)))))
    Ch = S.horizontal(A)
    adj = max(adj, abs(S.inner(oneill_adjoint(S, U, B), Ch) - S.inner(B, oneill_operator(S, U, Ch))))
    record(6, "Hodge algebra", {"1-D projections": (float(alg1), 1e-9), "2-D projections n=128": (float(alg2), 1e-8),
                                "N antisymmetry": (float(anti), 1e-8), "O* adjointness": (float(adj), 1e-8)})


def test_a07_lifted_levi_civita():
    n = 256
    x = sp.grid(n)
    phi = x + 0.2 * np.sin(x) + 0.05 * np.cos(2 * x)
    ref = measure_family("uniform", n)
    cloud = ParticleCloud(phi, ref.weights, ref)
    mu = cloud.grid_density()
    Z1 = SumField(EntropyDrift(0.5), InteractionField(parse_potential("cos + 0.3*sin2"), 1.0))
    Z2 = SumField(InteractionField(parse_potential("cos"), -0.7), PotentialField(parse_potential("0.4*sin")))
    z2 = Z2.at_particles(cloud)

    def central(d):
        return (Z1.at_particles(cloud.moved(phi + d * z2)) - Z1.at_particles(cloud.moved(phi - d * z2))) / (2 * d)

    lhs = (4 * central(5e-5) - central(1e-4)) / 3
    v = TangentPotential(Z2.potential_grid(mu, n))
    conn = sp.derivative(levi_civita_P(mu, v, Z1).values)
    normal = normal_tensor(WeightedHodgeSolver(mu), TangentPotential(Z1.potential_grid(mu, n)), sp.derivative(v.values))
    err = np.sqrt(np.mean((lhs - sp.trig_interpolate(conn + normal, phi)) ** 2))
    record(7, "lifted Levi-Civita identity on T1", {"L2 discrepancy": (float(err), 1e-4)})


def test_a08_picard_contraction():
    P, h, T = 10_000, 1e-3, 0.5
    start = time.perf_counter()
    sol = picard_solve(MKVProblem("circle", catalog(INTERACTION), bump(256), P, h, T, seed=2))
    gaps = sol.diagnostics["gaps"][0]
    ratios = np.array(gaps[1:4]) / np.array(gaps[:3])
    indep = ["gradient_potential(0.7*cos + 0.2*sin2)", "gradient_potential(0.5*sin)"]
    sol2 = picard_solve(MKVProblem("circle", catalog(indep), bump(256), P, h, T, seed=11))
    seconds = time.perf_counter() - start
    record(8, "Picard contraction at P=1e4",
           {"max of first three gap ratios": (float(ratios.max()), "<", 0.9),
            "measure-independent iterations": (float(max(sol2.diagnostics["iterations"])), 2.0),
            "measure-independent second gap": (float(sol2.diagnostics["gaps"][0][1]), 1e-10),
            "seconds": (seconds, 120.0)})


def test_a09_residual_refinement():
    fields = catalog(["interaction(cos, 1)", "gradient_potential(0.5*sin + 0.3*cos2)"])
    tests = [parse_potential("cos"), parse_potential("sin2"), parse_potential("0.5*cos3 + sin")]
    sups = []
    for seed in range(16):
        d = sample_brownian(1, 0.5, 1 / 128, seed)
        row = []
        for _ in range(3):
            sol = self_consistent_step_solve(MKVProblem("circle", fields, bump(256), 256, d.step, 0.5, driver=d))
            row.append(verify_wasserstein_sde(sol.path, fields, tests, d).sup)
            d = d.refine()
        sups.append(row)
    rms = np.sqrt(np.mean(np.array(sups) ** 2, axis=0))  # (levels, tests)
    rates = np.log2(rms[:-1] / rms[1:])
    record(9, "Wasserstein-SDE residual under refinement",
           {f"rate test {i}": (float(rates[:, i].min()), ">=", 0.4) for i in range(3)})


def test_a10_spde_particles():
    n, T = 256, 0.2
    fields = catalog(INTERACTION)
    fine = sample_brownian(1, T, 1e-4, 3)
    rho = density_spde_evolve(bump(n), fields, fine, record_every=fine.steps).values[-1]
    coarse = fine.coarsen().coarsen().coarsen()
    sol = self_consistent_step_solve(MKVProblem("circle", fields, bump(n), 100_000, coarse.step, T, scheme="heun",
                                                driver=coarse))
    est = kde(sol.path.cloud(len(sol.path) - 1), n).values
    err = np.sqrt(np.mean((est - rho) ** 2))
    record(10, "density SPDE vs particle KDE at P=1e5", {"L2 gap": (float(err), 5e-2)})


def test_a11_heat_flow():
    x = sp.grid(256)
    rho0 = 1 + 0.5 * np.cos(x)
    path = ode_on_P(EntropyDrift(1.0), GridDensity(rho0), 0.1, 1e-4)
    rhoT = heat_solution_1d(rho0, 0.1)
    err = lagrangian_l2_error(path.cloud(len(path) - 1), lambda p: sp.trig_interpolate(rhoT, p))
    record(11, "entropy gradient flow is the heat flow", {"L2 error": (float(err), 1e-3)})


def test_a12_parallel_transport():
    n, h, T = 256, 1e-4, 0.5
    start = time.perf_counter()
    x = sp.grid(n)
    mu = bump(n)
    v0 = TangentPotential(np.sin(x) + 0.3 * np.cos(2 * x))
    fields = catalog(INTERACTION)
    drv = sample_brownian(1, T, h, 3)
    phi = DiscreteDiffeo.from_measure(mu)
    runs = [stochastic_parallel_transport_P(fields, mu, v0, drv, phi0=p, record_every=500)
            for p in (None, phi, phi.rotated(1.234))]
    t = runs[0].times[1:]
    iso = np.max(np.abs(runs[0].norms[1:] - v0.norm(mu)) / t)
    hor = np.max(runs[0].transport.diagnostics["vertical_norm"][1:] / t)
    y = x + 0.5 * sp.TWO_PI / n
    fiber = max(np.max(np.abs(r.field(k, y) - runs[0].field(k, y))) for r in runs[1:] for k in range(1, len(t) + 1))

    # zero noise: phi' = sin(phi) from the identity, closed-form horizontal ODE for U
    phi0 = DiscreteDiffeo.identity(n)
    drift = catalog(["gradient_potential(-cos)"])
    path = horizontal_lift_measure_diffusion(drift, phi0, sample_brownian(0, T, h, 0))
    out = integrate_Q(drift, path, DiffeoTangent.lift(phi0, TangentPotential(np.sin(x))), record_every=path.driver.steps)

    def rhs(_, s):
        p, dp, U = s[:n], s[n:2 * n], s[2 * n:]
        dV = np.cos(p) * dp
        return np.concatenate([np.sin(p), dV, -np.mean(U * dV) / np.mean(dp * dp) * dp])

    ref = solve_ivp(rhs, (0, T), np.concatenate([x, np.ones(n), np.cos(x)]), method="DOP853", rtol=1e-12, atol=1e-12)
    oracle = np.max(np.abs(out.values[-1] - ref.y[2 * n:, -1]))
    record(12, "stochastic parallel transport on P",
           {"isometry drift / t": (float(iso), 1e-3), "verticality / t": (float(hor), 1e-3),
            "fiber dependence": (float(fiber), 1e-6), "zero-noise oracle": (float(oracle), 1e-4),
            "seconds": (time.perf_counter() - start, 120.0)})


def test_a13_decomposition():
    n, h = 256, 1e-3
    Z0, Z1 = catalog(INTERACTION)
    A = [FieldSum(LiftedField(Z0), VerticalField(0.7, parse_potential("cos"))), FieldSum(LiftedField(Z1), VerticalField(0.1))]
    dec = equivariant_decompose_D(A, DiscreteDiffeo.from_measure(bump(n)), sample_brownian(1, 0.5, h, 5))

    c, T, paths = 0.2, 0.5, 100
    x = sp.grid(64)
    rng = np.random.default_rng(0)
    drv = BrownianDriver(1, T, h, 0, np.sqrt(h) * rng.standard_normal((1, round(T / h), paths)))
    report = vertical_ito_drift([VerticalField(c)], DiscreteDiffeo(x + 0.1 * np.sin(x)), drv)
    record(13, "decomposition on T1",
           {"reconstruction": (float(dec.diagnostics["reconstruction_error"].max()), 10 * h),
            "group W2 to volume": (float(dec.diagnostics["group_w2"]), 1e-4),
            "vertical Ito QV / (scale^2 T)": (report.qv_bound_ratio, 1e-6)})


def test_a14_lipschitz_bounds():
    rng = np.random.default_rng(14)
    energy = pushed = 0
    worst_e = worst_p = -np.inf
    for _ in range(1000):
        f = TrigPotential(tuple((float(rng.normal()), str(rng.choice(["cos", "sin"])), (int(rng.integers(1, 4)),))
                                for _ in range(3)))
        a = ParticleCloud(rng.uniform(0, 7, 12), rng.random(12))
        b = ParticleCloud(rng.uniform(0, 7, 9), rng.random(9))
        excess = abs(potential_energy(f, a) - potential_energy(f, b)) - f.sup_gradient * w2_circle(a, b)
        worst_e = max(worst_e, excess)
        energy += excess > 1e-10

        mu = ParticleCloud(rng.uniform(0, 7, 15), rng.random(15))
        U = mu.points + rng.normal(0, 1, 15)
        V = mu.points + rng.normal(0, 1, 15)
        d = np.abs(np.mod(U - V + np.pi, 2 * np.pi) - np.pi)
        excess = w2_circle(mu.moved(U), mu.moved(V)) ** 2 - mu.integrate(d**2)
        worst_p = max(worst_p, excess)
        pushed += excess > 1e-10
    record(14, "Lipschitz bounds on 1e3 instances",
           {"energy violations": (float(energy), 0.0), "pushforward violations": (float(pushed), 0.0),
            "largest energy excess": (float(worst_e), 1e-10), "largest pushforward excess": (float(worst_p), 1e-10)})


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
