import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from ottoflow import _spectral as sp
from ottoflow.errors import ConfigError, NonMonotone1D, NonSmoothDensity
from ottoflow.fields import (
    ConstantField,
    EntropyDrift,
    InteractionField,
    PotentialField,
    SumField,
    ZeroField,
    TrigPotential,
    field_from_catalog,
    parse_potential,
)
from ottoflow.measures import GridDensity, ParticleCloud, TangentPotential, kde, measure_family, pushforward

N = 256
X = sp.grid(N)


def _inverse_sine_map(y, a=0.1):
    """Solve x + a sin x = y by bracketing (independent of the spectral inverse)."""
    return np.array([brentq(lambda t: t + a * np.sin(t) - v, v - 2 * a, v + 2 * a, xtol=1e-15) for v in y])


# ---------------------------------------------------------------- representations


def test_grid_density_is_normalised_to_mean_one():
    mu = GridDensity(3.0 + np.cos(X))
    assert abs(mu.values.mean() - 1.0) < 1e-14
    assert abs(mu.weights.sum() - 1.0) < 1e-12
    assert mu.smooth


def test_grid_density_rejects_negative_and_non_square():
    with pytest.raises(ConfigError):
        GridDensity(np.cos(X))
    with pytest.raises(ConfigError):
        GridDensity(np.ones((4, 8)))


def test_unsmooth_density_refuses_smooth_operations():
    vals = np.maximum(np.cos(X), 0.0) + 1e-12
    with pytest.raises(NonSmoothDensity):
        GridDensity(vals).require_smooth()


@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=30))
def test_cloud_weights_sum_to_one(ws):
    cloud = ParticleCloud(np.linspace(0, 6, len(ws)), np.array(ws))
    assert abs(cloud.weights.sum() - 1.0) < 1e-12
    assert np.all(cloud.weights >= 0)


def test_cloud_rejects_bad_shapes():
    with pytest.raises(ConfigError):
        ParticleCloud(np.zeros((3, 3)), np.ones(3))
    with pytest.raises(ConfigError):
        ParticleCloud(np.zeros(3), np.ones(2))
    with pytest.raises(NonSmoothDensity):
        ParticleCloud(np.zeros(3), np.ones(3)).node_density()


def test_measure_families():
    assert np.allclose(measure_family("uniform", 16).values, 1.0)
    cos = measure_family("cosine(0.5,2)", 64)
    assert np.allclose(cos.values, 1 + 0.5 * np.cos(2 * sp.grid(64)))
    vm = measure_family("vonmises(2, 1)", 64)
    assert np.argmax(vm.values) == np.argmin(np.abs(sp.grid(64) - 1))
    assert measure_family("cosine(0.3,1)", 16, dim=2).values.shape == (16, 16)
    for bad in ("gauss", "cosine(0.5", "cosine(a,b)"):
        with pytest.raises(ConfigError):
            measure_family(bad, 16)


# ---------------------------------------------------------------- pushforward


def test_pushforward_identity_and_rotation():
    mu = measure_family("cosine(0.4,1)", N)
    assert np.allclose(pushforward(X, mu).values, mu.values, atol=1e-12)
    uni = measure_family("uniform", N)
    assert np.allclose(pushforward(X + 0.7, uni).values, 1.0, atol=1e-12)


def test_pushforward_sine_perturbation_matches_change_of_variables():
    out = pushforward(X + 0.1 * np.sin(X), measure_family("uniform", N))
    oracle = 1.0 / (1.0 + 0.1 * np.cos(_inverse_sine_map(X)))
    assert np.max(np.abs(out.values - oracle)) < 1e-12


def test_pushforward_rejects_folding_map():
    with pytest.raises(NonMonotone1D):
        pushforward(X + 1.5 * np.sin(X), measure_family("uniform", N))


def test_pushforward_of_cloud_keeps_weights():
    cloud = ParticleCloud(np.array([0.1, 2.0, 4.0]), np.array([0.2, 0.3, 0.5]))
    out = pushforward(cloud.points + 1.0, cloud)
    assert np.array_equal(out.weights, cloud.weights)
    assert np.allclose(out.points, cloud.points + 1.0)


def test_lagrangian_node_density_matches_change_of_variables():
    cloud = measure_family("uniform", N).to_cloud().moved(X + 0.1 * np.sin(X))
    assert np.allclose(cloud.node_density(), 1.0 / (1.0 + 0.1 * np.cos(X)), atol=1e-13)


def test_pushforward_2d_translation_of_uniform_stays_uniform():
    n = 32
    mu = GridDensity(np.ones((n, n)))
    out = pushforward(mu.nodes + np.array([0.3, -0.2]), mu)
    assert np.max(np.abs(out.values - 1.0)) < 1e-10


# ---------------------------------------------------------------- kernel density estimate


def test_kde_of_node_atom_is_wrapped_gaussian():
    n = 128
    h = sp.TWO_PI / n
    sigma = 2 * h
    x = sp.grid(n)
    dens = kde(ParticleCloud(np.array([x[40]]), np.array([1.0])), n)
    d = x - x[40]
    wrapped = sum(np.exp(-((d + sp.TWO_PI * m) ** 2) / (2 * sigma**2)) for m in range(-3, 4))
    oracle = sp.TWO_PI * wrapped / np.sqrt(2 * np.pi * sigma**2)
    assert np.max(np.abs(dens.values - oracle)) < 1e-6 * oracle.max()


def test_kde_preserves_mass_2d(rng):
    pts = rng.uniform(0, sp.TWO_PI, size=(500, 2))
    dens = kde(ParticleCloud(pts, np.ones(500)), 32)
    assert abs(dens.values.mean() - 1.0) < 1e-12


# ---------------------------------------------------------------- potentials


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_tangent_potential_is_gauge_fixed(cs):
    phi = TangentPotential(cs[0] + cs[1] * np.cos(X) + cs[2] * np.sin(2 * X) + cs[3])
    assert abs(phi.values.mean()) <= 1e-12


def test_tangent_potential_norm_and_arithmetic():
    phi = TangentPotential(np.sin(X))
    assert abs(phi.norm(measure_family("uniform", N)) - np.sqrt(0.5)) < 1e-12
    two = phi + phi
    assert np.allclose(two.values, (2 * phi).values)
    assert np.allclose((two - phi).values, phi.values)
    assert np.allclose(phi.gradient_at(np.array([0.3])), np.cos(0.3))


def test_parse_potential():
    p = parse_potential("cos - 0.5*sin2 + 3*cos(3)", 1)
    assert p.terms == ((1.0, "cos", (1,)), (-0.5, "sin", (2,)), (3.0, "cos", (3,)))
    q = parse_potential("cos", 2)
    assert q.terms == ((1.0, "cos", (1, 0)), (1.0, "cos", (0, 1)))
    r = parse_potential("0.2*sin(1,-1)", 2)
    assert r.terms == ((0.2, "sin", (1, -1)),)
    for bad in ("", "tan", "cos(1,2)"):
        with pytest.raises(ConfigError):
            parse_potential(bad, 1)


def test_trig_potential_derivatives_match_finite_differences():
    f = parse_potential("0.7*cos(1,2) - 0.4*sin(2,-1)", 2)
    p = np.array([[0.3, 1.1], [4.0, 2.5]])
    d = 1e-6
    fd_grad = np.stack([(f.value(p + d * e) - f.value(p - d * e)) / (2 * d) for e in np.eye(2)], -1)
    assert np.allclose(f.grad(p), fd_grad, atol=1e-8)
    fd_hess = np.stack([(f.grad(p + d * e) - f.grad(p - d * e)) / (2 * d) for e in np.eye(2)], -1)
    assert np.allclose(f.hess(p), fd_hess, atol=1e-7)


@given(st.lists(st.floats(0, 6.28), min_size=1, max_size=8), st.floats(0, 6.28))
def test_convolution_matches_direct_sum(ys, x):
    K = parse_potential("cos + 0.3*sin2", 1)
    w = np.linspace(1, 2, len(ys))
    cloud = ParticleCloud(np.array(ys), w)
    direct = np.sum(cloud.weights * K.value(x - cloud.points))
    assert abs(K.convolve(cloud).value(np.array(x)) - direct) < 1e-12


# ---------------------------------------------------------------- measure vector fields


def test_interaction_field_matches_direct_sum(rng):
    K = parse_potential("cos + 0.5*sin", 1)
    cloud = ParticleCloud(rng.uniform(0, 6, 7), rng.random(7))
    x = rng.uniform(0, 6, 5)
    direct = np.array([-2.0 * np.sum(cloud.weights * K.grad(xi - cloud.points)) for xi in x])
    assert np.allclose(InteractionField(K, 2.0)(x, cloud), direct, atol=1e-13)


def test_entropy_drift_at_lagrangian_particles_is_exact():
    cloud = measure_family("uniform", N).to_cloud().moved(X + 0.1 * np.sin(X))
    # log rho(y) = -log(1 + 0.1 cos x); d/dy = 0.1 sin x / (1 + 0.1 cos x)^2
    oracle = -0.1 * np.sin(X) / (1 + 0.1 * np.cos(X)) ** 2
    assert np.max(np.abs(EntropyDrift(1.0).at_particles(cloud) - oracle)) < 1e-10
    d_oracle = np.gradient(oracle, X, edge_order=2) / (1 + 0.1 * np.cos(X))
    jac = EntropyDrift(1.0).jacobian_at_particles(cloud)
    assert np.max(np.abs(jac - d_oracle)[5:-5]) < 1e-3


def test_entropy_drift_2d_lagrangian_matches_grid_evaluation():
    n = 32
    g = sp.grid2(n)
    rho = (1 + 0.3 * np.cos(g[..., 0])) * (1 + 0.2 * np.sin(g[..., 1]))
    mu = GridDensity(rho)
    field = EntropyDrift(1.0)
    lag = field.at_particles(mu.to_cloud())
    analytic = np.stack(
        [0.3 * np.sin(g[..., 0]) / (1 + 0.3 * np.cos(g[..., 0])), -0.2 * np.cos(g[..., 1]) / (1 + 0.2 * np.sin(g[..., 1]))],
        -1,
    ).reshape(-1, 2)
    assert np.max(np.abs(lag - analytic)) < 1e-8
    assert np.max(np.abs(field(mu.nodes, mu) - analytic)) < 1e-8


@pytest.mark.parametrize(
    "field",
    [
        PotentialField(parse_potential("cos(1,2) + 0.3*sin(0,1)", 2), 1.5),
        InteractionField(parse_potential("cos + 0.2*sin(1,1)", 2), 0.7),
        EntropyDrift(1.0),
    ],
    ids=["potential", "interaction", "entropy"],
)
def test_gradient_form_fields_are_curl_free(field):
    n = 32
    g = sp.grid2(n)
    mu = GridDensity(np.exp(0.5 * np.cos(g[..., 0] - g[..., 1]) + 0.3 * np.sin(g[..., 1])))
    Z = field.grid_values(mu, n, 2)
    curl = sp.derivative(Z[1], axis=0) - sp.derivative(Z[0], axis=1)
    assert field.form == "gradient"
    assert np.max(np.abs(curl)) <= 1e-6


def test_constant_and_sum_fields():
    c = ConstantField([0.5, -1.0])
    assert c.form == "general"
    pts = np.zeros((3, 2))
    s = SumField(c, ZeroField(2))
    assert s.form == "general" and s.measure_independent
    assert np.allclose(s(pts, None), [[0.5, -1.0]] * 3)


def test_field_catalog():
    assert isinstance(field_from_catalog("zero"), ZeroField)
    f = field_from_catalog("gradient_potential(cos, 2)")
    assert np.isclose(f(np.array([np.pi / 2]))[0], -2.0)
    assert isinstance(field_from_catalog("interaction(cos, 0.5)"), InteractionField)
    assert isinstance(field_from_catalog("entropy_drift(1)"), EntropyDrift)
    assert np.allclose(field_from_catalog("constant(1, 2)", 2).vector, [1, 2])
    for bad in ("mystery(1)", "constant(1)", "gradient_potential()", "oops"):
        with pytest.raises(ConfigError):
            field_from_catalog(bad, 2 if bad.startswith("constant") else 1)


def test_trig_potential_sup_gradient_bounds_gradient(rng):
    f = TrigPotential(((0.5, "cos", (1, 2)), (-0.3, "sin", (2, 0))))
    pts = rng.uniform(0, sp.TWO_PI, size=(2000, 2))
    assert np.max(np.linalg.norm(f.grad(pts), axis=1)) <= f.sup_gradient + 1e-12
