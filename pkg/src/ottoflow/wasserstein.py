"""Otto calculus on the circle and the flat 2-torus.

Functionals (potential energy, interaction energy, entropy), their Wasserstein
gradients, Lie derivatives along gradient fields, the Hessian of the potential
energy, Wasserstein-2 distances (exact circular quantile coupling in 1-D,
debiased entropic transport in 2-D), monotone transport maps in 1-D and
deterministic flows on the space of measures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import _spectral as sp
from .errors import ConfigError, NonSmoothDensity, NoConvergence
from .fields import EntropyDrift, InteractionField, MeasureVectorField, PotentialField, TrigPotential
from .measures import GridDensity, Measure, ParticleCloud, TangentPotential, as_cloud

TWO_PI = sp.TWO_PI


# --------------------------------------------------------------------------
# functionals


class Functional:
    """Real function on the space of measures with a known Wasserstein gradient."""

    needs_density = False

    def value(self, mu: Measure) -> float:
        raise NotImplementedError

    def gradient_potential(self, mu: GridDensity) -> TangentPotential:
        raise NotImplementedError

    def gradient_field(self) -> MeasureVectorField:
        """The measure vector field ``mu -> grad F(mu)``."""
        raise NotImplementedError


@dataclass(frozen=True)
class PotentialEnergy(Functional):
    """``F_f(mu) = int f d mu``."""

    f: TrigPotential

    def value(self, mu):
        if isinstance(mu, GridDensity):
            pts = sp.grid(mu.n) if mu.dim == 1 else sp.grid2(mu.n)
            return mu.integrate(self.f.value(pts))
        return mu.integrate(self.f.value(mu.points))

    def gradient_potential(self, mu):
        mu.require_smooth()
        return TangentPotential(self.f.on_grid(mu.n))

    def gradient_field(self):
        return PotentialField(self.f)


@dataclass(frozen=True)
class InteractionEnergy(Functional):
    """``W(mu) = int int K(x - y) d mu(x) d mu(y)``."""

    kernel: TrigPotential

    def _symmetrised(self) -> TrigPotential:
        # K(z) + K(-z): cosine terms double, sine terms cancel
        return TrigPotential(tuple((2 * c, kind, k) for c, kind, k in self.kernel.terms if kind == "cos"))

    def value(self, mu):
        conv = self.kernel.convolve(mu)
        if isinstance(mu, GridDensity):
            pts = sp.grid(mu.n) if mu.dim == 1 else sp.grid2(mu.n)
            return mu.integrate(conv.value(pts))
        return mu.integrate(conv.value(mu.points))

    def gradient_potential(self, mu):
        mu.require_smooth()
        return TangentPotential(self._symmetrised().convolve(mu).on_grid(mu.n))

    def gradient_field(self):
        return InteractionField(self._symmetrised(), strength=-1.0)


@dataclass(frozen=True)
class Entropy(Functional):
    """``H(mu) = int rho log rho d vol`` with the normalised volume (zero at uniform)."""

    needs_density = True

    def value(self, mu):
        if isinstance(mu, GridDensity):
            rho = mu.require_smooth().values
            return mu.integrate(np.log(rho))
        if not mu.lagrangian:
            raise NonSmoothDensity("entropy of a particle cloud without a smooth reference is undefined")
        return mu.integrate(np.log(mu.node_density()).ravel())

    def gradient_potential(self, mu):
        return TangentPotential(np.log(mu.require_smooth().values))

    def gradient_field(self):
        return EntropyDrift(strength=-1.0)


def functional_from_name(name: str, dim: int = 1) -> Functional:
    """``"entropy"``, ``"potential:<expr>"`` or ``"interaction:<kernel expr>"``."""
    from .fields import parse_potential

    kind, _, arg = name.partition(":")
    kind = kind.strip()
    if kind == "entropy" and not arg:
        return Entropy()
    if kind == "potential":
        return PotentialEnergy(parse_potential(arg or "cos", dim))
    if kind == "interaction":
        return InteractionEnergy(parse_potential(arg or "cos", dim))
    raise ConfigError(f"unknown functional {name!r}")


def _functional(F, mu) -> Functional:
    return functional_from_name(F, mu.dim) if isinstance(F, str) else F


def potential_energy(f: TrigPotential, mu: Measure) -> float:
    return PotentialEnergy(f).value(mu)


def interaction_energy(kernel: TrigPotential, mu: Measure) -> float:
    return InteractionEnergy(kernel).value(mu)


def entropy(mu: Measure) -> float:
    return Entropy().value(mu)


def gradient_functional(F: Functional | str, mu: GridDensity) -> TangentPotential:
    """Wasserstein gradient of ``F`` at a smooth grid density, as a mean-zero potential."""
    if not isinstance(mu, GridDensity):
        raise NonSmoothDensity("Wasserstein gradients are computed for grid densities")
    return _functional(F, mu).gradient_potential(mu)


# --------------------------------------------------------------------------
# flows of gradient fields


def _velocity(field, points):
    if isinstance(field, TrigPotential):
        return field.grad(points)
    if isinstance(field, TangentPotential):
        return field.gradient_at(points)
    return field(points)


def flow_points(field, points, t: float, substeps: int = 4) -> np.ndarray:
    """Classical RK4 flow of ``x' = grad phi(x)`` for time ``t``."""
    x = np.array(points, dtype=float)
    dt = t / substeps
    for _ in range(substeps):
        k1 = _velocity(field, x)
        k2 = _velocity(field, x + 0.5 * dt * k1)
        k3 = _velocity(field, x + 0.5 * dt * k2)
        k4 = _velocity(field, x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def flow_measure(field, mu: Measure, t: float, substeps: int = 4) -> ParticleCloud:
    cloud = as_cloud(mu)
    return cloud.moved(flow_points(field, cloud.points, t, substeps))


def lie_derivative(F: Functional | str, mu: Measure, potential, delta: float = 1e-4) -> float:
    """Derivative of ``F`` along the flow of ``grad potential``.

    Central differences at ``delta`` and ``delta / 2`` combined by Richardson
    extrapolation; the measure is transported exactly (Lagrangian cloud).
    """
    F = _functional(F, mu)

    def central(d):
        return (F.value(flow_measure(potential, mu, d)) - F.value(flow_measure(potential, mu, -d))) / (2 * d)

    return (4.0 * central(delta / 2) - central(delta)) / 3.0


def otto_inner(mu: Measure, U, V) -> float:
    """``int <U, V> d mu`` for gradient-type fields given by potentials or fields."""
    cloud = as_cloud(mu)
    u, v = _field_values(U, cloud), _field_values(V, cloud)
    prod = u * v if cloud.dim == 1 else np.sum(u * v, axis=-1)
    return cloud.integrate(prod)


def _field_values(Z, cloud: ParticleCloud):
    if isinstance(Z, MeasureVectorField):
        return Z.at_particles(cloud)
    return _velocity(Z, cloud.points)


def hessian_potential(f: TrigPotential, mu: Measure, Z1, Z2) -> float:
    """``int Hess f (Z1, Z2) d mu``."""
    cloud = as_cloud(mu)
    H = f.hess(cloud.points)
    a, b = _field_values(Z1, cloud), _field_values(Z2, cloud)
    vals = H * a * b if cloud.dim == 1 else np.einsum("pi,pij,pj->p", a, H, b)
    return cloud.integrate(vals)


# --------------------------------------------------------------------------
# circular optimal transport


class _Quantile:
    """Lifted quantile function ``Q(s + 1) = Q(s) + 2 pi`` of a circle measure."""

    atomic: bool
    breaks: np.ndarray

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        whole = np.floor(s)
        return self._base(s - whole) + TWO_PI * whole


class _AtomQuantile(_Quantile):
    atomic = True

    def __init__(self, points, weights):
        x = np.mod(np.asarray(points, dtype=float), TWO_PI)
        order = np.argsort(x, kind="stable")
        self.x = x[order]
        c = np.cumsum(np.asarray(weights, dtype=float)[order])
        self.c = c / c[-1]
        self.breaks = np.concatenate([[0.0], self.c[:-1]])

    def _base(self, s):
        idx = np.searchsorted(self.c, s, side="right")
        return self.x[np.minimum(idx, len(self.x) - 1)]


class _SmoothQuantile(_Quantile):
    atomic = False

    def __init__(self, cdf_lift: np.ndarray, outer=None, table: int = 0):
        """``cdf_lift`` holds ``2 pi F(x_j)`` (a lifted monotone map on the grid).

        ``outer`` optionally post-composes the quantile with a lifted map given
        by its grid samples (Lagrangian clouds).
        """
        n = cdf_lift.size
        m = table or max(4 * n, 4096)
        s = np.arange(m) / m
        q = sp.invert_monotone(cdf_lift, TWO_PI * s)
        if outer is not None:
            disp = outer - sp.grid(outer.size)
            q = q + sp.trig_interpolate(disp, q)
        vals = np.append(q - TWO_PI * s, q[0])
        self.spline = CubicSpline(np.append(s, 1.0), vals, bc_type="periodic")
        self.breaks = np.zeros(0)

    def _base(self, s):
        return self.spline(s) + TWO_PI * s


def _cdf_lift(values: np.ndarray) -> np.ndarray:
    x = sp.grid(values.size)
    A = sp.antiderivative(values - values.mean())
    return x + A - A[0]


def _quantile(mu: Measure) -> _Quantile:
    if isinstance(mu, GridDensity):
        if mu.dim != 1:
            raise ConfigError("circular transport needs 1-D measures")
        return _SmoothQuantile(_cdf_lift(mu.values))
    if mu.dim != 1:
        raise ConfigError("circular transport needs 1-D measures")
    if mu.lagrangian and mu.reference.smooth:
        return _SmoothQuantile(_cdf_lift(mu.reference.values), outer=mu.points)
    return _AtomQuantile(mu.points, mu.weights)


_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(5)


def _coupling_cost(Qa: _Quantile, Qb: _Quantile, theta: float, smooth_pieces: int) -> float:
    cuts = [Qa.breaks, np.mod(Qb.breaks - theta, 1.0), np.array([0.0, 1.0])]
    if not (Qa.atomic and Qb.atomic):
        cuts.append(np.arange(smooth_pieces) / smooth_pieces)
    edges = np.unique(np.concatenate(cuts))
    left, width = edges[:-1], np.diff(edges)
    keep = width > 0
    left, width = left[keep], width[keep]
    if Qa.atomic and Qb.atomic:
        s = left + 0.5 * width
        return float(np.sum(width * (Qa(s) - Qb(s + theta)) ** 2))
    s = left[:, None] + 0.5 * width[:, None] * (1 + _GAUSS_X[None, :])
    vals = (Qa(s) - Qb(s + theta)) ** 2
    return float(np.sum(0.5 * width * (vals @ _GAUSS_W)))


def _ternary_min(fun, lo: float, hi: float, tol: float):
    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if fun(m1) <= fun(m2):
            hi = m2
        else:
            lo = m1
    t = 0.5 * (lo + hi)
    return t, fun(t)


@dataclass(frozen=True)
class CircleCoupling:
    """Result of :func:`circle_coupling`: optimal cut ``theta`` and squared cost."""

    theta: float
    cost: float
    source: _Quantile
    target: _Quantile


def circle_coupling(mu: Measure, nu: Measure, tol: float = 1e-10, smooth_pieces: int = 2048) -> CircleCoupling:
    """Optimal cut of the circular quantile coupling.

    Minimises ``theta -> int_0^1 |Q_mu(s) - Q_nu(s + theta)|^2 ds`` (convex)
    by ternary search on ``[-1, 1]``.
    """
    Qa, Qb = _quantile(mu), _quantile(nu)
    fun = lambda t: _coupling_cost(Qa, Qb, t, smooth_pieces)
    theta, cost = _ternary_min(fun, -1.0, 1.0, tol)
    if Qa.atomic and Qb.atomic:
        # the cost is piecewise linear between break alignments; snap to the kink
        for t in _nearby_alignments(Qa.breaks, Qb.breaks, theta):
            c = fun(t)
            if c < cost:
                theta, cost = t, c
    return CircleCoupling(theta, max(cost, 0.0), Qa, Qb)


def _nearby_alignments(a: np.ndarray, b: np.ndarray, theta: float, window: float = 1e-6) -> np.ndarray:
    """Cuts ``b_j - a_i + k`` within ``window`` of ``theta``."""
    target = np.mod(a + theta, 1.0)
    idx = np.searchsorted(b, target)
    cand = []
    for shift in (-1, 0):
        j = idx + shift
        bj = b[np.mod(j, b.size)] + np.floor_divide(j, b.size)
        cand.append(bj - a)
    cand = np.concatenate(cand)
    cand = cand + np.round(theta - cand)
    return np.unique(cand[np.abs(cand - theta) < window])


def w2_circle(mu: Measure, nu: Measure, tol: float = 1e-10) -> float:
    """Wasserstein-2 distance between two measures on the unit circle (arc length)."""
    return float(np.sqrt(circle_coupling(mu, nu, tol).cost))


def transport_map_1d(mu: GridDensity, nu: Measure) -> np.ndarray:
    """Monotone optimal map from a smooth ``mu`` to ``nu`` at the grid nodes of ``mu``.

    Returns lifted values ``T(x_j) = Q_nu(F_mu(x_j) + theta*)``.
    """
    if not isinstance(mu, GridDensity):
        raise NonSmoothDensity("the source of a transport map must be a smooth grid density")
    mu.require_smooth()
    coupling = circle_coupling(mu, nu)
    F = _cdf_lift(mu.values) / TWO_PI
    return coupling.target(F + coupling.theta)


# --------------------------------------------------------------------------
# entropic transport on the 2-torus


def _circle_cost(n: int) -> np.ndarray:
    x = sp.grid(n)
    d = np.abs(x[:, None] - x[None, :])
    d = np.minimum(d, TWO_PI - d)
    return d**2


@dataclass
class SinkhornResult:
    value: float
    iterations: int
    f: np.ndarray
    g: np.ndarray


def _lse(A: np.ndarray, axis: int) -> np.ndarray:
    M = A.max(axis=axis, keepdims=True)
    return (np.log(np.exp(A - M).sum(axis=axis, keepdims=True)) + M).squeeze(axis)


def _log_kernel_apply(H: np.ndarray, C: np.ndarray, eps: float) -> np.ndarray:
    """``-eps * log sum_y exp(H(y) - c(x, y) / eps)`` for the separable torus cost."""
    T = _lse(H[:, None, :] - C[None, :, :] / eps, axis=2)  # (y1, x2)
    return -eps * _lse(T[None, :, :] - C[:, :, None] / eps, axis=1)  # (x1, x2)


def entropic_ot(
    a: np.ndarray,
    b: np.ndarray,
    eps: float,
    tol: float = 1e-8,
    max_iter: int = 20000,
    anneal: float = 0.5,
    relaxation: float = 1.8,
) -> SinkhornResult:
    """Log-domain Sinkhorn between grid masses ``a`` and ``b`` on the torus.

    ``eps`` is reached by geometric annealing from ``eps = 1`` with warm
    starts.  Below ``eps = 0.05`` the potential updates are over-relaxed by
    ``relaxation``, which shortens the slow final stages considerably.  The
    final stage stops when the sup-norm log ratio between the second marginal
    and ``b`` drops below ``tol``.

    Raises
    ------
    NoConvergence
        If the final stage exceeds ``max_iter`` iterations.
    """
    C = _circle_cost(a.shape[0])
    la = np.log(np.where(a > 0, a, 1e-300))
    lb = np.log(np.where(b > 0, b, 1e-300))
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    schedule = []
    e = 1.0
    while e > eps:
        schedule.append(e)
        e *= anneal
    schedule.append(eps)
    total = 0
    history: list[float] = []
    for stage, e in enumerate(schedule):
        last = stage == len(schedule) - 1
        om = relaxation if e < 0.05 else 1.0
        for _ in range(max_iter):
            f = (1 - om) * f + om * _log_kernel_apply(g / e + lb, C, e)
            g_new = (1 - om) * g + om * _log_kernel_apply(f / e + la, C, e)
            change = float(np.max(np.abs(g_new - g))) / e
            g = g_new
            total += 1
            if last:
                history.append(change)
            if change < (tol if last else 1e-2):
                break
        else:
            if last:
                raise NoConvergence(f"Sinkhorn did not converge in {max_iter} iterations at eps={e}", history[-50:])
    value = float(np.sum(f * a) + np.sum(g * b))
    return SinkhornResult(value, total, f, g)


def w2_sinkhorn_torus(mu: Measure, nu: Measure, eps: float = 1e-2, tol: float = 1e-8, max_iter: int = 20000, n: int | None = None) -> float:
    """Square root of the debiased Sinkhorn divergence between two measures on ``T^2``.

    ``S = OT_eps(mu, nu) - OT_eps(mu, mu)/2 - OT_eps(nu, nu)/2`` is computed
    with the same routine for all three terms, so ``mu == nu`` gives exactly
    zero.
    """
    dm = mu if isinstance(mu, GridDensity) else mu.grid_density(n or 64)
    dn = nu if isinstance(nu, GridDensity) else nu.grid_density(dm.n)
    if dm.dim != 2 or dn.dim != 2 or dm.n != dn.n:
        raise ConfigError("entropic torus transport needs 2-D densities on the same grid")
    a = dm.values / dm.values.sum()
    b = dn.values / dn.values.sum()
    ab = entropic_ot(a, b, eps, tol, max_iter).value
    aa = entropic_ot(a, a, eps, tol, max_iter).value
    bb = entropic_ot(b, b, eps, tol, max_iter).value
    return float(np.sqrt(max(ab - 0.5 * aa - 0.5 * bb, 0.0)))


# --------------------------------------------------------------------------
# deterministic flows on the space of measures


@dataclass
class MeasurePath:
    """Lagrangian clouds along a time grid (``points[k]`` at ``times[k]``)."""

    times: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    reference: GridDensity | None = None

    def cloud(self, k: int) -> ParticleCloud:
        return ParticleCloud(self.points[k], self.weights, self.reference)

    def __len__(self):
        return len(self.times)


def ode_on_P(Z: MeasureVectorField, mu0: Measure, T: float, h: float) -> MeasurePath:
    """Characteristic flow ``X' = Z(X, M_t)`` with ``M_t`` the image of ``mu0`` (RK4)."""
    from .integrators import _step_count

    K = _step_count(T, h)
    cloud = as_cloud(mu0)
    x = cloud.points.copy()
    out = [x.copy()]
    for _ in range(K):
        v = lambda y: Z.at_particles(cloud.moved(y))
        k1 = v(x)
        k2 = v(x + 0.5 * h * k1)
        k3 = v(x + 0.5 * h * k2)
        k4 = v(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    return MeasurePath(h * np.arange(K + 1), np.array(out), cloud.weights, cloud.reference)


def lagrangian_l2_error(cloud: ParticleCloud, density_fn) -> float:
    """``||rho - rho_ref||_{L^2(vol)}`` evaluated at the images of the grid nodes.

    ``density_fn`` maps points to reference density values (normalised volume).
    """
    rho = cloud.node_density()
    ref = density_fn(cloud.points).reshape(rho.shape)
    jac = cloud.jacobian_determinant()
    return float(np.sqrt(np.mean((rho - ref) ** 2 * jac)))
