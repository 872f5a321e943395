"""Horizontal lifts and stochastic parallel transport over measure diffusions.

A measure on the circle or the 2-torus is represented as the image ``p(phi)``
of a reference density ``rho0`` under a diffeomorphism ``phi`` sampled at the
grid nodes.  Tangent vectors at ``phi`` are fields composed with ``phi``,
stored by their node values.  With the ``L^2(rho0)`` metric the projection
``phi -> p(phi)`` is a Riemannian submersion onto the space of smooth
densities, its fibers are orbits of the group of ``rho0``-preserving maps, and
the horizontal vectors are gradients composed with ``phi``.

The functions below lift a measure diffusion driven by gradient fields to a
diffusion of maps, transport tangent vectors along that lift by the linear
SDE ``dU = N(U, o dphi)``, read the result back on the space of measures, and
split equivariant diffusions of maps into a horizontal part and a group part.
All geometry here is flat, so covariant derivatives along the map space are
plain derivatives of node values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _spectral as sp
from .errors import Blowup, ConfigError, NonInvertibleMap, NonMonotone1D, NotHorizontal
from .fields import MeasureVectorField, TrigPotential, ZeroField
from .hodge import LagrangianFrame, WeightedHodgeSolver, normal_tensor
from .integrators import BrownianDriver
from .measures import GridDensity, ParticleCloud, TangentPotential, check_monotone
from .mckean_vlasov import MKVProblem, picard_solve, self_consistent_step_solve
from .wasserstein import MeasurePath, transport_map_1d, w2_circle

log = logging.getLogger(__name__)

TRANSPORT_METHODS = ("stratonovich", "ito", "eulerian")


# --------------------------------------------------------------------------
# maps and tangent vectors


def _uniform(n: int, dim: int) -> GridDensity:
    return GridDensity(np.ones((n,) * dim))


def _grid_nodes(n: int, dim: int) -> np.ndarray:
    return sp.grid(n) if dim == 1 else sp.grid2(n).reshape(-1, 2)


@dataclass(frozen=True)
class DiscreteDiffeo:
    """Diffeomorphism of the circle or 2-torus known at the grid nodes.

    Parameters
    ----------
    values : ndarray
        Lifted node images: ``(n,)`` increasing reals on the circle, ``(n*n, 2)``
        on the torus.
    reference : GridDensity
        Density ``rho0`` carried by the nodes; uniform when omitted.
    """

    values: np.ndarray
    reference: GridDensity | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            n, dim = v.size, 1
        elif v.ndim == 2 and v.shape[1] == 2:
            n, dim = int(round(np.sqrt(v.shape[0]))), 2
            if n * n != v.shape[0]:
                raise ConfigError("2-D map samples must cover a square grid")
        else:
            raise ConfigError(f"map samples must have shape (n,) or (n*n, 2), got {v.shape}")
        ref = self.reference if self.reference is not None else _uniform(n, dim)
        if ref.dim != dim or ref.n != n:
            raise ConfigError("reference density and map samples live on different grids")
        ref.require_smooth()
        if dim == 1:
            check_monotone(v)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "reference", ref)

    @classmethod
    def identity(cls, n: int, dim: int = 1, reference: GridDensity | None = None) -> "DiscreteDiffeo":
        return cls(_grid_nodes(n, dim).copy(), reference)

    @classmethod
    def from_measure(cls, mu: GridDensity, reference: GridDensity | None = None) -> "DiscreteDiffeo":
        """Monotone transport map pushing ``reference`` (uniform by default) to ``mu``; circle only."""
        if mu.dim != 1:
            raise ConfigError("maps onto a prescribed measure are built on the circle only")
        ref = reference if reference is not None else _uniform(mu.n, 1)
        return cls(transport_map_1d(ref, mu), ref)

    @property
    def dim(self) -> int:
        return self.reference.dim

    @property
    def n(self) -> int:
        return self.reference.n

    def displacement(self) -> np.ndarray:
        return self.values - _grid_nodes(self.n, self.dim)

    @cached_property
    def frame(self) -> LagrangianFrame:
        return LagrangianFrame(self.values, self.reference.values)

    @property
    def cloud(self) -> ParticleCloud:
        return ParticleCloud(self.values, self.reference.weights, self.reference)

    def density(self) -> GridDensity:
        """The image measure ``p(phi)`` on the grid (exact inversion on the circle)."""
        return self.cloud.grid_density()

    def __call__(self, points) -> np.ndarray:
        """Evaluate the map between nodes by interpolating its displacement."""
        points = np.asarray(points, dtype=float)
        if self.dim == 1:
            return points + sp.trig_interpolate(self.displacement(), points)
        d = np.moveaxis(self.displacement().reshape(self.n, self.n, 2), -1, 0)
        return points + np.stack([sp.trig_interpolate2(d[0], points), sp.trig_interpolate2(d[1], points)], axis=-1)

    def rotated(self, a) -> "DiscreteDiffeo":
        """``phi o r_a`` with ``r_a`` the translation by ``a``."""
        return DiscreteDiffeo(self(_grid_nodes(self.n, self.dim) + np.asarray(a, dtype=float)), self.reference)

    def compose(self, g: "DiscreteDiffeo") -> "DiscreteDiffeo":
        """``phi o g`` sampled at the nodes of ``g``."""
        return DiscreteDiffeo(self(g.values), g.reference)


@dataclass(frozen=True)
class DiffeoTangent:
    """Tangent vector ``A o phi`` at a map, with an optional potential tag.

    ``potential`` is set when the vector was built as ``(grad v) o phi`` and is
    therefore horizontal.
    """

    base: DiscreteDiffeo
    values: np.ndarray
    potential: TangentPotential | None = None

    @classmethod
    def lift(cls, base: DiscreteDiffeo, v: TangentPotential) -> "DiffeoTangent":
        """Horizontal lift of ``grad v`` at ``base``."""
        return cls(base, v.gradient_at(base.values), v)

    @property
    def horizontal(self) -> bool:
        return self.potential is not None

    def norm(self) -> float:
        return self.base.frame.norm(self.values)

    def vertical_norm(self) -> float:
        return self.base.frame.norm(self.base.frame.vertical(self.values))

    def eulerian(self, points) -> np.ndarray:
        return self.base.frame.eulerian(self.values, points)


def high_frequency_fraction(values: np.ndarray, n: int, dim: int) -> float:
    """Share of the energy of node samples carried by wavenumbers above ``n/4``."""
    if dim == 1:
        c = np.abs(np.fft.fft(values)) ** 2
        k = np.abs(sp.wavenumbers(n))
        high = k > n / 4
    else:
        g = np.moveaxis(values.reshape(n, n, 2), -1, 0)
        c = np.sum(np.abs(np.fft.fft2(g, axes=(1, 2))) ** 2, axis=0)
        k = np.abs(sp.wavenumbers(n))
        high = np.maximum(k[:, None], k[None, :]) > n / 4
    total = float(c.sum())
    return float(c[high].sum() / total) if total > 0 else 0.0


# --------------------------------------------------------------------------
# right-invariant fields on the map space


class DiffeoField:
    """Right-invariant vector field on maps: ``phi -> A(p(phi)) o phi``."""

    def __call__(self, phi: DiscreteDiffeo) -> np.ndarray:
        raise NotImplementedError


class LiftedField(DiffeoField):
    """Measure vector field ``Z(., p(phi))`` read at the node images."""

    def __init__(self, Z: MeasureVectorField):
        self.Z = Z

    def __call__(self, phi):
        if isinstance(self.Z, ZeroField):
            return np.zeros_like(phi.values)
        return self.Z.at_particles(phi.cloud)


class VerticalField(DiffeoField):
    """Divergence-free field ``c(mu) / rho_mu`` on the circle, read along ``phi``.

    ``c(mu) = strength * int f d mu`` for a trigonometric ``f``, or just
    ``strength`` when ``f`` is omitted.  At the nodes the field equals
    ``c * phi' / rho0``, a vertical vector.
    """

    def __init__(self, strength: float = 1.0, functional: TrigPotential | None = None):
        self.strength = float(strength)
        self.functional = functional

    def coefficient(self, phi: DiscreteDiffeo) -> float:
        if self.functional is None:
            return self.strength
        return self.strength * phi.cloud.integrate(self.functional.value(phi.values))

    def __call__(self, phi):
        if phi.dim != 1:
            raise ConfigError("vertical fields are parameterised on the circle only")
        return self.coefficient(phi) * phi.frame.direction


class FieldSum(DiffeoField):
    def __init__(self, *parts: DiffeoField):
        self.parts = parts

    def __call__(self, phi):
        return sum(p(phi) for p in self.parts)


def as_diffeo_field(A) -> DiffeoField:
    if isinstance(A, DiffeoField):
        return A
    if isinstance(A, MeasureVectorField):
        return LiftedField(A)
    raise ConfigError(f"cannot use {type(A).__name__} as a field on maps")


def covariant_derivative(A: DiffeoField, phi: DiscreteDiffeo, B: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """``nabla_B A`` at ``phi``: central difference of the node values of ``A``."""
    scale = float(np.max(np.abs(B)))
    if scale == 0.0:
        return np.zeros_like(phi.values)
    e = eps / scale
    plus = A(DiscreteDiffeo(phi.values + e * B, phi.reference))
    minus = A(DiscreteDiffeo(phi.values - e * B, phi.reference))
    return (plus - minus) / (2.0 * e)


class ItoCorrection(DiffeoField):
    """``-1/2 sum_i nabla_{A_i} A_i``: turns Itô noise fields into a Stratonovich drift."""

    def __init__(self, fields, eps: float = 1e-5):
        self.fields = [as_diffeo_field(A) for A in fields]
        self.eps = eps

    def __call__(self, phi):
        out = np.zeros_like(phi.values)
        for A in self.fields:
            out -= 0.5 * covariant_derivative(A, phi, A(phi), self.eps)
        return out


# --------------------------------------------------------------------------
# horizontal lift of a measure diffusion


@dataclass
class DiffeoPath:
    """Node images of a map-valued path (``values[k]`` at ``times[k]``)."""

    times: np.ndarray
    values: np.ndarray
    reference: GridDensity
    fields: list
    driver: BrownianDriver
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def diffeo(self, k: int) -> DiscreteDiffeo:
        return DiscreteDiffeo(self.values[k], self.reference)

    @property
    def measure_path(self) -> MeasurePath:
        return MeasurePath(self.times, self.values, self.reference.weights, self.reference)


def _manifold(dim: int) -> str:
    return "circle" if dim == 1 else "torus2"


def horizontal_lift_measure_diffusion(fields, phi0: DiscreteDiffeo, driver: BrownianDriver,
                                      scheme: str = "heun", solver: str = "sweep") -> DiffeoPath:
    """Lift the measure diffusion driven by gradient fields to maps started at ``phi0``.

    The lift is ``X_t o phi0`` with ``X_t`` the particle flow of the
    McKean-Vlasov system whose initial ensemble is the node images of ``phi0``
    weighted by ``rho0``.  Its projection is that system's measure path.

    Parameters
    ----------
    fields : list of MeasureVectorField
        Drift followed by one gradient field per noise channel.
    phi0 : DiscreteDiffeo
    driver : BrownianDriver
        Common noise, one channel per noise field.
    scheme : {"heun", "euler"}
        Heun integrates the Stratonovich equation, Euler the Itô one.
    solver : {"sweep", "picard"}
    """
    fields = list(fields)
    for Z in fields:
        if getattr(Z, "form", "general") != "gradient":
            raise ConfigError(f"horizontal lifts need gradient fields; {type(Z).__name__} is not one")
    cloud = phi0.cloud
    problem = MKVProblem(_manifold(phi0.dim), fields, cloud, cloud.size, driver.step, driver.horizon,
                         seed=driver.seed, scheme=scheme, driver=driver)
    if solver == "sweep":
        sol = self_consistent_step_solve(problem)
    elif solver == "picard":
        sol = picard_solve(problem)
    else:
        raise ConfigError(f"unknown solver {solver!r}")
    if phi0.dim == 1 and sol.diagnostics["monotonicity_violations"]:
        raise NonMonotone1D("the lifted map stopped being a circle diffeomorphism; refine the step")
    return DiffeoPath(sol.times, sol.flow, phi0.reference, fields, driver, dict(sol.diagnostics))


# --------------------------------------------------------------------------
# transport along a lifted path


@dataclass
class TransportPath:
    """Transported vectors ``values[k]`` at the maps ``base[k]`` (recorded steps)."""

    times: np.ndarray
    base: np.ndarray
    values: np.ndarray
    reference: GridDensity
    diagnostics: dict

    def __len__(self):
        return len(self.times)

    def diffeo(self, k: int) -> DiscreteDiffeo:
        return DiscreteDiffeo(self.base[k], self.reference)

    def tangent(self, k: int) -> DiffeoTangent:
        return DiffeoTangent(self.diffeo(k), self.values[k])

    def state(self, k: int) -> "TransportState":
        d = {key: val[k] for key, val in self.diagnostics.items() if isinstance(val, np.ndarray)}
        return TransportState(self.tangent(k), float(self.times[k]), d)


@dataclass
class TransportState:
    tangent: DiffeoTangent
    time: float
    diagnostics: dict


def _eulerian_normal(phi: DiscreteDiffeo, U: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``N(U, A)`` computed on the density grid of ``p(phi)`` and read back at the nodes (circle)."""
    F = phi.frame
    y = sp.grid(phi.n)
    psi = sp.antiderivative(F.eulerian(U, y))
    solver = WeightedHodgeSolver(phi.density())
    NE = normal_tensor(solver, TangentPotential(psi), F.eulerian(A, y))
    return sp.trig_interpolate(NE, phi.values)


def _milstein_terms(phi: DiscreteDiffeo, U: np.ndarray, A: DiffeoField, eps: float):
    """Noise coefficient ``N(U, A)`` and its Itô-Milstein companion.

    The companion is ``1/2 N(U, nabla_A A) + 1/2 P_H((grad A) N(U, A))
    + N(N(U, A), A)``, the derivative of ``(phi, U) -> N_phi(U, A(phi))``
    along itself, halved.
    """
    F = phi.frame
    a = A(phi)
    G = F.normal(U, a)
    C = (0.5 * F.normal(U, covariant_derivative(A, phi, a, eps))
         + 0.5 * F.horizontal(F.apply_gradient(a, G))
         + F.normal(G, a))
    return G, C


def integrate_Q(fields, path: DiffeoPath, U0, method: str = "stratonovich", record_every: int = 1,
                eps: float = 1e-5) -> TransportPath:
    """Transport a horizontal vector along a lifted path: ``dU = N(U, o dphi)``.

    Parameters
    ----------
    fields : list or None
        Fields driving ``path``; defaults to ``path.fields``.  Only the Itô
        scheme uses them.
    path : DiffeoPath
    U0 : DiffeoTangent or ndarray
        Horizontal vector at ``path.diffeo(0)``.
    method : {"stratonovich", "ito", "eulerian"}
        ``"stratonovich"``: Heun along the path increments.  ``"ito"``:
        Milstein with the analytic second-order terms (diagonal noise; Lévy
        areas between channels are dropped).  ``"eulerian"``: Heun with the
        normal tensor assembled on the density grid (circle only, slow).
    """
    if method not in TRANSPORT_METHODS:
        raise ConfigError(f"unknown transport method {method!r}; choose from {TRANSPORT_METHODS}")
    phi = path.diffeo(0)
    if phi.dim != 1 and method == "eulerian":
        raise ConfigError("the Eulerian normal tensor is assembled on the circle only")
    U = np.array(U0.values if isinstance(U0, DiffeoTangent) else U0, dtype=float)
    if U.shape != phi.values.shape:
        raise ConfigError("initial vector does not match the map samples")
    F = phi.frame
    size = F.norm(U)
    if F.norm(F.vertical(U)) > 1e-6 * max(size, 1.0):
        raise NotHorizontal("the transported vector must start horizontal")

    fields = [as_diffeo_field(A) for A in (fields if fields is not None else path.fields)]
    if path.diagnostics.get("scheme", "heun") == "euler":
        # an Itô path: the Stratonovich drift carries the correction
        fields[0] = FieldSum(fields[0], ItoCorrection(fields[1:], eps))
    h = path.driver.step
    inc = path.driver.increments
    if method == "eulerian":
        normal = _eulerian_normal
    else:
        def normal(p, u, a):
            return p.frame.normal(u, a)

    n, dim = phi.n, phi.dim

    rec_t, rec_b, rec_v, norms, vert, hf = [], [], [], [], [], []

    def record(k, phi, U):
        Fk = phi.frame
        rec_t.append(path.times[k])
        rec_b.append(phi.values.copy())
        rec_v.append(U.copy())
        norms.append(Fk.norm(U))
        vert.append(Fk.norm(Fk.vertical(U)))
        hf.append(high_frequency_fraction(U, n, dim))

    record(0, phi, U)
    K = len(path) - 1
    for k in range(K):
        nxt = path.diffeo(k + 1)
        if method == "ito":
            step = phi.frame.normal(U, fields[0](phi)) * h
            for i, A in enumerate(fields[1:]):
                dW = inc[i, k]
                G, C = _milstein_terms(phi, U, A, eps)
                step = step + G * dW + C * dW * dW
            U = U + step
        else:
            dphi = nxt.values - phi.values
            n1 = normal(phi, U, dphi)
            n2 = normal(nxt, U + n1, dphi)
            U = U + 0.5 * (n1 + n2)
        if not np.all(np.isfinite(U)):
            raise Blowup(f"transported vector became non-finite at t={path.times[k + 1]:.4g}")
        phi = nxt
        if (k + 1) % record_every == 0 or k + 1 == K:
            record(k + 1, phi, U)

    diagnostics = {
        "method": method,
        "norm": np.array(norms),
        "vertical_norm": np.array(vert),
        "high_frequency_fraction": np.array(hf),
    }
    return TransportPath(np.array(rec_t), np.array(rec_b), np.array(rec_v), path.reference, diagnostics)


# --------------------------------------------------------------------------
# transport on the space of measures


@dataclass
class ProjectedTransport:
    """Parallel transport of a tangent vector along a measure diffusion.

    ``lift`` is the map-valued path and ``transport`` the horizontal vectors
    along it; the tangent vector of the measure path at recorded step ``k`` is
    ``transport.values[k]`` read as a field on the image points.
    """

    lift: DiffeoPath
    transport: TransportPath

    @property
    def times(self) -> np.ndarray:
        return self.transport.times

    @property
    def norms(self) -> np.ndarray:
        """Otto norms ``||v_t||_{mu_t}``, equal to the ``L^2(rho0)`` norms of the lifts."""
        return self.transport.diagnostics["norm"]

    def measure(self, k: int) -> ParticleCloud:
        return self.transport.diffeo(k).cloud

    def field(self, k: int, points) -> np.ndarray:
        """The transported vector field at arbitrary points (circle)."""
        return self.transport.tangent(k).eulerian(points)


def stochastic_parallel_transport_P(fields, mu0, v0: TangentPotential, driver: BrownianDriver,
                                    phi0: DiscreteDiffeo | None = None, method: str = "stratonovich",
                                    record_every: int = 1, lift: DiffeoPath | None = None) -> ProjectedTransport:
    """Stochastic parallel transport of ``grad v0`` along the measure diffusion from ``mu0``.

    The vector is lifted horizontally at ``phi0`` (the identity carrying
    ``mu0`` when omitted), transported by :func:`integrate_Q`, and read back
    through the image points.  The result does not depend on the choice of
    ``phi0`` inside the fiber over ``mu0``.

    Parameters
    ----------
    fields : list of MeasureVectorField
        Drift followed by the noise fields (gradient form).
    mu0 : GridDensity
    v0 : TangentPotential
    driver : BrownianDriver
    phi0 : DiscreteDiffeo, optional
        Starting map; must push its reference to ``mu0``.
    lift : DiffeoPath, optional
        A lift computed beforehand from ``phi0`` with the same fields and driver.
    """
    if phi0 is None:
        phi0 = DiscreteDiffeo.identity(mu0.n, mu0.dim, mu0)
    if lift is None:
        lift = horizontal_lift_measure_diffusion(fields, phi0, driver)
    U0 = DiffeoTangent.lift(phi0, v0)
    transport = integrate_Q(fields, lift, U0, method=method, record_every=record_every)
    return ProjectedTransport(lift, transport)


def connection_form(phi: DiscreteDiffeo, A: np.ndarray) -> np.ndarray:
    """Left-translated vertical part ``J^{-1} P_V(A)``: a field at the identity.

    The result is divergence free with respect to ``rho0`` and vanishes on
    horizontal vectors.
    """
    F = phi.frame
    if phi.dim == 1 and np.min(F.jacobian) <= 0:
        raise NonInvertibleMap("map derivative is not positive")
    return F.pull_back(F.vertical(np.asarray(A, dtype=float)))


@dataclass
class LiftedTransport:
    """Equivariant transport of a general vector: horizontal transport plus a frozen group coordinate."""

    times: np.ndarray
    values: np.ndarray
    horizontal: TransportPath
    coordinate: np.ndarray

    def tangent(self, k: int) -> DiffeoTangent:
        return DiffeoTangent(self.horizontal.diffeo(k), self.values[k])


def lift_transport_full(path: DiffeoPath, A0, method: str = "stratonovich", record_every: int = 1) -> LiftedTransport:
    """Transport an arbitrary vector ``A0`` at ``path.diffeo(0)`` along ``path``.

    The horizontal part follows :func:`integrate_Q`; the vertical part keeps
    its connection-form coordinate and is carried by left translation.
    """
    phi0 = path.diffeo(0)
    A = np.asarray(A0.values if isinstance(A0, DiffeoTangent) else A0, dtype=float)
    F = phi0.frame
    H = F.horizontal(A)
    omega = connection_form(phi0, A)
    horizontal = integrate_Q(None, path, H, method=method, record_every=record_every)
    values = np.array([horizontal.diffeo(k).frame.push_forward(omega) + horizontal.values[k]
                       for k in range(len(horizontal))])
    return LiftedTransport(horizontal.times, values, horizontal, omega)


# --------------------------------------------------------------------------
# equivariant diffusions of maps


@dataclass
class Decomposition:
    """``Phi_t = h_t o g_t``: horizontal path ``h``, group path ``g``, and the direct solution."""

    times: np.ndarray
    h: np.ndarray
    g: np.ndarray
    direct: np.ndarray | None
    reference: GridDensity
    diagnostics: dict

    def reconstruct(self, k: int) -> np.ndarray:
        return DiscreteDiffeo(self.h[k], self.reference)(self.g[k])


def _channel_increments(driver: BrownianDriver, k: int, path: int | None) -> np.ndarray:
    inc = driver.increments[:, k] if path is None else driver.increments[:, k, path]
    return np.concatenate([[driver.step], inc])


def _heun(values: np.ndarray, reference: GridDensity, velocity, driver: BrownianDriver, path: int | None):
    """Heun integration of ``o d phi = sum_i A_i(phi) o dW_i`` (channel 0 is time)."""
    x = values.copy()
    out = [x.copy()]
    for k in range(driver.steps):
        dW = _channel_increments(driver, k, path)
        d1 = velocity(x, dW)
        d2 = velocity(x + d1, dW)
        x = x + 0.5 * (d1 + d2)
        if not np.all(np.isfinite(x)):
            raise Blowup(f"map integration became non-finite at t={(k + 1) * driver.step:.4g}")
        out.append(x.copy())
    return np.array(out)


def equivariant_decompose_D(fields, phi0: DiscreteDiffeo, driver: BrownianDriver, direct: bool = True,
                            path: int | None = None) -> Decomposition:
    """Split the Stratonovich diffusion ``o dPhi = sum_i A_i(Phi) o dW_i`` as ``h_t o g_t``.

    ``h`` follows the horizontal parts ``P_H A_i(h)``; ``g`` is the flow on the
    group driven by the connection-form coordinates ``varpi(A_i(h))``, right
    translated to ``g``.  Both are integrated jointly by Heun's scheme on the
    same driver.  With ``direct`` the full equation is also integrated and the
    reconstruction error recorded.

    Parameters
    ----------
    fields : list
        Right-invariant fields (drift first), as :class:`DiffeoField` or
        gradient :class:`MeasureVectorField`.
    phi0 : DiscreteDiffeo
        Circle maps only.
    path : int, optional
        Column of a multi-path driver.
    """
    if phi0.dim != 1:
        raise ConfigError("the decomposition needs map inversion and is provided on the circle only")
    fields = [as_diffeo_field(A) for A in fields]
    if len(fields) != driver.channels + 1:
        raise ConfigError("one drift plus one field per noise channel is required")
    ref = phi0.reference
    n = phi0.n
    nodes = sp.grid(n)

    def joint(state, dW):
        h, g = state[:n], state[n:]
        phi = DiscreteDiffeo(h, ref)
        F = phi.frame
        dh = np.zeros(n)
        dg = np.zeros(n)
        for A, w in zip(fields, dW):
            if w == 0.0:
                continue
            a = A(phi)
            dh += w * F.horizontal(a)
            dg += w * sp.trig_interpolate(F.pull_back(F.vertical(a)), g)
        return np.concatenate([dh, dg])

    def full(x, dW):
        phi = DiscreteDiffeo(x, ref)
        return sum((w * A(phi) for A, w in zip(fields, dW) if w != 0.0), np.zeros(n))

    state = _heun(np.concatenate([phi0.values, nodes]), ref, joint, driver, path)
    h, g = state[:, :n], state[:, n:]
    times = driver.times
    diagnostics = {}
    g_final = ParticleCloud(g[-1], ref.weights, ref)
    diagnostics["group_w2"] = w2_circle(g_final, ref)
    diagnostics["group_monotone"] = bool(np.all(np.diff(g[-1]) > 0))
    direct_values = None
    if direct:
        direct_values = _heun(phi0.values, ref, full, driver, path)
        dec = Decomposition(times, h, g, direct_values, ref, diagnostics)
        err = np.array([np.max(np.abs(dec.reconstruct(k) - direct_values[k])) for k in range(len(times))])
        diagnostics["reconstruction_error"] = err
        return dec
    return Decomposition(times, h, g, None, ref, diagnostics)


@dataclass
class VerticalDriftReport:
    """Horizontal components of Itô vertical diffusions, one row per driver path."""

    times: np.ndarray
    h: np.ndarray
    quadratic_variation: np.ndarray
    scale: float
    fiber_drift: np.ndarray

    @property
    def qv_bound_ratio(self) -> float:
        """Largest quadratic variation in units of ``scale^2 * T``."""
        return float(np.max(self.quadratic_variation) / (self.scale**2 * self.times[-1]))


def vertical_ito_drift(fields, phi0: DiscreteDiffeo, driver: BrownianDriver, eps: float = 1e-5) -> VerticalDriftReport:
    """Horizontal part of the Itô diffusion ``dPhi = sum_i Y_i(Phi) dW_i`` with vertical ``Y_i``.

    The equation is converted to Stratonovich form with the drift
    ``-1/2 sum_i nabla_{Y_i} Y_i`` and decomposed.  The horizontal factor has
    no martingale part; its realised quadratic variation is reported per path
    together with the initial horizontal drift ``-1/2 sum_i P_H nabla_{Y_i} Y_i``.

    On the circle with uniform ``rho0`` and constant coefficients that drift is
    ``-(c^2/2) h''``, a backward heat flow on the map: rounding errors in high
    modes grow like ``exp(c^2 k^2 t / 2)``, so keep ``c^2 n^2 T`` moderate.

    Parameters
    ----------
    fields : list of VerticalField
        One field per noise channel.
    driver : BrownianDriver
        Shared noise ``(channels, steps)`` or independent paths ``(channels, steps, paths)``.
    """
    fields = [as_diffeo_field(Y) for Y in fields]
    if len(fields) != driver.channels:
        raise ConfigError("one vertical field per noise channel is required")
    strat = [ItoCorrection(fields, eps)] + fields
    F = phi0.frame
    for Y in fields:
        if F.norm(F.horizontal(Y(phi0))) > 1e-8 * max(F.norm(Y(phi0)), 1.0):
            raise ConfigError("vertical_ito_drift needs vertical fields")
    paths = [None] if driver.increments.ndim == 2 else list(range(driver.increments.shape[2]))
    hs, qv = [], []
    for p in paths:
        dec = equivariant_decompose_D(strat, phi0, driver, direct=False, path=p)
        dh = np.diff(dec.h, axis=0)
        qv.append(float(np.sum(np.mean(dh**2 * phi0.reference.values, axis=1))))
        hs.append(dec.h)
    scale = max(float(np.max(np.abs(Y(phi0)))) for Y in fields)
    drift = F.horizontal(strat[0](phi0))
    return VerticalDriftReport(driver.times, np.array(hs), np.array(qv), scale, drift)
