"""Riemannian submersions with circle fibres.

The main instance is the Hopf fibration ``S^3 -> S^2(1/2)``; the flat product
``S^1 x S^1 -> S^1`` is provided as a control case with vanishing O'Neill
tensor.  Points of ``S^3`` are stored as ``(Re z1, Im z1, Re z2, Im z2)`` and
``U(1)`` acts on the right by ``q . e^{i theta}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotRightInvariant
from .geometry import (
    EmbeddedManifold,
    chord_transport,
    clifford_torus,
    log_map,
    random_points,
    sphere,
    tangent_project,
)
from .integrators import (
    BrownianDriver,
    FrameTransport,
    PathSample,
    integrate_manifold_sde,
)


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


class CircleBundle:
    """Principal ``U(1)`` bundle given by a Riemannian submersion.

    Subclasses provide ``project``, ``differential``, ``vertical`` and
    ``act``; the vertical generator must have unit length.
    """

    total: EmbeddedManifold
    base: EmbeddedManifold

    def project(self, q):
        raise NotImplementedError

    def differential(self, q):
        """Matrix of ``T_q p`` with orthonormal rows on horizontal vectors."""
        raise NotImplementedError

    def vertical(self, q):
        """Unit vertical generator at ``q``."""
        raise NotImplementedError

    def act(self, q, theta):
        """Right action of ``e^{i theta}``."""
        raise NotImplementedError

    def push(self, q, w):
        """``T_q p (w)``."""
        return np.einsum("...ij,...j->...i", self.differential(q), w)

    def oneill(self, q, U, B):
        """O'Neill tensor ``A_U B`` (vertical part of the derivative of ``B``)."""
        raise NotImplementedError


class HopfFibration(CircleBundle):
    """``p(z1, z2) = (|z1|^2 - |z2|^2, 2 Re(conj(z1) z2), 2 Im(conj(z1) z2)) / 2``."""

    def __init__(self):
        self.total = sphere(3)
        self.base = sphere(2, radius=0.5, name="hopf_base")

    def project(self, q):
        q = np.asarray(q, dtype=float)
        a, b, c, d = np.moveaxis(q, -1, 0)
        return np.stack([0.5 * (a * a + b * b - c * c - d * d), a * c + b * d, a * d - b * c], axis=-1)

    def differential(self, q):
        q = np.asarray(q, dtype=float)
        a, b, c, d = np.moveaxis(q, -1, 0)
        rows = [
            np.stack([a, b, -c, -d], axis=-1),
            np.stack([c, d, a, b], axis=-1),
            np.stack([d, -c, -b, a], axis=-1),
        ]
        return np.stack(rows, axis=-2)

    def vertical(self, q):
        q = np.asarray(q, dtype=float)
        return np.stack([-q[..., 1], q[..., 0], -q[..., 3], q[..., 2]], axis=-1)

    def act(self, q, theta):
        q = np.asarray(q, dtype=float)
        theta = np.asarray(theta, dtype=float)[..., None]
        return np.cos(theta) * q + np.sin(theta) * self.vertical(q)

    def oneill(self, q, U, B):
        """Closed form ``<i B, U> i q`` for horizontal ``U, B``."""
        return _dot(self.vertical(B), U) * self.vertical(q)


class ProductCircleBundle(CircleBundle):
    """Projection of the Clifford torus onto its first circle factor (flat, ``A = 0``)."""

    def __init__(self):
        self.total = clifford_torus()
        r = self.total.radii[0]
        self.base = sphere(1, radius=r, name="product_base")
        self._r = r

    def project(self, q):
        return np.asarray(q, dtype=float)[..., :2]

    def differential(self, q):
        q = np.asarray(q, dtype=float)
        D = np.zeros(q.shape[:-1] + (2, 4))
        D[..., 0, 0] = 1.0
        D[..., 1, 1] = 1.0
        return D

    def vertical(self, q):
        q = np.asarray(q, dtype=float)
        out = np.zeros_like(q)
        out[..., 2] = -q[..., 3] / self._r
        out[..., 3] = q[..., 2] / self._r
        return out

    def act(self, q, theta):
        q = np.asarray(q, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = q.copy()
        c, s = np.cos(theta), np.sin(theta)
        out[..., 2] = c * q[..., 2] - s * q[..., 3]
        out[..., 3] = s * q[..., 2] + c * q[..., 3]
        return out

    def oneill(self, q, U, B):
        return np.zeros(np.broadcast_shapes(np.shape(q), np.shape(U), np.shape(B)))


HOPF = HopfFibration()


def split_vertical_horizontal(q, w, bundle: CircleBundle = HOPF):
    """Return ``(w_V, w_H)`` with ``w_V`` along the fibre."""
    V = bundle.vertical(q)
    wv = _dot(w, V) * V
    return wv, np.asarray(w, dtype=float) - wv


def horizontal_lift_vector(q, v_base, bundle: CircleBundle = HOPF):
    """Unique horizontal ``w`` at ``q`` with ``T p (w) = v_base``."""
    D = bundle.differential(q)
    return np.einsum("...ij,...i->...j", D, np.asarray(v_base, dtype=float))


def oneill_tensor(q, U, B, bundle: CircleBundle = HOPF):
    """O'Neill tensor of horizontal ``U, B`` at ``q``; antisymmetric and vertical."""
    return bundle.oneill(q, U, B)


def lift_field(base_field, bundle: CircleBundle = HOPF):
    """Horizontal lift ``q -> h_q(A(p(q)))`` of a base vector field."""
    return lambda q: horizontal_lift_vector(q, base_field(bundle.project(q)), bundle)


def horizontal_lift_diffusion(
    base_fields, q0, driver: BrownianDriver, scheme: str = "stratonovich_heun", bundle: CircleBundle = HOPF, stride: int = 1
) -> PathSample:
    """Integrate the lifted fields on the total space with ``driver``."""
    lifted = [lift_field(A, bundle) for A in base_fields]
    return integrate_manifold_sde(bundle.total, lifted, q0, driver, scheme, stride)


def horizontal_transport(total_path: PathSample, U0, bundle: CircleBundle = HOPF) -> FrameTransport:
    """Transport a horizontal vector along a horizontal path.

    Solves ``D_t tau = A_{dX}(tau)`` with a predictor-corrector expressed in
    the frame moved by the Levi-Civita transport of the total space.  The
    projected vectors are the base parallel transport of ``T p (U0)``.
    """
    M = bundle.total
    pts = total_path.points
    tau = np.array(U0, dtype=float)
    out = np.empty(pts.shape[:1] + tau.shape)
    out[0] = tau
    for k in range(len(pts) - 1):
        x0, x1 = pts[k], pts[k + 1]
        step = split_vertical_horizontal(x0, log_map(M, x0, x1), bundle)[1]
        c0 = bundle.oneill(x0, step, tau)
        moved_step = split_vertical_horizontal(x1, chord_transport(M, x0, x1, step), bundle)[1]
        pred = split_vertical_horizontal(x1, chord_transport(M, x0, x1, tau + c0), bundle)[1]
        c1 = bundle.oneill(x1, moved_step, pred)
        tau = chord_transport(M, x0, x1, tau + 0.5 * c0) + 0.5 * c1
        tau = tangent_project(M, x1, tau)
        out[k + 1] = tau
    return FrameTransport(total_path, out)


def project_path(total_path: PathSample, bundle: CircleBundle = HOPF) -> PathSample:
    """Image of a total-space path in the base."""
    return PathSample(total_path.times, bundle.project(total_path.points), total_path.scheme, bundle.base)


def fibre_phase(q0, q1, bundle: CircleBundle = HOPF) -> np.ndarray:
    """Angle ``theta`` with ``q1 = q0 . e^{i theta}`` for points on one fibre."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    return np.arctan2(_dot(q1, bundle.vertical(q0))[..., 0], _dot(q1, q0)[..., 0])


def check_right_invariant(scalar, q_samples, bundle: CircleBundle = HOPF, tol: float = 1e-8, angles=(0.7, 2.1, 4.4)):
    """Raise :class:`NotRightInvariant` if ``scalar`` varies along fibres."""
    ref = scalar(q_samples)
    for t in angles:
        dev = np.max(np.abs(scalar(bundle.act(q_samples, t)) - ref), initial=0.0)
        if dev > tol:
            raise NotRightInvariant(f"vertical coefficient varies by {dev:.3g} along a fibre")


def _vertical_coefficient(A, bundle):
    return lambda q: _dot(A(q), bundle.vertical(q))[..., 0]


def _horizontal_part(A, bundle):
    return lambda q: split_vertical_horizontal(q, A(q), bundle)[1]


@dataclass
class EquivariantSplit:
    """Factorisation ``X_t = h_t . e^{i theta_t}``."""

    horizontal: PathSample
    phase: np.ndarray

    def reconstruct(self, bundle: CircleBundle = HOPF) -> np.ndarray:
        return bundle.act(self.horizontal.points, self.phase)


def equivariant_decompose(fields, q0, driver: BrownianDriver, bundle: CircleBundle = HOPF, check_points: int = 64, seed: int = 0):
    """Factor a right-invariant Stratonovich diffusion into horizontal and group parts.

    Parameters
    ----------
    fields : sequence of callables
        ``[A0, ..., AN]`` on the total space, each equivariant under the
        right ``U(1)`` action.
    q0 : array_like, shape (4,) or (P, 4)
    driver : BrownianDriver

    Returns
    -------
    EquivariantSplit
        ``horizontal`` integrates the horizontal parts of the fields;
        ``phase`` integrates ``a_0(h) dt + sum a_i(h) o dW^i`` with
        ``a_i = <A_i, V>`` by the trapezoid rule.

    Raises
    ------
    NotRightInvariant
        If some ``a_i`` is not constant along fibres.
    """
    rng = np.random.default_rng(seed)
    samples = random_points(bundle.total, check_points, rng)
    scalars = [_vertical_coefficient(A, bundle) for A in fields]
    for s in scalars:
        check_right_invariant(s, samples, bundle)
    horiz = [_horizontal_part(A, bundle) for A in fields]
    hpath = integrate_manifold_sde(bundle.total, horiz, q0, driver, "stratonovich_heun")
    pts = hpath.points
    phase = np.zeros(pts.shape[:-1])
    prev = np.stack([s(pts[0]) for s in scalars])
    for k in range(len(pts) - 1):
        cur = np.stack([s(pts[k + 1]) for s in scalars])
        mean = 0.5 * (prev + cur)
        dW = driver.increments[:, k]
        dW = dW.reshape(dW.shape + (1,) * (mean.ndim - dW.ndim))
        phase[k + 1] = phase[k] + mean[0] * driver.step + np.sum(mean[1:] * dW, axis=0)
        prev = cur
    return EquivariantSplit(hpath, phase)


def equivariant_lift_transport(path: PathSample, w0, bundle: CircleBundle = HOPF) -> FrameTransport:
    """Transport a full tangent vector: horizontal part by :func:`horizontal_transport`,
    vertical coordinate held fixed and re-attached along the path."""
    wv, wh = split_vertical_horizontal(path.points[0], np.asarray(w0, dtype=float), bundle)
    coord = _dot(wv, bundle.vertical(path.points[0]))
    horizontal = horizontal_transport(path, wh, bundle)
    vectors = horizontal.vectors + coord * bundle.vertical(path.points)
    return FrameTransport(path, vectors, {"vertical_coordinate": coord, "horizontal": horizontal.vectors})
