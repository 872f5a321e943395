"""Weighted Helmholtz-Hodge splitting on the circle and the flat 2-torus.

For a smooth positive density ``rho`` every vector field splits uniquely as
``A = grad psi + Y`` with ``div(rho Y) = 0`` and ``psi`` mean-zero.  The first
part is *horizontal* (tangent to the space of measures), the second
*vertical*.  Fields live on the grid: shape ``(n,)`` on the circle,
``(2, n, n)`` on the torus.  Inner products are ``int <A, B> rho dvol`` with
the normalised volume.

Besides the projections the module provides the normal tensor
``N(U, A) = P_V((grad U)^T A)``, its linear operator ``O_U`` and adjoint, the
Levi-Civita connection on the space of measures, and the same projections in
the Lagrangian frame of a circle diffeomorphism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import _spectral as sp
from .errors import ConfigError, NonInvertibleMap, NonMonotone1D, NotHorizontal, SolverDivergence
from .fields import MeasureVectorField, TrigPotential
from .measures import GridDensity, Measure, TangentPotential, as_cloud


def _rho_values(rho) -> np.ndarray:
    vals = rho.values if isinstance(rho, GridDensity) else np.asarray(rho, dtype=float)
    if np.min(vals) <= 0:
        raise ConfigError("the weighted Hodge splitting needs a strictly positive density")
    return vals


def weighted_div(rho, A: np.ndarray) -> np.ndarray:
    """``div_rho(A) = div(rho A) / rho = div A + <grad log rho, A>`` (spectral)."""
    r = _rho_values(rho)
    return sp.divergence(r * A) / r


@dataclass(frozen=True)
class HodgeSplit:
    """``A = gradient + vertical`` with ``gradient = grad potential``."""

    potential: np.ndarray
    gradient: np.ndarray
    vertical: np.ndarray
    residual: float
    iterations: int = 0

    @property
    def tangent(self) -> TangentPotential:
        return TangentPotential(self.potential)


class WeightedHodgeSolver:
    """Hodge splitting with respect to a fixed positive density.

    Parameters
    ----------
    rho : GridDensity or ndarray
        Strictly positive density on a 1-D or square 2-D grid.
    tol : float
        Relative residual of ``div(rho grad psi) = div(rho A)`` required of the
        2-D conjugate-gradient solve.
    max_iter : int
        Conjugate-gradient iteration cap.
    """

    def __init__(self, rho, tol: float = 1e-10, max_iter: int = 1000):
        self.rho = _rho_values(rho)
        self.dim = self.rho.ndim
        self.n = self.rho.shape[0]
        self.tol = tol
        self.max_iter = max_iter
        self.method = "closed_form" if self.dim == 1 else "pcg"
        if self.dim == 1:
            self._inv_mean = float(np.mean(1.0 / self.rho))
        else:
            k = sp.wavenumbers(self.n)
            if self.n % 2 == 0:
                k[self.n // 2] = 0.0
            ksq = k[:, None] ** 2 + k[None, :] ** 2
            with np.errstate(divide="ignore"):
                self._inv_ksq = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)

    # --- inner products -------------------------------------------------------
    def inner(self, A: np.ndarray, B: np.ndarray) -> float:
        prod = A * B if self.dim == 1 else np.sum(A * B, axis=0)
        return float(np.mean(prod * self.rho))

    def norm(self, A: np.ndarray) -> float:
        return float(np.sqrt(self.inner(A, A)))

    # --- splitting ------------------------------------------------------------
    def _operator(self, psi: np.ndarray) -> np.ndarray:
        """``-div(rho grad psi)``, symmetric positive semi-definite."""
        return -sp.divergence2(self.rho * sp.gradient2(psi))

    def _precondition(self, r: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft2(np.fft.fft2(r) * self._inv_ksq))

    def solve_potential(self, rhs: np.ndarray, scale: float | None = None) -> tuple[np.ndarray, float, int]:
        """Mean-zero ``psi`` with ``div(rho grad psi) = rhs`` (2-D).

        The solve stops at relative residual ``tol``; ``scale`` (the size of
        the terms whose cancellation produced ``rhs``) sets an absolute floor
        so nearly divergence-free inputs do not chase rounding noise.
        """
        size = self.n * self.n
        shape = (self.n, self.n)
        op = LinearOperator((size, size), matvec=lambda v: self._operator(v.reshape(shape)).ravel(), dtype=float)
        pre = LinearOperator((size, size), matvec=lambda v: self._precondition(v.reshape(shape)).ravel(), dtype=float)
        b = -rhs.ravel()
        count = [0]

        def tick(_):
            count[0] += 1

        bn = float(np.linalg.norm(b))
        floor = self.tol * (scale if scale is not None else bn)
        if bn <= floor:
            return np.zeros(shape), 0.0, 0
        x, info = cg(op, b, rtol=self.tol, atol=floor, maxiter=self.max_iter, M=pre, callback=tick)
        psi = x.reshape(shape)
        psi = psi - psi.mean()
        res = float(np.linalg.norm(self._operator(psi).ravel() - b)) / max(bn, floor / self.tol)
        if info != 0 or res > 10 * self.tol:
            raise SolverDivergence(
                f"weighted Poisson solve stalled after {count[0]} iterations at relative residual {res:.3g}"
            )
        return psi, res, count[0]

    def split(self, A: np.ndarray) -> HodgeSplit:
        A = np.asarray(A, dtype=float)
        if A.shape != ((self.n,) if self.dim == 1 else (2, self.n, self.n)):
            raise ConfigError(f"field of shape {A.shape} does not match the density grid")
        if self.dim == 1:
            Y = (np.mean(A) / self._inv_mean) / self.rho
            psi = sp.antiderivative(A - Y)
            grad = A - Y
            return HodgeSplit(psi, grad, Y, float(np.max(np.abs(sp.derivative(psi) - grad))))
        flux = self.rho * A
        d0, d1 = sp.derivative(flux[0], axis=0), sp.derivative(flux[1], axis=1)
        psi, res, its = self.solve_potential(d0 + d1, float(np.linalg.norm(np.abs(d0) + np.abs(d1))))
        grad = sp.gradient2(psi)
        return HodgeSplit(psi, grad, A - grad, res, its)

    def horizontal(self, A: np.ndarray) -> np.ndarray:
        return self.split(A).gradient

    def vertical(self, A: np.ndarray) -> np.ndarray:
        return self.split(A).vertical


def hodge_split(rho, A: np.ndarray, tol: float = 1e-10) -> HodgeSplit:
    return WeightedHodgeSolver(rho, tol).split(A)


# --------------------------------------------------------------------------
# normal tensor and the operators O_U, O*_U


def _potential_values(U) -> np.ndarray:
    if isinstance(U, TangentPotential):
        return U.values
    if isinstance(U, HodgeSplit):
        return U.potential
    raise NotHorizontal("the first argument must be a horizontal field given by its potential")


def _hessian_apply(psi: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``(Hess psi) A`` on the grid."""
    if psi.ndim == 1:
        return sp.derivative(psi, order=2) * A
    H = [[sp.derivative(sp.derivative(psi, axis=a), axis=b) for b in range(2)] for a in range(2)]
    return np.stack([H[a][0] * A[0] + H[a][1] * A[1] for a in range(2)])


def normal_tensor(solver: WeightedHodgeSolver, U, A: np.ndarray) -> np.ndarray:
    """``N(U, A) = P_V((grad U)^T A)`` for horizontal ``U = grad psi``.

    ``grad U`` is the Hessian of ``psi``, hence symmetric.
    """
    return solver.vertical(_hessian_apply(_potential_values(U), A))


def oneill_operator(solver: WeightedHodgeSolver, U, A: np.ndarray) -> np.ndarray:
    """``O_U(A) = N(U, A)``."""
    return normal_tensor(solver, U, A)


def oneill_adjoint(solver: WeightedHodgeSolver, U, B: np.ndarray) -> np.ndarray:
    """``O*_U(B) = P_H((grad U) P_V B)``: adjoint of ``O_U`` on horizontal fields."""
    return solver.horizontal(_hessian_apply(_potential_values(U), solver.vertical(B)))


# --------------------------------------------------------------------------
# Levi-Civita connection on the space of measures


def _flow(v):
    if isinstance(v, (TangentPotential, TrigPotential)):
        return v
    raise NotHorizontal("the direction must be a gradient field given by its potential")


def _direction_grid(v, n: int, dim: int) -> np.ndarray:
    if isinstance(v, TangentPotential):
        return sp.gradient(v.values)
    pts = sp.grid(n) if dim == 1 else sp.grid2(n)
    g = v.grad(pts)
    return g if dim == 1 else np.moveaxis(g, -1, 0)


def potential_lie_derivative(Z: MeasureVectorField, mu: Measure, v, n: int, delta: float = 1e-4) -> np.ndarray:
    """``d/dt phi(., mu_t)`` at ``t = 0`` on the grid, ``mu_t`` the image of ``mu`` under the flow of ``grad v``.

    Central differences at ``delta`` and ``delta / 2`` with Richardson extrapolation.
    """
    from .wasserstein import flow_measure

    if Z.measure_independent:
        return np.zeros((n,) * (1 if as_cloud(mu).dim == 1 else 2))
    v = _flow(v)

    def central(d):
        plus = Z.potential_grid(flow_measure(v, mu, d), n)
        minus = Z.potential_grid(flow_measure(v, mu, -d), n)
        return (plus - minus) / (2 * d)

    return (4.0 * central(delta / 2) - central(delta)) / 3.0


def levi_civita_P(mu: GridDensity, v, Z: MeasureVectorField, delta: float = 1e-4) -> TangentPotential:
    """``nabla_v Z = Pi_mu(Hess phi(., mu) grad v) + grad L_v phi(., mu)`` as a potential.

    ``Z`` must be of gradient form ``grad phi(., mu)``; ``v`` is a
    :class:`TangentPotential` or :class:`TrigPotential` whose gradient is the
    direction.
    """
    if Z.form != "gradient":
        raise NotHorizontal("the Levi-Civita connection on measures acts on gradient fields")
    mu.require_smooth()
    n, dim = mu.n, mu.dim
    phi = Z.potential_grid(mu, n)
    solver = WeightedHodgeSolver(mu)
    first = solver.split(_hessian_apply(phi, _direction_grid(v, n, dim))).potential
    second = potential_lie_derivative(Z, mu, v, n, delta)
    return TangentPotential(first + second)


# --------------------------------------------------------------------------
# Lagrangian frame of a torus diffeomorphism


def _grid_layout(v: np.ndarray, n: int) -> np.ndarray:
    """``(n*n, 2)`` node samples -> ``(2, n, n)``."""
    return np.moveaxis(np.asarray(v, dtype=float).reshape(n, n, 2), -1, 0)


def _point_layout(v: np.ndarray) -> np.ndarray:
    """``(2, n, n)`` -> ``(n*n, 2)`` node samples."""
    return np.moveaxis(v, 0, -1).reshape(-1, 2)


class LagrangianFrame:
    """Tangent space at a diffeomorphism ``phi`` of the circle or the 2-torus.

    A tangent vector ``A o phi`` is stored by its values at the grid nodes,
    shape ``(n,)`` on the circle and ``(n*n, 2)`` on the torus (the layout of
    :class:`ParticleCloud` points).  The metric is
    ``int <A(phi(x)), B(phi(x))> rho0(x) dvol``.  Horizontal vectors are
    ``(grad psi) o phi = J^{-T} grad(psi o phi)`` with ``J = D phi``; the
    vertical ones satisfy ``div(rho0 J^{-1} B) = 0``.  On the circle the
    vertical space is spanned by ``phi' / rho0``; on the torus the horizontal
    projection solves ``div(rho0 J^{-1} J^{-T} grad chi) = div(rho0 J^{-1} B)``
    by preconditioned conjugate gradients.

    Parameters
    ----------
    phi : ndarray
        Lifted node images, ``(n,)`` or ``(n*n, 2)``.
    rho0 : ndarray, optional
        Reference density on the grid (uniform by default).
    tol, max_iter : float, int
        Conjugate-gradient settings (torus only).
    """

    def __init__(self, phi: np.ndarray, rho0: np.ndarray | None = None, tol: float = 1e-10, max_iter: int = 1000):
        self.phi = np.asarray(phi, dtype=float)
        self.dim = self.phi.ndim
        self.n = self.phi.shape[0] if self.dim == 1 else int(round(np.sqrt(self.phi.shape[0])))
        shape = (self.n,) * self.dim
        self.rho0 = np.ones(shape) if rho0 is None else np.asarray(rho0, dtype=float).reshape(shape)
        self.tol, self.max_iter = tol, max_iter
        if self.dim == 1:
            self.jacobian = 1.0 + sp.derivative(self.phi - sp.grid(self.n))
            if np.min(self.jacobian) <= 0:
                raise NonMonotone1D(f"map derivative reaches {np.min(self.jacobian):.3g}")
            self.direction = self.jacobian / self.rho0
            self._dd = self.inner(self.direction, self.direction)
            return
        disp = _grid_layout(self.phi - sp.grid2(self.n).reshape(-1, 2), self.n)
        J = np.empty((2, 2) + shape)
        for a in range(2):
            for b in range(2):
                J[a, b] = (a == b) + sp.derivative(disp[a], axis=b)
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if np.min(det) <= 0:
            raise NonInvertibleMap(f"map Jacobian determinant reaches {np.min(det):.3g}")
        self.jacobian = J
        self.inverse = np.array([[J[1, 1], -J[0, 1]], [-J[1, 0], J[0, 0]]]) / det
        G = np.einsum("ij...,kj...->ik...", self.inverse, self.inverse)
        self._coef = self.rho0 * G
        k = sp.wavenumbers(self.n)
        if self.n % 2 == 0:
            k[self.n // 2] = 0.0
        ksq = k[:, None] ** 2 + k[None, :] ** 2
        scale = float(np.mean(self._coef[0, 0] + self._coef[1, 1])) / 2.0
        with np.errstate(divide="ignore"):
            self._inv_ksq = np.where(ksq > 0, 1.0 / (scale * np.where(ksq > 0, ksq, 1.0)), 0.0)

    # --- metric ---------------------------------------------------------------
    def inner(self, A: np.ndarray, B: np.ndarray) -> float:
        if self.dim == 1:
            return float(np.mean(A * B * self.rho0))
        return float(np.mean(np.sum(A * B, axis=1) * self.rho0.ravel()))

    def norm(self, A: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(A, A), 0.0)))

    # --- projections -----------------------------------------------------------
    def vertical_coefficient(self, A: np.ndarray) -> float:
        """Coordinate along ``phi' / rho0`` (circle only)."""
        return self.inner(A, self.direction) / self._dd

    def _torus_potential(self, B: np.ndarray) -> np.ndarray:
        n = self.n
        Bg = _grid_layout(B, n)
        flux = self.rho0 * np.einsum("ij...,j...->i...", self.inverse, Bg)
        d0, d1 = sp.derivative(flux[0], axis=0), sp.derivative(flux[1], axis=1)
        rhs = -(d0 + d1).ravel()
        scale = float(np.linalg.norm(np.abs(d0) + np.abs(d1)))
        bn = float(np.linalg.norm(rhs))
        if bn <= self.tol * scale:
            return np.zeros((n, n))

        def op(v):
            g = sp.gradient2(v.reshape(n, n))
            return -sp.divergence2(np.einsum("ij...,j...->i...", self._coef, g)).ravel()

        def pre(v):
            return np.real(np.fft.ifft2(np.fft.fft2(v.reshape(n, n)) * self._inv_ksq)).ravel()

        size = n * n
        A = LinearOperator((size, size), matvec=op, dtype=float)
        M = LinearOperator((size, size), matvec=pre, dtype=float)
        x, info = cg(A, rhs, rtol=self.tol, atol=self.tol * scale, maxiter=self.max_iter, M=M)
        if info != 0:
            raise SolverDivergence(f"Lagrangian Poisson solve did not converge (info={info})")
        chi = x.reshape(n, n)
        return chi - chi.mean()

    def horizontal(self, A: np.ndarray) -> np.ndarray:
        if self.dim == 1:
            return A - self.vertical(A)
        grad = sp.gradient2(self._torus_potential(A))
        return _point_layout(np.einsum("ji...,j...->i...", self.inverse, grad))

    def vertical(self, A: np.ndarray) -> np.ndarray:
        if self.dim == 1:
            return self.vertical_coefficient(A) * self.direction
        return A - self.horizontal(A)

    # --- derivatives -------------------------------------------------------------
    def spatial_gradient(self, B: np.ndarray) -> np.ndarray:
        """``(grad B) o phi`` from node samples: ``B' / phi'`` or ``DB J^{-1}`` of shape ``(2, 2, n, n)``."""
        if self.dim == 1:
            return sp.derivative(B) / self.jacobian
        Bg = _grid_layout(B, self.n)
        DB = np.stack([np.stack([sp.derivative(Bg[i], axis=j) for j in range(2)]) for i in range(2)])
        return np.einsum("ij...,jk...->ik...", DB, self.inverse)

    def normal(self, B: np.ndarray, A: np.ndarray) -> np.ndarray:
        """``P_V((grad B)^T A)`` in node samples; ``B`` may be any tangent vector."""
        M = self.spatial_gradient(B)
        if self.dim == 1:
            return self.vertical(M * A)
        return self.vertical(_point_layout(np.einsum("ik...,i...->k...", M, _grid_layout(A, self.n))))

    def apply_gradient(self, B: np.ndarray, A: np.ndarray) -> np.ndarray:
        """``(grad B) A`` in node samples."""
        M = self.spatial_gradient(B)
        if self.dim == 1:
            return M * A
        return _point_layout(np.einsum("ik...,k...->i...", M, _grid_layout(A, self.n)))

    def pull_back(self, A: np.ndarray) -> np.ndarray:
        """``J^{-1} A``: left translation of ``A o phi`` back to the identity."""
        if self.dim == 1:
            return A / self.jacobian
        return _point_layout(np.einsum("ij...,j...->i...", self.inverse, _grid_layout(A, self.n)))

    def push_forward(self, X: np.ndarray) -> np.ndarray:
        """``J X``: left translation of a field at the identity to ``phi``."""
        if self.dim == 1:
            return X * self.jacobian
        return _point_layout(np.einsum("ij...,j...->i...", self.jacobian, _grid_layout(X, self.n)))

    def eulerian(self, A: np.ndarray, points) -> np.ndarray:
        """Values of the field ``A`` (given as ``A o phi``) at points of the circle."""
        if self.dim != 1:
            raise ConfigError("reading a field off a 2-D map needs map inversion, which is not provided")
        x = sp.invert_monotone(self.phi, np.asarray(points, dtype=float))
        return sp.trig_interpolate(A, x)
