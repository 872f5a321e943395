"""Brownian drivers and SDE integrators on embedded manifolds.

Vector fields are callables ``A(x) -> v`` acting on arrays of points of shape
``(..., ambient_dim)`` and returning tangent vectors of the same shape.  A field
list ``[A0, A1, ..., AN]`` holds the drift first and then one field per noise
channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadGrid
from .geometry import (
    EmbeddedManifold,
    chord_transport,
    closest_point_project,
    second_fundamental_form,
    tangent_project,
)

SCHEMES = ("ito_projected", "stratonovich_heun")


@dataclass(frozen=True)
class BrownianDriver:
    """Pre-drawn Brownian increments on a uniform time grid.

    ``increments`` has shape ``(channels, steps)`` for noise shared by every
    path, or ``(channels, steps, paths)`` for independent paths.
    """

    channels: int
    horizon: float
    step: float
    seed: int
    increments: np.ndarray
    level: int = 0

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.steps + 1)

    @property
    def path(self) -> np.ndarray:
        """Brownian path values including ``W_0 = 0``."""
        shape = list(self.increments.shape)
        shape[1] = 1
        return np.concatenate([np.zeros(shape), np.cumsum(self.increments, axis=1)], axis=1)

    def refine(self) -> "BrownianDriver":
        """Halve the step, keeping every coarse increment as the sum of two halves.

        Each increment ``dW`` is split into ``dW/2 + sqrt(h/4) xi`` and its
        complement, which is the exact Brownian bridge midpoint law.  The new
        normals come from a stream keyed by ``(seed, level)``.
        """
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.level + 1]))
        xi = rng.standard_normal(self.increments.shape)
        first = 0.5 * self.increments + np.sqrt(self.step / 4.0) * xi
        second = self.increments - first
        inc = _interleave(first, second)
        return BrownianDriver(self.channels, self.horizon, self.step / 2.0, self.seed, inc, self.level + 1)

    def coarsen(self) -> "BrownianDriver":
        """Merge consecutive pairs of increments (inverse of :meth:`refine`)."""
        if self.steps % 2:
            raise BadGrid("cannot coarsen an odd number of steps")
        inc = self.increments[:, 0::2] + self.increments[:, 1::2]
        return BrownianDriver(self.channels, self.horizon, 2.0 * self.step, self.seed, inc, self.level - 1)


def _interleave(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    out = np.empty((first.shape[0], 2 * first.shape[1]) + first.shape[2:])
    out[:, 0::2] = first
    out[:, 1::2] = second
    return out


def _step_count(T: float, h: float) -> int:
    if h <= 0 or T < h:
        raise BadGrid(f"need h > 0 and T >= h, got T={T}, h={h}")
    ratio = T / h
    k = int(round(ratio))
    if abs(ratio - k) > 1e-12 * max(1.0, ratio):
        raise BadGrid(f"T/h = {ratio!r} is not an integer")
    return k


def sample_brownian(N: int, T: float, h: float, seed: int, paths: int | None = None) -> BrownianDriver:
    """Draw ``N`` channels of Brownian increments with variance ``h``.

    Parameters
    ----------
    N : int
        Number of channels (0 is allowed for deterministic runs).
    T, h : float
        Horizon and step; ``T / h`` must be an integer.
    seed : int
        Seed of a :class:`numpy.random.Generator`.
    paths : int, optional
        If given, draw independent increments for that many paths.
    """
    K = _step_count(T, h)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    shape = (N, K) if paths is None else (N, K, paths)
    inc = np.sqrt(h) * rng.standard_normal(shape)
    return BrownianDriver(N, float(T), float(h), int(seed), inc)


@dataclass
class PathSample:
    """Solution path on a manifold; ``points[k]`` is the state at ``times[k]``."""

    times: np.ndarray
    points: np.ndarray
    scheme: str
    manifold: EmbeddedManifold | None = None

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


@dataclass
class FrameTransport:
    """Vectors transported along ``path``; ``vectors[k]`` lives at ``path.points[k]``."""

    path: PathSample
    vectors: np.ndarray
    extra: dict = field(default_factory=dict)


def _noise_term(fields, x, dW):
    out = np.zeros_like(x)
    for i, A in enumerate(fields):
        w = dW[i]
        out += A(x) * (w[..., None] if np.ndim(w) else w)
    return out


def integrate_manifold_sde(
    M: EmbeddedManifold,
    fields,
    x0,
    driver: BrownianDriver,
    scheme: str = "stratonovich_heun",
    stride: int = 1,
) -> PathSample:
    """Integrate ``dX = A0 dt + sum_i A_i dW^i`` on ``M``.

    Parameters
    ----------
    M : EmbeddedManifold
    fields : sequence of callables
        ``[A0, A1, ..., AN]`` with ``N == driver.channels``.  Read as Itô
        coefficients for ``ito_projected`` and as Stratonovich coefficients
        for ``stratonovich_heun``.
    x0 : array_like, shape (d,) or (P, d)
        Initial point(s) on ``M``.
    driver : BrownianDriver
    scheme : {"ito_projected", "stratonovich_heun"}
        ``ito_projected`` is an ambient Euler-Maruyama step whose drift carries
        the second fundamental form term ``1/2 sum II(A_i, A_i)`` (the normal
        acceleration of an Itô path on ``M``), followed by closest point
        projection.  ``stratonovich_heun`` is a projected predictor-corrector.
    stride : int
        Keep every ``stride``-th state.

    Raises
    ------
    OutsideTubularNeighborhood
        When a step lands outside the tubular neighbourhood (step too large).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if len(fields) != driver.channels + 1:
        raise ValueError(f"expected {driver.channels + 1} fields, got {len(fields)}")
    drift, noise = fields[0], list(fields[1:])
    x = np.array(x0, dtype=float)
    h = driver.step
    K = driver.steps
    keep = [x.copy()]
    for k in range(K):
        dW = driver.increments[:, k]
        if scheme == "ito_projected":
            incr = drift(x) * h
            for i, A in enumerate(noise):
                a = A(x)
                w = dW[i][..., None] if np.ndim(dW[i]) else dW[i]
                incr += a * w + 0.5 * h * second_fundamental_form(M, x, a, a)
            x = closest_point_project(M, x + incr)
        else:
            a0 = drift(x)
            s0 = _noise_term(noise, x, dW)
            pred = closest_point_project(M, x + a0 * h + s0)
            a1 = drift(pred)
            s1 = _noise_term(noise, pred, dW)
            x = closest_point_project(M, x + 0.5 * (a0 + a1) * h + 0.5 * (s0 + s1))
        if (k + 1) % stride == 0:
            keep.append(x.copy())
    times = driver.times[::stride]
    return PathSample(times, np.array(keep), scheme, M)


def covariant_derivative(M: EmbeddedManifold, A, B, x, delta: float = 1e-5) -> np.ndarray:
    """``nabla_A B`` at ``x`` by central differences along ``pi(x +- delta A)``."""
    x = np.asarray(x, dtype=float)
    a = A(x)
    plus = B(closest_point_project(M, x + delta * a))
    minus = B(closest_point_project(M, x - delta * a))
    return tangent_project(M, x, (plus - minus) / (2.0 * delta))


def ito_stratonovich_convert(M: EmbeddedManifold, fields, direction: str = "to_ito", delta: float = 1e-5):
    """Return the field list with the drift shifted by ``+- 1/2 sum nabla_{A_i} A_i``.

    ``direction="to_ito"`` maps Stratonovich coefficients to Itô ones (plus
    sign); ``"to_stratonovich"`` applies the inverse shift.  Noise fields are
    returned unchanged.
    """
    if direction not in ("to_ito", "to_stratonovich"):
        raise ValueError(f"unknown direction {direction!r}")
    sign = 0.5 if direction == "to_ito" else -0.5
    drift, noise = fields[0], list(fields[1:])

    def converted(x):
        out = np.array(drift(x), dtype=float)
        for A in noise:
            out = out + sign * covariant_derivative(M, A, A, x, delta)
        return out

    return [converted] + noise


def parallel_transport_along(M: EmbeddedManifold, path: PathSample, v0) -> FrameTransport:
    """Transport ``v0`` along a sampled path by exact chord rotations.

    On spheres every step applies the rotation carrying one point to the next;
    on circle products the same formula keeps angular components fixed, which
    is the identity in the flat frame.

    Raises
    ------
    DegenerateStep
        If two consecutive points are antipodal on a sphere factor.
    """
    pts = path.points
    v = tangent_project(M, pts[0], np.asarray(v0, dtype=float))
    out = np.empty(pts.shape[:1] + v.shape)
    out[0] = v
    for k in range(1, len(pts)):
        v = chord_transport(M, pts[k - 1], pts[k], v)
        out[k] = v
    return FrameTransport(path, out)


def rotation_field(generator) -> callable:
    """Linear field ``x -> S x`` for an antisymmetric matrix ``S``."""
    S = np.asarray(generator, dtype=float)
    return lambda x: np.asarray(x) @ S.T


def zero_field(x):
    return np.zeros_like(np.asarray(x, dtype=float))
