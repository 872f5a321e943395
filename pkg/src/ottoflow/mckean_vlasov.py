"""Conditional McKean-Vlasov particle systems with common noise.

A particle started at ``x`` moves by

    dX = Z0(X, M_t) dt + sum_i Z_i(X, M_t) dW^i,    M_t = (X_t)# mu,

where the Brownian motions ``W^i`` are shared by every particle.  The image
``M_t`` then solves the corresponding SDE on the space of measures.  Work is
done in angle coordinates on the circle or the flat 2-torus, where the
manifold Itô and Euclidean Itô calculi coincide.

Two solvers are provided: Picard iteration on a frozen measure path (solved
on successive time windows) and a single sweep in which the measure is read
off the live ensemble.  ``verify_wasserstein_sde`` checks the Itô formula of
the resulting measure path on linear test functionals, and
``density_spde_evolve`` integrates the density equation directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _spectral as sp
from .errors import Blowup, ConfigError, NoConvergence
from .fields import MeasureVectorField, TrigPotential, ZeroField
from .integrators import BrownianDriver, _step_count, sample_brownian
from .measures import GridDensity, Measure, ParticleCloud
from .wasserstein import MeasurePath, hessian_potential, otto_inner

log = logging.getLogger(__name__)

SCHEMES = ("euler", "heun")
MANIFOLD_DIMS = {"circle": 1, "torus1": 1, "torus2": 2}


@dataclass
class MKVProblem:
    """Particle discretisation of a conditional McKean-Vlasov SDE.

    Parameters
    ----------
    manifold : str
        ``"circle"`` or ``"torus2"``.
    fields : list of MeasureVectorField
        Drift ``Z0`` followed by one field per noise channel.
    initial : GridDensity or ParticleCloud
        Initial law.  A grid density becomes a Lagrangian cloud on a grid with
        ``particles`` nodes (per axis on the torus: ``particles`` must then be a
        perfect square).
    particles : int
        Ensemble size ``P``.
    step, horizon : float
        Time step and final time.
    seed : int
        Seed of the common Brownian driver.
    scheme : str
        ``"euler"`` (Itô) or ``"heun"`` (Stratonovich).
    """

    manifold: str
    fields: list
    initial: Measure
    particles: int
    step: float
    horizon: float
    seed: int = 0
    scheme: str = "euler"
    driver: BrownianDriver | None = None

    def __post_init__(self):
        if self.manifold not in MANIFOLD_DIMS:
            raise ConfigError(f"McKean-Vlasov dynamics run on flat tori only, not {self.manifold!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.fields:
            raise ConfigError("at least the drift field is required")
        for Z in self.fields:
            if not isinstance(Z, MeasureVectorField) or not hasattr(Z, "smooth"):
                raise ConfigError("fields must be MeasureVectorField instances carrying a smoothness tag")
        if isinstance(self.initial, ParticleCloud):
            self.particles = self.initial.size
        if self.particles < 2:
            raise ConfigError("an ensemble needs at least two particles")
        K = _step_count(self.horizon, self.step)
        if self.driver is None:
            self.driver = sample_brownian(self.noise_channels, self.horizon, self.step, self.seed)
        elif self.driver.increments.shape[:2] != (self.noise_channels, K) or self.driver.increments.ndim != 2:
            raise ConfigError("the driver must be common noise with one channel per noise field and T/h steps")

    @property
    def dim(self) -> int:
        return MANIFOLD_DIMS[self.manifold]

    @property
    def noise_channels(self) -> int:
        return len(self.fields) - 1

    @property
    def steps(self) -> int:
        return self.driver.steps

    def initial_cloud(self) -> ParticleCloud:
        mu = self.initial
        if isinstance(mu, ParticleCloud):
            return mu
        if mu.dim != self.dim:
            raise ConfigError("initial density does not live on the chosen manifold")
        if self.dim == 1:
            if self.particles == mu.n:
                return mu.to_cloud()
            return GridDensity(np.maximum(sp.resample(mu.values, self.particles), 0.0)).to_cloud()
        side = int(round(np.sqrt(self.particles)))
        if side * side != self.particles:
            raise ConfigError("on the torus the ensemble size must be a perfect square")
        if side != mu.n:
            raise ConfigError("2-D grid densities cannot be resampled; use particles = n**2")
        return mu.to_cloud()


@dataclass
class PicardState:
    """Iterate ``n`` of the Picard scheme on one window."""

    iterate: int
    flow: np.ndarray
    gap: float
    gaps: list = field(default_factory=list)


@dataclass
class MKVSolution:
    """Particle flow (``flow[k]`` at ``times[k]``) and its diagnostics."""

    path: MeasurePath
    diagnostics: dict

    @property
    def times(self) -> np.ndarray:
        return self.path.times

    @property
    def flow(self) -> np.ndarray:
        return self.path.points


def torus_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a - b`` reduced to ``[-pi, pi)`` componentwise."""
    return np.mod(a - b + np.pi, sp.TWO_PI) - np.pi


def coupling_distance(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    """Cost of the labelled coupling of two ensembles: an upper bound for W2."""
    d = torus_difference(a, b) ** 2
    if d.ndim == 2:
        d = d.sum(axis=1)
    return float(np.sqrt(np.sum(weights * d)))


def _evaluate(Z: MeasureVectorField, x: np.ndarray, mu: ParticleCloud, own: bool) -> np.ndarray:
    # the ensemble's own points use the exact Lagrangian evaluation when available
    return Z.at_particles(mu) if own else Z(x, mu)


def _increment(fields, x, mu, own, dW, h):
    out = h * _evaluate(fields[0], x, mu, own)
    for i, Z in enumerate(fields[1:]):
        if isinstance(Z, ZeroField) or dW[i] == 0.0:
            continue
        out = out + dW[i] * _evaluate(Z, x, mu, own)
    return out


def _check_finite(x: np.ndarray, t: float):
    if not np.all(np.isfinite(x)):
        raise Blowup(f"particle positions became non-finite at t={t:.4g}")


def _sweep(problem: MKVProblem, x0: np.ndarray, start: int, stop: int, measure_at, cloud: ParticleCloud) -> np.ndarray:
    """Integrate particles from step ``start`` to ``stop``.

    ``measure_at(k, x)`` returns ``(measure, own)`` at step ``k``, where ``own``
    tells whether the measure's points are ``x`` itself.
    """
    h = problem.step
    inc = problem.driver.increments
    x = x0.copy()
    out = np.empty((stop - start + 1,) + x.shape)
    out[0] = x
    for j, k in enumerate(range(start, stop)):
        dW = inc[:, k]
        mu, own = measure_at(k, x)
        d1 = _increment(problem.fields, x, mu, own, dW, h)
        if problem.scheme == "euler":
            x = x + d1
        else:
            xp = x + d1
            mu_p, own_p = measure_at(k + 1, xp)
            x = x + 0.5 * (d1 + _increment(problem.fields, xp, mu_p, own_p, dW, h))
        _check_finite(x, (k + 1) * h)
        out[j + 1] = x
    return out


def monotonicity_violations(flow: np.ndarray) -> int:
    """Number of recorded times at which the 1-D particle map stops being monotone.

    Particles are ordered by their starting point; a diffeomorphic flow keeps
    the lifted positions increasing with total spread below one turn.
    """
    if flow.ndim != 2:
        return 0
    order = np.argsort(flow[0], kind="stable")
    lifted = flow[:, order]
    bad = np.any(np.diff(lifted, axis=1) <= 0, axis=1) | (lifted[:, -1] - lifted[:, 0] >= sp.TWO_PI)
    return int(np.sum(bad))


def _result(problem, cloud, flow, diagnostics) -> MKVSolution:
    times = problem.step * np.arange(flow.shape[0])
    diagnostics["monotonicity_violations"] = monotonicity_violations(flow)
    if diagnostics["monotonicity_violations"]:
        log.warning("particle map lost monotonicity at %d recorded times", diagnostics["monotonicity_violations"])
    return MKVSolution(MeasurePath(times, flow, cloud.weights, cloud.reference), diagnostics)


def self_consistent_step_solve(problem: MKVProblem) -> MKVSolution:
    """Single sweep with the measure taken from the live ensemble at every step."""
    cloud = problem.initial_cloud()
    flow = _sweep(problem, cloud.points, 0, problem.steps, lambda k, x: (cloud.moved(x), True), cloud)
    return _result(problem, cloud, flow, {"solver": "self_consistent", "scheme": problem.scheme})


def _picard_iterates(problem, cloud, x_start, start, stop, tol, max_iter, on_gap=None):
    """Picard iterates on steps ``start..stop`` from the ensemble ``x_start``."""
    frozen = np.broadcast_to(x_start, (stop - start + 1,) + x_start.shape)
    gaps: list[float] = []
    for n in range(1, max_iter + 1):
        path = frozen
        new = _sweep(problem, x_start, start, stop, lambda k, x, path=path: (cloud.moved(path[k - start]), False), cloud)
        gap = max(coupling_distance(new[j], frozen[j], cloud.weights) for j in range(new.shape[0]))
        gaps.append(gap)
        frozen = new
        state = PicardState(n, new, gap, gaps)
        if on_gap is not None and on_gap(state):
            return state
        if gap <= tol:
            return state
    raise NoConvergence(f"Picard iteration did not reach gap {tol:g} in {max_iter} iterations", gaps)


def picard_solve(problem: MKVProblem, tol: float = 1e-10, max_iter: int = 50, window: float | None = None,
                 ratio_target: float = 0.9, min_window_steps: int = 1) -> MKVSolution:
    """Windowed Picard iteration with common noise.

    On each window the particles are driven by the previous iterate's measure
    path until two successive paths are within ``tol`` in the labelled
    coupling distance.  The window starts at ``window`` (the whole horizon by
    default) and is halved while the second gap is not below ``ratio_target``
    times the first; the converged endpoint seeds the next window.

    Returns
    -------
    MKVSolution
        ``diagnostics`` holds ``windows`` (start, stop step), ``gaps`` per
        window, ``iterations`` and ``window_steps``.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    cloud = problem.initial_cloud()
    K = problem.steps
    wsteps = K if window is None else max(1, min(K, int(round(window / problem.step))))
    flow = np.empty((K + 1,) + cloud.points.shape)
    flow[0] = cloud.points
    windows, gaps_all, iters = [], [], []
    start = 0

    while start < K:
        stop = min(K, start + wsteps)

        def too_slow(state, wsteps=wsteps):
            g = state.gaps
            return (state.iterate == 2 and g[0] > tol and g[1] > tol
                    and g[1] >= ratio_target * g[0] and wsteps > min_window_steps)

        state = _picard_iterates(problem, cloud, flow[start], start, stop, tol, max_iter, too_slow)
        if too_slow(state):
            wsteps = max(min_window_steps, wsteps // 2)
            log.info("halving Picard window to %d steps (gap ratio %.3g)", wsteps, state.gaps[1] / state.gaps[0])
            continue
        flow[start:stop + 1] = state.flow
        windows.append((start, stop))
        gaps_all.append(list(state.gaps))
        iters.append(state.iterate)
        start = stop

    diagnostics = {
        "solver": "picard",
        "scheme": problem.scheme,
        "window_steps": wsteps,
        "windows": windows,
        "gaps": gaps_all,
        "iterations": iters,
    }
    return _result(problem, cloud, flow, diagnostics)


# --------------------------------------------------------------------------
# Itô formula check on linear functionals


@dataclass
class ResidualReport:
    """Itô-formula residuals of ``F_f(mu) = int f dmu`` along a measure path."""

    times: np.ndarray
    residuals: np.ndarray  # (k, steps + 1)

    @property
    def sup(self) -> np.ndarray:
        return np.max(np.abs(self.residuals), axis=1)

    @property
    def worst(self) -> float:
        return float(np.max(self.sup)) if self.residuals.size else 0.0


def verify_wasserstein_sde(path: MeasurePath, fields, tests, driver: BrownianDriver) -> ResidualReport:
    """Residual of the Itô formula for ``F_f`` along ``path``.

    For each test potential ``f`` the report holds, at every recorded time,

        F_f(mu_t) - F_f(mu_0) - sum_i int L_{Z_i} F_f dW^i
                  - int (L_{Z0} F_f + 1/2 sum_i Hess F_f(Z_i, Z_i)) ds,

    with the stochastic integrals as left-point sums and the time integral by
    the trapezoid rule.  ``path`` must be recorded at every driver step.
    """
    tests = list(tests)
    for f in tests:
        if not isinstance(f, TrigPotential):
            raise ConfigError("test functions must be trigonometric potentials")
    K = len(path) - 1
    if driver.steps != K or driver.increments.ndim != 2:
        raise ConfigError("the path must be recorded at every step of the common driver")
    h = driver.step
    res = np.zeros((len(tests), K + 1))
    for a, f in enumerate(tests):
        value = np.empty(K + 1)
        drift = np.empty(K + 1)
        noise = np.empty((max(driver.channels, 0), K + 1))
        for k in range(K + 1):
            mu = path.cloud(k)
            value[k] = mu.integrate(f.value(mu.points))
            drift[k] = otto_inner(mu, f, fields[0])
            for i, Z in enumerate(fields[1:]):
                noise[i, k] = otto_inner(mu, f, Z)
                drift[k] += 0.5 * hessian_potential(f, mu, Z, Z)
        ito = np.concatenate([[0.0], np.cumsum(np.sum(noise[:, :-1] * driver.increments, axis=0))])
        quad = np.concatenate([[0.0], np.cumsum(0.5 * h * (drift[1:] + drift[:-1]))])
        res[a] = value - value[0] - ito - quad
    return ResidualReport(path.times, res)


# --------------------------------------------------------------------------
# density SPDE on the circle


@dataclass
class DensityPath:
    """Grid densities ``values[k]`` at ``times[k]`` and the positivity clamps applied."""

    times: np.ndarray
    values: np.ndarray
    clamp_events: list

    def density(self, k: int) -> GridDensity:
        return GridDensity(self.values[k])


def _dealias(f: np.ndarray) -> np.ndarray:
    return sp.low_pass(f, 2.0 / 3.0)


def density_spde_evolve(rho0: GridDensity, fields, driver: BrownianDriver, record_every: int = 1,
                        blowup: float = 1e6, floor: float = 1e-12) -> DensityPath:
    """Semi-implicit spectral integration of the density equation on the circle.

    Solves, in Itô form,

        d rho = -sum_i (rho Z_i)' dW^i - (rho Z0)' dt + 1/2 sum_i ((rho Z_i)' Z_i)' dt,

    the density of the Stratonovich measure SDE driven by the same fields.  The
    explicit increment is smoothed by ``(1 - h c / 2 d^2/dx^2)^{-1}``, which
    amounts to treating ``c rho'' / 2`` implicitly and the rest explicitly;
    ``c`` is the largest ``Z_i^2`` summed over channels.  Products are dealiased with the 2/3 rule.  Negative values are
    clamped to ``floor`` with the mass restored; each clamp is logged.

    Raises
    ------
    Blowup
        If the sup norm exceeds ``blowup``.
    """
    if rho0.dim != 1:
        raise ConfigError("the density equation is integrated on the circle only")
    rho0.require_smooth()
    n = rho0.n
    h = driver.step
    if driver.increments.ndim != 2 or driver.channels != len(fields) - 1:
        raise ConfigError("the driver must be common noise with one channel per noise field")
    k2 = sp.wavenumbers(n) ** 2
    rho = rho0.values.copy()
    times, values, clamps = [0.0], [rho.copy()], []
    for step in range(driver.steps):
        mu = GridDensity(np.maximum(rho, floor))
        dW = driver.increments[:, step]
        rhs = -h * sp.derivative(_dealias(rho * fields[0].grid_values(mu, n, 1)))
        c = 0.0
        for i, Z in enumerate(fields[1:]):
            z = Z.grid_values(mu, n, 1)
            flux = sp.derivative(_dealias(rho * z))
            rhs += -dW[i] * flux + 0.5 * h * sp.derivative(_dealias(flux * z))
            c += float(np.max(z * z))
        update = np.real(np.fft.ifft(np.fft.fft(rhs) / (1.0 + 0.5 * h * c * k2)))
        rho = rho + update
        if not np.all(np.isfinite(rho)) or np.max(np.abs(rho)) > blowup:
            raise Blowup(f"density exceeded {blowup:g} at t={(step + 1) * h:.4g}")
        if np.min(rho) < floor:
            count = int(np.sum(rho < floor))
            clamps.append(((step + 1) * h, count))
            log.info("clamped %d density values at t=%.4g", count, (step + 1) * h)
            rho = np.maximum(rho, floor)
            rho = rho / rho.mean()
        if (step + 1) % record_every == 0 or step + 1 == driver.steps:
            times.append((step + 1) * h)
            values.append(rho.copy())
    return DensityPath(np.array(times), np.array(values), clamps)


__all__ = [
    "MKVProblem",
    "MKVSolution",
    "PicardState",
    "ResidualReport",
    "DensityPath",
    "picard_solve",
    "self_consistent_step_solve",
    "verify_wasserstein_sde",
    "density_spde_evolve",
    "coupling_distance",
    "monotonicity_violations",
]
