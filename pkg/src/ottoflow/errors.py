"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line runner:
2 for configuration problems, 3 for numerical divergence and 4 for
failed invariants.
"""


class OttoError(Exception):
    """Base class of all errors raised by the package."""

    exit_code = 3


class ConfigError(OttoError):
    """Malformed or inconsistent scenario configuration."""

    exit_code = 2


class BadGrid(ConfigError):
    """The horizon is not an integer multiple of the time step."""


class MissingColumn(ConfigError):
    """A CSV input lacks a required column."""


class NumericalError(OttoError):
    """A computation left its domain of validity."""

    exit_code = 3


class OutsideTubularNeighborhood(NumericalError):
    """An ambient point is too far from the manifold to be projected."""


class DegenerateStep(NumericalError):
    """Two consecutive path points are antipodal on a sphere factor."""


class SolverDivergence(NumericalError):
    """The weighted Poisson solver did not reach its tolerance."""


class NoConvergence(NumericalError):
    """An iteration stopped before reaching its tolerance.

    Parameters
    ----------
    message : str
        Human readable description.
    history : list of float, optional
        The recorded gap or residual sequence.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class Blowup(NumericalError):
    """A density exceeded the admissible sup-norm."""


class NonMonotone1D(NumericalError):
    """A sampled circle map is not strictly increasing."""


class NonInvertibleMap(NumericalError):
    """A sampled torus map has a non-positive Jacobian somewhere."""


class NonSmoothDensity(NumericalError):
    """A smooth positive density was required but not supplied."""


class SingularLift(NumericalError):
    """The differential of a submersion lost rank (never raised for the Hopf map)."""


class NotRightInvariant(NumericalError):
    """Vector fields supplied as right invariant vary along the fibers."""


class NotHorizontal(NumericalError):
    """A tangent vector required to be horizontal is not."""


class InvariantFailure(OttoError):
    """A checked invariant exceeded its tolerance."""

    exit_code = 4
