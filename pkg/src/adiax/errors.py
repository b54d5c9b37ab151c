"""Exception types raised by the reduction pipeline.

Numerical failures derive from :class:`AdiaxError`; the CLI maps them to exit
code 3 and records the class name in the run summary.
"""


class AdiaxError(Exception):
    """Base class for numerical failures detected during a run."""


class GridMismatch(ValueError):
    """Inputs sampled on incompatible grids."""


class DegenerateTerm(AdiaxError):
    """Adjacent transverse levels come closer than the requested gap."""


class OverlapAmbiguity(AdiaxError):
    """Branch matching between neighbouring x-nodes is not unique."""


class StickingBands(AdiaxError):
    """A Bloch band touches one of its neighbours."""


class TruncationError(AdiaxError):
    """Plane-wave truncation too small for the requested bands."""


class SolvabilityError(AdiaxError):
    """Right-hand side of a correction equation is not orthogonal to the term."""


class NonHermitian(AdiaxError):
    """Assembled operator fails the Hermiticity check."""


class ConvergenceError(AdiaxError):
    """Iterative solver or integrator did not reach its tolerance."""


class CausticEncountered(AdiaxError):
    """Trajectory fan Jacobian dropped below the caustic threshold."""


class NonMonotoneFan(AdiaxError):
    """Trajectory endpoints are not ordered like their starting points."""


class NoSolution(AdiaxError):
    """Quantization condition has no root inside the well."""


class MultiWell(AdiaxError):
    """Energy level cuts the potential in more than two turning points."""


class NonUnitaryMonodromy(AdiaxError):
    """Transport monodromy eigenvalues left the unit circle."""


class RegimeMismatch(ValueError):
    """Effective model data incompatible with the selected mu-h regime."""
