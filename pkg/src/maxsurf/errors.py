"""Exception hierarchy shared by all maxsurf modules."""


class MaxsurfError(Exception):
    """Base class for all maxsurf-specific errors."""


class NonUnitTangent(MaxsurfError):
    """Tangent vector is neither unit spacelike, null, nor unit timelike."""


class OutOfDisc(MaxsurfError):
    """Fermi disc coordinate has Euclidean norm >= 1."""


class NotUnit(MaxsurfError):
    """Sphere coordinate of a Fermi chart is not a unit vector."""


class WrongSheet(MaxsurfError):
    """Point lies on the sheet opposite to the chart's time orientation."""


class ZeroOfQOnGrid(MaxsurfError):
    """A grid node is too close to a zero of the quartic differential."""


class NoConvergence(MaxsurfError):
    """Newton iteration exhausted max_iter without meeting the tolerance."""

    def __init__(self, iterations, residual):
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class SingularJacobian(MaxsurfError):
    """Damped Newton step stalled below the step-size floor."""


class GaugeInconsistent(MaxsurfError):
    """Flatness defect fails to converge at second order under refinement."""


class DriftExceeded(MaxsurfError):
    """Pre-correction Gram error of an integrated frame exceeded its bound."""


class FrameMismatch(MaxsurfError):
    """A frame matrix violates the adapted-frame Gram invariants."""


class BadThreshold(MaxsurfError):
    """Curvature threshold k outside the admissible interval (-1/3, 0)."""


class InsufficientData(MaxsurfError):
    """Too few usable nodes in the requested fit window."""


class ConfigError(MaxsurfError):
    """Run configuration failed schema or consistency validation."""

    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field
