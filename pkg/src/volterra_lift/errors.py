"""Exception types raised by the library.

Every failure mode named in the module contracts maps to one class here so
callers (and the CLI) can dispatch on type rather than on message text.
"""


class VolterraError(Exception):
    """Base class for all library errors."""


# kernels
class SingularAtOrigin(VolterraError, ValueError):
    """A singular kernel was evaluated at t = 0."""


class NonPositiveTime(VolterraError, ValueError):
    """A kernel was evaluated at a negative time."""


class GridTooCoarse(VolterraError, ValueError):
    """Time step too large for a stable implicit resolvent step."""


class NegativeKernel(VolterraError, ValueError):
    """A scalar resolvent was requested for a kernel with negative values."""


class HypothesisViolated(VolterraError, ValueError):
    """The Volterra-Gronwall precondition fails at some node."""


# wspace
class WeightNotAdmissible(VolterraError, ValueError):
    """Weight parameters outside the admissible window."""


class GridMismatch(VolterraError, ValueError):
    """Curves or ensembles defined on incompatible grids."""


class OutOfDomain(VolterraError, ValueError):
    """Point evaluation outside the truncated spatial domain."""


# sve / lift
class UnstableConfig(VolterraError, RuntimeError):
    """A non-finite state appeared during simulation."""


class MissingLift(VolterraError, ValueError):
    """An operation needs the coupled lift ensemble but none was given."""


class IncrementMissing(VolterraError, ValueError):
    """Stored Brownian increments are unavailable for a restart."""


class NonlinearDrift(VolterraError, ValueError):
    """The forward-curve identity needs a linear drift b(x) = a x."""


# ou_lift
class UnsupportedKernel(VolterraError, ValueError):
    """Kernel is not completely monotone (no Laplace representation)."""


class InitialCurveNotRepresentable(VolterraError, ValueError):
    """Initial curve cannot be written as a mixture of exponentials."""


class CouplingMismatch(VolterraError, ValueError):
    """Two ensembles that must share increments do not."""


# tangent / kolmogorov
class CoefficientsNotDifferentiable(VolterraError, ValueError):
    """Coefficients lack the derivatives a tangent equation needs."""


class HurstBelowThreshold(VolterraError, ValueError):
    """Second-order objects refused for H <= 1/4 with multiplicative noise."""


class ModelNotCompliant(VolterraError, ValueError):
    """Coefficients are not C^2_b with Lipschitz second derivative."""


class DegenerateStencil(VolterraError, ValueError):
    """A finite-difference stencil leaves the time interval [0, T]."""


class NestedBudgetExceeded(VolterraError, ValueError):
    """Requested nested Monte Carlo budget exceeds the configured cap."""


class TestFunctionNotCompliant(VolterraError, ValueError):
    """Test functional has no closed-form singular derivatives."""

    __test__ = False  # keep pytest from collecting it


# cli
class ConfigParse(VolterraError, ValueError):
    """Malformed or incomplete experiment configuration."""


class TaskFailure(VolterraError, RuntimeError):
    """A CLI task failed after the configuration was accepted."""
