"""Exception hierarchy for sphere_gap.

Library code raises these; only the command-line front end turns them into
exit codes (ConfigError -> 2, ComputationError -> 3).
"""


class SphereGapError(Exception):
    """Base class for every error raised by this package."""


# ============================================================================
# CONFIGURATION / USAGE ERRORS (exit code 2)
# ============================================================================


class ConfigError(SphereGapError, ValueError):
    """Invalid configuration value or unusable combination of options."""


class DimensionMismatch(ConfigError):
    """A point or field does not live in the configured dimension."""


class InvalidSweep(ConfigError):
    """An epsilon sweep is malformed (unordered, duplicated or too short)."""


class NotHarmonic(ConfigError):
    """A user-supplied field failed the finite-difference harmonicity check."""


# ============================================================================
# COMPUTATION ERRORS (exit code 3)
# ============================================================================


class ComputationError(SphereGapError):
    """A valid request could not be computed to the certified accuracy."""


class CenterReflection(ComputationError):
    """Reflection of a sphere's own center (the image lies at infinity)."""


class PointNotExterior(ComputationError):
    """The point must lie strictly outside the sphere."""


class NoConvergence(ComputationError):
    """An iteration failed to contract within its iteration cap."""


class TruncationOverflow(ComputationError):
    """An image-charge ladder needs more charges than the hard cap allows."""


class PrecisionError(ComputationError):
    """The gap is too small for binary64 results to be trusted."""


class PointInsideConductor(ComputationError):
    """The auxiliary potential is only defined outside both conductors."""


class EvaluationAtPole(ComputationError):
    """The closed-form planar potential was evaluated at a fixed point."""


class StepTooLarge(ComputationError):
    """A finite-difference stencil reaches into a conductor."""


class ModelMismatch(ComputationError):
    """A rate model does not describe the sweep data within the threshold."""


class ConstructionInvariantError(ComputationError):
    """A geometric invariant of the image construction was violated."""
