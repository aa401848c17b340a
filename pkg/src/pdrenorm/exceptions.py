"""Exception types shared across the package."""


class PdRenormError(Exception):
    """Base class for all package errors."""


class PointOutsideDomain(PdRenormError):
    """Evaluation point violates the domain box beyond the allowed slack."""


class RangeEscapesDomain(PdRenormError):
    """Sampled range of inner functions leaves the outer domain."""


class TruncationOverflow(PdRenormError):
    """Projection residual exceeds 10x the requested tolerance."""


class NotMonotone(PdRenormError):
    """Derivative changes sign on the requested inversion branch."""


class NotRenormalizable(PdRenormError):
    """Map fails the period-doubling renormalizability test."""


class NoConvergence(PdRenormError):
    """Iterative solver exhausted its iteration budget."""


class NewtonDiverged(NoConvergence):
    """Newton iteration left the domain or failed to contract."""


class ClassificationAmbiguous(PdRenormError):
    """Fixed-point eigenvalue signs are too close to zero to classify."""


class HInversionFailed(PdRenormError):
    """x-branch inversion required by the horizontal change failed."""


class DepthExceeded(PdRenormError):
    """Requested level is deeper than the available tower."""


class SingularDerivative(PdRenormError):
    """Scope-map derivative too close to singular to decompose."""


class ConstraintViolated(PdRenormError):
    """Construction constraint (e.g. coefficient row sums) violated."""


class DegenerateJacobian(PdRenormError):
    """Jacobian vanishes along the sampled orbit; average is undefined."""


class SingularZ(PdRenormError):
    """det Z vanishes on the sampled pieces; the z-average is undefined."""


class DomainError(PdRenormError):
    """Scalar argument outside its mathematical domain."""


class ConfigError(PdRenormError):
    """Experiment configuration is invalid."""


class IoError(PdRenormError):
    """Output file could not be written."""


class StageFailed(PdRenormError):
    """A pipeline stage failed; partial outputs are preserved."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
