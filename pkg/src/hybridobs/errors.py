"""Exception hierarchy shared by all hybridobs modules."""


class HybridObsError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(HybridObsError, ValueError):
    """Matrix or vector dimensions are inconsistent with the operation."""


class InvalidChannelError(HybridObsError, ValueError):
    """An output channel violates the plant requirements (e.g. C_i = 0)."""


class InvalidGraphError(HybridObsError, ValueError):
    """A neighbor graph violates its structural requirements."""


class TimingError(HybridObsError, ValueError):
    """Event/iteration timing parameters are infeasible."""


class ConstancyError(TimingError):
    """The graph schedule switches inside a reception-alignment window."""


class CertificateError(HybridObsError, ValueError):
    """A convergence certificate cannot be produced or is violated."""


class MeasurementError(HybridObsError, ValueError):
    """A trace measurement (e.g. decay-rate fit) is not well defined."""


class ScenarioError(HybridObsError, ValueError):
    """A scenario file is malformed or internally inconsistent."""
