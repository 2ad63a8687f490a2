from typing import Optional, Sequence


class MapCalcError(Exception):
    """Base exception for all map-calculus errors."""
    pass


class GeometryError(MapCalcError):
    """Raised when a chart or its metric cannot be evaluated."""

    def __init__(self, message: str, point: Optional[Sequence[float]] = None):
        self.point = None if point is None else [float(v) for v in point]
        super().__init__(message)


class DegenerateMetricError(GeometryError):
    """Raised when the metric is not symmetric positive definite."""

    def __init__(self, point: Optional[Sequence[float]] = None, detail: str = ""):
        message = "Degenerate metric"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message, point=point)


class ChartDomainError(GeometryError):
    """Raised when a point lies outside the chart's coordinate box."""

    def __init__(self, what: str, point: Optional[Sequence[float]] = None):
        super().__init__(f"{what} outside chart domain", point=point)


class CurvatureUnavailableError(GeometryError):
    """Raised when curvature is requested from a geometry without a chart."""

    def __init__(self):
        super().__init__("Curvature requires a manifold-backed geometry")


class MarginError(MapCalcError):
    """Raised when a compactly supported field reaches too close to the box boundary."""

    def __init__(self, what: str, required: int, found: int):
        self.what = what
        self.required = required
        self.found = found
        super().__init__(
            f"Insufficient support margin for {what}: need {required} empty layers, found {found}"
        )


class QuadratureError(MapCalcError):
    """Raised when an integrand contains NaN or infinite values."""
    pass


class NonFiniteFieldError(MapCalcError):
    """Raised when an assembled field carries NaN or infinite components."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"Non-finite values in {what}")


class SolitonError(MapCalcError):
    """Base class for soliton structure errors."""
    pass


class CertificationError(SolitonError):
    """Raised when a soliton residual exceeds its certification threshold."""

    def __init__(self, residual: float, threshold: float):
        self.residual = residual
        self.threshold = threshold
        super().__init__(f"Soliton residual {residual:.3e} exceeds threshold {threshold:.3e}")


class CutoffError(SolitonError):
    """Raised when a cutoff cannot be built on the chart box."""
    pass


class LagrangianError(MapCalcError):
    """Raised when supplied Lagrangian partials are inconsistent with the Lagrangian."""

    def __init__(self, message: str, name: Optional[str] = None):
        self.name = name
        super().__init__(message)


class UnsupportedLagrangianError(LagrangianError):
    """Raised when an operation needs a partial the Lagrangian does not provide."""

    def __init__(self, name: str, missing: str):
        self.missing = missing
        super().__init__(f"Lagrangian {name} does not provide {missing}", name=name)


class OracleError(MapCalcError):
    """Base class for finite-difference oracle failures."""
    pass


class StepUnderflowError(OracleError):
    """Raised when the finite-difference step would underflow."""

    def __init__(self, step: float):
        self.step = step
        super().__init__(f"Finite-difference step underflow: t0={step:.3e}")


class DefinitenessError(OracleError):
    """Raised when g + t*dg loses positive definiteness at a probe step."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"Perturbed metric not positive definite at t={t:.3e}")


class FlowError(MapCalcError):
    """Base class for descent flow errors."""
    pass


class GradientCheckError(FlowError):
    """Raised when the assembled descent direction disagrees with the FD oracle."""

    def __init__(self, rel_err: float, tolerance: float):
        self.rel_err = rel_err
        self.tolerance = tolerance
        super().__init__(f"Gradient check failed: rel_err={rel_err:.3e} > {tolerance:.3e}")


class CheckpointError(FlowError):
    """Raised when a checkpoint cannot be used to resume a flow."""
    pass


class ConfigurationError(MapCalcError):
    """Raised when an experiment configuration is missing or invalid."""
    pass
