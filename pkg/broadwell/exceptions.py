"""Library specific exception definitions."""
import logging
from typing import Optional, Sequence

logger = logging.getLogger(__name__)


class BroadwellError(Exception):
    """Base broadwell exception that all others inherit.

    This is done to not pollute the built-in exceptions, which *could* result
    in unintended errors being unexpectedly and incorrectly handled within
    implementers code.
    """


class ModelError(BroadwellError):
    """Velocity model or density vector is malformed."""


class ModelFileError(ModelError):
    """Model file could not be parsed."""

    def __init__(self, path: str, line_no: int, reason: str):
        """
        :param str path:
            Path (or ``<string>``) of the model description.
        :param int line_no:
            1-based line number of the offending line.
        :param str reason:
            What is wrong with the line.
        """
        self.path = path
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


class InvalidFrameError(BroadwellError):
    """Field time is not strictly before the frame's blow-up time."""

    def __init__(self, time: float, t_star: float):
        self.time = time
        self.t_star = t_star
        super().__init__(self.error_string)

    @property
    def error_string(self):
        return f"time {self.time!r} is not before t_star {self.t_star!r}"


class ParameterDomainError(BroadwellError):
    """A parameter lies outside the range where a quantity is defined."""

    def __init__(self, name: str, value: float, requirement: str):
        """
        :param str name:
            Parameter name.
        :param float value:
            Offending value.
        :param str requirement:
            Human readable admissible range, e.g. ``"k >= 1/2"``.
        """
        self.name = name
        self.value = value
        self.requirement = requirement
        super().__init__(f"{name}={value!r} violates {requirement}")


class StepConfigError(BroadwellError):
    """Step configuration is incompatible with the grid or the model."""


class CflViolation(BroadwellError):
    """Time step is too large for the quadratic collision term."""

    def __init__(self, dt: float, required_dt: float):
        """
        :param float dt:
            The step that was requested.
        :param float required_dt:
            Largest admissible step for the current density.
        """
        self.dt = dt
        self.required_dt = required_dt
        super().__init__(self.error_string)

    @property
    def error_string(self):
        return (
            f"dt={self.dt:.6g} violates the density CFL condition, "
            f"required dt <= {self.required_dt:.6g}"
        )


class NonContraction(BroadwellError):
    """Picard iteration failed to contract."""

    def __init__(self, iterations: int, distances: Sequence[float]):
        self.iterations = iterations
        self.distances = list(distances)
        last = self.distances[-1] if self.distances else float("nan")
        super().__init__(
            f"Picard iteration did not contract after {iterations} iterations "
            f"(last sup distance {last:.3e})"
        )


class NoBlowupTrend(BroadwellError):
    """Sup-norm series does not look like it is blowing up."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"no blow-up trend: {reason}")


class SeriesOrderError(BroadwellError):
    """Series records must be strictly increasing in time per name."""

    def __init__(self, name: str, time: float, last_time: float):
        self.name = name
        self.time = time
        self.last_time = last_time
        super().__init__(
            f"{name}: time {time!r} is not after previous record {last_time!r}"
        )


class ConfigError(BroadwellError):
    """Configuration file or override is invalid."""

    def __init__(self, key_path: Optional[str], reason: str):
        """
        :param str key_path:
            Dotted key path, e.g. ``rescaled.L`` or ``packet[2].center``.
        :param str reason:
            What is wrong with the value.
        """
        self.key_path = key_path
        self.reason = reason
        prefix = f"{key_path}: " if key_path else ""
        super().__init__(f"{prefix}{reason}")
