"""
This module contains blow-up detection and classification.

:func:`estimate_tstar` extrapolates the blow-up time from a growing sup-norm
series, :func:`refine_tstar` corrects it for double-log growth,
:func:`corollary_ratio` compares the growth with the slowest rate a
primary blow-up can have, and :func:`classify_primary` applies the
backward-cone test to a set of candidate blow-up points.
"""
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from broadwell.exceptions import NoBlowupTrend, ParameterDomainError, SeriesOrderError
from broadwell.helpers import write_csv

logger = logging.getLogger(__name__)

MIN_SAMPLES = 8
MIN_TAIL = 3
# slowest admissible growth constant; 0.2 is the alternative reading
DEFAULT_RATE_CONSTANT = 0.25
# round-off allowance on the ratio of a series growing exactly at the rate constant
RATIO_RTOL = 1e-6
REFINE_MAX_ITERS = 100
REFINE_TOL = 1e-13
REPORT_HEADER = ("t", "sup", "t_star_est", "ratio", "flag")

FLAG_OK = "ok"
FLAG_INCONSISTENT = "inconsistent"


class ConePoint(NamedTuple):
    t: float
    x: Tuple[float, float]


class ConeLabel(enum.Enum):
    PRIMARY = "Primary"
    SECONDARY = "Secondary"


@dataclass
class BlowupCandidate:
    """An extrapolated blow-up point with its rate diagnostics.

    When ``last_time`` is given the estimate must lie strictly after it.
    """

    t_star_est: float
    x_star_est: Tuple[float, float]
    fit_quality: float
    rate_constant: float = DEFAULT_RATE_CONSTANT
    ratio_series: List[Tuple[float, float]] = field(default_factory=list)
    last_time: Optional[float] = None

    def __post_init__(self):
        if self.last_time is not None and not self.t_star_est > self.last_time:
            raise NoBlowupTrend(
                f"t*={self.t_star_est:.9g} does not follow the last sample t={self.last_time:.9g}"
            )
        times = [t for t, _ in self.ratio_series]
        for previous, current in zip(times, times[1:]):
            if not current > previous:
                raise SeriesOrderError("ratio", current, previous)

    def _below(self, ratio: float) -> bool:
        return ratio < self.rate_constant * (1.0 - RATIO_RTOL)

    @property
    def flags(self) -> List[Tuple[float, str]]:
        """Per ratio sample, whether it is below the rate constant."""
        return [
            (t, FLAG_INCONSISTENT if self._below(r) else FLAG_OK)
            for t, r in self.ratio_series
        ]

    @property
    def inconsistent(self) -> bool:
        """Whether the latest ratio falls below the rate constant."""
        return bool(self.ratio_series) and self._below(self.ratio_series[-1][1])

    def __repr__(self):
        return (
            f"<BlowupCandidate: t*~{self.t_star_est:.6g} at {self.x_star_est}, "
            f"R^2={self.fit_quality:.4f}>"
        )


def _linear_root(t: np.ndarray, y: np.ndarray) -> Optional[Tuple[float, float]]:
    """Root and R^2 of the least-squares line through ``(t, y)``.

    ``None`` when the line is not decreasing.
    """
    slope, intercept = np.polyfit(t, y, 1)
    if not slope < 0:
        return None
    fitted = slope * t + intercept
    total = float(np.sum((y - y.mean()) ** 2))
    residual = float(np.sum((y - fitted) ** 2))
    quality = 1.0 - residual / total if total > 0 else 1.0
    return float(-intercept / slope), quality


def _tail(sup_series: Sequence[Tuple[float, float]]) -> np.ndarray:
    data = np.asarray(sup_series, dtype=float)
    return data[-max(MIN_TAIL, math.ceil(len(data) / 3)):]


def estimate_tstar(sup_series: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Extrapolate the blow-up time of a growing series.

    Fits ``1/s`` against ``t`` by least squares on the last third of the
    samples; the root of the fitted line is the estimate. Log-corrected
    growth bends ``1/s`` so that a long tail can put the root before the
    data; the tail is then halved until the root follows the last sample.

    :param sup_series:
        ``(t, s)`` pairs ordered by time.
    :raises NoBlowupTrend:
        Too few samples, a tail that is not strictly increasing, or no tail
        whose root follows the last sample.
    :returns:
        ``(t_star_est, r_squared)``.
    """
    if len(sup_series) < MIN_SAMPLES:
        raise NoBlowupTrend(f"need at least {MIN_SAMPLES} samples, got {len(sup_series)}")
    tail = _tail(sup_series)
    t, s = tail[:, 0], tail[:, 1]
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise NoBlowupTrend("tail contains non-positive or non-finite values")
    if not np.all(np.diff(s) > 0):
        raise NoBlowupTrend("sup norm is not strictly increasing on the fitted tail")
    inverse = 1.0 / s
    size = len(t)
    while True:
        fit = _linear_root(t[-size:], inverse[-size:])
        if fit is None:
            raise NoBlowupTrend("1/sup is not decreasing on the fitted tail")
        t_star, quality = fit
        if t_star > t[-1]:
            break
        logger.debug(
            "root t*=%.9g of a %d-sample tail precedes the last sample t=%.9g",
            t_star, size, t[-1],
        )
        if size == MIN_TAIL:
            raise NoBlowupTrend(f"extrapolated t*={t_star:.9g} precedes the last sample")
        size = max(MIN_TAIL, size // 2)
    logger.debug("estimated t*=%.9g with R^2=%.6f from %d samples", t_star, quality, size)
    return t_star, quality


def refine_tstar(
    sup_series: Sequence[Tuple[float, float]], t_star: float
) -> Optional[Tuple[float, float]]:
    """Refit ``t*`` for growth of the form ``ln|ln(t* - t)| / (a (t* - t))``.

    For a fixed ``t*`` the product ``ln|ln(t* - t)| / s`` is affine in
    ``t`` with its root at ``t*``; the root is iterated to a fixed point,
    starting from ``t_star``.

    :returns:
        ``(t_star, r_squared)`` of the log-corrected fit, or ``None`` when
        the iteration leaves the range where the double log is positive or
        stops following the data.
    """
    tail = _tail(sup_series)
    t, s = tail[:, 0], tail[:, 1]
    fit = None
    for _ in range(REFINE_MAX_ITERS):
        gap = t_star - t
        if not (np.all(gap > 0) and np.all(gap < math.exp(-1.0))):
            return None
        fit = _linear_root(t, np.log(-np.log(gap)) / s)
        if fit is None or not fit[0] > t[-1]:
            return None
        moved = abs(fit[0] - t_star)
        t_star = fit[0]
        if moved <= REFINE_TOL * max(1.0, abs(t_star)):
            break
    return fit


def corollary_ratio(s: float, t: float, t_star: float) -> float:
    """``s (t* - t) / ln|ln(t* - t)|``.

    :raises ParameterDomainError:
        ``t* - t`` outside ``(0, 1/e)``, where the double log is not positive.
    """
    gap = t_star - t
    if not 0.0 < gap < math.exp(-1.0):
        raise ParameterDomainError("t_star - t", gap, "0 < t_star - t < 1/e")
    return s * gap / math.log(-math.log(gap))


def classify_primary(candidates: Sequence[ConePoint], C: float) -> List[ConeLabel]:
    """Label each candidate by the backward-cone test.

    A candidate is primary when no other candidate satisfies
    ``|x - x*| < 2 C (t* - t)``.

    :param candidates:
        Candidate blow-up points.
    :param float C:
        Largest particle speed.
    :rtype: list
    """
    if not C > 0:
        raise ParameterDomainError("C", C, "C > 0")
    labels = []
    for i, star in enumerate(candidates):
        inside = any(
            math.hypot(other.x[0] - star.x[0], other.x[1] - star.x[1])
            < 2.0 * C * (star.t - other.t)
            for j, other in enumerate(candidates)
            if j != i
        )
        labels.append(ConeLabel.SECONDARY if inside else ConeLabel.PRIMARY)
    return labels


def detect_blowup(
    sup_series: Sequence[Tuple[float, float]],
    x_star: Tuple[float, float] = (0.0, 0.0),
    rate_constant: float = DEFAULT_RATE_CONSTANT,
) -> BlowupCandidate:
    """Estimate ``t*`` and build the ratio series of a growing sup norm.

    The affine fit of ``1/s`` is replaced by the log-corrected fit of
    :func:`refine_tstar` when the latter has the higher R^2. Samples closer
    than ``1/e`` to the estimate contribute a ratio; a ratio below
    ``rate_constant`` is flagged as inconsistent with a true blow-up at the
    estimated time.

    :rtype: BlowupCandidate
    """
    t_star, quality = estimate_tstar(sup_series)
    refined = refine_tstar(sup_series, t_star)
    if refined is not None and refined[1] > quality:
        logger.debug("log-corrected fit moves t* from %.9g to %.9g", t_star, refined[0])
        t_star, quality = refined
    ratios = [
        (float(t), corollary_ratio(s, t, t_star))
        for t, s in sup_series
        if 0.0 < t_star - t < math.exp(-1.0)
    ]
    candidate = BlowupCandidate(
        t_star, tuple(x_star), quality, rate_constant, ratios,
        last_time=float(sup_series[-1][0]),
    )
    if candidate.inconsistent:
        logger.info(
            "ratio %.4f below %.2f at t=%.6g: growth too slow for blow-up at t*=%.6g",
            candidate.ratio_series[-1][1], rate_constant, candidate.ratio_series[-1][0], t_star,
        )
    return candidate


def write_blowup_report(
    candidate: Optional[BlowupCandidate],
    sup_series: Sequence[Tuple[float, float]],
    path: str,
) -> str:
    """Write ``t,sup,t_star_est,ratio,flag`` for every sample.

    Columns without a value (no candidate, or a sample too far from the
    estimate) are left empty.
    """
    ratios = dict(candidate.ratio_series) if candidate else {}
    flags = dict(candidate.flags) if candidate else {}
    t_star = candidate.t_star_est if candidate else None

    rows = (
        (float(t), float(s), t_star, ratios.get(float(t)), flags.get(float(t)))
        for t, s in sup_series
    )
    return write_csv(path, REPORT_HEADER, rows)
