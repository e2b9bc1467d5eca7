"""
This module contains the monitored functionals of the rescaled system.

Every quantity here is a read-only evaluation over a :class:`Field
<broadwell.fields.Field>`: the weighted line functional ``Q14`` in both of
its weightings, static and moving line integrals, the mass on the square
``[-1, 1]^2`` and the closed-form comparison bounds they are checked
against. Sampled values are collected into a :class:`FunctionalSeries
<FunctionalSeries>`.
"""
import enum
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from broadwell.exceptions import BroadwellError, ParameterDomainError, SeriesOrderError
from broadwell.fields import (
    Axis,
    Field,
    box_integral,
    line_integral,
    line_integral_at,
    overlap_weights,
    sup_norm,
)
from broadwell.helpers import write_csv

logger = logging.getLogger(__name__)

SERIES_HEADER = ("time", "name", "value", "bound", "line_coord")

DEFAULT_SLACK = 0.05
DEFAULT_FLOOR = 1e-8

SQUARE = (-1.0, 1.0)


class SeriesRecord(NamedTuple):
    time: float
    name: str
    value: float
    bound: Optional[float] = None
    line_coord: Optional[float] = None

    def violates(self, slack: float = DEFAULT_SLACK, floor: float = DEFAULT_FLOOR) -> bool:
        """Whether ``value`` exceeds ``bound`` beyond the tolerance."""
        if self.bound is None:
            return False
        return self.value > self.bound * (1.0 + slack) + floor


class FunctionalSeries(Sequence):
    """Interface for collecting and querying timestamped monitor values."""

    def __init__(self, records: Optional[Iterable[SeriesRecord]] = None):
        """Construct a :class:`FunctionalSeries <FunctionalSeries>`.

        :param records:
            (Optional) Initial records; they are appended in order, so the
            per-name time ordering is enforced.
        """
        self.records: List[SeriesRecord] = []
        self._last_time = {}
        for record in records or ():
            self.append(*record)

    def append(
        self,
        time: float,
        name: str,
        value: float,
        bound: Optional[float] = None,
        line_coord: Optional[float] = None,
    ) -> SeriesRecord:
        """Add a record; times must increase strictly per name."""
        last = self._last_time.get(name)
        if last is not None and not time > last:
            raise SeriesOrderError(name, time, last)
        record = SeriesRecord(
            float(time),
            name,
            float(value),
            None if bound is None else float(bound),
            None if line_coord is None else float(line_coord),
        )
        self.records.append(record)
        self._last_time[name] = record.time
        return record

    def extend(self, other: "FunctionalSeries") -> None:
        for record in other:
            self.append(*record)

    def filter(self, name: Optional[str] = None, bounded: Optional[bool] = None) -> "FunctionalSeries":
        """Apply the given filtering criterion.

        :param str name:
            (optional) Only records with this name.
        :param bool bounded:
            (optional) Only records that do (``True``) or do not (``False``)
            carry a bound.
        :rtype: :class:`FunctionalSeries <FunctionalSeries>`
        """
        records = self.records
        if name is not None:
            records = [r for r in records if r.name == name]
        if bounded is not None:
            records = [r for r in records if (r.bound is not None) == bounded]
        return FunctionalSeries(records)

    def names(self) -> List[str]:
        """Record names in order of first appearance."""
        return list(dict.fromkeys(r.name for r in self.records))

    def times(self, name: str) -> np.ndarray:
        return np.array([r.time for r in self.records if r.name == name])

    def values(self, name: str) -> np.ndarray:
        return np.array([r.value for r in self.records if r.name == name])

    def pairs(self, name: str) -> List[Tuple[float, float]]:
        """``(time, value)`` tuples of one monitor."""
        return [(r.time, r.value) for r in self.records if r.name == name]

    def last(self, name: Optional[str] = None) -> Optional[SeriesRecord]:
        """The most recent record (of ``name``, if given), or ``None``."""
        records = self.records if name is None else [r for r in self.records if r.name == name]
        return records[-1] if records else None

    def violations(
        self, slack: float = DEFAULT_SLACK, floor: float = DEFAULT_FLOOR
    ) -> List[SeriesRecord]:
        """Records whose value exceeds ``bound * (1 + slack) + floor``."""
        return [r for r in self.records if r.violates(slack, floor)]

    def checked_count(self) -> int:
        return sum(1 for r in self.records if r.bound is not None)

    def to_csv(self, path: str) -> str:
        """Write the series as ``time,name,value,bound,line_coord``."""
        return write_csv(path, SERIES_HEADER, self.records)

    def __getitem__(self, i: Union[slice, int]):
        if isinstance(i, slice):
            return FunctionalSeries(self.records[i])
        return self.records[i]

    def __len__(self) -> int:
        return len(self.records)

    def __repr__(self) -> str:
        return f"<FunctionalSeries: {len(self.records)} records, names={self.names()}>"


@dataclass(frozen=True)
class Theorem1Params:
    """Bound ``kappa`` on the rescaled densities, and the derived ``epsilon``."""

    kappa: float

    def __post_init__(self):
        if not self.kappa > 0 or not math.isfinite(self.kappa):
            raise ParameterDomainError("kappa", self.kappa, "kappa > 0")
        # both conditions hold by construction up to rounding
        if not self.epsilon < 1.0 / self.kappa:
            raise ParameterDomainError("kappa", self.kappa, "epsilon < 1/kappa")
        if self.epsilon * math.exp(2.0 * self.kappa) > 0.5 + 1e-12:
            raise ParameterDomainError("kappa", self.kappa, "epsilon e^(2 kappa) <= 1/2")

    @property
    def epsilon(self) -> float:
        return math.exp(-2.0 * self.kappa) / 2.0


@dataclass(frozen=True)
class Theorem2Params:
    """Growth exponent ``theta`` of the bound ``w <= theta ln t``."""

    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < 0.25:
            raise ParameterDomainError("theta", self.theta, "0 < theta < 1/4")

    @property
    def t0(self) -> float:
        """Time at which ``k(t)`` reaches 1/2."""
        return math.exp(1.0 / (2.0 * self.theta))

    def k(self, t: float) -> float:
        return self.theta * math.log(t)

    @property
    def A0(self) -> float:
        t0 = self.t0
        return max(
            2.0 * self.k(t0) * t0 ** (1.0 - 4.0 * self.theta),
            8.0 * (1.0 - 3.0 * self.theta),
        )

    def check_time(self, t: float) -> None:
        # t0 itself must pass despite rounding in exp/log
        if t < self.t0 * (1.0 - 1e-12):
            raise ParameterDomainError("t", t, f"t >= t0 = {self.t0!r}")

    def cap(self, t: float) -> float:
        """The enforced sup bound ``theta ln t``."""
        return self.theta * math.log(t)


def theorem1_weights(params: Theorem1Params, x) -> Tuple[np.ndarray, np.ndarray]:
    """Weights ``1 - eps e^(2 kappa x)`` (species 1) and ``1 - eps e^(-2 kappa x)`` (species 4)."""
    x = np.asarray(x, dtype=float)
    eps, kappa = params.epsilon, params.kappa
    return 1.0 - eps * np.exp(2.0 * kappa * x), 1.0 - eps * np.exp(-2.0 * kappa * x)


def theorem2_weights(params: Theorem2Params, t: float, x) -> Tuple[np.ndarray, np.ndarray]:
    """Weights ``1 - e^(2k(x-1))/2`` (species 1) and ``1 - e^(-2k(x+1))/2`` (species 4)."""
    params.check_time(t)
    x = np.asarray(x, dtype=float)
    k = params.k(t)
    return 1.0 - 0.5 * np.exp(2.0 * k * (x - 1.0)), 1.0 - 0.5 * np.exp(-2.0 * k * (x + 1.0))


def _q14_profile(field: Field, weights: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    # weighted x-integral of w1 and w4 on every horizontal grid line
    domain = field.domain
    wx = overlap_weights(domain.x_edges, *SQUARE)
    g1, g4 = weights
    return (wx * g1) @ field.data[0] + (wx * g4) @ field.data[3]


def _square_lines(field: Field) -> np.ndarray:
    ys = field.domain.y_centers
    return (ys >= SQUARE[0]) & (ys <= SQUARE[1])


def _line_index(field: Field, y: float) -> int:
    domain = field.domain
    index = round((y - domain.ymin) / domain.hy - 0.5)
    return int(min(max(index, 0), domain.ny - 1))


def _sup_over_lines(field: Field, profile: np.ndarray) -> Tuple[float, Optional[float]]:
    mask = _square_lines(field)
    if not mask.any():
        return 0.0, None
    masked = np.where(mask, profile, -np.inf)
    iy = int(np.argmax(masked))
    return float(profile[iy]), float(field.domain.y_centers[iy])


def q14_thm1(field: Field, params: Theorem1Params, y: float) -> float:
    """Weighted ``w1``/``w4`` line functional on the grid line nearest ``y``.

    :param Field field:
        Rescaled densities.
    :param Theorem1Params params:
        Supplies ``kappa`` and ``epsilon``.
    :param float y:
        Line position, ``|y| <= 1``.
    :rtype: float
    """
    weights = theorem1_weights(params, field.domain.x_centers)
    return float(_q14_profile(field, weights)[_line_index(field, y)])


def q14_thm1_sup_at(field: Field, params: Theorem1Params) -> Tuple[float, Optional[float]]:
    """Like :func:`q14_thm1_sup`, also returning the maximizing line."""
    weights = theorem1_weights(params, field.domain.x_centers)
    return _sup_over_lines(field, _q14_profile(field, weights))


def q14_thm1_sup(field: Field, params: Theorem1Params) -> float:
    """Max of :func:`q14_thm1` over the grid lines with ``|y| <= 1``."""
    return q14_thm1_sup_at(field, params)[0]


def comparison_ode_thm1(params: Theorem1Params, t: float) -> float:
    """Solution of ``z' = -(eps^2/2) z^2``, ``z(0) = 4 kappa``."""
    if t < 0:
        raise ParameterDomainError("t", t, "t >= 0")
    return 1.0 / (1.0 / (4.0 * params.kappa) + 0.5 * params.epsilon ** 2 * t)


def decay_bound_35(params: Theorem1Params, t: float) -> float:
    """Bound on the integral of one species over ``[-1, 1]^2``."""
    if t < 0:
        raise ParameterDomainError("t", t, "t >= 0")
    return 4.0 / (1.0 / (4.0 * params.kappa) + math.exp(-4.0 * params.kappa) * t / 8.0)


def q14_thm2(field: Field, params: Theorem2Params, t: float, y: float) -> float:
    """Time-weighted ``w1``/``w4`` line functional on the grid line nearest ``y``.

    :raises ParameterDomainError:
        ``t < t0``, where the weights lose the properties they are built for.
    """
    weights = theorem2_weights(params, t, field.domain.x_centers)
    return float(_q14_profile(field, weights)[_line_index(field, y)])


def q14_thm2_sup_at(
    field: Field, params: Theorem2Params, t: float
) -> Tuple[float, Optional[float]]:
    weights = theorem2_weights(params, t, field.domain.x_centers)
    return _sup_over_lines(field, _q14_profile(field, weights))


def comparison_thm2(params: Theorem2Params, t: float) -> float:
    """``A0 t^(4 theta - 1)``, defined for ``t >= t0``."""
    params.check_time(t)
    return params.A0 * t ** (4.0 * params.theta - 1.0)


def line_bound_49(params: Theorem2Params, t: float) -> float:
    """Bound on the integral of one species along a monitored line."""
    return 2.0 * comparison_thm2(params, t)


def step_a_bound(params: Theorem2Params, t: float) -> float:
    """Bound on ``A(t)``, the sum of two line integrals each under :func:`line_bound_49`."""
    return 2.0 * line_bound_49(params, t)


def weight_inequality_check(k: float, samples: int = 100_000) -> float:
    """Largest violation of ``h_k(s) = 1 - e^(2ks) + s e^(2ks) >= 0`` on ``[-2, 0]``.

    :param float k:
        Weight exponent, ``k >= 1/2``.
    :param int samples:
        Number of uniform sample points including both endpoints.
    :rtype: float
    """
    if k < 0.5:
        raise ParameterDomainError("k", k, "k >= 1/2")
    if samples < 2:
        raise ParameterDomainError("samples", samples, "samples >= 2")
    s = np.linspace(-2.0, 0.0, samples)
    growth = np.exp(2.0 * k * s)
    h = -np.expm1(2.0 * k * s) + s * growth
    return float(np.max(-h))


def mass(field: Field) -> float:
    """Integral of ``sum_i w_i`` over ``[-1, 1]^2``."""
    return box_integral(field, slice(None), (-1.0, -1.0), (1.0, 1.0))


def species_mass(field: Field, species: int) -> float:
    return box_integral(field, species, (-1.0, -1.0), (1.0, 1.0))


def max_line_integral(field: Field, species: int, axis: Axis) -> Tuple[float, float]:
    """Largest static line integral of one species over grid lines crossing the square."""
    domain = field.domain
    if axis is Axis.X:
        coords = domain.y_centers
    else:
        coords = domain.x_centers
    coords = coords[(coords >= -1.0) & (coords <= 1.0)]
    if not len(coords):
        return 0.0, math.nan
    values = [line_integral(field, species, axis, float(c)) for c in coords]
    best = int(np.argmax(values))
    return values[best], float(coords[best])


class LinePair(enum.Enum):
    """Species pairs sharing a normal drift, and the line they ride on.

    Each value is ``(species, axis, sign)``: the line integral runs along
    ``axis`` and the line moves by ``coord' = coord + sign``.
    """

    H14 = ((0, 3), Axis.X, 1.0)
    V12 = ((0, 1), Axis.Y, 1.0)
    V34 = ((2, 3), Axis.Y, -1.0)
    H23 = ((1, 2), Axis.X, -1.0)

    @property
    def species(self) -> Tuple[int, int]:
        return self.value[0]

    @property
    def axis(self) -> Axis:
        return self.value[1]

    @property
    def sign(self) -> float:
        return self.value[2]

    @classmethod
    def from_label(cls, label: str) -> "LinePair":
        """Accepts ``14H``, ``H14`` and similar spellings."""
        key = label.strip().upper()
        if key[-1] in "HV":
            key = key[-1] + key[:-1]
        try:
            return cls[key]
        except KeyError:
            raise BroadwellError(f"unknown line pair {label!r}")


def moving_line_coord(pair: LinePair, c0: float, t: float, t0: float) -> float:
    """Position at ``t`` of the line that sat at ``c0`` at ``t0``."""
    return (c0 + pair.sign) * math.exp(t - t0) - pair.sign


@dataclass
class MovingLineSeries:
    pair: LinePair
    times: List[float]
    coords: List[float]
    values: List[float]
    truncated: bool = False

    def is_nonincreasing(self, rel_tol: float = 1e-3) -> bool:
        """Whether no value rises above an earlier one by more than ``rel_tol`` of the first."""
        if not self.values:
            return True
        slack = rel_tol * abs(self.values[0]) + 1e-12
        running = self.values[0]
        for value in self.values[1:]:
            if value > running + slack:
                return False
            running = min(running, value)
        return True


def moving_line_name(pair: LinePair) -> str:
    """Series name of a pair, e.g. ``moving_14H``."""
    s1, s2 = pair.species
    return f"moving_{s1 + 1}{s2 + 1}{pair.name[0]}"


def moving_line_monitor(
    fields: Sequence, pair: Union[LinePair, str], c0: float, t0: Optional[float] = None
) -> MovingLineSeries:
    """Pair line integral sampled along the exact moving-line flow.

    :param fields:
        Snapshots of a rescaled run, ordered by time.
    :param pair:
        Which pair and line orientation to follow.
    :param float c0:
        Line position at ``t0``.
    :param float t0:
        (Optional) Start time; defaults to the first snapshot's time.
    :rtype: MovingLineSeries
    """
    if not isinstance(pair, LinePair):
        pair = LinePair.from_label(pair)
    out = MovingLineSeries(pair, [], [], [])
    if not fields:
        return out
    if t0 is None:
        t0 = fields[0].time
    for field in fields:
        if field.time < t0:
            continue
        coord = moving_line_coord(pair, c0, field.time, t0)
        if abs(coord) > 1.0 + 1e-12:
            out.truncated = True
            logger.debug("moving line %s left the square at t=%.6g", pair.name, field.time)
            break
        out.times.append(field.time)
        out.coords.append(coord)
        out.values.append(line_integral_at(field, list(pair.species), pair.axis, coord))
    return out


def step_a_value(field: Field, origin: Tuple[float, float]) -> float:
    """``A = int_{x}^{1} (w1 + w4)(s, y) ds`` at the point ``origin = (x, y)``.

    The point is the image of a fixed start under both flows ``x' = x + 1``
    and ``y' = y + 1``; see :func:`moving_line_coord`.
    """
    x, y = origin
    return line_integral_at(field, [0, 3], Axis.X, y, lo=x, hi=1.0)


MONITOR_NAMES = (
    "q14_thm1", "q14_thm2", "mass", "lines", "moving_lines", "sup", "conservation", "step_a",
)


class MonitorSet:
    """Named monitors sampled into one :class:`FunctionalSeries <FunctionalSeries>`."""

    def __init__(
        self,
        names: Iterable[str] = ("sup", "mass"),
        thm1: Optional[Theorem1Params] = None,
        thm2: Optional[Theorem2Params] = None,
        model=None,
        step_a_start: Tuple[float, float] = (-0.9, -0.9),
        moving_line_start: float = 0.9,
    ):
        """Construct a :class:`MonitorSet <MonitorSet>`.

        :param names:
            Monitor names, any of ``MONITOR_NAMES``.
        :param Theorem1Params thm1:
            (Optional) Enables the ``q14_thm1`` bound and the mass decay bound.
        :param Theorem2Params thm2:
            (Optional) Enables ``q14_thm2``, the line bound and ``step_a``.
        :param model:
            (Optional) :class:`VelocityModel`; required by ``conservation``.
        :param step_a_start:
            Starting point of the ``step_a`` flow at the first sample.
        :param float moving_line_start:
            Distance from the center at which each ``moving_lines`` line
            starts, on the side it moves away from.
        """
        names = list(dict.fromkeys(names))
        unknown = [n for n in names if n not in MONITOR_NAMES]
        if unknown:
            raise BroadwellError(f"unknown monitors {unknown}, expected any of {MONITOR_NAMES}")
        if "q14_thm1" in names and thm1 is None:
            raise BroadwellError("monitor q14_thm1 needs Theorem1Params")
        if ("q14_thm2" in names or "step_a" in names) and thm2 is None:
            raise BroadwellError("monitors q14_thm2/step_a need Theorem2Params")
        if "conservation" in names and model is None:
            raise BroadwellError("monitor conservation needs the velocity model")
        self.names = names
        self.thm1 = thm1
        self.thm2 = thm2
        self.model = model
        self.step_a_start = step_a_start
        self.moving_line_start = moving_line_start
        self._start_time: Optional[float] = None
        self._initial_sup: Optional[float] = None

    def __repr__(self):
        return f"<MonitorSet: {', '.join(self.names)}>"

    def sample(self, field: Field, series: FunctionalSeries) -> None:
        """Evaluate every monitor on ``field`` and append to ``series``."""
        t = field.time
        if self._start_time is None:
            self._start_time = t
            self._initial_sup = sup_norm(field, region=SQUARE).value
        elapsed = t - self._start_time
        for name in self.names:
            getattr(self, f"_sample_{name}")(field, t, elapsed, series)

    def _thm2_active(self, t: float) -> bool:
        return self.thm2 is not None and t >= self.thm2.t0 * (1.0 - 1e-12)

    def _sample_q14_thm1(self, field, t, elapsed, series):
        value, where = q14_thm1_sup_at(field, self.thm1)
        series.append(t, "q14_thm1", value, comparison_ode_thm1(self.thm1, elapsed), where)

    def _sample_q14_thm2(self, field, t, elapsed, series):
        if not self._thm2_active(t):
            return
        value, where = q14_thm2_sup_at(field, self.thm2, t)
        series.append(t, "q14_thm2", value, comparison_thm2(self.thm2, t), where)

    def _sample_mass(self, field, t, elapsed, series):
        series.append(t, "mass", mass(field))
        bound = None if self.thm1 is None else decay_bound_35(self.thm1, elapsed)
        for i in range(field.n_species):
            series.append(t, f"mass_{i + 1}", species_mass(field, i), bound)

    def _sample_lines(self, field, t, elapsed, series):
        bound = None
        if self.thm2 is not None:
            bound = line_bound_49(self.thm2, t) if self._thm2_active(t) else None
        elif self.thm1 is not None:
            bound = 4.0 * self._initial_sup
        for i in range(field.n_species):
            for axis in Axis:
                value, where = max_line_integral(field, i, axis)
                series.append(t, f"line_{i + 1}{axis.value}", value, bound, where)

    def _sample_moving_lines(self, field, t, elapsed, series):
        for pair in LinePair:
            c0 = -pair.sign * self.moving_line_start
            coord = moving_line_coord(pair, c0, t, self._start_time)
            if abs(coord) > 1.0:
                continue
            value = line_integral_at(field, list(pair.species), pair.axis, coord)
            series.append(t, moving_line_name(pair), value, None, coord)

    def _sample_sup(self, field, t, elapsed, series):
        series.append(t, "sup", sup_norm(field).value)

    def _sample_conservation(self, field, t, elapsed, series):
        series.append(t, "total_mass", field.total_mass())
        momentum = np.einsum("id,i->d", self.model.speeds, field.data.sum(axis=(1, 2)))
        momentum *= field.domain.cell_area
        series.append(t, "momentum_x", momentum[0])
        series.append(t, "momentum_y", momentum[1])

    def _sample_step_a(self, field, t, elapsed, series):
        x0, y0 = self.step_a_start
        x = moving_line_coord(LinePair.V12, x0, t, self._start_time)
        y = moving_line_coord(LinePair.H14, y0, t, self._start_time)
        if abs(x) > 1.0 or abs(y) > 1.0:
            return
        bound = step_a_bound(self.thm2, t) if self._thm2_active(t) else None
        series.append(t, "step_a", step_a_value(field, (x, y)), bound, y)
