"""
This module contains packet initial data and packet tracking.

A packet is a narrow bump of one species. :class:`Fig3Layout <Fig3Layout>`
arranges a chain of them so that a 1-packet and a 3-packet meet, produce a
4-packet, and that 4-packet then meets an incoming 2-packet.
"""
import enum
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from broadwell.exceptions import BroadwellError, ParameterDomainError
from broadwell.fields import Boundary, Domain, Field, sup_norm
from broadwell.helpers import write_csv
from broadwell.model import BROADWELL_SPEEDS

logger = logging.getLogger(__name__)

CENTROID_HEADER = ("time", "species", "cx", "cy", "mass", "age_flag")
MIN_CENTROID_MASS = 1e-12
INTERACTION_THRESHOLD = 1e-3


class PacketShape(enum.Enum):
    BOX = "box"
    SMOOTH_BUMP = "smooth_bump"


class AgeFlag(enum.Enum):
    YOUNG = "young"
    OLD = "old"
    EXITED = "exited"


@dataclass(frozen=True)
class PacketSpec:
    """A localized bump of one species (1-based) around ``center``."""

    species: int
    center: Tuple[float, float]
    widths: Tuple[float, float] = (0.06, 0.06)
    amplitude: float = 1.0
    shape: PacketShape = PacketShape.SMOOTH_BUMP

    def __post_init__(self):
        object.__setattr__(self, "shape", PacketShape(self.shape))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))
        if len(self.center) != 2 or len(self.widths) != 2:
            raise BroadwellError("packet center and widths must be 2-vectors")
        if self.species < 1:
            raise BroadwellError(f"packet species is 1-based, got {self.species}")
        if self.amplitude < 0:
            raise BroadwellError(f"packet amplitude must be non-negative, got {self.amplitude}")
        if min(self.widths) <= 0:
            raise BroadwellError(f"packet widths must be positive, got {self.widths}")

    def profile(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        rx = (xs - self.center[0]) / self.widths[0]
        ry = (ys - self.center[1]) / self.widths[1]
        if self.shape is PacketShape.BOX:
            inside = (np.abs(rx) <= 1.0) & (np.abs(ry) <= 1.0)
            return np.where(inside, self.amplitude, 0.0)
        return self.amplitude * np.maximum(0.0, 1.0 - rx ** 2 - ry ** 2) ** 2


def make_packet_field(
    domain: Domain,
    specs: Sequence[PacketSpec],
    background: float = 0.0,
    n_species: int = 4,
) -> Field:
    """Superpose packets on a uniform background.

    :param Domain domain:
        Target grid.
    :param specs:
        Packets to place.
    :param float background:
        Density added to every species everywhere.
    :param int n_species:
        Number of species of the field.
    :rtype: Field
    """
    xs, ys = domain.mesh()
    data = np.full((n_species, domain.nx, domain.ny), float(background))
    for spec in specs:
        if spec.species > n_species:
            raise BroadwellError(f"packet species {spec.species} exceeds {n_species} species")
        if not domain.contains(*spec.center):
            logger.warning("packet of species %d centered outside the domain", spec.species)
        data[spec.species - 1] += spec.profile(xs, ys)
    return Field(domain, data)


@dataclass(frozen=True)
class Fig3Layout:
    """Packet chain: 1 meets 3 at ``p2``, the produced 4 meets a 2 at ``p3``.

    The 3-packet starts at ``p2 + (p2 - p1)`` so both reach ``p2`` together;
    the 4-packet then travels along ``c4`` for ``p3_delay`` to ``p3``, where
    the 2-packet is timed to arrive.
    """

    p1: Tuple[float, float] = (-0.8, -0.8)
    p2: Tuple[float, float] = (-0.4, -0.4)
    p3_delay: float = 0.3
    width: float = 0.06
    amplitude: float = 1.0
    shape: PacketShape = PacketShape.SMOOTH_BUMP

    def __post_init__(self):
        dx, dy = self.p2[0] - self.p1[0], self.p2[1] - self.p1[1]
        if not math.isclose(dx, dy, rel_tol=1e-9) or not dx > 0:
            raise BroadwellError("p2 must lie on the forward diagonal of p1")
        if not self.p3_delay > 0:
            raise BroadwellError(f"p3_delay must be positive, got {self.p3_delay}")

    @property
    def meeting_time(self) -> float:
        """When the 1- and 3-packets reach ``p2`` under free streaming."""
        return self.p2[0] - self.p1[0]

    @property
    def p3(self) -> Tuple[float, float]:
        cx, cy = BROADWELL_SPEEDS[3]
        return (self.p2[0] + self.p3_delay * cx, self.p2[1] + self.p3_delay * cy)

    @property
    def second_meeting_time(self) -> float:
        return self.meeting_time + self.p3_delay

    def packets(self) -> List[PacketSpec]:
        t1, t2 = self.meeting_time, self.second_meeting_time
        c3 = BROADWELL_SPEEDS[2]
        c2 = BROADWELL_SPEEDS[1]
        p3 = self.p3
        start3 = (self.p2[0] - t1 * c3[0], self.p2[1] - t1 * c3[1])
        start2 = (p3[0] - t2 * c2[0], p3[1] - t2 * c2[1])
        widths = (self.width, self.width)
        return [
            PacketSpec(1, self.p1, widths, self.amplitude, self.shape),
            PacketSpec(3, start3, widths, self.amplitude, self.shape),
            PacketSpec(2, start2, widths, self.amplitude, self.shape),
        ]

    def warnings(self) -> List[str]:
        """Interaction points scheduled outside ``Q = [-1, 1]^2``."""
        out = []
        for label, point in (("P2", self.p2), ("P3", self.p3)):
            if max(abs(point[0]), abs(point[1])) > 1.0:
                out.append(f"interaction point {label}={point} lies outside [-1, 1]^2")
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Packets on a uniform background and the inner square of the age test.

    ``layout`` is set when the packets come from a :class:`Fig3Layout`.
    """

    packets: Tuple[PacketSpec, ...] = ()
    inner_square_halfwidth: float = 0.5
    background: float = 0.0
    layout: Optional[Fig3Layout] = None

    def __post_init__(self):
        object.__setattr__(self, "packets", tuple(self.packets))
        if not 0.0 < self.inner_square_halfwidth < 1.0:
            raise ParameterDomainError(
                "inner_square_halfwidth", self.inner_square_halfwidth,
                "0 < inner_square_halfwidth < 1",
            )
        if self.background < 0:
            raise ParameterDomainError("background", self.background, "background >= 0")

    @classmethod
    def fig3(cls, layout: Optional[Fig3Layout] = None, **kwargs) -> "ScenarioConfig":
        """The packet chain of ``layout`` (default :class:`Fig3Layout`)."""
        layout = layout or Fig3Layout()
        return cls(tuple(layout.packets()), layout=layout, **kwargs)

    def warnings(self) -> List[str]:
        """Interaction points, or packet centres, lying outside ``Q = [-1, 1]^2``."""
        if self.layout is not None:
            return self.layout.warnings()
        return [
            f"packet of species {p.species} at {p.center} lies outside [-1, 1]^2"
            for p in self.packets
            if max(abs(p.center[0]), abs(p.center[1])) > 1.0
        ]


def default_fig3_domain(n: int = 128) -> Domain:
    return Domain.square(2.0, n, Boundary.PERIODIC)


def scenario_fig3(
    params: Optional[ScenarioConfig] = None,
    domain: Optional[Domain] = None,
    n_species: int = 4,
) -> Field:
    """Initial data of a packet scenario, the default packet chain unless told otherwise.

    Every warning of ``params`` is logged.

    :param ScenarioConfig params:
        (Optional) Packets and background; defaults to
        :meth:`ScenarioConfig.fig3`.
    :param Domain domain:
        (Optional) Grid; defaults to the periodic ``[-2, 2]^2`` with 128
        cells per side.
    :param int n_species:
        Number of species of the field.
    :rtype: Field
    """
    params = params or ScenarioConfig.fig3()
    domain = domain or default_fig3_domain()
    for message in params.warnings():
        logger.warning(message)
    return make_packet_field(domain, params.packets, params.background, n_species)


class CentroidRecord(NamedTuple):
    time: float
    species: int
    cx: float
    cy: float
    mass: float
    age_flag: str


@dataclass
class _Age:
    flag: AgeFlag = AgeFlag.YOUNG

    def update(self, cx: float, cy: float, inner: float) -> AgeFlag:
        inside_q = max(abs(cx), abs(cy)) <= 1.0
        if self.flag is AgeFlag.YOUNG and max(abs(cx), abs(cy)) <= inner:
            self.flag = AgeFlag.OLD
        elif self.flag is AgeFlag.OLD and not inside_q:
            self.flag = AgeFlag.EXITED
        return self.flag


def centroid(field: Field, species: int) -> Tuple[float, float, float]:
    """``(cx, cy, mass)`` of one 0-based species; ``cx``/``cy`` are nan without mass."""
    values = field.data[species]
    mass = float(np.sum(values)) * field.domain.cell_area
    if not mass > MIN_CENTROID_MASS:
        return float("nan"), float("nan"), mass
    weights = values.sum(axis=1), values.sum(axis=0)
    cx = float(np.dot(field.domain.x_centers, weights[0]) / weights[0].sum())
    cy = float(np.dot(field.domain.y_centers, weights[1]) / weights[1].sum())
    return cx, cy, mass


def track_centroids(
    snapshots: Sequence[Field], params: Optional[ScenarioConfig] = None
) -> List[CentroidRecord]:
    """Mass-weighted centroid of every species in every snapshot.

    Species without mass at a snapshot leave a gap. Each species starts
    ``young``, turns ``old`` once its centroid enters the inner square of
    ``params`` and ``exited`` once it leaves ``[-1, 1]^2`` after that.

    :param snapshots:
        Fields ordered by time.
    :param ScenarioConfig params:
        (Optional) Scenario whose inner square is used; the default square
        has half width 0.5.
    :rtype: list
    """
    inner = (params or ScenarioConfig()).inner_square_halfwidth
    ages = {}
    records = []
    for snap in snapshots:
        for s in range(snap.n_species):
            cx, cy, mass = centroid(snap, s)
            if not mass > MIN_CENTROID_MASS:
                continue
            flag = ages.setdefault(s, _Age()).update(cx, cy, inner)
            records.append(CentroidRecord(snap.time, s + 1, cx, cy, mass, flag.value))
    return records


def write_centroids(records: Sequence[CentroidRecord], path: str) -> str:
    return write_csv(path, CENTROID_HEADER, records)


class InteractionEvent(NamedTuple):
    time: float
    pair: str
    location: Tuple[float, float]
    product: float


def detect_interaction(
    field: Field, threshold: float = INTERACTION_THRESHOLD
) -> Optional[InteractionEvent]:
    """Largest colliding product ``w1 w3`` or ``w2 w4`` above ``threshold * sup^2``.

    :rtype: InteractionEvent or None
    """
    if field.n_species != 4:
        raise BroadwellError("interaction detection needs the 4 Broadwell species")
    sup = sup_norm(field).value
    if not sup > 0:
        return None
    data = field.data
    best = None
    for pair, (a, b) in (("13", (0, 2)), ("24", (1, 3))):
        product = data[a] * data[b]
        ix, iy = np.unravel_index(int(np.argmax(product)), product.shape)
        value = float(product[ix, iy])
        if value > threshold * sup ** 2 and (best is None or value > best.product):
            location = (float(field.domain.x_centers[ix]), float(field.domain.y_centers[iy]))
            best = InteractionEvent(field.time, pair, location, value)
    if best is not None:
        logger.info(
            "interaction %s at t=%.6g near (%.3f, %.3f)", best.pair, best.time, *best.location
        )
    return best
