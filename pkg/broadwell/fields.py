"""
This module contains uniform-grid density fields.

A :class:`Field <Field>` stores one density per species on the cell centers
of a :class:`Domain <Domain>`. The same container holds the physical
densities ``u`` and the rescaled densities ``w``; a
:class:`FrameTransform <FrameTransform>` maps between the two.
"""
import enum
import glob
import logging
import math
import os
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from broadwell.exceptions import BroadwellError, InvalidFrameError
from broadwell.helpers import write_csv

logger = logging.getLogger(__name__)

SNAPSHOT_HEADER = ("species", "ix", "iy", "x", "y", "value")

# fractional grid coordinates closer than this to an integer are treated as nodes
_NODE_SNAP = 1e-9


class Boundary(enum.Enum):
    PERIODIC = "periodic"
    OUTFLOW = "outflow"


class Axis(enum.Enum):
    """Direction a line integral runs along."""

    X = "x"
    Y = "y"


@dataclass(frozen=True)
class Domain:
    """Rectangle split into ``nx`` by ``ny`` cells."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int
    boundary: Boundary = Boundary.OUTFLOW

    def __post_init__(self):
        if not self.xmax > self.xmin or not self.ymax > self.ymin:
            raise BroadwellError(
                f"empty domain [{self.xmin}, {self.xmax}] x [{self.ymin}, {self.ymax}]"
            )
        if self.nx < 4 or self.ny < 4:
            raise BroadwellError(f"need at least 4 cells per axis, got {self.nx}x{self.ny}")
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @classmethod
    def square(
        cls, halfwidth: float, n: int, boundary: Boundary = Boundary.OUTFLOW
    ) -> "Domain":
        """The square ``[-halfwidth, halfwidth]^2`` with ``n`` cells per side."""
        return cls(-halfwidth, halfwidth, -halfwidth, halfwidth, n, n, boundary)

    @property
    def hx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def hy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def x_centers(self) -> np.ndarray:
        return self.xmin + (np.arange(self.nx) + 0.5) * self.hx

    @property
    def y_centers(self) -> np.ndarray:
        return self.ymin + (np.arange(self.ny) + 0.5) * self.hy

    @property
    def x_edges(self) -> np.ndarray:
        return np.linspace(self.xmin, self.xmax, self.nx + 1)

    @property
    def y_edges(self) -> np.ndarray:
        return np.linspace(self.ymin, self.ymax, self.ny + 1)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates, ``indexing="ij"``."""
        return np.meshgrid(self.x_centers, self.y_centers, indexing="ij")

    def contains(self, x, y) -> np.ndarray:
        return (
            (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)
        )


class Field:
    """Non-negative multi-species densities on a :class:`Domain <Domain>`."""

    def __init__(
        self,
        domain: Domain,
        data,
        time: float = 0.0,
        clamped_mass: float = 0.0,
    ):
        """Construct a :class:`Field <Field>`.

        :param Domain domain:
            Grid the data lives on.
        :param data:
            Array of shape ``(N, nx, ny)``; ``data[i, ix, iy]`` is the density
            of species ``i`` in cell ``(ix, iy)``.
        :param float time:
            Simulation time (physical ``t`` or rescaled ``tau``).
        :param float clamped_mass:
            Mass removed so far by clamping negative round-off.
        """
        data = np.asarray(data, dtype=float)
        if data.ndim != 3 or data.shape[1:] != (domain.nx, domain.ny):
            raise BroadwellError(
                f"field data must have shape (N, {domain.nx}, {domain.ny}), got {data.shape}"
            )
        self.domain = domain
        self.data = data
        self.time = float(time)
        self.clamped_mass = float(clamped_mass)

    @classmethod
    def zeros(cls, domain: Domain, n_species: int = 4, time: float = 0.0) -> "Field":
        return cls(domain, np.zeros((n_species, domain.nx, domain.ny)), time=time)

    @classmethod
    def uniform(cls, domain: Domain, values: Sequence[float], time: float = 0.0) -> "Field":
        values = np.asarray(values, dtype=float)
        data = np.broadcast_to(values[:, None, None], (len(values), domain.nx, domain.ny))
        return cls(domain, data.copy(), time=time)

    @property
    def n_species(self) -> int:
        return self.data.shape[0]

    @property
    def diverged(self) -> bool:
        return not bool(np.all(np.isfinite(self.data)))

    def evolve(self, data: np.ndarray, time: float, clamped: float = 0.0) -> "Field":
        """A new field on the same domain, carrying the clamp diagnostic."""
        return Field(self.domain, data, time=time, clamped_mass=self.clamped_mass + clamped)

    def copy(self) -> "Field":
        return Field(self.domain, self.data.copy(), self.time, self.clamped_mass)

    def total_mass(self) -> float:
        """Integral of the summed densities over the whole domain."""
        return float(np.sum(self.data) * self.domain.cell_area)

    def __repr__(self):
        return (
            f"<Field: {self.n_species} species on {self.domain.nx}x{self.domain.ny}, "
            f"t={self.time:.6g}>"
        )


def random_field(
    domain: Domain, amplitude: float, seed: int = 0, n_species: int = 4, time: float = 0.0
) -> Field:
    """Seeded random densities in ``[0, amplitude]``, smoothed by a 3x3 box average.

    The average never exceeds the largest input value, so the result stays
    within ``[0, amplitude]``.
    """
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.0, amplitude, size=(n_species, domain.nx, domain.ny))
    mode = "wrap" if domain.periodic else "reflect"
    return Field(domain, ndimage.uniform_filter(raw, size=(1, 3, 3), mode=mode), time=time)


class SupNorm(NamedTuple):
    value: float
    species: int
    location: Tuple[float, float]
    diverged: bool = False


@dataclass(frozen=True)
class FrameTransform:
    """Blow-up anchored change of variables.

    ``tau = -ln(t_star - t)``, ``eta = (x - x_star) / (t_star - t)``,
    ``w = (t_star - t) u``.
    """

    t_star: float
    x_star: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.t_star > 0:
            raise BroadwellError(f"t_star must be positive, got {self.t_star}")
        object.__setattr__(self, "x_star", (float(self.x_star[0]), float(self.x_star[1])))

    def tau(self, t: float) -> float:
        if t >= self.t_star:
            raise InvalidFrameError(t, self.t_star)
        return -math.log(self.t_star - t)

    def t(self, tau: float) -> float:
        return self.t_star - math.exp(-tau)


def clamp_negative(data: np.ndarray, cell_area: float) -> float:
    """Zero out negative entries in place.

    :returns:
        The mass that was removed (non-negative).
    """
    negative = data < 0.0
    if not negative.any():
        return 0.0
    removed = -float(np.sum(data[negative])) * cell_area
    data[negative] = 0.0
    return removed


def _fractional_index(domain: Domain, xs, ys) -> np.ndarray:
    fx = (np.asarray(xs, dtype=float) - domain.xmin) / domain.hx - 0.5
    fy = (np.asarray(ys, dtype=float) - domain.ymin) / domain.hy - 0.5
    coords = np.stack([fx, fy])
    nearest = np.rint(coords)
    snap = np.abs(coords - nearest) < _NODE_SNAP
    coords[snap] = nearest[snap]
    return coords


def sample_array(
    domain: Domain, values: np.ndarray, xs, ys, order: int = 1
) -> np.ndarray:
    """Interpolate one grid array at arbitrary points.

    Periodic domains wrap; outflow domains read vacuum (0) outside the
    rectangle and extend the edge cells over the half cell between the last
    cell centre and the boundary. Order 1 is bilinear, order 3 cubic
    followed by a clamp at 0.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    coords = _fractional_index(domain, xs, ys)
    if domain.periodic:
        out = ndimage.map_coordinates(values, coords, order=order, mode="grid-wrap")
    else:
        out = ndimage.map_coordinates(values, coords, order=order, mode="nearest")
        out = np.where(domain.contains(xs, ys), out, 0.0)
    if order > 1:
        out = np.maximum(out, 0.0)
    return out


def sample(field: Field, species: int, xs, ys, order: int = 1) -> np.ndarray:
    """Vectorized :func:`interpolate`."""
    return sample_array(field.domain, field.data[species], xs, ys, order=order)


def interpolate(field: Field, species: int, point: Sequence[float], order: int = 1) -> float:
    """Interpolated density of one species at one point.

    :param Field field:
        Source field.
    :param int species:
        0-based species index.
    :param point:
        ``(x, y)``.
    :param int order:
        1 for bilinear (default), 3 for cubic.
    :rtype: float
    """
    value = sample(field, species, [point[0]], [point[1]], order=order)
    return float(value[0])


def overlap_weights(edges: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Length of each cell ``[edges[i], edges[i+1]]`` lying inside ``[lo, hi]``."""
    if hi <= lo:
        return np.zeros(len(edges) - 1)
    left = np.maximum(edges[:-1], lo)
    right = np.minimum(edges[1:], hi)
    return np.clip(right - left, 0.0, None)


def nearest_line(domain: Domain, axis: Axis, coord: float) -> int:
    """Index of the grid line closest to ``coord``.

    For ``Axis.X`` the line runs along x, so ``coord`` is a y value.
    """
    if axis is Axis.X:
        index = (coord - domain.ymin) / domain.hy - 0.5
        count = domain.ny
    else:
        index = (coord - domain.xmin) / domain.hx - 0.5
        count = domain.nx
    return int(min(max(round(index), 0), count - 1))


def _line_values(field: Field, species, axis: Axis, index: int) -> np.ndarray:
    data = field.data[species]
    if axis is Axis.X:
        return data[..., :, index]
    return data[..., index, :]


def line_integral(
    field: Field,
    species,
    axis: Axis,
    coord: float,
    lo: float = -1.0,
    hi: float = 1.0,
) -> float:
    """Midpoint-rule integral along the grid line nearest to ``coord``.

    :param Field field:
        Source field.
    :param species:
        0-based species index, or a sequence of indices whose densities are
        summed.
    :param Axis axis:
        ``Axis.X`` integrates over x at fixed y = ``coord``.
    :param float coord:
        Position of the line.
    :param float lo:
        Start of the segment.
    :param float hi:
        End of the segment.
    :rtype: float
    """
    domain = field.domain
    edges = domain.x_edges if axis is Axis.X else domain.y_edges
    weights = overlap_weights(edges, lo, hi)
    if not weights.any():
        return 0.0
    values = _line_values(field, species, axis, nearest_line(domain, axis, coord))
    if values.ndim == 2:
        values = values.sum(axis=0)
    return float(np.dot(weights, values))


def line_integral_at(
    field: Field,
    species,
    axis: Axis,
    coord: float,
    lo: float = -1.0,
    hi: float = 1.0,
) -> float:
    """Line integral at an arbitrary ``coord``.

    Interpolates linearly between the integrals on the two grid lines that
    bracket ``coord``, which is the exact integral of the bilinear
    representation.
    """
    domain = field.domain
    if axis is Axis.X:
        frac = (coord - domain.ymin) / domain.hy - 0.5
        count, h, origin = domain.ny, domain.hy, domain.ymin
    else:
        frac = (coord - domain.xmin) / domain.hx - 0.5
        count, h, origin = domain.nx, domain.hx, domain.xmin
    frac = min(max(frac, 0.0), count - 1.0)
    below = int(math.floor(frac))
    above = min(below + 1, count - 1)
    t = frac - below
    at = lambda i: line_integral(field, species, axis, origin + (i + 0.5) * h, lo, hi)  # noqa: E731
    if t == 0.0 or above == below:
        return at(below)
    return (1.0 - t) * at(below) + t * at(above)


def box_integral(
    field: Field,
    species,
    lo: Tuple[float, float] = (-1.0, -1.0),
    hi: Tuple[float, float] = (1.0, 1.0),
) -> float:
    """Midpoint double integral over the box ``[lo, hi]``.

    Cells cut by the box edges count with their overlap area.
    """
    domain = field.domain
    wx = overlap_weights(domain.x_edges, lo[0], hi[0])
    wy = overlap_weights(domain.y_edges, lo[1], hi[1])
    values = field.data[species]
    if values.ndim == 3:
        values = values.sum(axis=0)
    return float(wx @ values @ wy)


def sup_norm(field: Field, region: Optional[Tuple[float, float]] = None) -> SupNorm:
    """Largest stored density and where it sits.

    :param Field field:
        Field to scan.
    :param region:
        (Optional) ``(lo, hi)``: only scan cells whose centers lie in the
        square ``[lo, hi]^2``.
    :rtype: SupNorm
    """
    if field.diverged:
        return SupNorm(math.inf, -1, (math.nan, math.nan), diverged=True)
    data = field.data
    domain = field.domain
    if region is not None:
        xs, ys = domain.x_centers, domain.y_centers
        mx = (xs >= region[0]) & (xs <= region[1])
        my = (ys >= region[0]) & (ys <= region[1])
        data = np.where(mx[None, :, None] & my[None, None, :], data, -np.inf)
    if data.size == 0:
        return SupNorm(0.0, 0, (math.nan, math.nan))
    flat = int(np.argmax(data))
    species, ix, iy = np.unravel_index(flat, data.shape)
    value = float(data[species, ix, iy])
    if value == -np.inf:
        return SupNorm(0.0, 0, (math.nan, math.nan))
    return SupNorm(
        value,
        int(species),
        (float(domain.x_centers[ix]), float(domain.y_centers[iy])),
    )


def to_rescaled(
    u_field: Field, frame: FrameTransform, target_domain: Domain, order: int = 1
) -> Field:
    """Express a physical field in the rescaled frame.

    Each target node ``eta`` reads ``u`` at ``x = x_star + (t_star - t) eta``.

    :param Field u_field:
        Physical densities at time ``t < t_star``.
    :param FrameTransform frame:
        The blow-up anchor.
    :param Domain target_domain:
        Grid in the ``eta`` variables.
    :rtype: Field
    """
    tau = frame.tau(u_field.time)
    scale = frame.t_star - u_field.time
    eta_x, eta_y = target_domain.mesh()
    xs = frame.x_star[0] + scale * eta_x
    ys = frame.x_star[1] + scale * eta_y
    data = np.stack(
        [scale * sample(u_field, i, xs, ys, order=order) for i in range(u_field.n_species)]
    )
    return Field(target_domain, data, time=tau)


def from_rescaled(
    w_field: Field, frame: FrameTransform, target_domain: Domain, order: int = 1
) -> Field:
    """Inverse of :func:`to_rescaled`.

    :param Field w_field:
        Rescaled densities at time ``tau``.
    :param FrameTransform frame:
        The blow-up anchor.
    :param Domain target_domain:
        Grid in the physical variables.
    :rtype: Field
    """
    scale = math.exp(-w_field.time)
    t = frame.t_star - scale
    if not scale > 0:
        raise InvalidFrameError(t, frame.t_star)
    xs, ys = target_domain.mesh()
    eta_x = (xs - frame.x_star[0]) / scale
    eta_y = (ys - frame.x_star[1]) / scale
    data = np.stack(
        [sample(w_field, i, eta_x, eta_y, order=order) / scale for i in range(w_field.n_species)]
    )
    return Field(target_domain, data, time=t)


def snapshot_filename(time: float) -> str:
    return f"snap_t{time:.6f}.csv"


def write_snapshot(field: Field, directory: str) -> str:
    """Write one snapshot csv and return its path."""
    domain = field.domain
    xs, ys = domain.x_centers, domain.y_centers

    def rows():
        for s in range(field.n_species):
            values = field.data[s]
            for ix in range(domain.nx):
                for iy in range(domain.ny):
                    yield (s + 1, ix, iy, float(xs[ix]), float(ys[iy]), float(values[ix, iy]))

    path = os.path.join(directory, snapshot_filename(field.time))
    return write_csv(path, SNAPSHOT_HEADER, rows())


def read_snapshot(path: str, domain: Domain) -> Field:
    """Load a snapshot written by :func:`write_snapshot`."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_species = int(table[:, 0].max()) if len(table) else 0
    data = np.zeros((n_species, domain.nx, domain.ny))
    species = table[:, 0].astype(int) - 1
    ix = table[:, 1].astype(int)
    iy = table[:, 2].astype(int)
    data[species, ix, iy] = table[:, 5]
    stem = os.path.basename(path)[len("snap_t"):-len(".csv")]
    return Field(domain, data, time=float(stem))


def list_snapshots(directory: str):
    """Snapshot paths in ``directory`` ordered by time."""
    paths = glob.glob(os.path.join(directory, "snap_t*.csv"))
    return sorted(paths, key=lambda p: float(os.path.basename(p)[6:-4]))
