"""
This module contains discrete-velocity models.

A :class:`VelocityModel <VelocityModel>` holds the particle speeds and the
collision tensor ``a[i, j, k]`` (rate at which i-particles are created by
j/k collisions). The tensor is symmetrized in ``(j, k)`` on construction,
since only the symmetric part acts on ``u_j u_k``.
"""
import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from broadwell.exceptions import ModelError, ModelFileError

logger = logging.getLogger(__name__)

CONSERVATION_TOL = 1e-12

BROADWELL_SPEEDS = ((1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0))


class ValidationReport(NamedTuple):
    """Largest violation of each conservation identity family."""

    mass: float
    momentum: float
    energy: float
    tol: float = CONSERVATION_TOL

    @property
    def valid(self) -> bool:
        return max(self.mass, self.momentum, self.energy) <= self.tol


@dataclass(frozen=True, eq=False)
class VelocityModel:
    """Speeds ``c_i`` in the plane plus the collision tensor ``a_ijk``."""

    speeds: np.ndarray
    coeffs: np.ndarray
    names: Optional[Tuple[str, ...]] = None
    _terms: Tuple[Tuple[Tuple[int, int, float], ...], ...] = field(
        default=(), init=False, repr=False, compare=False
    )

    def __post_init__(self):
        speeds = np.array(self.speeds, dtype=float)
        if speeds.ndim != 2 or speeds.shape[1] != 2 or speeds.shape[0] < 1:
            raise ModelError(f"speeds must be an N x 2 array, got shape {speeds.shape}")
        if not np.all(np.isfinite(speeds)):
            raise ModelError("speeds must be finite")
        n = speeds.shape[0]

        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.shape != (n, n, n):
            raise ModelError(
                f"coeffs must have shape {(n, n, n)}, got {coeffs.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ModelError("coeffs must be finite")
        coeffs = 0.5 * (coeffs + coeffs.transpose(0, 2, 1))

        names = self.names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != n:
                raise ModelError(f"expected {n} species names, got {len(names)}")

        speeds.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "speeds", speeds)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_terms", _pair_terms(coeffs))

    @property
    def n_species(self) -> int:
        return self.speeds.shape[0]

    @property
    def max_speed(self) -> float:
        """C = max_i |c_i|."""
        return float(np.max(np.hypot(self.speeds[:, 0], self.speeds[:, 1])))

    def species_label(self, i: int) -> str:
        if self.names:
            return self.names[i]
        return str(i + 1)


def _pair_terms(coeffs: np.ndarray):
    # Per species, the nonzero (j <= k) products in a fixed order. Summing in
    # this order makes species with mirrored coefficients produce exactly
    # negated rates.
    n = coeffs.shape[0]
    terms = []
    for i in range(n):
        row = []
        for j in range(n):
            for k in range(j, n):
                a = coeffs[i, j, k] if j == k else coeffs[i, j, k] + coeffs[i, k, j]
                if a != 0.0:
                    row.append((j, k, float(a)))
        terms.append(tuple(row))
    return tuple(terms)


def broadwell2d() -> VelocityModel:
    """The planar Broadwell model with diagonal speeds.

    Species 1..4 move with (1,1), (1,-1), (-1,-1), (-1,1); a 1/3 pair turns
    into a 2/4 pair and back.

    :rtype: VelocityModel
    """
    coeffs = np.zeros((4, 4, 4))
    # 0-based: gain from (2,4) for species 1 and 3, from (1,3) for 2 and 4
    for i, gain, loss in ((0, (1, 3), (0, 2)), (2, (1, 3), (0, 2)),
                          (1, (0, 2), (1, 3)), (3, (0, 2), (1, 3))):
        coeffs[i][gain] = 1.0
        coeffs[i][loss] = -1.0
    return VelocityModel(
        speeds=np.array(BROADWELL_SPEEDS), coeffs=coeffs, names=("1", "2", "3", "4")
    )


def is_broadwell(model: VelocityModel) -> bool:
    """Whether ``model`` carries the Broadwell speeds and tensor."""
    reference = broadwell2d()
    return (
        model.n_species == 4
        and np.array_equal(model.speeds, reference.speeds)
        and np.array_equal(model.coeffs, reference.coeffs)
    )


def validate_conservation(model: VelocityModel) -> ValidationReport:
    """Check mass, momentum and energy conservation of the collision tensor.

    A failing model yields a report, never an exception.

    :param VelocityModel model:
        Model to check.
    :rtype: ValidationReport
    """
    a = model.coeffs
    c = model.speeds
    mass = np.abs(a.sum(axis=0))
    momentum = np.abs(np.einsum("id,ijk->djk", c, a))
    energy = np.abs(np.einsum("i,ijk->jk", np.sum(c * c, axis=1), a))
    report = ValidationReport(
        mass=float(mass.max()),
        momentum=float(momentum.max()),
        energy=float(energy.max()),
    )
    if not report.valid:
        logger.debug("model fails conservation check: %s", report)
    return report


def collision_rhs(model: VelocityModel, u) -> np.ndarray:
    """Evaluate ``sum_jk a_ijk u_j u_k`` for every species.

    ``u`` may carry trailing grid axes: shape ``(N,)`` or ``(N, nx, ny)``.

    :param VelocityModel model:
        The velocity model.
    :param u:
        Densities, species first.
    :rtype: numpy.ndarray
    :returns:
        Production rates with the same shape as ``u``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 0 or u.shape[0] != model.n_species:
        raise ModelError(
            f"density vector has {u.shape[0] if u.ndim else 0} species, "
            f"model has {model.n_species}"
        )
    rates = np.zeros_like(u)
    for i, terms in enumerate(model._terms):
        acc = rates[i]
        for j, k, a in terms:
            acc += a * (u[j] * u[k])
        rates[i] = acc
    return rates


def parse_model(text: str, path: str = "<string>") -> VelocityModel:
    """Parse the plain-text model format.

    ``N=<int>`` header, then N lines ``c <vx> <vy>``, then any number of
    ``a <i> <j> <k> <value>`` lines with 1-based indices. Blank lines and
    ``#`` comments are ignored.

    :param str text:
        Model description.
    :param str path:
        Name used in error messages.
    :rtype: VelocityModel
    """
    lines = [
        (no, raw.split("#", 1)[0].strip())
        for no, raw in enumerate(text.splitlines(), start=1)
    ]
    lines = [(no, line) for no, line in lines if line]
    if not lines:
        raise ModelFileError(path, 1, "empty model description")

    no, header = lines[0]
    key, _, value = header.partition("=")
    if key.strip() != "N" or not value.strip():
        raise ModelFileError(path, no, "expected header 'N=<int>'")
    try:
        n = int(value)
    except ValueError:
        raise ModelFileError(path, no, f"N must be an integer, got {value.strip()!r}")
    if n < 1:
        raise ModelFileError(path, no, "N must be at least 1")

    speeds: List[Tuple[float, float]] = []
    coeffs = np.zeros((n, n, n))
    for no, line in lines[1:]:
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "c":
                if len(parts) != 3:
                    raise ModelFileError(path, no, "expected 'c <vx> <vy>'")
                if len(speeds) == n:
                    raise ModelFileError(path, no, f"more than N={n} speed lines")
                speeds.append((float(parts[1]), float(parts[2])))
            elif tag == "a":
                if len(parts) != 5:
                    raise ModelFileError(path, no, "expected 'a <i> <j> <k> <value>'")
                if len(speeds) != n:
                    raise ModelFileError(path, no, "coefficient before all speed lines")
                i, j, k = (int(p) - 1 for p in parts[1:4])
                if not all(0 <= idx < n for idx in (i, j, k)):
                    raise ModelFileError(path, no, f"index out of range 1..{n}")
                coeffs[i, j, k] = float(parts[4])
            else:
                raise ModelFileError(path, no, f"unknown line tag {tag!r}")
        except ValueError as err:
            raise ModelFileError(path, no, f"bad number: {err}")
    if len(speeds) != n:
        raise ModelFileError(path, lines[-1][0], f"expected {n} speed lines, got {len(speeds)}")
    return VelocityModel(speeds=np.array(speeds), coeffs=coeffs)


def load_model(path: str) -> VelocityModel:
    """Read a model file from disk.

    :param str path:
        Path of the model file.
    :rtype: VelocityModel
    """
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read(), path=path)


def dump_model(model: VelocityModel) -> str:
    """Serialize ``model`` in the format read by :func:`parse_model`.

    The symmetrized tensor is written, so a dump/parse cycle is stable.
    """
    out = [f"N={model.n_species}"]
    out.extend(f"c {vx!r} {vy!r}" for vx, vy in model.speeds.tolist())
    for i, j, k in zip(*np.nonzero(model.coeffs)):
        out.append(f"a {i + 1} {j + 1} {k + 1} {float(model.coeffs[i, j, k])!r}")
    return "\n".join(out) + "\n"
