"""
This module contains the integrator for the rescaled Broadwell system.

In the rescaled frame species ``i`` drifts with ``c_i + eta`` and is damped
by ``-w_i``. The drift is affine, so characteristics are exponentials:
``x' = x + s`` runs backward to ``(x + s) e^-dt - s``.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from broadwell.exceptions import CflViolation, StepConfigError
from broadwell.fields import Boundary, Domain, Field, clamp_negative, sample_array, sup_norm
from broadwell.functionals import MonitorSet, Theorem2Params
from broadwell.helpers import map_species
from broadwell.model import BROADWELL_SPEEDS, broadwell2d
from broadwell.solver_physical import (
    CollisionIntegrator,
    RunResult,
    collide,
    march,
)

logger = logging.getLogger(__name__)

STATIONARY_TOL = 1e-6
NONSTATIONARY_TAG = "nonstationary"


@dataclass(frozen=True)
class RescaledStepConfig:
    dt: float = 0.02
    L: float = 3.0
    collision_integrator: CollisionIntegrator = CollisionIntegrator.RK2
    interp_order: int = 1
    collisions: bool = True
    cap_theta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(
            self, "collision_integrator", CollisionIntegrator(self.collision_integrator)
        )
        if not self.dt > 0:
            raise StepConfigError(f"rescaled dt must be positive, got {self.dt}")
        if not self.L > 1:
            raise StepConfigError(f"domain halfwidth L must exceed 1, got {self.L}")
        if self.interp_order not in (1, 3):
            raise StepConfigError(f"interp_order must be 1 or 3, got {self.interp_order}")
        if self.cap_theta is not None:
            # validates 0 < theta < 1/4
            Theorem2Params(self.cap_theta)

    def domain(self, n: int) -> Domain:
        """The computational square ``[-L, L]^2`` with ``n`` cells per side."""
        return Domain.square(self.L, n, Boundary.OUTFLOW)


def characteristic_foot(
    point: Sequence[float], species: int, dt: float
) -> Tuple[float, float]:
    """Where the characteristic through ``point`` was ``dt`` earlier.

    :param point:
        ``(x, y)`` in rescaled variables.
    :param int species:
        0-based Broadwell species; the drift is ``c_i + eta``.
    :param float dt:
        Backward time.
    :rtype: tuple
    """
    decay = math.exp(-dt)
    cx, cy = BROADWELL_SPEEDS[species]
    return ((point[0] + cx) * decay - cx, (point[1] + cy) * decay - cy)


def forward_flow(point: Sequence[float], species: int, dt: float) -> Tuple[float, float]:
    """Inverse of :func:`characteristic_foot`."""
    return characteristic_foot(point, species, -dt)


def outflow_check(L: float) -> Dict[Tuple[str, int], bool]:
    """Whether every drift on the boundary of ``[-L, L]^2`` points out or along it.

    :returns:
        ``{(edge, species): ok}`` for the edges ``left``, ``right``,
        ``bottom``, ``top`` and 0-based species.
    """
    table = {}
    for species, (cx, cy) in enumerate(BROADWELL_SPEEDS):
        table[("left", species)] = cx - L <= 0.0
        table[("right", species)] = cx + L >= 0.0
        table[("bottom", species)] = cy - L <= 0.0
        table[("top", species)] = cy + L >= 0.0
    return table


def _check_cfl(field: Field, dt: float) -> None:
    sup = sup_norm(field).value
    if dt * sup > 1.0:
        raise CflViolation(dt, 1.0 / sup)


def _apply_cap(data: np.ndarray, theta: float, tau: float, cell_area: float) -> float:
    params = Theorem2Params(theta)
    if tau < params.t0 * (1.0 - 1e-12):
        return 0.0
    cap = params.cap(tau)
    over = data > cap
    if not over.any():
        return 0.0
    removed = float(np.sum(data[over] - cap)) * cell_area
    data[over] = cap
    return removed


def step_rescaled(field: Field, cfg: RescaledStepConfig) -> Field:
    """Advance the rescaled Broadwell system by ``cfg.dt``.

    Half a reaction step of ``Q(w) - w``, semi-Lagrangian streaming along
    the exact exponential characteristics with vacuum inflow, half a
    reaction step.

    :param Field field:
        Rescaled densities on an outflow domain.
    :param RescaledStepConfig cfg:
        Step configuration.
    :raises CflViolation:
        ``dt * sup(w) > 1``.
    :rtype: Field
    """
    if field.n_species != 4:
        raise StepConfigError(f"the rescaled solver needs 4 species, got {field.n_species}")
    if field.domain.periodic:
        raise StepConfigError("the rescaled system lives on an outflow domain")
    dt = cfg.dt
    _check_cfl(field, dt)
    model = broadwell2d()
    domain = field.domain

    def react(data):
        if cfg.collisions:
            return collide(data, model, 0.5 * dt, cfg.collision_integrator, damping=True)
        return data * math.exp(-0.5 * dt)

    data = react(field.data)
    xs, ys = domain.mesh()
    streamed = np.empty_like(data)

    def move(i):
        fx, fy = characteristic_foot((xs, ys), i, dt)
        streamed[i] = sample_array(domain, data[i], fx, fy, order=cfg.interp_order)

    map_species(move, 4)
    data = react(streamed)
    tau = field.time + dt
    clamped = 0.0
    if np.all(np.isfinite(data)):
        clamped = clamp_negative(data, domain.cell_area)
        if cfg.cap_theta is not None:
            clamped += _apply_cap(data, cfg.cap_theta, tau, domain.cell_area)
    return field.evolve(data, tau, clamped)


def run_rescaled(
    initial: Field,
    cfg: RescaledStepConfig,
    t_end: float,
    monitors: Optional[MonitorSet] = None,
    every_t: float = 0.1,
    snap_every_t: float = 0.0,
) -> RunResult:
    """Integrate the rescaled system from ``initial`` to ``t_end``.

    Besides the monitors, records ``residual``, the sup distance between
    consecutive steps, on the output cadence. A run that completes with a
    final residual above ``1e-6`` is tagged ``nonstationary``.

    :rtype: RunResult
    """
    last_residual = [0.0]

    def advance(field: Field, remaining: float) -> Field:
        if remaining < cfg.dt * (1.0 - 1e-9):
            logger.debug("last rescaled step shortened to %.6g", remaining)
            return step_rescaled(field, replace(cfg, dt=remaining))
        return step_rescaled(field, cfg)

    def on_step(previous: Field, current: Field) -> None:
        last_residual[0] = float(np.max(np.abs(current.data - previous.data), initial=0.0))

    def on_sample(field: Field, series) -> None:
        series.append(field.time, "residual", last_residual[0])

    result = march(
        initial,
        t_end,
        advance,
        monitors,
        every_t,
        snap_every_t,
        on_step=on_step,
        on_sample=on_sample,
    )
    if result.completed and last_residual[0] > STATIONARY_TOL:
        result.tags.append(NONSTATIONARY_TAG)
    return result

