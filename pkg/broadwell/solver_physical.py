"""
This module contains the time integrators for the physical system.

Steps are Strang split: half a collision step, free streaming along ``c_i``,
half a collision step. :func:`march` is the shared run loop used by both
frames; :func:`picard_solve` iterates the Duhamel form of the system.
"""
import enum
import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, List, Optional, Tuple

import numpy as np

from broadwell.exceptions import CflViolation, NonContraction, StepConfigError
from broadwell.fields import Field, clamp_negative, sample_array, sup_norm
from broadwell.functionals import FunctionalSeries, MonitorSet
from broadwell.helpers import map_species
from broadwell.model import VelocityModel, collision_rhs, is_broadwell

logger = logging.getLogger(__name__)

DT_UNDERFLOW = 1e-12
CLAMP_BUDGET = 1e-8
MIN_PICARD_SUBSTEPS = 8

# relative slack when comparing times and step sizes
_TIME_TOL = 1e-12


class DtMode(enum.Enum):
    LOCKSTEP = "lockstep"
    FREE = "free"


class CollisionIntegrator(enum.Enum):
    RK2 = "rk2"
    EXACT_PAIR = "exact_pair"


class RunStatus(enum.Enum):
    COMPLETED = "Completed"
    DIVERGED = "Diverged"
    DT_UNDERFLOW = "DtUnderflow"


@dataclass(frozen=True)
class PhysicalStepConfig:
    dt_mode: DtMode = DtMode.LOCKSTEP
    collision_integrator: CollisionIntegrator = CollisionIntegrator.RK2
    dt_max: float = 0.01
    density_cfl: float = 0.5
    interp_order: int = 1

    def __post_init__(self):
        object.__setattr__(self, "dt_mode", DtMode(self.dt_mode))
        object.__setattr__(
            self, "collision_integrator", CollisionIntegrator(self.collision_integrator)
        )
        if not 0.0 < self.density_cfl <= 1.0:
            raise StepConfigError(f"density_cfl must lie in (0, 1], got {self.density_cfl}")
        if not self.dt_max > 0:
            raise StepConfigError(f"dt_max must be positive, got {self.dt_max}")
        if self.interp_order not in (1, 3):
            raise StepConfigError(f"interp_order must be 1 or 3, got {self.interp_order}")


@dataclass(frozen=True)
class PicardConfig:
    T: float
    tol: float = 1e-8
    max_iters: int = 30
    substeps: int = 16
    interp_order: int = 1

    def __post_init__(self):
        if not self.T > 0:
            raise StepConfigError(f"Picard horizon T must be positive, got {self.T}")
        if not self.tol > 0:
            raise StepConfigError(f"Picard tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise StepConfigError(f"Picard max_iters must be at least 1, got {self.max_iters}")
        if self.substeps < MIN_PICARD_SUBSTEPS:
            raise StepConfigError(
                f"Picard substeps must be at least {MIN_PICARD_SUBSTEPS}, got {self.substeps}"
            )


@dataclass
class RunResult:
    """Outcome of :func:`run_physical` or :func:`run_rescaled`."""

    field: Field
    series: FunctionalSeries
    status: RunStatus
    snapshots: List[Field] = dc_field(default_factory=list)
    sup_trace: List[Tuple[float, float]] = dc_field(default_factory=list)
    tags: List[str] = dc_field(default_factory=list)
    steps: int = 0

    @property
    def completed(self) -> bool:
        return self.status is RunStatus.COMPLETED

    def __repr__(self):
        return (
            f"<RunResult: {self.status.value} at t={self.field.time:.6g} "
            f"after {self.steps} steps>"
        )


def required_dt(field: Field, density_cfl: float) -> float:
    """Largest step with ``dt * max(1, sup) <= density_cfl``."""
    sup = sup_norm(field).value
    return density_cfl / max(1.0, sup)


def exact_pair_exchange(u: np.ndarray, dt: float) -> np.ndarray:
    """Integrate the pointwise Broadwell collision ODE over ``dt`` exactly.

    With ``s1 = u1 + u2``, ``s2 = u3 + u4`` and ``s3 = u1 + u4`` frozen, the
    quadratic terms cancel and ``u1' = s1 s3 - S u1`` with ``S = s1 + s2``.
    The increment of ``u1`` is applied to all four species with alternating
    sign, so the pair sums are untouched.
    """
    u1, u2, u3, u4 = u
    s1 = u1 + u2
    s3 = u1 + u4
    total = s1 + u3 + u4
    decay = -np.expm1(-total * dt)
    # decay / total, continued by dt where total vanishes
    phi = np.divide(decay, total, out=np.full_like(total, dt), where=total > 0)
    delta = (s1 * s3 - total * u1) * phi
    return np.stack([u1 + delta, u2 - delta, u3 + delta, u4 - delta])


def heun(rate: Callable[[np.ndarray], np.ndarray], u: np.ndarray, dt: float) -> np.ndarray:
    """One explicit trapezoidal (Heun) step of ``u' = rate(u)``."""
    k1 = rate(u)
    k2 = rate(u + dt * k1)
    return u + 0.5 * dt * (k1 + k2)


def collide(
    data: np.ndarray,
    model: VelocityModel,
    dt: float,
    integrator: CollisionIntegrator,
    substeps: int = 1,
    damping: bool = False,
) -> np.ndarray:
    """Advance the pointwise reaction ``Q(u)`` (minus ``u`` if ``damping``) over ``dt``."""
    h = dt / substeps
    if integrator is CollisionIntegrator.EXACT_PAIR:
        if not is_broadwell(model):
            raise StepConfigError("exact pair exchange is only defined for the Broadwell model")
        for _ in range(substeps):
            if damping:
                # v = e^t w in the time variable 1 - e^-t obeys the undamped system
                data = math.exp(-h) * exact_pair_exchange(data, -math.expm1(-h))
            else:
                data = exact_pair_exchange(data, h)
        return data

    if damping:
        rate = lambda u: collision_rhs(model, u) - u  # noqa: E731
    else:
        rate = lambda u: collision_rhs(model, u)  # noqa: E731
    for _ in range(substeps):
        data = heun(rate, data, h)
    return data


def check_lockstep(field: Field, model: VelocityModel) -> None:
    """LockStep shifts by whole cells: square cells and unit speed components."""
    domain = field.domain
    if abs(domain.hx - domain.hy) > _TIME_TOL * max(domain.hx, domain.hy):
        raise StepConfigError(
            f"lockstep needs square cells, got hx={domain.hx!r} hy={domain.hy!r}"
        )
    if not np.all(np.abs(model.speeds) == 1.0):
        raise StepConfigError("lockstep needs every speed component to be +1 or -1")


def _shift(values: np.ndarray, sx: int, sy: int, periodic: bool) -> np.ndarray:
    # out[ix, iy] = values[ix - sx, iy - sy]
    if periodic:
        return np.roll(values, (sx, sy), axis=(0, 1))
    out = np.zeros_like(values)
    nx, ny = values.shape
    dst_x = slice(max(sx, 0), nx + min(sx, 0))
    src_x = slice(max(-sx, 0), nx + min(-sx, 0))
    dst_y = slice(max(sy, 0), ny + min(sy, 0))
    src_y = slice(max(-sy, 0), ny + min(-sy, 0))
    out[dst_x, dst_y] = values[src_x, src_y]
    return out


def advect(
    data: np.ndarray,
    field: Field,
    model: VelocityModel,
    dt: float,
    mode: DtMode,
    order: int = 1,
) -> np.ndarray:
    """Move every species along its speed for ``dt``."""
    domain = field.domain
    out = np.empty_like(data)
    if mode is DtMode.LOCKSTEP:
        def move(i):
            cx, cy = model.speeds[i]
            out[i] = _shift(data[i], int(cx), int(cy), domain.periodic)
    else:
        xs, ys = domain.mesh()

        def move(i):
            cx, cy = model.speeds[i]
            out[i] = sample_array(domain, data[i], xs - cx * dt, ys - cy * dt, order=order)

    map_species(move, model.n_species)
    return out


def strang_step(
    field: Field,
    model: VelocityModel,
    cfg: PhysicalStepConfig,
    dt: float,
    mode: DtMode,
    collision_substeps: int = 1,
) -> Field:
    """Collide ``dt/2``, stream ``dt``, collide ``dt/2``; no CFL check."""
    data = collide(field.data, model, 0.5 * dt, cfg.collision_integrator, collision_substeps)
    data = advect(data, field, model, dt, mode, cfg.interp_order)
    data = collide(data, model, 0.5 * dt, cfg.collision_integrator, collision_substeps)
    clamped = 0.0
    if np.all(np.isfinite(data)):
        clamped = clamp_negative(data, field.domain.cell_area)
    return field.evolve(data, field.time + dt, clamped)


def step_physical(
    field: Field,
    model: VelocityModel,
    cfg: PhysicalStepConfig,
    dt: Optional[float] = None,
) -> Field:
    """Advance the physical system by one Strang-split step.

    :param Field field:
        Current densities.
    :param VelocityModel model:
        The velocity model.
    :param PhysicalStepConfig cfg:
        Step configuration.
    :param float dt:
        (Optional) Step size. LockStep always steps by the cell size; Free
        mode defaults to ``cfg.dt_max``.
    :raises CflViolation:
        ``dt * max(1, sup) > density_cfl``.
    :rtype: Field
    """
    if model.n_species != field.n_species:
        raise StepConfigError(
            f"field has {field.n_species} species, model has {model.n_species}"
        )
    if cfg.dt_mode is DtMode.LOCKSTEP:
        check_lockstep(field, model)
        h = field.domain.hx
        if dt is not None and abs(dt - h) > _TIME_TOL * h:
            raise StepConfigError(f"lockstep steps by the cell size {h!r}, got dt={dt!r}")
        dt = h
    elif dt is None:
        dt = cfg.dt_max
    if not dt > 0:
        raise StepConfigError(f"dt must be positive, got {dt}")
    limit = required_dt(field, cfg.density_cfl)
    if dt > limit * (1.0 + _TIME_TOL):
        raise CflViolation(dt, limit)
    return strang_step(field, model, cfg, dt, cfg.dt_mode)


def march(
    initial: Field,
    t_end: float,
    advance: Callable[[Field, float], Optional[Field]],
    monitors: Optional[MonitorSet] = None,
    every_t: float = 0.1,
    snap_every_t: float = 0.0,
    on_step: Optional[Callable[[Field, Field], None]] = None,
    on_sample: Optional[Callable[[Field, FunctionalSeries], None]] = None,
) -> RunResult:
    """Shared run loop.

    ``advance(field, remaining)`` returns the next field, or ``None`` when
    the admissible step has underflowed. Monitors are sampled at the start,
    whenever the time crosses the next multiple of ``every_t``, and at the
    end. ``on_step(previous, current)`` is called after each step and
    ``on_sample(field, series)`` after the monitors at every sample.
    """
    if not t_end > initial.time:
        raise StepConfigError(f"t_end={t_end!r} must be after the initial time {initial.time!r}")
    if not every_t > 0:
        raise StepConfigError(f"output cadence must be positive, got {every_t}")
    series = FunctionalSeries()
    result = RunResult(initial, series, RunStatus.COMPLETED)
    start = initial.time
    start_mass = initial.total_mass()
    clamp_warned = False

    def sample(f: Field):
        if monitors is not None:
            monitors.sample(f, series)
        if on_sample is not None:
            on_sample(f, series)

    def due(t: float, cadence: float, count: int) -> bool:
        return t >= start + count * cadence - _TIME_TOL * max(1.0, abs(t))

    sample(initial)
    if snap_every_t > 0:
        result.snapshots.append(initial.copy())
    result.sup_trace.append((initial.time, sup_norm(initial).value))
    n_out, n_snap = 1, 1
    last_sampled = initial.time
    current = initial
    tol = _TIME_TOL * max(1.0, abs(t_end))

    while t_end - current.time > tol:
        nxt = advance(current, t_end - current.time)
        if nxt is None:
            logger.warning(
                "admissible step underflowed below %g at t=%.9g", DT_UNDERFLOW, current.time
            )
            result.status = RunStatus.DT_UNDERFLOW
            break
        result.steps += 1
        if nxt.diverged:
            logger.warning("non-finite density at t=%.9g, run diverged", nxt.time)
            result.status = RunStatus.DIVERGED
            current = nxt
            break
        if on_step is not None:
            on_step(current, nxt)
        current = nxt
        result.sup_trace.append((current.time, sup_norm(current).value))
        if not clamp_warned and current.clamped_mass > CLAMP_BUDGET * max(start_mass, 1e-300):
            logger.warning(
                "clamped mass %.3e exceeds %.0e of the initial mass %.6g",
                current.clamped_mass, CLAMP_BUDGET, start_mass,
            )
            clamp_warned = True
        if due(current.time, every_t, n_out):
            sample(current)
            last_sampled = current.time
            while due(current.time, every_t, n_out):
                n_out += 1
        if snap_every_t > 0 and due(current.time, snap_every_t, n_snap):
            result.snapshots.append(current.copy())
            while due(current.time, snap_every_t, n_snap):
                n_snap += 1

    if result.status is RunStatus.COMPLETED and current.time > last_sampled:
        sample(current)
    result.field = current
    logger.info(
        "run finished: %s at t=%.9g after %d steps", result.status.value, current.time, result.steps
    )
    return result


class _PhysicalAdvance:
    """Step chooser for :func:`run_physical`."""

    def __init__(self, model: VelocityModel, cfg: PhysicalStepConfig):
        self.model = model
        self.cfg = cfg
        self._last_dt: Optional[float] = None

    def _note(self, dt: float) -> None:
        last = self._last_dt
        if last is None or dt <= 0.5 * last or dt >= 2.0 * last:
            if last is not None:
                logger.debug("collision step changed from %.3e to %.3e", last, dt)
            self._last_dt = dt

    def __call__(self, field: Field, remaining: float) -> Optional[Field]:
        cfg = self.cfg
        limit = required_dt(field, cfg.density_cfl)
        if limit < DT_UNDERFLOW:
            return None
        if cfg.dt_mode is DtMode.LOCKSTEP:
            h = field.domain.hx
            if remaining >= h * (1.0 - _TIME_TOL):
                substeps = max(1, math.ceil(h / limit * (1.0 - _TIME_TOL)))
                self._note(h / substeps)
                return strang_step(field, self.model, cfg, h, DtMode.LOCKSTEP, substeps)
            # the tail shorter than one cell is streamed by interpolation
            dt = min(remaining, limit)
            return strang_step(field, self.model, cfg, dt, DtMode.FREE)
        dt = min(cfg.dt_max, limit, remaining)
        self._note(dt)
        return strang_step(field, self.model, cfg, dt, DtMode.FREE)


def run_physical(
    initial: Field,
    model: VelocityModel,
    cfg: PhysicalStepConfig,
    t_end: float,
    monitors: Optional[MonitorSet] = None,
    every_t: float = 0.1,
    snap_every_t: float = 0.0,
) -> RunResult:
    """Integrate the physical system from ``initial`` to ``t_end``.

    :param Field initial:
        Cauchy data.
    :param VelocityModel model:
        The velocity model.
    :param PhysicalStepConfig cfg:
        Step configuration.
    :param float t_end:
        Final time.
    :param MonitorSet monitors:
        (Optional) Monitors sampled on the output cadence.
    :param float every_t:
        Output cadence.
    :param float snap_every_t:
        (Optional) Snapshot cadence; 0 keeps no snapshots.
    :rtype: RunResult
    """
    if model.n_species != initial.n_species:
        raise StepConfigError(
            f"field has {initial.n_species} species, model has {model.n_species}"
        )
    if cfg.dt_mode is DtMode.LOCKSTEP:
        check_lockstep(initial, model)
    return march(
        initial, t_end, _PhysicalAdvance(model, cfg), monitors, every_t, snap_every_t
    )


def picard_solve(
    initial: Field, model: VelocityModel, cfg: PicardConfig
) -> Tuple[List[Field], int]:
    """Fixed-point iteration of the Duhamel form on ``[0, T]``.

    Iterate ``u_i(t, x) = u0_i(x - c_i t) + int_0^t Q_i(u)(s, x - c_i (t - s)) ds``
    starting from ``u = u0`` at every node, with trapezoidal quadrature on
    ``substeps`` equal intervals.

    :param Field initial:
        Cauchy data ``u0``.
    :param VelocityModel model:
        The velocity model.
    :param PicardConfig cfg:
        Horizon, tolerance and quadrature.
    :raises NonContraction:
        The sup distance grew three times in a row, or ``max_iters`` was
        reached before it dropped below ``tol``.
    :returns:
        The trajectory at the quadrature nodes and the iteration count.
    """
    domain = initial.domain
    n = model.n_species
    m = cfg.substeps
    h = cfg.T / m
    times = [initial.time + j * h for j in range(m + 1)]
    xs, ys = domain.mesh()

    def transport(values: np.ndarray, i: int, lag: float) -> np.ndarray:
        if lag == 0.0:
            return values
        cx, cy = model.speeds[i]
        return sample_array(domain, values, xs - cx * lag, ys - cy * lag, order=cfg.interp_order)

    streamed = np.empty((m + 1,) + initial.data.shape)
    for j in range(m + 1):
        def stream(i, j=j):
            streamed[j, i] = transport(initial.data[i], i, j * h)
        map_species(stream, n)

    current = np.broadcast_to(initial.data, (m + 1,) + initial.data.shape).copy()
    distances: List[float] = []
    rises = 0
    for iteration in range(1, cfg.max_iters + 1):
        rates = np.stack([collision_rhs(model, current[j]) for j in range(m + 1)])
        nxt = streamed.copy()

        def integrate(i):
            for j in range(1, m + 1):
                acc = 0.5 * (transport(rates[0, i], i, j * h) + rates[j, i])
                for k in range(1, j):
                    acc = acc + transport(rates[k, i], i, (j - k) * h)
                nxt[j, i] += h * acc

        map_species(integrate, n)
        distance = float(np.max(np.abs(nxt - current)))
        logger.debug("picard iteration %d: sup distance %.3e", iteration, distance)
        rises = rises + 1 if distances and distance > distances[-1] else 0
        distances.append(distance)
        current = nxt
        if not np.isfinite(distance) or rises >= 3:
            raise NonContraction(iteration, distances)
        if distance < cfg.tol:
            trajectory = [Field(domain, current[j], time=times[j]) for j in range(m + 1)]
            return trajectory, iteration
    raise NonContraction(cfg.max_iters, distances)
