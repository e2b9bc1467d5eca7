"""End-to-end checks of the inequalities and kinematics, at desk scale and full size."""
import os

import numpy as np
import pytest

from broadwell import cli
from broadwell.fields import Boundary, Domain, random_field
from broadwell.functionals import (
    MonitorSet,
    Theorem1Params,
    Theorem2Params,
    line_bound_49,
)
from broadwell.helpers import THREADS_ENV
from broadwell.model import VelocityModel, broadwell2d
from broadwell.scenario import (
    Fig3Layout,
    ScenarioConfig,
    default_fig3_domain,
    scenario_fig3,
    track_centroids,
)
from broadwell.solver_physical import DtMode, PhysicalStepConfig, collide, run_physical
from broadwell.solver_rescaled import RescaledStepConfig, run_rescaled

THM1_RUN = """
mode = "verify-thm1"
t_end = 3.0
grid.nx = 64
grid.ny = 64
rescaled.dt = 0.05
output.every_t = 0.25
"""


def collisionless(model):
    return VelocityModel(model.speeds, np.zeros_like(model.coeffs), model.names)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_theorem1_inequalities(seed):
    cfg = RescaledStepConfig(dt=0.05)
    initial = random_field(cfg.domain(64), amplitude=1.0, seed=seed)
    monitors = MonitorSet(
        ["q14_thm1", "mass", "lines", "moving_lines"], thm1=Theorem1Params(1.0)
    )
    result = run_rescaled(initial, cfg, 3.0, monitors, every_t=0.25)
    assert result.completed
    assert len(result.series.values("q14_thm1")) == 13
    assert not result.series.violations()
    lines = cli.moving_line_series(result.series)
    assert len(lines) == 4
    for line in lines:
        assert len(line.values) >= 2
        assert line.is_nonincreasing(cli.MOVING_LINE_TOL), line.pair


def test_theorem2_capped_line_bounds():
    params = Theorem2Params(0.2)
    cfg = RescaledStepConfig(dt=0.1, cap_theta=0.2)
    t0 = params.t0
    initial = random_field(cfg.domain(48), amplitude=params.cap(t0), seed=3, time=t0)
    monitors = MonitorSet(["lines"], thm2=params)
    result = run_rescaled(initial, cfg, 3.0 * t0, monitors, every_t=1.0)
    assert result.completed
    assert result.field.data.max() <= params.cap(result.field.time) + 1e-12
    records = [r for r in result.series if r.name.startswith("line_")]
    assert records
    for record in records:
        assert record.bound == pytest.approx(line_bound_49(params, record.time))
        assert record.value <= record.bound * 1.05


def test_fig3_collisionless_packet_velocity():
    model = collisionless(broadwell2d())
    initial = scenario_fig3()
    result = run_physical(
        initial, model, PhysicalStepConfig(), 0.375, every_t=0.125, snap_every_t=0.125
    )
    first, *_, last = [r for r in track_centroids(result.snapshots) if r.species == 1]
    elapsed = last.time - first.time
    assert elapsed == pytest.approx(0.375)
    velocity = ((last.cx - first.cx) / elapsed, (last.cy - first.cy) / elapsed)
    assert velocity == pytest.approx((1.0, 1.0), rel=1e-2)
    for species in range(4):
        assert result.field.data[species].sum() == pytest.approx(
            initial.data[species].sum(), rel=1e-10
        )


def test_fig3_crossing_produces_species_four():
    layout = Fig3Layout(width=0.1)
    domain = default_fig3_domain()
    initial = scenario_fig3(ScenarioConfig.fig3(layout), domain)
    h = domain.hx
    result = run_physical(
        initial, broadwell2d(), PhysicalStepConfig(), 0.5, every_t=h, snap_every_t=h
    )
    assert result.completed
    window = [
        s for s in result.snapshots
        if 0.34 <= s.time <= layout.meeting_time + 0.04
    ]
    assert len(window) == 4
    produced = [s.data[3].sum() for s in window]
    assert np.all(np.diff(produced) > 0.0)
    assert result.snapshots[0].data[3].sum() == 0.0

    def pair_totals(field):
        totals = field.data.sum(axis=(1, 2))
        return np.array([
            totals[0] + totals[1], totals[0] + totals[3],
            totals[1] + totals[2], totals[2] + totals[3],
        ])

    start = pair_totals(initial)
    for snap in result.snapshots:
        np.testing.assert_allclose(pair_totals(snap), start, rtol=1e-8)


def test_same_series_for_any_worker_count(write_config, tmp_path, monkeypatch):
    path = write_config(THM1_RUN.replace("t_end = 3.0", "t_end = 1.0"))
    outputs = []
    for threads in ("1", "4"):
        monkeypatch.setenv(THREADS_ENV, threads)
        out = str(tmp_path / f"threads{threads}")
        config = cli.parse_config(path, overrides=[f"output.dir={out!r}", "seed=5"])
        assert cli.run(config) == cli.EXIT_OK
        with open(os.path.join(out, "series.csv"), "rb") as fh:
            outputs.append(fh.read())
    assert outputs[0] == outputs[1]


def test_theorem1_run_through_the_cli(write_config, out_dir):
    config = cli.parse_config(write_config(THM1_RUN), overrides=[f"output.dir={out_dir!r}"])
    assert cli.run(config) == cli.EXIT_OK
    with open(os.path.join(out_dir, "summary.txt"), encoding="utf-8") as fh:
        summary = fh.read()
    assert "checks_failed: 0\n" in summary
    assert "status: Completed\n" in summary


FULL_THM1_RUN = THM1_RUN.replace("t_end = 3.0", "t_end = 10.0").replace(
    "grid.nx = 64\ngrid.ny = 64", "grid.nx = 256\ngrid.ny = 256"
)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10))
def test_theorem1_inequalities_full_size(seed):
    cfg = RescaledStepConfig(dt=0.05, L=3.0)
    initial = random_field(cfg.domain(256), amplitude=1.0, seed=seed)
    monitors = MonitorSet(["q14_thm1", "mass"], thm1=Theorem1Params(1.0))
    result = run_rescaled(initial, cfg, 10.0, monitors, every_t=0.5)
    assert result.completed
    assert len(result.series.values("q14_thm1")) == 21
    checked = [r for r in result.series if r.bound is not None]
    assert {r.name for r in checked} == {"q14_thm1", "mass_1", "mass_2", "mass_3", "mass_4"}
    for record in checked:
        assert record.value <= record.bound * 1.05 + 1e-8, record


@pytest.mark.slow
def test_conservation_full_size():
    model = broadwell2d()
    initial = random_field(Domain.square(2.0, 128, Boundary.PERIODIC), amplitude=1.0, seed=7)
    cfg = PhysicalStepConfig(dt_mode=DtMode.LOCKSTEP)
    monitors = MonitorSet(["conservation"], model=model)
    result = run_physical(initial, model, cfg, 2.0, monitors, every_t=0.5)
    assert result.completed
    mass = result.series.values("total_mass")
    assert np.max(np.abs(mass - mass[0])) <= 1e-10 * mass[0]
    for name in ("momentum_x", "momentum_y"):
        momentum = result.series.values(name)
        assert np.max(np.abs(momentum - momentum[0])) <= 1e-10 * mass[0]
    u = result.field.data
    out = collide(u, model, initial.domain.hx, cfg.collision_integrator)
    for a, b in ((0, 1), (0, 3), (2, 1), (2, 3)):
        np.testing.assert_allclose(out[a] + out[b], u[a] + u[b], rtol=1e-14, atol=0.0)


@pytest.mark.slow
def test_same_full_size_series_for_any_worker_count(write_config, tmp_path, monkeypatch):
    path = write_config(FULL_THM1_RUN)
    outputs = []
    for label, threads in (("serial", "1"), ("pool", str(os.cpu_count() or 4))):
        monkeypatch.setenv(THREADS_ENV, threads)
        out = str(tmp_path / label)
        config = cli.parse_config(path, overrides=[f"output.dir={out!r}", "seed=5"])
        assert cli.run(config) == cli.EXIT_OK
        with open(os.path.join(out, "series.csv"), "rb") as fh:
            outputs.append(fh.read())
    assert outputs[0] == outputs[1]
