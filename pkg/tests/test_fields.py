import math
import os

import numpy as np
import pytest

from broadwell.exceptions import BroadwellError, InvalidFrameError
from broadwell.fields import (
    Axis,
    Boundary,
    Domain,
    Field,
    FrameTransform,
    box_integral,
    clamp_negative,
    from_rescaled,
    interpolate,
    line_integral,
    line_integral_at,
    list_snapshots,
    overlap_weights,
    random_field,
    read_snapshot,
    sample,
    sup_norm,
    to_rescaled,
    write_snapshot,
)


def linear_field(domain, a=1.0, b=2.0, c=3.0):
    xs, ys = domain.mesh()
    values = a * xs + b * ys + c
    return Field(domain, np.stack([values, 2.0 * values, values, values]))


def test_domain_geometry():
    domain = Domain.square(2.0, 32, Boundary.PERIODIC)
    assert domain.hx == domain.hy == pytest.approx(0.125)
    assert domain.cell_area == pytest.approx(0.125 ** 2)
    assert domain.periodic
    assert domain.x_centers[0] == pytest.approx(-2.0 + 0.0625)
    assert len(domain.x_edges) == 33
    xs, ys = domain.mesh()
    assert xs.shape == (32, 32)
    assert xs[3, 0] == domain.x_centers[3]
    assert ys[0, 5] == domain.y_centers[5]


def test_domain_rejects_degenerate_grids():
    with pytest.raises(BroadwellError):
        Domain(0.0, 0.0, 0.0, 1.0, 8, 8)
    with pytest.raises(BroadwellError):
        Domain(0.0, 1.0, 0.0, 1.0, 2, 8)


def test_field_shape_is_checked(periodic_domain):
    with pytest.raises(BroadwellError):
        Field(periodic_domain, np.zeros((4, 8, 8)))


def test_uniform_field_and_mass(periodic_domain):
    field = Field.uniform(periodic_domain, [1.0, 2.0, 3.0, 4.0])
    assert field.n_species == 4
    assert field.total_mass() == pytest.approx(10.0 * 16.0)
    assert not field.diverged


def test_random_field_is_seeded_and_bounded(periodic_domain):
    a = random_field(periodic_domain, 0.5, seed=1)
    b = random_field(periodic_domain, 0.5, seed=1)
    c = random_field(periodic_domain, 0.5, seed=2)
    np.testing.assert_array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    assert a.data.min() >= 0.0
    assert a.data.max() <= 0.5


def test_diverged_and_evolve(periodic_domain):
    field = Field.zeros(periodic_domain)
    data = field.data.copy()
    data[0, 0, 0] = np.nan
    nxt = field.evolve(data, 0.5, clamped=1e-3)
    assert nxt.diverged
    assert nxt.time == 0.5
    assert nxt.clamped_mass == pytest.approx(1e-3)
    assert sup_norm(nxt).diverged


def test_clamp_negative_returns_removed_mass():
    data = np.array([[[1.0, -0.5], [-0.25, 2.0]]])
    removed = clamp_negative(data, cell_area=2.0)
    assert removed == pytest.approx(1.5)
    assert data.min() == 0.0


def test_interpolation_is_exact_at_nodes(smooth_field):
    domain = smooth_field.domain
    x, y = domain.x_centers[5], domain.y_centers[9]
    assert interpolate(smooth_field, 2, (x, y)) == pytest.approx(smooth_field.data[2, 5, 9])
    assert interpolate(smooth_field, 2, (x, y), order=3) == pytest.approx(
        smooth_field.data[2, 5, 9]
    )


def test_bilinear_reproduces_linear_data(outflow_domain):
    field = linear_field(outflow_domain)
    xs = np.array([0.013, -1.21, 2.0])
    ys = np.array([0.4, 0.77, -2.3])
    np.testing.assert_allclose(sample(field, 0, xs, ys), xs + 2.0 * ys + 3.0, rtol=1e-12)


def test_outflow_reads_vacuum_outside(outflow_domain):
    field = Field.uniform(outflow_domain, [1.0, 1.0, 1.0, 1.0])
    assert interpolate(field, 0, (3.5, 0.0)) == 0.0
    assert interpolate(field, 0, (0.0, -4.0)) == 0.0
    assert interpolate(field, 0, (0.0, 0.0)) == pytest.approx(1.0)


@pytest.mark.parametrize("order", [1, 3])
def test_outflow_keeps_constants_up_to_the_edge(order):
    domain = Domain.square(1.0, 8, Boundary.OUTFLOW)
    field = Field.uniform(domain, [3.0] * 4)
    h = domain.hx
    xs = np.array([-1.0, -1.0 + h / 4, 1.0 - 0.1 * h, 1.0, 0.0, 0.0, -1.0, 1.0])
    ys = np.array([0.0, 0.3, -0.2, 0.0, -1.0 + h / 3, 1.0 - h / 5, -1.0, 1.0])
    np.testing.assert_allclose(sample(field, 2, xs, ys, order=order), 3.0, rtol=1e-12)
    assert interpolate(field, 2, (1.0 + h / 4, 0.0), order=order) == 0.0


def test_periodic_wraps(periodic_domain, smooth_field):
    x, y = periodic_domain.x_centers[0], periodic_domain.y_centers[3]
    assert interpolate(smooth_field, 1, (x + 4.0, y)) == pytest.approx(
        interpolate(smooth_field, 1, (x, y))
    )


def test_cubic_interpolation_is_clamped(outflow_domain):
    data = np.zeros((4, outflow_domain.nx, outflow_domain.ny))
    data[0, 24, 24] = 1.0
    field = Field(outflow_domain, data)
    xs, ys = outflow_domain.mesh()
    values = sample(field, 0, xs + 0.05, ys + 0.05, order=3)
    assert values.min() >= 0.0


def test_overlap_weights_partial_cells():
    edges = np.array([0.0, 1.0, 2.0, 3.0])
    np.testing.assert_allclose(overlap_weights(edges, 0.5, 2.25), [0.5, 1.0, 0.25])
    np.testing.assert_allclose(overlap_weights(edges, 2.0, 1.0), [0.0, 0.0, 0.0])


def test_line_and_box_integrals_of_uniform_data(periodic_domain):
    field = Field.uniform(periodic_domain, [1.0, 2.0, 3.0, 4.0])
    assert line_integral(field, 1, Axis.X, 0.3) == pytest.approx(4.0)
    assert line_integral(field, [0, 3], Axis.Y, -0.2, lo=-0.5, hi=0.25) == pytest.approx(3.75)
    assert box_integral(field, 2) == pytest.approx(12.0)
    assert box_integral(field, slice(None)) == pytest.approx(40.0)


def test_line_integral_runs_along_the_axis(outflow_domain):
    field = linear_field(outflow_domain, a=0.0, b=1.0, c=0.0)
    y = outflow_domain.y_centers[30]
    # along x at fixed y the integrand is the constant y
    assert line_integral(field, 0, Axis.X, y) == pytest.approx(2.0 * y)
    # along y the odd integrand cancels on [-1, 1]
    assert line_integral(field, 0, Axis.Y, 0.4) == pytest.approx(0.0, abs=1e-12)


def test_line_integral_at_interpolates_between_lines(outflow_domain):
    field = linear_field(outflow_domain, a=0.0, b=1.0, c=0.0)
    y0, y1 = outflow_domain.y_centers[30], outflow_domain.y_centers[31]
    mid = 0.25 * y0 + 0.75 * y1
    assert line_integral_at(field, 0, Axis.X, mid) == pytest.approx(2.0 * mid)
    assert line_integral_at(field, 0, Axis.X, y0) == pytest.approx(2.0 * y0)


def test_sup_norm_location_and_region(outflow_domain):
    data = np.zeros((4, outflow_domain.nx, outflow_domain.ny))
    data[3, 2, 2] = 5.0
    data[1, 24, 30] = 2.0
    field = Field(outflow_domain, data)
    sup = sup_norm(field)
    assert sup.value == 5.0
    assert sup.species == 3
    assert sup.location == (outflow_domain.x_centers[2], outflow_domain.y_centers[2])
    inner = sup_norm(field, region=(-1.0, 1.0))
    assert inner.value == 2.0
    assert inner.species == 1


def test_frame_transform():
    frame = FrameTransform(t_star=1.0, x_star=(0.5, 0.0))
    assert frame.tau(1.0 - math.exp(-2.0)) == pytest.approx(2.0)
    assert frame.t(frame.tau(0.3)) == pytest.approx(0.3)
    with pytest.raises(InvalidFrameError):
        frame.tau(1.0)
    with pytest.raises(BroadwellError):
        FrameTransform(t_star=0.0)


def test_to_rescaled_scales_densities(periodic_domain):
    u = Field.uniform(periodic_domain, [1.0, 2.0, 3.0, 4.0], time=0.5)
    frame = FrameTransform(t_star=1.0)
    target = Domain.square(3.0, 24, Boundary.OUTFLOW)
    w = to_rescaled(u, frame, target)
    assert w.time == pytest.approx(math.log(2.0))
    np.testing.assert_allclose(w.data[1], 1.0)
    back = from_rescaled(w, frame, Domain.square(1.0, 16, Boundary.OUTFLOW))
    assert back.time == pytest.approx(0.5)
    np.testing.assert_allclose(back.data[3], 4.0)


def test_rescaling_round_trip_at_aligned_nodes():
    physical = Domain.square(1.0, 16, Boundary.OUTFLOW)
    u = random_field(physical, amplitude=1.0, seed=4, time=0.5)
    frame = FrameTransform(t_star=1.0)
    # t* - t = 1/2 maps the eta nodes of [-2, 2]^2 onto the x nodes of [-1, 1]^2
    w = to_rescaled(u, frame, Domain.square(2.0, 16, Boundary.OUTFLOW))
    np.testing.assert_allclose(w.data, 0.5 * u.data, rtol=1e-12, atol=1e-12)
    back = from_rescaled(w, frame, physical)
    assert back.time == pytest.approx(0.5)
    assert np.ptp(back.data) > 0.1
    np.testing.assert_allclose(back.data, u.data, rtol=1e-12, atol=1e-12)


def test_snapshot_files(tmp_path, smooth_field):
    snap = Field(smooth_field.domain, smooth_field.data, time=0.25)
    path = write_snapshot(snap, str(tmp_path))
    assert os.path.basename(path) == "snap_t0.250000.csv"
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline()
    assert header == "species,ix,iy,x,y,value\n"
    again = read_snapshot(path, smooth_field.domain)
    np.testing.assert_array_equal(again.data, smooth_field.data)
    assert again.time == 0.25
    write_snapshot(Field(smooth_field.domain, smooth_field.data, time=0.1), str(tmp_path))
    assert [os.path.basename(p) for p in list_snapshots(str(tmp_path))] == [
        "snap_t0.100000.csv", "snap_t0.250000.csv",
    ]
