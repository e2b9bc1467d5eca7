import math

import numpy as np
import pytest

from broadwell import model as model_module
from broadwell.exceptions import ModelError, ModelFileError
from broadwell.model import (
    VelocityModel,
    broadwell2d,
    collision_rhs,
    dump_model,
    is_broadwell,
    load_model,
    parse_model,
    validate_conservation,
)


def test_broadwell_speeds_and_max_speed(model):
    np.testing.assert_array_equal(
        model.speeds, [[1, 1], [1, -1], [-1, -1], [-1, 1]]
    )
    assert model.n_species == 4
    assert model.max_speed == pytest.approx(math.sqrt(2.0))
    assert model.species_label(2) == "3"


def test_broadwell_conserves_mass_momentum_energy(model):
    report = validate_conservation(model)
    assert report.valid
    assert report.mass == 0.0
    assert report.momentum == 0.0
    assert report.energy == 0.0


def test_validate_conservation_reports_instead_of_raising():
    coeffs = np.zeros((2, 2, 2))
    coeffs[0, 1, 1] = 1.0
    bad = VelocityModel(speeds=[[1.0, 0.0], [-1.0, 0.0]], coeffs=coeffs)
    report = validate_conservation(bad)
    assert not report.valid
    assert report.mass == pytest.approx(1.0)


@pytest.mark.parametrize(
    "u,expected",
    [
        ((1.0, 1.0, 1.0, 1.0), (0.0, 0.0, 0.0, 0.0)),
        ((1.0, 2.0, 1.0, 2.0), (3.0, -3.0, 3.0, -3.0)),
        ((2.0, 0.0, 3.0, 0.0), (-6.0, 6.0, -6.0, 6.0)),
    ],
)
def test_collision_rhs_values(model, u, expected):
    np.testing.assert_allclose(collision_rhs(model, u), expected)


def test_collision_rhs_pair_identities_are_exact(model):
    rng = np.random.default_rng(3)
    u = rng.uniform(0.0, 5.0, size=(4, 16, 16))
    q = collision_rhs(model, u)
    np.testing.assert_array_equal(q[0], q[2])
    np.testing.assert_array_equal(q[0], -q[1])
    np.testing.assert_array_equal(q[0], -q[3])


@pytest.mark.parametrize("scale", [0.0, 0.5, 3.0])
def test_collision_rhs_is_quadratic(model, scale):
    u = np.random.default_rng(5).uniform(0.0, 2.0, size=(4, 8, 8))
    np.testing.assert_allclose(
        collision_rhs(model, scale * u), scale ** 2 * collision_rhs(model, u),
        rtol=1e-12, atol=1e-14,
    )


def random_conserving_model(n=6, seed=0):
    rng = np.random.default_rng(seed)
    speeds = rng.uniform(-1.0, 1.0, size=(n, 2))
    invariants = np.column_stack([np.ones(n), speeds, np.sum(speeds ** 2, axis=1)])
    basis, _ = np.linalg.qr(invariants)
    coeffs = rng.normal(size=(n, n, n))
    coeffs -= np.einsum("il,ljk->ijk", basis @ basis.T, coeffs)
    return VelocityModel(speeds=speeds, coeffs=coeffs)


def test_random_conserving_model_rates_sum_to_zero():
    model = random_conserving_model()
    assert validate_conservation(model).valid
    assert not is_broadwell(model)
    u = np.random.default_rng(1).uniform(0.0, 2.0, size=(6, 10, 10))
    rates = collision_rhs(model, u)
    assert np.abs(rates).max() > 1e-3
    np.testing.assert_allclose(rates.sum(axis=0), 0.0, atol=1e-11)
    momentum = np.einsum("id,ixy->dxy", model.speeds, rates)
    np.testing.assert_allclose(momentum, 0.0, atol=1e-11)


def test_collision_rhs_rejects_wrong_species_count(model):
    with pytest.raises(ModelError):
        collision_rhs(model, [1.0, 2.0, 3.0])


def test_velocity_model_shape_checks():
    with pytest.raises(ModelError):
        VelocityModel(speeds=[[1.0, 1.0, 0.0]], coeffs=np.zeros((1, 1, 1)))
    with pytest.raises(ModelError):
        VelocityModel(speeds=[[1.0, 1.0], [1.0, -1.0]], coeffs=np.zeros((3, 3, 3)))
    with pytest.raises(ModelError):
        VelocityModel(speeds=[[1.0, 1.0]], coeffs=np.zeros((1, 1, 1)), names=("a", "b"))


def test_coefficients_are_symmetrized():
    coeffs = np.zeros((2, 2, 2))
    coeffs[0, 0, 1] = 2.0
    m = VelocityModel(speeds=[[1.0, 0.0], [-1.0, 0.0]], coeffs=coeffs)
    assert m.coeffs[0, 0, 1] == 1.0
    assert m.coeffs[0, 1, 0] == 1.0


def test_is_broadwell(model):
    assert is_broadwell(model)
    scaled = VelocityModel(speeds=model.speeds, coeffs=2.0 * model.coeffs)
    assert not is_broadwell(scaled)


def test_parse_model_reads_broadwell():
    text = """
    # the Broadwell model
    N=4
    c 1 1
    c 1 -1
    c -1 -1
    c -1 1
    a 1 2 4 1
    a 1 1 3 -1
    a 3 2 4 1
    a 3 1 3 -1
    a 2 1 3 1
    a 2 2 4 -1
    a 4 1 3 1
    a 4 2 4 -1
    """
    assert is_broadwell(parse_model(text))


def test_dump_and_parse_preserve_the_model(model):
    again = parse_model(dump_model(model))
    np.testing.assert_array_equal(again.speeds, model.speeds)
    np.testing.assert_array_equal(again.coeffs, model.coeffs)


def test_load_model(tmp_path, model):
    path = tmp_path / "broadwell.model"
    path.write_text(dump_model(model), encoding="utf-8")
    assert is_broadwell(load_model(str(path)))


@pytest.mark.parametrize(
    "text,line_no",
    [
        ("", 1),
        ("M=4", 1),
        ("N=two", 1),
        ("N=1\nc 1", 2),
        ("N=1\nc 1 0\nc 0 1", 3),
        ("N=1\nc 1 0\na 1 1 2 1.0", 3),
        ("N=1\nc 1 0\nb 1", 3),
        ("N=1\nc 1 x", 2),
        ("N=2\nc 1 0", 2),
    ],
)
def test_parse_model_errors_name_the_line(text, line_no):
    with pytest.raises(ModelFileError) as exc_info:
        parse_model(text, path="m.txt")
    assert exc_info.value.line_no == line_no
    assert str(exc_info.value).startswith(f"m.txt:{line_no}:")


def test_module_logger_name():
    assert model_module.logger.name == "broadwell.model"


def test_broadwell2d_is_immutable():
    m = broadwell2d()
    with pytest.raises(ValueError):
        m.coeffs[0, 0, 0] = 1.0
