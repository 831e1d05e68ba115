from math import pi, sqrt

import numpy as np
import pytest

from nematic.errors import ParameterError
from nematic.field import (
    Field2D,
    FieldEnergy,
    assemble_radial_field,
    classify_field,
    defect_centres,
    detect_defects,
    field_norm,
    glyph_export,
    minimize_field,
    rotate_field,
    seed_field,
    symmetry_residual,
    total_energy,
    vertical_residual,
)
from nematic.mesh import build_mesh
from nematic.radial import field_energy, minimize_radial
from nematic.tensors import MaterialParams, boundary_data


@pytest.fixture(scope="module")
def radial_solution():
    return minimize_radial(MaterialParams(R=3.0), N=300)


def test_energy_derivatives_match_finite_differences(small_mesh):
    params = MaterialParams(b2=0.5, M=0.3, R=1.0)
    energy = FieldEnergy(small_mesh, params)
    rng = np.random.default_rng(7)
    x, d, e = (rng.standard_normal((small_mesh.n_nodes, 5)) for _ in range(3))
    t = 1e-6
    fd = (energy.energy(x + t * d) - energy.energy(x - t * d)) / (2 * t)
    assert np.sum(energy.nodal_gradient(x) * d) == pytest.approx(fd, rel=1e-6)
    fd2 = (energy.nodal_gradient(x + t * d) - energy.nodal_gradient(x - t * d)) / (2 * t)
    assert np.sum(energy.hessian_apply(x, d) * e) == pytest.approx(np.sum(fd2 * e), rel=1e-6)


def test_assembled_radial_field_is_symmetric(radial_solution, disk_mesh):
    field = assemble_radial_field(radial_solution.profile, disk_mesh)
    assert field.boundary_error() == 0.0
    assert symmetry_residual(field) < 1e-12
    assert vertical_residual(field) == 0.0
    result = classify_field(field)
    assert (result.label, result.radial_label) == ("radial", "Q2-")


def test_radius_mismatch_is_rejected(radial_solution, small_mesh):
    with pytest.raises(ParameterError):
        assemble_radial_field(radial_solution.profile, small_mesh)


@pytest.mark.parametrize("M", [0.0, 0.5])
def test_mesh_energy_matches_radial_energy(M, disk_mesh):
    result = minimize_radial(MaterialParams(M=M, R=3.0), N=300)
    field = assemble_radial_field(result.profile, disk_mesh)
    assert total_energy(field) == pytest.approx(field_energy(result.energy, field.params), rel=2e-2)


def test_minimisation_from_radial_seed(radial_solution, disk_mesh):
    params = radial_solution.profile.params
    start = seed_field(disk_mesh, params)
    result = minimize_field(params, disk_mesh, tol=1e-6, max_iter=5000)
    assert result.converged
    assert result.energy < total_energy(start)
    assert np.all(np.diff(result.history) <= 1e-12)
    assert result.field.boundary_error() == 0.0
    assert symmetry_residual(result.field) < 5e-2 * params.s_plus
    assembled = assemble_radial_field(radial_solution.profile, disk_mesh)
    assert result.energy <= total_energy(assembled) + 1e-8
    assert field_norm(result.field, assembled) < 0.1 * field_norm(assembled)


def test_unknown_optimizer(disk_mesh):
    with pytest.raises(ValueError):
        minimize_field(MaterialParams(R=3.0), disk_mesh, optimizer="newton")


def test_unknown_preset(disk_mesh):
    with pytest.raises(ValueError):
        seed_field(disk_mesh, MaterialParams(R=3.0), "vortex")


@pytest.mark.parametrize("preset, label", [("nr_vertical", "NR_vertical"), ("nr_tilted", "NR_tilted")])
def test_non_radial_seeds(preset, label, disk_mesh):
    field = seed_field(disk_mesh, MaterialParams(b2=1.0, R=3.0), preset)
    assert field.boundary_error() == 0.0
    assert classify_field(field).label == label


def test_two_separated_defects_are_found(disk_mesh):
    x, y = disk_mesh.nodes[:, 0], disk_mesh.nodes[:, 1]
    points = np.array([[0.75, 0.0], [-0.75, 0.0]])
    g = sum(np.exp(-((x - px) ** 2 + (y - py) ** 2) / 0.3**2) for px, py in points)
    values = np.zeros((disk_mesh.n_nodes, 5))
    values[:, 0] = -1.0
    values[:, 1] = sqrt(3.0) / 2.0 * (1.0 - g)
    field = Field2D(disk_mesh, values, MaterialParams(R=3.0))
    defects = detect_defects(field, beta_tol=0.3)
    assert len(defects) == 2
    for point in points:
        assert min(np.linalg.norm(d.position - point) for d in defects) < 2 * disk_mesh.h


def test_glyph_lengths_of_uniaxial_field(small_mesh):
    params = MaterialParams(b2=1.0, R=1.0)
    s = params.s_plus
    field = Field2D.from_tensors(small_mesh, boundary_data(small_mesh.angles, params), params)
    glyphs = glyph_export(field)
    assert np.allclose(glyphs.lengths, [s / 3, s / 3, 4 * s / 3])
    assert np.all(glyphs.lengths >= 0.0)
    assert np.max(glyphs.beta) < 1e-8


def test_field_rejects_wrong_shape(small_mesh):
    with pytest.raises(ValueError):
        Field2D(small_mesh, np.zeros((small_mesh.n_nodes, 3)), MaterialParams(R=1.0))


def test_ring_rotation_preserves_radial_fields(radial_solution, disk_mesh):
    field = assemble_radial_field(radial_solution.profile, disk_mesh)
    for psi in (0.3, pi / 2, 2.0):
        assert np.allclose(rotate_field(field, psi).values, field.values, atol=1e-12)


def test_full_turn_is_the_identity(disk_mesh):
    field = seed_field(disk_mesh, MaterialParams(b2=1.0, R=3.0), "nr_vertical")
    assert np.allclose(rotate_field(field, 2 * pi).values, field.values, atol=1e-10)
    assert np.allclose(rotate_field(field, 0.0).values, field.values, atol=1e-12)


def test_symmetry_residual_separates_radial_and_split_cores(radial_solution, disk_mesh):
    params = radial_solution.profile.params
    radial = assemble_radial_field(radial_solution.profile, disk_mesh)
    split = seed_field(disk_mesh, params, "nr_vertical")
    assert symmetry_residual(radial) < 1e-6 * params.s_plus
    assert symmetry_residual(split) > 1e-1 * params.s_plus


def test_default_symmetry_tolerance(settings):
    assert settings["SYMMETRY_TOL_FACTOR"] == 1e-3


@pytest.mark.parametrize("k", [1, -1, 3])
def test_odd_winding_seeds_carry_half_charges(k, disk_mesh):
    params = MaterialParams(R=3.0, k=k)
    field = seed_field(disk_mesh, params, "nr_vertical")
    centres = defect_centres(disk_mesh, k)
    assert len(centres) == abs(k)
    assert field.boundary_error() == 0.0

    directors = glyph_export(field).eigenvectors[:, :, -1]
    centroids = disk_mesh.centroids
    distance = np.min(np.linalg.norm(centroids[:, None, :] - centres[None], axis=-1), axis=1)
    away = disk_mesh.triangles[distance > 4 * disk_mesh.h]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        alignment = np.abs(np.sum(directors[away[:, a]] * directors[away[:, b]], axis=1))
        assert alignment.min() > 0.9


@pytest.mark.slow
def test_split_core_minimiser_has_two_symmetric_defects():
    params = MaterialParams(b2=0.0, M=-0.5, R=50.0)
    mesh = build_mesh(50.0, 50.0 / 60)
    result = minimize_field(params, mesh, init="nr_vertical")
    assert result.converged
    defects = detect_defects(result.field)
    assert len(defects) == 2
    p, q = (d.position for d in defects)
    assert abs(np.linalg.norm(p) - np.linalg.norm(q)) < 2 * mesh.h
    assert np.linalg.norm(p + q) < 2 * mesh.h


@pytest.mark.slow
def test_escaped_core_lies_below_the_split_core_at_b1():
    params = MaterialParams(b2=1.0, M=0.0, R=50.0)
    mesh = build_mesh(50.0, 50.0 / 60)
    escaped = minimize_radial(params, init="q3", N=1000)
    split = minimize_field(params, mesh, init="nr_vertical")
    assert escaped.converged and split.converged
    assert field_energy(escaped.energy, params) < split.energy


@pytest.mark.slow
def test_vertical_split_core_is_the_b0_minimiser_at_negative_M():
    params = MaterialParams(b2=0.0, M=-0.5, R=50.0)
    mesh = build_mesh(50.0, 50.0 / 60)
    split = minimize_field(params, mesh, init="nr_vertical")
    radial = minimize_radial(params, N=1000)
    assert split.converged and radial.converged
    assert classify_field(split.field).label == "NR_vertical"
    assert split.energy < field_energy(radial.energy, params)
