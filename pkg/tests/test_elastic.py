from math import pi

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from conftest import quadratic_profile
from nematic.elastic import (
    ElasticTriple,
    GradientQ,
    apply_L_fd,
    coercivity_branch_values,
    coercivity_dirichlet,
    coercivity_pointwise,
    coercivity_predicate,
    el_residual,
    elastic_bilinear,
    elastic_density,
    elastic_invariants,
    gradient_stiffness,
    mode_coupling,
    null_lagrangian_check,
    null_lagrangian_constant,
    z_extension_residual,
)
from nematic.field import assemble_radial_field
from nematic.mesh import build_mesh
from nematic.radial import minimize_radial
from nematic.tensors import CARTESIAN_BASIS, MaterialParams, basis_tensors, components


def random_gradient(rng: np.random.Generator, m: int = 2) -> np.ndarray:
    g = rng.standard_normal((3, 3, m))
    g = 0.5 * (g + np.swapaxes(g, 0, 1))
    return g - np.trace(g)[None, None, :] * np.eye(3)[:, :, None] / 3.0


def test_one_constant_density_is_half_gradient_square():
    rng = np.random.default_rng(0)
    g = random_gradient(rng)
    assert elastic_density(g, ElasticTriple(2.0)) == pytest.approx(np.sum(g * g))


def test_bilinear_form_is_symmetric_and_consistent():
    rng = np.random.default_rng(1)
    g, h = random_gradient(rng), random_gradient(rng)
    t = ElasticTriple(1.0, 0.4, -0.3)
    assert elastic_bilinear(g, h, t) == pytest.approx(elastic_bilinear(h, g, t))
    assert 0.5 * elastic_bilinear(g, g, t) == pytest.approx(elastic_density(g, t))


def test_gradient_stiffness_reproduces_density():
    rng = np.random.default_rng(2)
    g = random_gradient(rng)
    gamma = np.stack([components(g[:, :, m], CARTESIAN_BASIS) for m in range(2)], axis=-1).ravel()
    t = ElasticTriple(1.0, 2.0, 0.5)
    H = gradient_stiffness(t)
    assert 0.5 * gamma @ H @ gamma == pytest.approx(elastic_density(g, t))


def test_gradient_q_rejects_asymmetry():
    with pytest.raises(ValueError):
        GradientQ(np.arange(18.0).reshape(3, 3, 2))


def test_invariants_of_pure_divergence():
    g = np.zeros((3, 3, 2))
    g[0, 0, 0], g[2, 2, 0] = 1.0, -1.0
    inv = elastic_invariants(g)
    assert (inv.I1, inv.I2, inv.I3) == pytest.approx((2.0, 1.0, 1.0))


@pytest.mark.parametrize(
    "triple, expected",
    [
        (ElasticTriple(1.0, 0.0, 0.0), True),
        (ElasticTriple(1.0, 0.5, 0.2), True),
        (ElasticTriple(1.0, -2.0, 0.0), False),
        (ElasticTriple(1.0, 3.0, 0.0), False),
        (ElasticTriple(1.0, 0.0, -1.0), False),
    ],
)
def test_sampled_coercivity_agrees_with_predicate(triple, expected):
    assert coercivity_predicate(triple) is expected
    sampled = coercivity_pointwise(triple, samples=20_000)
    assert (sampled.mu0_estimate > 0) is expected
    assert sampled.mu0_estimate >= min(coercivity_branch_values(triple)) - 1e-8


def test_one_constant_coercivity_constant():
    sampled = coercivity_pointwise(ElasticTriple(1.0), samples=2000)
    assert sampled.mu0_estimate == pytest.approx(0.5, abs=1e-8)


@pytest.mark.parametrize("L, M, ok", [(1.0, 0.0, True), (1.0, -0.7, True), (1.0, -0.75, False), (0.0, 1.0, False)])
def test_dirichlet_coercivity(L, M, ok):
    assert coercivity_dirichlet(L, M) is ok


def test_null_lagrangian_depends_only_on_boundary_data():
    params = MaterialParams(M=1.0, k=2, R=1.0)
    mesh = build_mesh(1.0, 0.05)
    smooth = assemble_radial_field(quadratic_profile(params, 200), mesh)
    bumped = smooth.with_values(
        smooth.values + np.outer(np.cos(pi * mesh.radii / 2) ** 2 * (mesh.radii < 1.0), [0.1, -0.2, 0.3, 0.05, 0.0])
    )
    first, second = null_lagrangian_check(smooth), null_lagrangian_check(bumped)
    exact = null_lagrangian_constant(params)
    assert first.boundary == pytest.approx(exact, rel=1e-3)
    assert first.volume == pytest.approx(exact, rel=2e-2)
    assert second.volume == pytest.approx(first.volume, rel=2e-2)


def test_null_lagrangian_constant_value():
    params = MaterialParams(k=1)
    assert null_lagrangian_constant(params) == pytest.approx(-pi * params.s_plus**2)


def test_el_residual_excludes_boundary_ring(small_mesh):
    params = MaterialParams(R=1.0)
    field = assemble_radial_field(quadratic_profile(params, 100), small_mesh)
    residual = el_residual(field)
    assert np.all(np.isnan(residual.values[small_mesh.boundary_nodes]))
    assert np.isfinite(residual.norm)


def test_z_extension_residual_vanishes_for_one_constant(small_mesh):
    params = MaterialParams(R=1.0)
    field = assemble_radial_field(quadratic_profile(params, 100), small_mesh)
    assert z_extension_residual(field, 0.0, 0.0).max_norm == 0.0


def _ansatz(k: int):
    v = np.poly1d([0.3, 0.0, -0.4])
    u = np.poly1d([0.5, 0.0, 0.0]) if k % 2 == 0 else np.poly1d([0.2, 0.0, 0.6, 0.0])

    def Q(x, y):
        r, phi = np.hypot(x, y), np.arctan2(y, x)
        E = basis_tensors(phi, k)
        return v(r) * E[..., 0, :, :] + u(r) * E[..., 1, :, :]

    return v, u, Q


@pytest.mark.parametrize("k", [1, 2, 3, -1])
def test_mode_coupling_matches_stencil(k):
    v, u, Q = _ansatz(k)
    r = np.array([0.4, 0.7, 1.1])
    coupling = mode_coupling(k, [v, u], r)
    for phi in (0.3, 2.0, -1.2):
        exact = coupling.tensor(phi)
        for i, radius in enumerate(r):
            fd = apply_L_fd(Q, radius * np.cos(phi), radius * np.sin(phi), h=1e-3)
            assert np.allclose(exact[i], fd, atol=1e-5 * max(1.0, np.abs(exact[i]).max()))


@pytest.mark.parametrize("k", [1, 3])
def test_non_radial_modes_appear_away_from_k2(k):
    v, u, _ = _ansatz(k)
    coupling = mode_coupling(k, [v, u], np.linspace(0.2, 1.0, 9))
    assert coupling.angular_norm > 1e-3 * np.abs(coupling.coefficients).max()


def test_modes_are_constant_at_k2():
    v, u, _ = _ansatz(2)
    coupling = mode_coupling(2, [v, u], np.linspace(0.2, 1.0, 9))
    assert coupling.angular_norm == 0.0


def test_mode_coupling_of_empty_profile_vanishes():
    coupling = mode_coupling(1, [None, None], np.array([0.5]))
    assert np.all(coupling.coefficients == 0.0)
    assert (-coupling).coefficients.shape == (1, 3, 3)


def _in_plane_rotation(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def test_invariants_follow_in_plane_frame_rotations():
    g = random_gradient(np.random.default_rng(7))
    R = _in_plane_rotation(0.8)
    rotated = np.einsum("ia,jb,kc,abc->ijk", R, R, R[:2, :2], g)
    assert tuple(elastic_invariants(rotated)) == pytest.approx(tuple(elastic_invariants(g)))


def test_invariants_of_full_gradients_follow_any_rotation():
    g = random_gradient(np.random.default_rng(8), m=3)
    R = Rotation.random(random_state=3).as_matrix()
    rotated = np.einsum("ia,jb,kc,abc->ijk", R, R, R, g)
    assert tuple(elastic_invariants(rotated)) == pytest.approx(tuple(elastic_invariants(g)))


def _null_lagrangian_pair(h: float):
    params = MaterialParams(M=1.0, k=2, R=1.0)
    mesh = build_mesh(1.0, h)
    smooth = assemble_radial_field(quadratic_profile(params, 400), mesh)
    bump = np.cos(pi * mesh.radii / 2) ** 2 * (mesh.radii < 1.0)
    bumped = smooth.with_values(smooth.values + np.outer(bump, [0.1, -0.2, 0.3, 0.05, 0.0]))
    return params, null_lagrangian_check(smooth), null_lagrangian_check(bumped)


def test_null_lagrangian_error_shrinks_under_refinement():
    errors = []
    for h in (0.05, 0.025):
        params, smooth, bumped = _null_lagrangian_pair(h)
        assert bumped.volume == pytest.approx(smooth.volume, rel=5e-3)
        errors.append(abs(smooth.volume - null_lagrangian_constant(params)))
    assert errors[0] / errors[1] > 1.4


@pytest.mark.slow
def test_sampled_coercivity_matches_predicate_on_a_grid():
    values = np.linspace(-2.0, 2.0, 20)
    checked = 0
    for L1 in values:
        for L2 in values:
            for L3 in values:
                t = ElasticTriple(L1, L2, L3)
                if min(abs(v) for v in coercivity_branch_values(t)) < 1e-3:
                    continue
                assert (coercivity_pointwise(t, samples=500).mu0_estimate > 0) is coercivity_predicate(t)
                checked += 1
    assert checked > 7000


def test_anisotropic_radial_minimiser_does_not_extend_in_z():
    params = MaterialParams(b2=0.0, M=1.0, k=2, R=3.0)
    result = minimize_radial(params, N=300)
    assert result.converged
    field = assemble_radial_field(result.profile, build_mesh(3.0, 0.15))
    assert z_extension_residual(field, 2.0 * params.M, 0.0).max_norm > 1e-3 * params.s_plus
