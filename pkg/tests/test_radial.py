from math import pi, sqrt

import numpy as np
import pytest

from conftest import quadratic_profile
from nematic.errors import ParameterError, ProfileError
from nematic.radial import (
    SADDLE_TOL,
    RadialFunctional,
    RadialProfile,
    boundary_values,
    classify_profile,
    field_energy,
    gamma_limit_energy,
    gamma_limit_residual,
    minimize_radial,
    minimize_radial_M0,
    minimize_radial_two_component,
    ode_residual,
    preset_profile,
    radial_energy,
    reduced_hessian_apply,
    reduced_hessian_min_eig,
    solve_radial_critical,
    two_component_energy,
)
from nematic.tensors import MaterialParams


UNIT = MaterialParams(a2=1.0, b2=0.0, c2=1.0, L=1.0, M=0.0, k=2, R=1.0)


@pytest.fixture(scope="module")
def q2minus():
    return minimize_radial(MaterialParams(R=5.0), N=400)


def test_quadratic_profile_energy():
    assert radial_energy(quadratic_profile(UNIT, 400)) == pytest.approx(49 / 60, rel=1e-4)


def test_energy_converges_at_second_order():
    errors = [abs(radial_energy(quadratic_profile(UNIT, N)) - 49 / 60) for N in (50, 100)]
    assert 3.5 < errors[0] / errors[1] < 4.5


@pytest.mark.parametrize("M, b2", [(0.0, 1.0), (0.5, 1.0), (-0.5, 0.3)])
def test_two_component_energy_matches_full_functional(M, b2):
    params = UNIT.replace(M=M, b2=b2)
    p = quadratic_profile(params, 200)
    assert two_component_energy(p) == pytest.approx(radial_energy(p, form="divergence"), rel=1e-12)


@pytest.mark.parametrize("M", [0.5, -0.5])
def test_divergence_and_shifted_forms_agree(M):
    p = preset_profile("q3", UNIT.replace(M=M, R=2.0), 300)
    assert radial_energy(p, form="shifted") == pytest.approx(radial_energy(p, form="divergence"), rel=1e-10)


def test_unknown_energy_form():
    with pytest.raises(ValueError):
        RadialFunctional(UNIT, 10, form="other")


def test_gradient_and_hessian_match_finite_differences():
    params = MaterialParams(b2=0.8, M=0.3, R=2.0)
    functional = RadialFunctional(params, 40)
    x = preset_profile("q5", params, 40).w.T.copy()
    rng = np.random.default_rng(5)
    d = rng.standard_normal(x.shape) * functional.free
    t = 1e-6
    fd = (functional.energy(x + t * d) - functional.energy(x - t * d)) / (2 * t)
    assert np.sum(functional.gradient(x) * d) == pytest.approx(fd, rel=1e-6)
    fd2 = (functional.gradient(x + t * d) - functional.gradient(x - t * d)).ravel() / (2 * t)
    assert np.allclose(functional.hessian(x) @ d.ravel(), fd2, atol=1e-6 * np.abs(fd2).max())


def test_reduced_hessian_apply_matches_matrix():
    params = MaterialParams(M=0.2, R=2.0)
    p = preset_profile("q3", params, 30)
    v = np.random.default_rng(6).standard_normal((5, 31))
    expected = RadialFunctional(params, 30).hessian(p.w.T) @ v.T.ravel()
    assert np.allclose(reduced_hessian_apply(p, v), expected.reshape(31, 5).T)


def test_minimiser_is_q2minus(q2minus):
    assert q2minus.converged
    p = q2minus.profile
    assert classify_profile(p) == "Q2-"
    assert np.all(p.w[0] < 0.0)
    assert np.all(np.diff(p.w[1]) >= -1e-10)
    assert np.allclose(p.w[:, -1], boundary_values(p.params))
    assert p.w[1, 0] == 0.0


def test_minimiser_beats_its_seed(q2minus):
    seed = preset_profile("q2minus", q2minus.profile.params, 400)
    assert q2minus.energy < radial_energy(seed)
    assert q2minus.energy == pytest.approx(radial_energy(q2minus.profile))


def test_restricted_solvers_agree_at_M0(q2minus):
    params = q2minus.profile.params
    two = minimize_radial_two_component(params, N=400)
    m0 = minimize_radial_M0(params, N=400)
    assert two.energy == pytest.approx(q2minus.energy, rel=1e-8)
    assert m0.energy == pytest.approx(q2minus.energy, rel=1e-8)
    assert np.allclose(m0.profile.u, q2minus.profile.w[1], atol=1e-6)


def test_minimiser_hessian_eigenvalue_is_finite(q2minus):
    eig = reduced_hessian_min_eig(q2minus.profile)
    assert eig.converged
    assert np.isfinite(eig.value)


def test_ode_residual_decreases_under_refinement():
    params = MaterialParams(b2=1.0, R=5.0)
    norms = [ode_residual(minimize_radial_two_component(params, N=N).profile).norm for N in (100, 200)]
    assert norms[0] / norms[1] > 2.5


@pytest.mark.parametrize("k", [1, 3, -1])
def test_non_radial_winding_numbers_need_M0(k):
    with pytest.raises(ParameterError):
        minimize_radial(MaterialParams(k=k, M=0.5), N=20)


def test_uv_system_needs_M0():
    with pytest.raises(ParameterError):
        minimize_radial_M0(MaterialParams(M=0.5), N=20)


def test_unconverged_profile_cannot_be_classified():
    with pytest.raises(ProfileError):
        classify_profile(quadratic_profile(UNIT, 20))


def test_boundary_mismatch_is_rejected():
    with pytest.raises(ProfileError):
        RadialProfile(np.linspace(0.0, 1.0, 11), np.zeros((5, 11)), UNIT)


def test_gamma_limit_is_infinite_off_constraint():
    p = quadratic_profile(UNIT, 100)
    assert gamma_limit_residual(p).relative > 1e-3
    assert gamma_limit_energy(p) == float("inf")


def test_field_energy_adds_null_lagrangian():
    params = MaterialParams(M=0.5)
    assert field_energy(1.0, params) == pytest.approx(2 * pi - pi * 2 * 0.5 * params.s_plus**2)
    assert field_energy(1.0, MaterialParams()) == pytest.approx(2 * pi)


B0_R50 = MaterialParams(b2=0.0, M=0.0, R=50.0)
B1_R50 = MaterialParams(b2=1.0, M=0.0, R=50.0)


@pytest.fixture(scope="module")
def q2pm():
    return minimize_radial_two_component(B0_R50, init="q2pm", N=1000)


def test_q2pm_seed_keeps_a_constant_norm():
    p = preset_profile("q2pm", B0_R50, 200)
    assert np.allclose(np.hypot(p.w[0], p.w[1]), B0_R50.s_plus * sqrt(2.0 / 3.0))
    assert p.w[0, 0] > 0.0


def test_q3_and_q5_seeds_are_uniaxial_with_order_s_plus():
    for name in ("q3", "q5"):
        p = preset_profile(name, B1_R50, 200)
        assert np.allclose(np.sum(p.w**2, axis=0), 2.0 / 3.0 * B1_R50.s_plus**2)
    twisted = preset_profile("q5", B1_R50, 200)
    assert np.max(np.abs(twisted.w[2])) > 0.1 and np.max(np.abs(twisted.w[4])) > 0.1


def test_two_component_solve_keeps_the_sign_changing_branch(q2pm):
    assert q2pm.converged
    p = q2pm.profile
    assert classify_profile(p) == "Q2+-"
    assert p.w[0, 0] > 0.0 > p.w[0, -1]
    # the in-plane order overshoots its boundary value
    assert np.max(p.w[1]) > p.w[1, -1] + 1e-2


def test_q2minus_lies_below_q2pm(q2pm):
    q2minus = minimize_radial_two_component(B0_R50, N=1000)
    p = q2minus.profile
    assert classify_profile(p) == "Q2-"
    assert np.all(p.w[0] < 0.0) and np.all(p.w[1][1:] > 0.0)
    assert np.all(np.diff(p.w[0]) >= -1e-10)
    assert np.all(np.diff(p.w[1]) >= -1e-10)
    assert q2minus.energy < q2pm.energy


def test_critical_point_solve_reaches_q2pm_and_records_stability(q2pm):
    result = solve_radial_critical(B0_R50, init="q2pm", N=1000)
    assert result.converged
    assert classify_profile(result.profile) == "Q2+-"
    assert result.energy == pytest.approx(q2pm.energy, rel=1e-8)
    assert result.min_eig == pytest.approx(reduced_hessian_min_eig(result.profile).value, rel=1e-6, abs=1e-9)


def test_minimisation_from_q2pm_never_rises_above_it(q2pm):
    result = minimize_radial(B0_R50, init="q2pm", N=1000)
    assert result.converged
    assert result.energy <= q2pm.energy + 1e-9 * abs(q2pm.energy)
    assert result.min_eig > -SADDLE_TOL


def test_restricted_solves_do_not_record_stability(q2pm):
    assert q2pm.min_eig is None


def test_large_M_profile_is_oblate_and_negative_M_changes_sign():
    base = MaterialParams(b2=1.0, R=10.0)
    stiff = minimize_radial_two_component(base.replace(M=100.0), N=500)
    soft = minimize_radial_two_component(base.replace(M=-0.55), init="q2pm", N=500)
    assert stiff.converged and soft.converged
    assert np.all(stiff.profile.w[0] < 0.0)
    assert soft.profile.w[0, 0] > 0.0 > soft.profile.w[0, -1]


def test_large_M_minimiser_keeps_w2_and_w3_off():
    params = MaterialParams(b2=1.0, M=100.0, R=10.0)
    result = minimize_radial(params, N=500)
    assert result.converged
    residual = gamma_limit_residual(result.profile)
    assert residual.w2_norm < 1e-3 * params.s_plus
    assert residual.w3_norm < 1e-3 * params.s_plus


@pytest.mark.slow
def test_constraint_residual_decays_along_a_continuation_in_M():
    base = MaterialParams(b2=1.0, R=10.0)
    profile = "q2minus"
    relative = []
    for M in (100.0, 1e3, 1e4, 1e5):
        result = minimize_radial_two_component(base.replace(M=M), init=profile, N=500)
        assert result.converged
        profile = result.profile
        relative.append(gamma_limit_residual(profile).relative)
    assert relative == sorted(relative, reverse=True)
    assert relative[-1] < 1e-2


def test_escaped_branch_is_the_b1_minimiser():
    q3 = minimize_radial(B1_R50, init="q3", N=1000)
    q2 = minimize_radial_two_component(B1_R50, N=1000)
    assert q3.converged
    assert classify_profile(q3.profile) == "Q3"
    assert q3.min_eig > 0.0
    assert q3.energy < q2.energy


@pytest.mark.slow
def test_twisted_branch_leaves_q3_at_M5():
    params = B1_R50.replace(M=5.0)
    q5 = minimize_radial(params, init="q5", N=1000)
    assert q5.converged
    assert classify_profile(q5.profile) == "Q5"
    assert np.all(np.max(np.abs(q5.profile.w), axis=1) > 1e-3 * params.s_plus)
    assert q5.min_eig > -SADDLE_TOL

    profile = minimize_radial(B1_R50, init="q3", N=1000).profile
    for M in (1.0, 2.0, 3.0, 4.0, 5.0):
        q3 = solve_radial_critical(params.replace(M=M), init=profile, N=1000, active=(0, 1, 3))
        assert q3.converged
        profile = q3.profile
    assert classify_profile(q3.profile) == "Q3"
    assert reduced_hessian_min_eig(q3.profile).value < 0.0
    assert q5.energy < q3.energy


def test_b0_M1_q2minus_lies_below_the_other_radial_branches():
    params = B0_R50.replace(M=1.0)
    q2minus = minimize_radial_two_component(params, N=1000)
    q2pm = minimize_radial_two_component(params, init="q2pm", N=1000)
    escaped = minimize_radial(params, init="q3", N=1000)
    assert q2pm.converged and escaped.converged
    assert classify_profile(q2pm.profile) == "Q2+-"
    assert q2minus.energy < q2pm.energy
    assert q2minus.energy <= escaped.energy + 1e-9 * abs(escaped.energy)
