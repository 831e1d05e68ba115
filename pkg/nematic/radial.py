"""Reduced radial energies for generally k-radially symmetric profiles.

Profiles are piecewise linear on a uniform grid r_j = j*h, j = 0..N. Every energy term is
integrated with the cell-midpoint rule (weight h*r_c), which makes the boundary terms separating
the two energy forms telescope exactly.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from math import pi, sqrt
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, spsolve

from nematic.elastic import null_lagrangian_constant
from nematic.errors import ParameterError, ProfileError
from nematic.tensors import (
    MaterialParams,
    basis_tensors,
    bulk_gradient,
    bulk_hessian_apply,
    bulk_potential,
    from_components,
)


logger = logging.getLogger(__name__)

ROOT2, ROOT3, ROOT6 = sqrt(2.0), sqrt(3.0), sqrt(6.0)
PRESETS = ("q2minus", "q2pm", "q3", "q5")
LABELS = ("Q2-", "Q2+-", "Q3", "Q5")

TWIST_SEED = pi / 6
# a converged critical point is left along its lowest mode below this eigenvalue
SADDLE_TOL = 1e-6
# largest nodal change of a saddle-leaving step, in units of s_+
ESCAPE_AMPLITUDE = 0.05


def boundary_values(params: MaterialParams) -> np.ndarray:
    s = params.s_plus
    return np.array([-s / ROOT6, s / ROOT2, 0.0, 0.0, 0.0])


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Components w[i, j] = w_i(r_j) of Q = sum_i w_i(r) E_i."""

    r: np.ndarray
    w: np.ndarray
    params: MaterialParams
    converged: Optional[bool] = None

    def __post_init__(self) -> None:
        r = np.asarray(self.r, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if w.shape != (5, len(r)):
            raise ProfileError(f"Profile needs 5 components on {len(r)} nodes, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ProfileError("Profile contains non-finite values")
        if abs(r[0]) > 1e-12 * r[-1] or abs(r[-1] - self.params.R) > 1e-10 * self.params.R:
            raise ProfileError(f"Grid must span [0, {self.params.R}], got [{r[0]}, {r[-1]}]")
        scale = 1e-10 * max(self.params.s_plus, 1.0)
        if np.max(np.abs(w[:, -1] - boundary_values(self.params))) > scale:
            raise ProfileError(f"Boundary values at r=R do not match: {w[:, -1]}")
        if np.max(np.abs(w[1:, 0])) > scale:
            raise ProfileError("Components w1..w4 must vanish at the origin")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "w", w)

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def N(self) -> int:
        return len(self.r) - 1

    def tensors(self) -> np.ndarray:
        """Q(r_j) at phi = 0, shape (N+1, 3, 3)."""
        return from_components(self.w.T, basis_tensors(0.0, self.k))

    def with_params(self, params: MaterialParams) -> "RadialProfile":
        return RadialProfile(self.r, self.w, params, self.converged)

    def resample(self, N: int) -> "RadialProfile":
        r = np.linspace(0.0, self.params.R, N + 1)
        w = np.array([np.interp(r, self.r, wi) for wi in self.w])
        return RadialProfile(r, w, self.params)


@dataclass(frozen=True, eq=False)
class M0Profile:
    """Y = u(r) E1 + v(r) E0, the form of every k-radial critical point when M = 0."""

    r: np.ndarray
    u: np.ndarray
    v: np.ndarray
    params: MaterialParams
    converged: Optional[bool] = None

    @property
    def k(self) -> int:
        return self.params.k

    def as_radial(self) -> RadialProfile:
        zero = np.zeros_like(self.u)
        return RadialProfile(self.r, np.array([self.v, self.u, zero, zero, zero]), self.params, self.converged)

    @classmethod
    def from_radial(cls, p: RadialProfile) -> "M0Profile":
        return cls(p.r, p.w[1].copy(), p.w[0].copy(), p.params, p.converged)


def preset_profile(name: str, params: MaterialParams, N: int) -> RadialProfile:
    """Deterministic branch seeds.

    q2minus melts an oblate core. q2pm keeps |Q| fixed and turns from a prolate core to the
    boundary data along tan(alpha/2) = sqrt(3) (r/R)^|k|, which never passes through Q = 0.
    q3 is the uniaxial director escaping into e3 at the origin; q5 twists that director about e3
    by chi(r) = TWIST_SEED * sin(pi r / R).
    """
    if name not in PRESETS:
        raise ValueError(f"Unknown branch preset: {name}")
    s, xi, R = params.s_plus, params.core_length, params.R
    k = max(abs(params.k), 1)
    r = np.linspace(0.0, R, N + 1)
    rho = r / R
    w = np.zeros((5, N + 1))
    if name == "q2minus":
        t = np.tanh(r / xi)
        w[0] = -s / ROOT6 * t / np.tanh(R / xi)
        w[1] = s / ROOT2 * t * r**2 / (r**2 + xi**2) / (np.tanh(R / xi) * R**2 / (R**2 + xi**2))
    elif name == "q2pm":
        alpha = 2.0 * np.arctan(ROOT3 * rho**k)
        w[0] = s * sqrt(2.0 / 3.0) * np.cos(alpha)
        w[1] = s * sqrt(2.0 / 3.0) * np.sin(alpha)
    else:
        theta = 0.5 * pi - 2.0 * np.arctan(rho ** (k / 2))
        chi = TWIST_SEED * np.sin(pi * rho) if name == "q5" else np.zeros_like(r)
        planar, tilt = np.cos(theta), np.sin(theta)
        w[0] = s * sqrt(1.5) * (tilt**2 - 1.0 / 3.0)
        w[1] = s / ROOT2 * planar**2 * np.cos(2.0 * chi)
        w[2] = s * ROOT2 * planar**2 * np.cos(chi) * np.sin(chi)
        w[3] = s * ROOT2 * tilt * planar * np.cos(chi)
        w[4] = s * ROOT2 * tilt * planar * np.sin(chi)
    w[1:, 0] = 0.0
    w[:, -1] = boundary_values(params)
    return RadialProfile(r, w, params)


def _vector(*entries: tuple[int, float]) -> np.ndarray:
    v = np.zeros(10)
    for index, coefficient in entries:
        v[index] += coefficient
    return v


def radial_stiffness(params: MaterialParams, form: str = "divergence") -> np.ndarray:
    """K with elastic density z.K.z/2, z = (w0'..w4', w0/r..w4/r)."""
    L, M, k = params.L, params.M, params.k
    d, v = (lambda i: i), (lambda i: 5 + i)
    if form == "divergence":
        terms = [
            (L / 2, _vector((d(0), 1.0))),
            (L / 2, _vector((d(1), 1.0))),
            (L / 2 * k * k, _vector((v(1), 1.0))),
            (M / 6, _vector((d(1), ROOT3), (d(0), -1.0), (v(1), 2.0 * ROOT3))),
        ]
    elif form == "shifted":
        terms = [
            (L / 2 + 2 * M / 3, _vector((d(0), 1.0))),
            (L / 2 + 2 * M / 3, _vector((d(1), 1.0))),
            ((L / 2 + 2 * M / 3) * k * k, _vector((v(1), 1.0))),
            (-M / 6, _vector((d(0), ROOT3), (d(1), 1.0), (v(1), 2.0))),
        ]
    else:
        raise ValueError(f"Unknown energy form: {form}")
    terms += [
        ((L + M) / 2, _vector((d(2), 1.0))),
        ((L + M) / 2 * k * k, _vector((v(2), 1.0))),
        ((L + M) / 2, _vector((d(3), 1.0))),
        ((L + M) / 2 * (k / 2) ** 2, _vector((v(3), 1.0))),
        (L / 2, _vector((d(4), 1.0))),
        (L / 2 * (k / 2) ** 2, _vector((v(4), 1.0))),
    ]
    return sum(2.0 * weight * np.outer(vec, vec) for weight, vec in terms)


def default_form(params: MaterialParams) -> str:
    return "shifted" if params.M < 0 else "divergence"


def assemble_cell_blocks(blocks: np.ndarray, n_nodes: int) -> sparse.csr_matrix:
    """Sum per-cell (2m, 2m) blocks coupling nodes c, c+1 into a node-major sparse matrix."""
    n_cells, size, _ = blocks.shape
    width = size // 2
    local = np.arange(size)
    index = width * np.arange(n_cells)[:, None] + local[None, :]
    rows = np.broadcast_to(index[:, :, None], blocks.shape)
    cols = np.broadcast_to(index[:, None, :], blocks.shape)
    shape = (n_nodes * width, n_nodes * width)
    return sparse.coo_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


class RadialFunctional:
    """Discrete reduced energy on node-major unknowns x[j, i] = w_i(r_j)."""

    def __init__(
        self,
        params: MaterialParams,
        N: int,
        form: Optional[str] = None,
        active: Sequence[int] = range(5),
    ) -> None:
        self.params = params
        self.N = N
        self.h = params.R / N
        self.r = np.linspace(0.0, params.R, N + 1)
        self.rc = 0.5 * (self.r[:-1] + self.r[1:])
        self.weight = self.h * self.rc
        self.form = form or default_form(params)
        self.K = radial_stiffness(params, self.form)
        self.constant = 2.0 * params.M * params.s_plus**2 / 3.0 if self.form == "shifted" else 0.0
        self.basis = basis_tensors(0.0, params.k)

        free = np.ones((N + 1, 5), dtype=bool)
        free[-1, :] = False
        free[0, 1:] = False
        inactive = [i for i in range(5) if i not in set(active)]
        free[:, inactive] = False
        self.free = free
        self.active = tuple(sorted(set(active)))

        # z_c = A_c (x_c, x_{c+1})
        eye = np.eye(5)
        A = np.zeros((N, 10, 10))
        A[:, :5, :5] = -eye / self.h
        A[:, :5, 5:] = eye / self.h
        A[:, 5:, :5] = eye / (2.0 * self.rc[:, None, None])
        A[:, 5:, 5:] = eye / (2.0 * self.rc[:, None, None])
        self.A = A

    def cells(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mid = 0.5 * (x[:-1] + x[1:])
        z = np.concatenate([(x[1:] - x[:-1]) / self.h, mid / self.rc[:, None]], axis=1)
        return mid, z

    def elastic_density(self, x: np.ndarray) -> np.ndarray:
        _, z = self.cells(x)
        return 0.5 * np.einsum("ca,ab,cb->c", z, self.K, z)

    def bulk_density(self, x: np.ndarray) -> np.ndarray:
        mid, _ = self.cells(x)
        return bulk_potential(from_components(mid, self.basis), self.params)

    def energy(self, x: np.ndarray) -> float:
        x = x.reshape(self.N + 1, 5)
        density = self.elastic_density(x) + self.bulk_density(x)
        return float(self.weight @ density + self.constant)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = x.reshape(self.N + 1, 5)
        mid, z = self.cells(x)
        G = bulk_gradient(from_components(mid, self.basis), self.params)
        bulk = np.einsum("ckl,ikl->ci", G, self.basis)
        local = np.einsum("cab,cb->ca", np.swapaxes(self.A, 1, 2), z @ self.K)
        local[:, :5] += 0.5 * bulk
        local[:, 5:] += 0.5 * bulk
        local *= self.weight[:, None]
        grad = np.zeros_like(x)
        grad[:-1] += local[:, :5]
        grad[1:] += local[:, 5:]
        return grad

    def bulk_hessians(self, x: np.ndarray) -> np.ndarray:
        """B[c, i, j] = tr(E_i D2f_B(Q_c)[E_j]) at the cell midpoints."""
        mid, _ = self.cells(x.reshape(self.N + 1, 5))
        Q = from_components(mid, self.basis)
        HE = bulk_hessian_apply(Q[:, None], self.basis[None], self.params)
        return np.einsum("ikl,cjkl->cij", self.basis, HE)

    def hessian(self, x: np.ndarray) -> sparse.csr_matrix:
        B = self.bulk_hessians(x)
        blocks = np.einsum("cab,bd,cde->cae", np.swapaxes(self.A, 1, 2), self.K, self.A)
        blocks += 0.25 * np.tile(B, (1, 2, 2))
        blocks *= self.weight[:, None, None]
        return assemble_cell_blocks(blocks, self.N + 1)

    def node_mass(self) -> np.ndarray:
        mass = np.zeros(self.N + 1)
        mass[:-1] += 0.5 * self.weight
        mass[1:] += 0.5 * self.weight
        return mass


class RadialResult(NamedTuple):
    profile: RadialProfile
    energy: float
    converged: bool
    iterations: int
    gradient_norm: float
    # lowest eigenvalue of the second variation on the solved components, when it was computed
    min_eig: Optional[float] = None


class M0Result(NamedTuple):
    profile: M0Profile
    energy: float
    converged: bool
    iterations: int
    gradient_norm: float
    min_eig: Optional[float] = None


def _descent_direction(H: sparse.csr_matrix, g: np.ndarray) -> np.ndarray:
    """Newton step, shifted by the smallest multiple of diag|H| that makes it a descent direction."""
    diag = np.abs(H.diagonal())
    for mu in (0.0, *np.logspace(-8, 2, 11)):
        A = H if mu == 0.0 else H + mu * sparse.diags(diag)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            step = spsolve(A.tocsc(), -g)
        if np.all(np.isfinite(step)) and g @ step < 0:
            return step
    return -g / np.maximum(diag, np.finfo(float).tiny)


def newton_minimize(functional: RadialFunctional, x0: np.ndarray, tol: float, max_iter: int):
    """Damped Newton with Armijo backtracking on the free unknowns."""
    free = functional.free.ravel()
    x = x0.ravel().copy()
    energy = functional.energy(x)
    gnorm = np.inf
    for iteration in range(max_iter + 1):
        grad = functional.gradient(x).ravel()
        g = grad[free]
        gnorm = float(np.linalg.norm(g))
        if gnorm < tol:
            return x, energy, True, iteration, gnorm
        if iteration == max_iter:
            break
        H = functional.hessian(x)[free][:, free]
        step = _descent_direction(H, g)
        slope = float(g @ step)
        t = 1.0
        while True:
            trial = x.copy()
            trial[free] += t * step
            trial_energy = functional.energy(trial)
            if trial_energy <= energy + 1e-4 * t * slope:
                break
            # round-off floor near the minimum: accept a full step that shrinks the gradient
            if t == 1.0 and trial_energy <= energy + 1e-13 * abs(energy):
                if np.linalg.norm(functional.gradient(trial).ravel()[free]) < 0.5 * gnorm:
                    break
            t *= 0.5
            if t < 1e-12:
                logger.warning(f"Line search stalled at iteration {iteration}, |g|={gnorm:.3e}")
                return x, energy, False, iteration, gnorm
        x, energy = trial, trial_energy
    return x, energy, False, max_iter, gnorm


def newton_critical(functional: RadialFunctional, x0: np.ndarray, tol: float, max_iter: int):
    """Newton on the gradient with backtracking on |g|^2/2; saddles attract as well as minima."""
    free = functional.free.ravel()
    x = x0.ravel().copy()
    gnorm = np.inf
    for iteration in range(max_iter + 1):
        g = functional.gradient(x).ravel()[free]
        gnorm = float(np.linalg.norm(g))
        if gnorm < tol:
            return x, functional.energy(x), True, iteration, gnorm
        if iteration == max_iter:
            break
        H = functional.hessian(x)[free][:, free].tocsc()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            step = spsolve(H, -g)
        if not np.all(np.isfinite(step)):
            step = -(H @ g)
        slope = float(g @ (H @ step))
        merit = 0.5 * gnorm**2
        t = 1.0
        while True:
            trial = x.copy()
            trial[free] += t * step
            trial_norm = float(np.linalg.norm(functional.gradient(trial).ravel()[free]))
            if 0.5 * trial_norm**2 <= merit + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                logger.warning(f"Residual line search stalled at iteration {iteration}, |g|={gnorm:.3e}")
                return x, functional.energy(x), False, iteration, gnorm
        x = trial
    return x, functional.energy(x), False, max_iter, gnorm


def _initial_unknowns(
    params: MaterialParams, init: Union[None, str, RadialProfile, M0Profile], N: int, active: Sequence[int]
) -> np.ndarray:
    if init is None:
        init = "q2minus"
    if isinstance(init, str):
        profile = preset_profile(init, params, N)
    elif isinstance(init, M0Profile):
        profile = init.as_radial()
    else:
        profile = init
    if profile.N != N or profile.params.R != params.R:
        r = np.linspace(0.0, params.R, N + 1)
        scaled = profile.r * params.R / profile.params.R
        w = np.array([np.interp(r, scaled, wi) for wi in profile.w])
    else:
        w = profile.w.copy()
    inactive = [i for i in range(5) if i not in set(active)]
    w[inactive] = 0.0
    w[:, -1] = boundary_values(params)
    w[1:, 0] = 0.0
    return w.T.copy()


def _check_winding(params: MaterialParams) -> None:
    if params.M != 0 and params.k != 2:
        raise ParameterError(
            f"No generally k-radially symmetric critical points exist for k={params.k} when M != 0"
        )


def _step_off(functional: RadialFunctional, x: np.ndarray, energy: float, mode: np.ndarray, amplitude: float):
    """First point x +- t*mode, t halving from amplitude, with energy below the saddle's."""
    direction = mode.T.ravel()
    direction = direction * amplitude / np.max(np.abs(direction))
    for _ in range(12):
        for sign in (1.0, -1.0):
            trial = x + sign * direction
            trial_energy = functional.energy(trial)
            if trial_energy < energy:
                return trial
        direction = 0.5 * direction
    return None


def _solve(params, init, N, tol, max_iter, active, form, escapes: int = 0) -> RadialResult:
    """Newton minimisation on the active components; with escapes > 0 a converged point whose
    lowest Hessian eigenvalue is below -SADDLE_TOL is left along that mode and minimised again."""
    functional = RadialFunctional(params, N, form=form, active=active)
    x = _initial_unknowns(params, init, N, active).ravel()
    tol = tol if tol is not None else 1e-8 * N
    total = 0
    min_eig = None
    for attempt in range(escapes + 1):
        x, energy, converged, iterations, gnorm = newton_minimize(functional, x, tol, max_iter)
        total += iterations
        if not converged or escapes == 0:
            break
        eig = _lowest_mode(functional, x)
        min_eig = eig.value
        if not eig.converged or eig.value >= -SADDLE_TOL or attempt == escapes:
            break
        moved = _step_off(functional, x, energy, eig.mode, ESCAPE_AMPLITUDE * params.s_plus)
        if moved is None:
            logger.warning(f"No descent along the negative mode {eig.value:.3e} at E={energy:.10g}")
            break
        logger.info(f"Leaving a saddle with eigenvalue {eig.value:.3e} at E={energy:.10g}")
        x = moved
    if converged:
        logger.info(f"Radial solve k={params.k} M={params.M} R={params.R} converged in {total} steps")
    else:
        logger.warning(f"Radial solve k={params.k} M={params.M} R={params.R} not converged, |g|={gnorm:.3e}")
    w = x.reshape(N + 1, 5).T
    profile = RadialProfile(functional.r, w, params, converged)
    return RadialResult(profile, energy, converged, total, gnorm, min_eig)


def _escaped_start(params: MaterialParams, N: int, tol, max_iter: int, form: Optional[str]) -> RadialProfile:
    """Q3 continued in unit steps of M from the escaped seed at M = 0."""
    profile: Union[str, RadialProfile] = "q3"
    steps = int(np.ceil(abs(params.M)))
    for M in np.linspace(0.0, params.M, steps + 1):
        stage = params.replace(M=float(M))
        profile = _solve(stage, profile, N, tol, max_iter, (0, 1, 3), form if M == params.M else None).profile
    return profile.with_params(params)


def minimize_radial(
    params: MaterialParams,
    init: Union[None, str, RadialProfile, M0Profile] = None,
    N: int = 2000,
    tol: Optional[float] = None,
    max_iter: int = 200,
    form: Optional[str] = None,
    escapes: int = 3,
) -> RadialResult:
    """Minimise the five-component reduced energy; requires k=2 unless M=0.

    Converged saddles of the reduced energy are left along their negative mode, so a converged
    result is a local minimiser and min_eig records its lowest eigenvalue. The "q5" preset starts
    from Q3 reached by continuation in M and leaves it along its twist mode when Q3 is unstable.
    """
    _check_winding(params)
    active = tuple(range(5) if params.k % 2 == 0 else range(3))
    if isinstance(init, str) and init == "q5" and 3 in active:
        init = _escaped_start(params, N, tol, max_iter, form)
    return _solve(params, init, N, tol, max_iter, active, form, escapes)


def solve_radial_critical(
    params: MaterialParams,
    init: Union[None, str, RadialProfile, M0Profile] = None,
    N: int = 2000,
    tol: Optional[float] = None,
    max_iter: int = 200,
    active: Optional[Sequence[int]] = None,
    form: Optional[str] = None,
) -> RadialResult:
    """Critical point of the reduced energy nearest the seed, saddles included.

    min_eig is the lowest eigenvalue on the solved components: negative marks a saddle.
    """
    _check_winding(params)
    if active is None:
        active = range(5) if params.k % 2 == 0 else range(3)
    functional = RadialFunctional(params, N, form=form, active=active)
    x0 = _initial_unknowns(params, init, N, functional.active)
    tol = tol if tol is not None else 1e-8 * N
    x, energy, converged, iterations, gnorm = newton_critical(functional, x0, tol, max_iter)
    min_eig = None
    if converged:
        min_eig = _lowest_mode(functional, x).value
        kind = "saddle" if min_eig < 0 else "minimum"
        logger.info(f"Critical point k={params.k} M={params.M} R={params.R} ({kind}) in {iterations} steps")
    else:
        logger.warning(f"Critical point solve M={params.M} R={params.R} not converged, |g|={gnorm:.3e}")
    profile = RadialProfile(functional.r, x.reshape(N + 1, 5).T, params, converged)
    return RadialResult(profile, energy, converged, iterations, gnorm, min_eig)


def minimize_radial_two_component(
    params: MaterialParams,
    init: Union[None, str, RadialProfile, M0Profile] = None,
    N: int = 2000,
    tol: Optional[float] = None,
    max_iter: int = 200,
) -> RadialResult:
    _check_winding(params)
    return _solve(params, init, N, tol, max_iter, (0, 1), None)


def minimize_radial_M0(
    params: MaterialParams,
    init: Union[None, str, RadialProfile, M0Profile] = None,
    N: int = 2000,
    tol: Optional[float] = None,
    max_iter: int = 200,
) -> M0Result:
    if params.M != 0:
        raise ParameterError(f"The (u, v) system holds only for M=0, got M={params.M}")
    result = _solve(params, init, N, tol, max_iter, (0, 1), None)
    return M0Result(M0Profile.from_radial(result.profile), *result[1:])


def radial_energy(p: RadialProfile, params: Optional[MaterialParams] = None, form: Optional[str] = None) -> float:
    params = params or p.params
    return RadialFunctional(params, p.N, form=form).energy(p.w.T)


def two_component_energy(p: RadialProfile, params: Optional[MaterialParams] = None) -> float:
    """Energy of the (w0, w1) restriction with its explicit polynomial bulk term."""
    params = params or p.params
    L, M = params.L, params.M
    a2, b2, c2, k = params.a2, params.b2, params.c2, params.k
    h = params.R / p.N
    rc = 0.5 * (p.r[:-1] + p.r[1:])
    w0, w1 = 0.5 * (p.w[0, :-1] + p.w[0, 1:]), 0.5 * (p.w[1, :-1] + p.w[1, 1:])
    d0, d1 = np.diff(p.w[0]) / h, np.diff(p.w[1]) / h
    square = w0**2 + w1**2
    density = (
        L / 2 * (d1**2 + d0**2 + k * k * w1**2 / rc**2)
        + M / 6 * (ROOT3 * d1 - d0 + 2 * ROOT3 * w1 / rc) ** 2
        + (-a2 / 2 + c2 / 4 * square) * square
        - b2 * ROOT6 / 18 * (w0**3 - 3 * w0 * w1**2)
    )
    return float(np.sum(h * rc * density))


def field_energy(E: float, params: MaterialParams) -> float:
    """Full-disk energy of the assembled profile (M I2 convention) from a reduced energy."""
    return 2 * pi * E + params.M * null_lagrangian_constant(params)


class ODEResidual(NamedTuple):
    r: np.ndarray
    values: np.ndarray
    norm: float


def ode_residual(p: RadialProfile, params: Optional[MaterialParams] = None, r_min: Optional[float] = None) -> ODEResidual:
    """Euler-Lagrange residual of the five-component system by central differences at interior nodes.

    The norm is the r-weighted discrete L2 norm over nodes with r >= r_min (default half the
    core length), where the 1/r^2 terms are resolved to second order.
    """
    params = params or p.params
    L, M, k = params.L, params.M, params.k
    h = params.R / p.N
    r = p.r[1:-1]
    w = p.w
    d1 = (w[:, 2:] - w[:, :-2]) / (2 * h)
    d2 = (w[:, 2:] - 2 * w[:, 1:-1] + w[:, :-2]) / h**2
    wi = w[:, 1:-1]
    lhs = np.empty_like(wi)
    lhs[0] = (L + M / 3) * (d2[0] + d1[0] / r) - M / ROOT3 * (d2[1] + 3 * d1[1] / r)
    lhs[1] = (L + M) * (d2[1] + d1[1] / r - k * k * wi[1] / r**2) - M / ROOT3 * (d2[0] - d1[0] / r)
    lhs[2] = (L + M) * (d2[2] + d1[2] / r - k * k * wi[2] / r**2)
    lhs[3] = (L + M) * (d2[3] + d1[3] / r - (k / 2) ** 2 * wi[3] / r**2)
    lhs[4] = L * (d2[4] + d1[4] / r - (k / 2) ** 2 * wi[4] / r**2)
    basis = basis_tensors(0.0, k)
    G = bulk_gradient(from_components(wi.T, basis), params)
    values = lhs - np.einsum("nkl,ikl->in", G, basis)
    r_min = 0.5 * params.core_length if r_min is None else r_min
    keep = r >= r_min
    norm = float(np.sqrt(np.sum(h * r[keep] * np.sum(values[:, keep] ** 2, axis=0))))
    return ODEResidual(r, values, norm)


def classify_profile(p: RadialProfile, tol: Optional[float] = None) -> str:
    if not p.converged:
        raise ProfileError("Refusing to classify an unconverged profile")
    tol = 1e-3 * p.params.s_plus if tol is None else tol
    size = np.max(np.abs(p.w), axis=1)
    if size[2] < tol and size[3] < tol and size[4] < tol:
        return "Q2-" if np.all(p.w[0] <= tol) else "Q2+-"
    if size[2] < tol and size[4] < tol:
        return "Q3"
    return "Q5"


class GammaResidual(NamedTuple):
    constraint_norm: float
    w2_norm: float
    w3_norm: float
    relative: float


def gamma_limit_residual(p: RadialProfile) -> GammaResidual:
    """Distance of p to the large-M constraint set sqrt(3)(w1 r^2)' = r^2 w0', w2 = w3 = 0.

    relative is the r-weighted L2 norm of the constraint over the sum of the norms of its sides.
    The M term is a penalty, so for minimisers it decays like 1/M: with b^2 = 1, R = 10 it is
    about 0.25 at M = 100 and reaches 1e-2 only for M of order 1e4 and beyond.
    """
    h = p.params.R / p.N
    rc = 0.5 * (p.r[:-1] + p.r[1:])
    weight = h * rc
    w1_mid = 0.5 * (p.w[1, :-1] + p.w[1, 1:])
    lhs = ROOT3 * rc**2 * (np.diff(p.w[1]) / h + 2 * w1_mid / rc)
    rhs = rc**2 * np.diff(p.w[0]) / h
    norm = lambda f: float(np.sqrt(weight @ f**2))
    constraint = norm(lhs - rhs)
    scale = norm(lhs) + norm(rhs)
    return GammaResidual(
        constraint,
        float(np.max(np.abs(p.w[2]))),
        float(np.max(np.abs(p.w[3]))),
        constraint / scale if scale > 0 else 0.0,
    )


def gamma_limit_energy(p: RadialProfile, params: Optional[MaterialParams] = None, tol: float = 1e-8) -> float:
    """Large-M limit energy; +inf off the constraint set."""
    params = params or p.params
    residual = gamma_limit_residual(p)
    s = params.s_plus
    if residual.relative > tol or residual.w2_norm > tol * s or residual.w3_norm > tol * s:
        return float("inf")
    limit = params.replace(M=0.0)
    functional = RadialFunctional(limit, p.N, form="divergence")
    return functional.energy(p.w.T)


class HessianEig(NamedTuple):
    value: float
    converged: bool
    # eigenvector as components (5, N+1), zero on fixed unknowns
    mode: Optional[np.ndarray] = None


def _lowest_mode(functional: RadialFunctional, x: np.ndarray) -> HessianEig:
    """Shift-invert below the spectrum; the lumped r-weighted mass makes eigenvalues grid independent."""
    params = functional.params
    x = x.reshape(functional.N + 1, 5)
    free = functional.free.ravel()
    H = functional.hessian(x)[free][:, free].tocsc()
    mass = sparse.diags(np.repeat(functional.node_mass(), 5)[free]).tocsc()
    lowest_bulk = float(np.min(np.linalg.eigvalsh(functional.bulk_hessians(x)), initial=0.0))
    sigma = 2.0 * min(0.0, lowest_bulk) - 1.0
    converged = True
    try:
        values, vectors = eigsh(H, k=1, M=mass, sigma=sigma, which="LM")
    except ArpackNoConvergence as exc:
        logger.warning(f"Hessian eigensolver did not converge for k={params.k} M={params.M}")
        values, vectors, converged = exc.eigenvalues, exc.eigenvectors, False
        if len(values) == 0:
            return HessianEig(float("nan"), False)
    lowest = int(np.argmin(values))
    mode = np.zeros(free.size)
    mode[free] = vectors[:, lowest]
    return HessianEig(float(values[lowest]), converged, mode.reshape(functional.N + 1, 5).T)


def reduced_hessian_min_eig(
    p: RadialProfile, params: Optional[MaterialParams] = None, active: Optional[Sequence[int]] = None
) -> HessianEig:
    """Smallest eigenvalue of the discrete second variation against the r-weighted lumped mass."""
    params = params or p.params
    if active is None:
        active = range(5) if p.k % 2 == 0 else range(3)
    return _lowest_mode(RadialFunctional(params, p.N, active=active), p.w.T)


def reduced_hessian_apply(p: RadialProfile, v: np.ndarray, params: Optional[MaterialParams] = None) -> np.ndarray:
    """Action of the discrete energy Hessian at p on a direction v of shape (5, N+1)."""
    params = params or p.params
    functional = RadialFunctional(params, p.N)
    Hv = functional.hessian(p.w.T) @ np.asarray(v, dtype=float).T.ravel()
    return Hv.reshape(p.N + 1, 5).T
