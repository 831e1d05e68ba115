"""First-order symmetry breaking of the M=0 radial solution Y at small M = eps.

The correction is W = a0 E0 + a1 E1 + cos(n phi)(b0 E0 + b1 E1) + sin(n phi) b2 E2 with n = k - 2.
Its five radial functions minimise Q2[W]/2 - <LY, W>, Q2 being the second variation of the
one-constant energy at Y; the angular integrals are done in closed form and the radial ones with
the same midpoint rule as the reduced energies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import pi
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, cg, eigsh, spsolve

from nematic.elastic import ElasticTriple, ModeCoupling, el_residual, mode_coupling
from nematic.errors import ParameterError, ProfileError, StabilityError
from nematic.field import Field2D, FieldEnergy, assemble_radial_field, field_norm, minimize_field
from nematic.mesh import DiskMesh, build_mesh
from nematic.radial import M0Profile, RadialFunctional, assemble_cell_blocks, minimize_radial_M0
from nematic.tensors import CARTESIAN_BASIS, MaterialParams, basis_tensors, bulk_potential, components


logger = logging.getLogger(__name__)

MODES = ("a0", "a1", "b0", "b1", "b2")
# angular integrals of 1, cos^2 and sin^2 over a period
MODE_WEIGHTS = np.array([2 * pi, 2 * pi, pi, pi, pi])


@dataclass(frozen=True, eq=False)
class PerturbationProfile:
    r: np.ndarray
    modes: np.ndarray
    params: MaterialParams

    def __post_init__(self) -> None:
        modes = np.asarray(self.modes, dtype=float)
        if modes.shape != (5, len(self.r)):
            raise ProfileError(f"Perturbation needs 5 modes on {len(self.r)} nodes, got {modes.shape}")
        object.__setattr__(self, "modes", modes)

    @property
    def k(self) -> int:
        return self.params.k

    a0 = property(lambda self: self.modes[0])
    a1 = property(lambda self: self.modes[1])
    b0 = property(lambda self: self.modes[2])
    b1 = property(lambda self: self.modes[3])
    b2 = property(lambda self: self.modes[4])

    @property
    def radial_block(self) -> np.ndarray:
        return self.modes[:2]

    @property
    def breaking_block(self) -> np.ndarray:
        return self.modes[2:]

    def tensor(self, r: np.ndarray, phi: np.ndarray, part: str = "full") -> np.ndarray:
        """W (or only its symmetry-breaking part when part='nr') at the points (r, phi)."""
        r, phi = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(phi, dtype=float))
        m = np.stack([np.interp(r, self.r, mode) for mode in self.modes], axis=-1)
        n = self.k - 2
        cos, sin = np.cos(n * phi), np.sin(n * phi)
        c0, c1, c2 = m[..., 2] * cos, m[..., 3] * cos, m[..., 4] * sin
        if part == "full":
            c0, c1 = c0 + m[..., 0], c1 + m[..., 1]
        elif part != "nr":
            raise ValueError(f"Unknown perturbation part: {part}")
        E = basis_tensors(phi, self.k)
        return c0[..., None, None] * E[..., 0, :, :] + c1[..., None, None] * E[..., 1, :, :] + c2[..., None, None] * E[..., 2, :, :]


def _splines(Y: M0Profile) -> tuple[CubicSpline, CubicSpline]:
    v = CubicSpline(Y.r, Y.v, bc_type=((1, 0.0), "not-a-knot"))
    u = CubicSpline(Y.r, Y.u)
    return v, u


def forcing_LY(Y: M0Profile, k: Optional[int] = None, r: Optional[np.ndarray] = None) -> ModeCoupling:
    """Mode coefficients of -LY, evaluated at the cell midpoints of Y's grid unless r is given."""
    k = Y.k if k is None else k
    if r is None:
        r = 0.5 * (Y.r[:-1] + Y.r[1:])
    v, u = _splines(Y)
    return -mode_coupling(k, [v, u], r)


class PerturbationOperator:
    """Discrete second variation S (x.S.x = Q2[W]) and load of the five-mode problem at Y."""

    def __init__(self, Y: M0Profile, k: Optional[int] = None) -> None:
        k = Y.k if k is None else k
        if k == 2:
            raise ParameterError("Perturbation modes degenerate at k=2; use the radial solver")
        self.Y = Y
        self.k = k
        self.params = Y.params.replace(k=k, M=0.0)
        N = len(Y.r) - 1
        self.N = N
        radial = RadialFunctional(self.params, N, active=(0, 1))
        self.radial = radial
        self.stiffness = self._mode_stiffness()

        x = np.zeros((N + 1, 5))
        x[:, 0], x[:, 1] = Y.v, Y.u
        B = radial.bulk_hessians(x)
        Bm = np.zeros((N, 5, 5))
        Bm[:, :2, :2] = 2 * pi * B[:, :2, :2]
        Bm[:, 2:4, 2:4] = pi * B[:, :2, :2]
        Bm[:, 4, 4] = pi * B[:, 2, 2]
        self.lowest_bulk = float(np.min(np.linalg.eigvalsh(B[:, :3, :3]), initial=0.0))

        A = radial.A
        blocks = np.einsum("cab,bd,cde->cae", np.swapaxes(A, 1, 2), self.stiffness, A)
        blocks += 0.25 * np.tile(Bm, (1, 2, 2))
        blocks *= radial.weight[:, None, None]
        self.S = assemble_cell_blocks(blocks, N + 1)

        free = np.ones((N + 1, 5), dtype=bool)
        free[-1] = False
        free[0, 1:] = False
        self.free = free.ravel()
        self.mass = np.outer(radial.node_mass(), MODE_WEIGHTS).ravel()

    def _mode_stiffness(self) -> np.ndarray:
        L, k = self.params.L, self.k
        n = k - 2
        d, v = (lambda i: i), (lambda i: 5 + i)

        def vec(*entries):
            out = np.zeros(10)
            for index, coefficient in entries:
                out[index] += coefficient
            return out

        terms = [
            (2 * pi * L, vec((d(0), 1.0))),
            (2 * pi * L, vec((d(1), 1.0))),
            (2 * pi * L * k * k, vec((v(1), 1.0))),
            (pi * L, vec((d(2), 1.0))),
            (pi * L, vec((d(3), 1.0))),
            (pi * L, vec((d(4), 1.0))),
            (pi * L * n * n, vec((v(2), 1.0))),
            (pi * L, vec((v(3), n), (v(4), k))),
            (pi * L, vec((v(3), k), (v(4), n))),
        ]
        return sum(weight * np.outer(e, e) for weight, e in terms)

    def load(self, forcing: Optional[ModeCoupling] = None) -> np.ndarray:
        """l with l.x = <LY, W> for the nodal mode vector x."""
        forcing = forcing_LY(self.Y, self.k) if forcing is None else forcing
        c = -forcing.coefficients
        F = np.stack(
            [2 * pi * c[:, 0, 0], 2 * pi * c[:, 1, 0], pi * c[:, 0, 1], pi * c[:, 1, 1], pi * c[:, 2, 2]], axis=-1
        )
        half = 0.5 * self.radial.weight[:, None] * F
        out = np.zeros((self.N + 1, 5))
        out[:-1] += half
        out[1:] += half
        return out.ravel()

    def min_eigenvalue(self) -> tuple[float, bool]:
        f = self.free
        S = self.S[f][:, f].tocsc()
        M = sparse.diags(self.mass[f]).tocsc()
        sigma = 2.0 * min(0.0, self.lowest_bulk) - 1.0
        try:
            values = eigsh(S, k=1, M=M, sigma=sigma, which="LM", return_eigenvectors=False)
        except ArpackNoConvergence as exc:
            if len(exc.eigenvalues) == 0:
                return float("nan"), False
            return float(np.min(exc.eigenvalues)), False
        return float(np.min(values)), True


class PerturbationResult(NamedTuple):
    profile: PerturbationProfile
    residual: float
    min_eigenvalue: float


def second_variation_apply(Y: M0Profile, W: PerturbationProfile, params: Optional[MaterialParams] = None) -> np.ndarray:
    """L dW + a2 W + b2(YW + WY - 2/3 tr(YW) I) - c2 W|Y|^2 - 2 c2 Y tr(YW) on the five modes.

    The image is recovered with the modal lumped mass, so <V, A W> = -Q2[V, W].
    """
    k = W.k if params is None else params.k
    op = PerturbationOperator(Y, k)
    image = -(op.S @ W.modes.T.ravel()) / op.mass
    return image.reshape(-1, 5).T


def mode_inner(V: np.ndarray, W: np.ndarray, Y: M0Profile) -> float:
    """r-weighted inner product of two mode arrays, angular weights included."""
    mass = np.outer(RadialFunctional(Y.params, len(Y.r) - 1).node_mass(), MODE_WEIGHTS)
    return float(np.sum(mass * np.asarray(V).T * np.asarray(W).T))


def solve_perturbation(
    Y: M0Profile,
    k: Optional[int] = None,
    params: Optional[MaterialParams] = None,
    forcing: Optional[ModeCoupling] = None,
    pd_threshold: float = 1e-10,
) -> PerturbationResult:
    k = Y.k if k is None else k
    if Y.params.M != 0:
        raise ParameterError("The unperturbed profile must solve the M=0 problem")
    op = PerturbationOperator(Y, k)
    lowest, ok = op.min_eigenvalue()
    if not ok:
        logger.warning(f"Second variation eigensolver did not converge for k={k}")
    if not lowest > pd_threshold:
        raise StabilityError(f"Second variation at Y is not positive definite for k={k}: min eigenvalue {lowest:.3e}")

    f = op.free
    rhs = op.load(forcing)
    x = np.zeros(5 * (op.N + 1))
    x[f] = spsolve(op.S[f][:, f].tocsc(), rhs[f])
    scale = np.linalg.norm(rhs[f])
    residual = float(np.linalg.norm(op.S[f][:, f] @ x[f] - rhs[f]))
    if scale > 0 and residual > 1e-8 * scale:
        logger.warning(f"Perturbation solve residual {residual:.3e} exceeds 1e-8 of the load {scale:.3e}")
    profile = PerturbationProfile(Y.r.copy(), x.reshape(-1, 5).T, (params or Y.params).replace(k=k))
    logger.info(f"Perturbation k={k}: min eigenvalue {lowest:.4g}, |b| = {np.abs(profile.breaking_block).max():.4g}")
    return PerturbationResult(profile, residual, lowest)


def mode_field_energy(
    Y: M0Profile, W: PerturbationProfile, t: float, params: Optional[MaterialParams] = None, n_phi: int = 64
) -> float:
    """One-constant energy of Y + tW from tensors on a polar grid (midpoint in r, uniform in phi)."""
    params = (params or Y.params).replace(k=W.k, M=0.0)
    k, n = W.k, W.k - 2
    r = Y.r
    h = r[1] - r[0]
    rc = 0.5 * (r[:-1] + r[1:])
    phi = 2 * pi * np.arange(n_phi) / n_phi
    cos, sin = np.cos(n * phi)[None, :], np.sin(n * phi)[None, :]
    m = W.modes[:, :, None]
    c = np.stack([
        Y.v[:, None] + t * (m[0] + m[2] * cos),
        Y.u[:, None] + t * (m[1] + m[3] * cos),
        t * m[4] * sin,
    ])
    dc = np.stack([-t * n * m[2] * sin, -t * n * m[3] * sin, t * n * m[4] * cos])
    E = basis_tensors(phi, k)[:, :3]
    Q = np.einsum("irl,lipq->rlpq", c, E)
    dQ = np.einsum("irl,lipq->rlpq", dc, E)
    dQ += k * (c[1][..., None, None] * E[None, :, 2] - c[2][..., None, None] * E[None, :, 1])

    Qm = 0.5 * (Q[:-1] + Q[1:])
    dQr = (Q[1:] - Q[:-1]) / h
    dQphi = 0.5 * (dQ[:-1] + dQ[1:])
    density = 0.5 * params.L * (
        np.einsum("rlpq,rlpq->rl", dQr, dQr) + np.einsum("rlpq,rlpq->rl", dQphi, dQphi) / rc[:, None] ** 2
    ) + bulk_potential(Qm, params)
    return float(np.sum(h * rc[:, None] * density) * 2 * pi / n_phi)


def assemble_perturbation_field(W: PerturbationProfile, mesh: DiskMesh, part: str = "full") -> Field2D:
    Q = W.tensor(mesh.radii, mesh.angles, part)
    return Field2D(mesh, components(Q, CARTESIAN_BASIS), W.params)


def discrete_first_order(Y_h: Field2D, tol: float = 1e-12) -> Field2D:
    """Mesh-level correction W_h solving D2E_0(Y_h) W_h = -grad(int I2)(Y_h) with W_h = 0 on the boundary."""
    mesh = Y_h.mesh
    base = Y_h.params.replace(M=0.0)
    energy = FieldEnergy(mesh, base)
    coupling = FieldEnergy(mesh, base, triple=ElasticTriple(0.0, 2.0, 0.0)).stiffness
    free = mesh.interior
    size = 5 * len(free)

    def matvec(p: np.ndarray) -> np.ndarray:
        direction = np.zeros((mesh.n_nodes, 5))
        direction[free] = p.reshape(-1, 5)
        return energy.hessian_apply(Y_h.values, direction)[free].ravel()

    rhs = -(coupling @ Y_h.values.ravel()).reshape(-1, 5)[free].ravel()
    solution, info = cg(LinearOperator((size, size), matvec=matvec), rhs, rtol=tol, atol=0.0, maxiter=20 * size)
    if info != 0:
        logger.warning(f"First-order mesh correction: CG stopped with info={info}")
    values = np.zeros((mesh.n_nodes, 5))
    values[free] = solution.reshape(-1, 5)
    return Field2D(mesh, values, Y_h.params)


class ScalingRow(NamedTuple):
    eps: float
    delta: float
    relative: float
    converged: bool
    # same remainder against the mesh-level correction W_h
    delta_mesh: float


class ScalingTable(NamedTuple):
    rows: list
    slope: float
    y_norm: float
    w_discrepancy: float


def epsilon_scaling_check(
    params: MaterialParams,
    k: int,
    eps_list: Sequence[float],
    mesh: Optional[DiskMesh] = None,
    h_fraction: float = 1 / 60,
    N: int = 2000,
    tol: float = 1e-9,
    max_iter: int = 20000,
) -> ScalingTable:
    """Delta(eps) = |Q*_eps - Y_h - eps W| against the mesh minimisers at M = eps.

    Y_h is the mesh minimiser at M=0 seeded from the radial solution and W the five-mode
    correction from the ODE system, assembled on the mesh. w_discrepancy is the relative
    distance of W from the mesh-level correction W_h, which gives delta_mesh.
    """
    base = params.replace(M=0.0, k=k)
    mesh = mesh or build_mesh(params.R, h_fraction * params.R)
    Y = minimize_radial_M0(base, N=N).profile
    W = solve_perturbation(Y, k).profile
    Y_h = minimize_field(base, mesh, init=assemble_radial_field(Y, mesh), tol=tol, max_iter=max_iter).field
    W_h = discrete_first_order(Y_h)
    W_ode = assemble_perturbation_field(W, mesh)
    y_norm = field_norm(Y_h)
    discrepancy = field_norm(W_h, W_ode) / max(field_norm(W_ode), np.finfo(float).tiny)

    rows = []
    for eps in eps_list:
        expansion = Y_h.with_values(Y_h.values + eps * W_ode.values)
        mesh_expansion = Y_h.with_values(Y_h.values + eps * W_h.values)
        result = minimize_field(params.replace(M=eps, k=k), mesh, init=mesh_expansion, tol=tol, max_iter=max_iter)
        delta = field_norm(result.field, expansion)
        if not result.converged:
            logger.warning(f"Scaling check: eps={eps} not converged")
        mesh_delta = field_norm(result.field, mesh_expansion)
        rows.append(ScalingRow(float(eps), delta, delta / y_norm, result.converged, mesh_delta))

    fit = [(row.eps, row.delta) for row in rows if row.eps > 0 and row.delta > 0]
    slope = float(np.polyfit(np.log([e for e, _ in fit]), np.log([d for _, d in fit]), 1)[0]) if len(fit) > 1 else float("nan")
    logger.info(f"Perturbation scaling k={k}: slope {slope:.3f}")
    return ScalingTable(rows, slope, y_norm, discrepancy)


class ExpansionResidual(NamedTuple):
    unperturbed: float
    first_order: float


def expansion_residual(params: MaterialParams, Y: Field2D, W: Field2D, eps: float) -> ExpansionResidual:
    """Interior Euler-Lagrange residual norms of Y and Y + eps W at M = eps."""
    p = params.replace(M=eps)
    plain = Field2D(Y.mesh, Y.values, p)
    corrected = Field2D(Y.mesh, Y.values + eps * W.values, p)
    return ExpansionResidual(el_residual(plain).norm, el_residual(corrected).norm)
