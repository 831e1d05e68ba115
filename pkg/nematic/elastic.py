"""Elastic invariants, coercivity predicates, the null Lagrangian and residual operators."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import pi, sqrt
from typing import TYPE_CHECKING, Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize

from nematic.errors import MeshError
from nematic.tensors import CARTESIAN_BASIS, IDENTITY, MaterialParams, basis_tensors

if TYPE_CHECKING:
    from nematic.field import Field2D


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ElasticTriple:
    L1: float
    L2: float = 0.0
    L3: float = 0.0

    @classmethod
    def from_LM(cls, L: float, M: float) -> "ElasticTriple":
        return cls(L, 2.0 * M, 0.0)

    @classmethod
    def divergence_form(cls, L: float, M: float) -> "ElasticTriple":
        """Same bulk Euler-Lagrange operator as from_LM; differs by the null Lagrangian."""
        return cls(L, 0.0, 2.0 * M)


@dataclass(frozen=True, eq=False)
class GradientQ:
    """d[..., i, j, m] = dQ_ij/dx_m with m over the in-plane directions."""

    d: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.d, dtype=float)
        if d.shape[-3:-1] != (3, 3):
            raise ValueError(f"GradientQ needs trailing shape (3, 3, m), got {d.shape}")
        scale = 1.0 + np.max(np.abs(d), initial=0.0)
        if np.max(np.abs(d - np.swapaxes(d, -3, -2)), initial=0.0) > 1e-12 * scale:
            raise ValueError("GradientQ must be symmetric in (i, j)")
        if np.max(np.abs(np.trace(d, axis1=-3, axis2=-2)), initial=0.0) > 1e-12 * scale:
            raise ValueError("GradientQ must be traceless in (i, j)")
        object.__setattr__(self, "d", d)

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return self.d if dtype is None else self.d.astype(dtype)


class Invariants(NamedTuple):
    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray


def _planar(g: np.ndarray) -> np.ndarray:
    m = g.shape[-1]
    return g[..., :, :m, :]


def elastic_invariants(g) -> Invariants:
    g = np.asarray(g, dtype=float)
    gp = _planar(g)
    div = np.einsum("...ijj->...i", gp)
    return Invariants(
        np.einsum("...ijk,...ijk->...", g, g),
        np.einsum("...ikj,...ijk->...", gp, gp),
        np.einsum("...i,...i->...", div, div),
    )


def elastic_bilinear(g, h, t: ElasticTriple) -> np.ndarray:
    """Symmetric bilinear form B with elastic_density(g) = B(g, g) / 2."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    gp, hp = _planar(g), _planar(h)
    return (
        t.L1 * np.einsum("...ijk,...ijk->...", g, h)
        + t.L2 * np.einsum("...ikj,...ijk->...", gp, hp)
        + t.L3 * np.einsum("...ijj,...ikk->...", gp, hp)
    )


def elastic_density(g, t: ElasticTriple) -> np.ndarray:
    inv = elastic_invariants(g)
    return 0.5 * (t.L1 * inv.I1 + t.L2 * inv.I2 + t.L3 * inv.I3)


def gradient_stiffness(t: ElasticTriple, basis: np.ndarray = CARTESIAN_BASIS, dims: int = 2) -> np.ndarray:
    """Matrix H with elastic_density = gamma.H.gamma / 2, gamma[a*dims + m] = d(q_a)/dx_m."""
    eye = np.eye(dims)
    G = np.einsum("aij,mn->amijn", basis, eye).reshape(len(basis) * dims, 3, 3, dims)
    return elastic_bilinear(G[:, None], G[None, :], t)


class Coercivity(NamedTuple):
    ok: bool
    mu0_estimate: float


def coercivity_predicate(t: ElasticTriple) -> bool:
    return bool(t.L1 + t.L2 > 0 and 2.0 * t.L1 - t.L2 > 0 and t.L1 + t.L2 / 6.0 + 5.0 * t.L3 / 3.0 > 0)


def coercivity_branch_values(t: ElasticTriple) -> tuple[float, float, float]:
    """Critical values of elastic_density/|P|^2 over the proof space.

    The first two come from the divergence-free branch (H1 = 1 and H1 = -1/2),
    the third from the branch carrying the divergence.
    """
    return (
        0.5 * (t.L1 + t.L2),
        0.5 * (t.L1 - t.L2 / 2.0),
        0.5 * (t.L1 + t.L2 / 6.0 + 5.0 * t.L3 / 3.0),
    )


def coercivity_pointwise(
    t: ElasticTriple, samples: int = 100_000, seed: int = 0, polish: bool = True
) -> Coercivity:
    """Sampled minimum of elastic_density/|P|^2 over 3D gradients P symmetric traceless in (i, j)."""
    H = gradient_stiffness(t, dims=3)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((samples, H.shape[0]))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    quotient = 0.5 * np.einsum("si,ij,sj->s", c, H, c)
    best = int(np.argmin(quotient))
    mu0 = float(quotient[best])

    if polish:
        def rayleigh(x: np.ndarray) -> tuple[float, np.ndarray]:
            q = x @ x
            value = 0.5 * x @ H @ x / q
            return value, (H @ x - 2.0 * value * x) / q

        result = minimize(rayleigh, c[best], jac=True, method="BFGS", options={"gtol": 1e-12})
        mu0 = min(mu0, float(result.fun))
    return Coercivity(coercivity_predicate(t), mu0)


def coercivity_dirichlet(L: float, M: float) -> bool:
    return bool(L > 0 and L + 4.0 * M / 3.0 > 0)


class NullLagrangian(NamedTuple):
    volume: float
    boundary: float


def null_lagrangian_check(field: "Field2D") -> NullLagrangian:
    mesh = field.mesh
    if np.any(mesh.areas <= 1e-14 * mesh.R**2):
        raise MeshError("Degenerate triangles in mesh; null Lagrangian quadrature undefined")
    inv = elastic_invariants(mesh.element_gradients(field.tensors))
    volume = float(np.sum(mesh.areas * (inv.I2 - inv.I3)))

    phi = mesh.boundary_angles
    Qb = field.tensors[mesh.boundary_nodes].reshape(len(phi), 9)
    trace = CubicSpline(np.append(phi, phi[0] + 2 * pi), np.vstack([Qb, Qb[:1]]), bc_type="periodic", axis=0)
    theta = np.linspace(0.0, 2 * pi, 8 * len(phi), endpoint=False)
    Q = trace(theta).reshape(-1, 3, 3)
    dQ = trace(theta, 1).reshape(-1, 3, 3)
    zero = np.zeros_like(theta)
    t = np.stack([-np.sin(theta), np.cos(theta), zero], axis=-1)
    n = np.stack([np.cos(theta), np.sin(theta), zero], axis=-1)
    # t_j (d_t Q_il Q_ij - d_t Q_ij Q_il) n_l, with ds = R dtheta and d_t = d_theta / R
    integrand = np.einsum("qij,qj,qil,ql->q", Q, t, dQ, n) - np.einsum("qij,qj,qil,ql->q", dQ, t, Q, n)
    boundary = float(np.sum(integrand) * 2 * pi / len(theta))
    return NullLagrangian(volume, boundary)


def null_lagrangian_constant(params: MaterialParams) -> float:
    """Integral of I2 - I3 over the disk for k-radial boundary data."""
    return -pi * params.k * params.s_plus**2


class ELResidual(NamedTuple):
    values: np.ndarray
    norm: float
    excluded: np.ndarray


def el_residual(field: "Field2D", params: Optional[MaterialParams] = None) -> ELResidual:
    """L dQ + M LQ - bulk_gradient(Q) at interior nodes, recovered from the weak form with lumped mass.

    Boundary nodes and their one-ring neighbours are excluded and reported.
    """
    from nematic.field import FieldEnergy

    params = params or field.params
    mesh = field.mesh
    energy = FieldEnergy(mesh, params)
    grad = energy.nodal_gradient(field.values)
    residual = -grad / mesh.node_mass[:, None]
    values = np.einsum("na,aij->nij", residual, CARTESIAN_BASIS)
    excluded = np.flatnonzero(mesh.near_boundary)
    values[excluded] = np.nan
    keep = ~mesh.near_boundary
    norm = float(np.sqrt(np.sum(mesh.node_mass[keep] * np.sum(residual[keep] ** 2, axis=1))))
    return ELResidual(values, norm, excluded)


class ZResidual(NamedTuple):
    values: np.ndarray
    max_norm: float


def z_extension_residual(field: "Field2D", L2: float, L3: float) -> ZResidual:
    g = field.mesh.recovered_gradients(field.tensors)
    d = np.concatenate([g, np.zeros(g.shape[:-1] + (1,))], axis=-1)
    A = d[:, :, 2, :]
    div = np.einsum("nikk->ni", d)
    B = np.zeros_like(A)
    B[:, :, 2] = div
    Z = L2 * (A + np.swapaxes(A, 1, 2)) + L3 * (B + np.swapaxes(B, 1, 2))
    values = np.linalg.norm(Z, axis=(1, 2))
    return ZResidual(values, float(values.max(initial=0.0)))


def _radial_derivatives(fn, r: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if fn is None:
        zero = np.zeros_like(r)
        return zero, zero, zero
    if hasattr(fn, "derivative"):
        return fn(r), fn.derivative(1)(r), fn.derivative(2)(r)
    if hasattr(fn, "deriv"):
        return fn(r), fn.deriv(1)(r), fn.deriv(2)(r)
    raise TypeError(f"Radial function {fn!r} exposes no derivative")


MODES = ("const", "cos", "sin")


@dataclass(frozen=True)
class ModeCoupling:
    """coefficients[n, i, mode]: E_i amplitude of the mode 1, cos((k-2)phi) or sin((k-2)phi) at r[n]."""

    r: np.ndarray
    k: int
    coefficients: np.ndarray

    @property
    def angular_norm(self) -> float:
        return float(np.linalg.norm(self.coefficients[:, :, 1:]))

    def tensor(self, phi: float) -> np.ndarray:
        n = self.k - 2
        E = basis_tensors(phi, self.k)[:3]
        amp = self.coefficients @ np.array([1.0, np.cos(n * phi), np.sin(n * phi)])
        return np.einsum("ri,ijk->rjk", amp, E)

    def __neg__(self) -> "ModeCoupling":
        return ModeCoupling(self.r, self.k, -self.coefficients)


def mode_coupling(k: int, w: Sequence[Optional[Callable]], r: np.ndarray) -> ModeCoupling:
    """Mode decomposition of L applied to w0 E0 + w1 E1 + w2 E2."""
    if k == 0:
        raise ValueError("Winding number must be nonzero")
    r = np.asarray(r, dtype=float)
    w = list(w) + [None] * (3 - len(w))
    v, dv, d2v = _radial_derivatives(w[0], r)
    u, du, d2u = _radial_derivatives(w[1], r)
    s, ds, d2s = _radial_derivatives(w[2], r)
    root3 = sqrt(3.0)

    c = np.zeros((len(r), 3, 3))
    c[:, 0, 0] = (d2v + dv / r) / 3.0
    c[:, 1, 0] = d2u + du / r - k * k * u / r**2
    c[:, 2, 0] = d2s + ds / r - k * k * s / r**2
    c[:, 0, 1] = -(d2u + (2 * k - 1) * du / r + k * (k - 2) * u / r**2) / root3
    c[:, 1, 1] = -(d2v - dv / r) / root3
    c[:, 0, 2] = (d2s + (2 * k - 1) * ds / r + k * (k - 2) * s / r**2) / root3
    c[:, 2, 2] = (d2v - dv / r) / root3
    if k == 2:
        c[:, :, 0] += c[:, :, 1]
        c[:, :, 1:] = 0.0
    return ModeCoupling(r, k, c)


def _hessian_fd(Q_fn: Callable, x, y, h: float) -> np.ndarray:
    def at(dx: float, dy: float) -> np.ndarray:
        return np.asarray(Q_fn(x + dx, y + dy), dtype=float)

    centre = at(0.0, 0.0)
    D = np.zeros(centre.shape + (3, 3))
    D[..., 0, 0] = (at(h, 0.0) - 2.0 * centre + at(-h, 0.0)) / h**2
    D[..., 1, 1] = (at(0.0, h) - 2.0 * centre + at(0.0, -h)) / h**2
    D[..., 0, 1] = D[..., 1, 0] = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h**2)
    return D


def apply_L_fd(Q_fn: Callable, x, y, h: float = 1e-3) -> np.ndarray:
    """L Q_ij = Q_ik,jk + Q_jk,ik - 2/3 Q_lk,lk delta_ij by central differences of a callable field."""
    D = _hessian_fd(Q_fn, x, y, h)
    t = np.einsum("...ikjk->...ij", D)
    div2 = np.einsum("...lklk->...", D)
    return t + np.swapaxes(t, -1, -2) - 2.0 / 3.0 * div2[..., None, None] * IDENTITY


def laplacian_fd(Q_fn: Callable, x, y, h: float = 1e-3) -> np.ndarray:
    D = _hessian_fd(Q_fn, x, y, h)
    return D[..., 0, 0] + D[..., 1, 1]
