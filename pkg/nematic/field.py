"""Full two-dimensional Landau-de Gennes problem on a disk with k-radial Dirichlet data."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import pi, sqrt
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy import sparse
from scipy.fft import irfft, rfft
from scipy.optimize import minimize

from nematic.elastic import ElasticTriple, el_residual, gradient_stiffness
from nematic.errors import ParameterError
from nematic.mesh import DiskMesh
from nematic.radial import M0Profile, RadialProfile, classify_profile, preset_profile
from nematic.tensors import (
    CARTESIAN_BASIS,
    MaterialParams,
    basis_tensors,
    biaxiality,
    boundary_data,
    bulk_gradient,
    bulk_hessian_apply,
    bulk_potential,
    components,
    from_components,
    rotate_tensor,
    tr2,
    uniaxial,
)


logger = logging.getLogger(__name__)

FIELD_PRESETS = ("interpolated", "nr_vertical", "nr_tilted")
FIELD_LABELS = ("radial", "NR_vertical", "NR_tilted")
# rotations sampled by the symmetry residual
SYMMETRY_SAMPLES = 8


@dataclass(frozen=True, eq=False)
class Field2D:
    """Nodal values[n, a]: coefficients of Q(x_n) in CARTESIAN_BASIS."""

    mesh: DiskMesh
    values: np.ndarray
    params: MaterialParams

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.n_nodes, 5):
            raise ValueError(f"Field needs shape ({self.mesh.n_nodes}, 5), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Field contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def tensors(self) -> np.ndarray:
        return from_components(self.values, CARTESIAN_BASIS)

    @classmethod
    def from_tensors(
        cls, mesh: DiskMesh, Q: np.ndarray, params: MaterialParams, enforce_boundary: bool = True
    ) -> "Field2D":
        values = components(Q, CARTESIAN_BASIS)
        if enforce_boundary:
            values[mesh.boundary_nodes] = boundary_coefficients(mesh, params)
        return cls(mesh, values, params)

    def with_values(self, values: np.ndarray) -> "Field2D":
        return Field2D(self.mesh, values, self.params)

    def boundary_error(self) -> float:
        expected = boundary_coefficients(self.mesh, self.params)
        return float(np.max(np.abs(self.values[self.mesh.boundary_nodes] - expected)))


def boundary_coefficients(mesh: DiskMesh, params: MaterialParams) -> np.ndarray:
    return components(boundary_data(mesh.boundary_angles, params), CARTESIAN_BASIS)


class FieldEnergy:
    """P1 assembly of the disk energy: exact quadratic elastic part, one-point bulk quadrature."""

    def __init__(self, mesh: DiskMesh, params: MaterialParams, triple: Optional[ElasticTriple] = None) -> None:
        self.mesh = mesh
        self.params = params
        self.triple = triple or ElasticTriple.from_LM(params.L, params.M)
        self.stiffness = self._assemble_stiffness()

    def _assemble_stiffness(self) -> sparse.csr_matrix:
        mesh = self.mesh
        H = gradient_stiffness(self.triple).reshape(5, 2, 5, 2)
        G = mesh.shape_gradients
        blocks = np.einsum("e,evd,adbf,ewf->evawb", mesh.areas, G, H, G).reshape(-1, 15, 15)
        dofs = (5 * mesh.triangles[:, :, None] + np.arange(5)).reshape(-1, 15)
        rows = np.broadcast_to(dofs[:, :, None], blocks.shape)
        cols = np.broadcast_to(dofs[:, None, :], blocks.shape)
        size = 5 * mesh.n_nodes
        return sparse.coo_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(size, size)).tocsr()

    def _centroid_tensors(self, values: np.ndarray) -> np.ndarray:
        return from_components(self.mesh.element_means(values), CARTESIAN_BASIS)

    def _scatter(self, per_element: np.ndarray) -> np.ndarray:
        """Distribute area/3 * per_element[e, a] to the three vertices."""
        out = np.zeros((self.mesh.n_nodes, 5))
        weighted = per_element * self.mesh.areas[:, None] / 3.0
        for a in range(3):
            np.add.at(out, self.mesh.triangles[:, a], weighted)
        return out

    def elastic_energy(self, values: np.ndarray) -> float:
        x = values.ravel()
        return float(0.5 * x @ (self.stiffness @ x))

    def bulk_energy(self, values: np.ndarray) -> float:
        return float(self.mesh.areas @ bulk_potential(self._centroid_tensors(values), self.params))

    def energy(self, values: np.ndarray) -> float:
        return self.elastic_energy(values) + self.bulk_energy(values)

    def nodal_gradient(self, values: np.ndarray) -> np.ndarray:
        G = bulk_gradient(self._centroid_tensors(values), self.params)
        bulk = components(G, CARTESIAN_BASIS)
        return (self.stiffness @ values.ravel()).reshape(-1, 5) + self._scatter(bulk)

    def hessian_apply(self, values: np.ndarray, direction: np.ndarray) -> np.ndarray:
        Q = self._centroid_tensors(values)
        P = self._centroid_tensors(direction)
        bulk = components(bulk_hessian_apply(Q, P, self.params), CARTESIAN_BASIS)
        return (self.stiffness @ direction.ravel()).reshape(-1, 5) + self._scatter(bulk)


def total_energy(f: Field2D, triple: Optional[ElasticTriple] = None) -> float:
    return FieldEnergy(f.mesh, f.params, triple).energy(f.values)


def total_gradient(f: Field2D, triple: Optional[ElasticTriple] = None) -> np.ndarray:
    """Derivative of the discrete energy per node as a tensor; boundary rows are zero."""
    grad = FieldEnergy(f.mesh, f.params, triple).nodal_gradient(f.values)
    grad[f.mesh.boundary_nodes] = 0.0
    return from_components(grad, CARTESIAN_BASIS)


def field_norm(f: Field2D, other: Optional[Field2D] = None) -> float:
    """L2 norm with lumped mass (of f - other when given)."""
    values = f.values if other is None else f.values - other.values
    return float(np.sqrt(f.mesh.node_mass @ np.sum(values**2, axis=1)))


def assemble_radial_field(
    profile: Union[RadialProfile, M0Profile], mesh: DiskMesh, params: Optional[MaterialParams] = None
) -> Field2D:
    p = profile.as_radial() if isinstance(profile, M0Profile) else profile
    params = params or p.params
    if abs(p.params.R - mesh.R) > 1e-12 * mesh.R:
        raise ParameterError(f"Profile radius {p.params.R} does not match mesh radius {mesh.R}")
    w = np.stack([np.interp(mesh.radii, p.r, wi) for wi in p.w], axis=-1)
    Q = np.einsum("na,naij->nij", w, basis_tensors(mesh.angles, params.k))
    return Field2D.from_tensors(mesh, Q, params)


def defect_centres(mesh: DiskMesh, k: int) -> np.ndarray:
    """|k| points spaced evenly on |x| = R/4, the first on the positive e1 axis."""
    n = abs(k)
    theta = 2 * pi * np.arange(n) / max(n, 1)
    return 0.25 * mesh.R * np.column_stack([np.cos(theta), np.sin(theta)])


def seed_field(mesh: DiskMesh, params: MaterialParams, preset: str = "interpolated", N: int = 2000) -> Field2D:
    """Initial guesses. Radial presets go through the radial seeds.

    Non-radial seeds split the boundary winding k/2 into |k| defects of charge sign(k)/2 at
    defect_centres, so k = 2 gives two +1/2 defects at +-R/4 on the e1 axis. Each defect
    turns the director by pi, which keeps the line field continuous for odd k as well.
    """
    if preset in ("q2minus", "q2pm", "q3", "q5"):
        return assemble_radial_field(preset_profile(preset, params, N), mesh, params)
    if preset not in FIELD_PRESETS:
        raise ValueError(f"Unknown field preset: {preset}")

    s, xi, k = params.s_plus, params.core_length, params.k
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    if preset == "interpolated":
        profile = np.tanh(mesh.radii / xi) / np.tanh(mesh.R / xi)
        Q = profile[:, None, None] * boundary_data(mesh.angles, params)
        return Field2D.from_tensors(mesh, Q, params)

    angle = np.zeros(mesh.n_nodes)
    melt = np.ones(mesh.n_nodes)
    for cx, cy in defect_centres(mesh, k):
        angle += 0.5 * np.sign(k) * np.arctan2(y - cy, x - cx)
        melt *= np.tanh(np.hypot(x - cx, y - cy) / xi)
    n = np.stack([np.cos(angle), np.sin(angle), np.zeros_like(angle)], axis=-1)
    Q = uniaxial(s * melt, n)
    if preset == "nr_tilted":
        bump = 0.3 * s * np.exp(-((4.0 * mesh.radii / mesh.R) ** 2))
        Q = Q + bump[:, None, None] * CARTESIAN_BASIS[3]
    return Field2D.from_tensors(mesh, Q, params)


def rotate_field(f: Field2D, psi: float) -> Field2D:
    """(psi . Q)(x) = R_k(psi) Q(R_2(psi)^T x) R_k(psi)^T.

    Each ring is shifted by psi through its discrete Fourier series, which is exact for the
    angular frequencies <= |k| of a k-radial field whenever the ring has more than 2|k| nodes.
    """
    mesh = f.mesh
    shifted = np.empty_like(f.values)
    for j in range(mesh.n_rings + 1):
        ring = mesh.ring(j)
        spectrum = rfft(f.values[ring], axis=0)
        q = np.arange(spectrum.shape[0])[:, None]
        shifted[ring] = irfft(spectrum * np.exp(-1j * q * psi), n=len(ring), axis=0)
    Q = rotate_tensor(from_components(shifted, CARTESIAN_BASIS), psi, f.k)
    return Field2D(mesh, components(Q, CARTESIAN_BASIS), f.params)


class FieldResult(NamedTuple):
    field: Field2D
    energy: float
    converged: bool
    iterations: int
    gradient_norm: float
    history: list
    el_norm: float


def minimize_field(
    params: MaterialParams,
    mesh: DiskMesh,
    init: Union[None, str, Field2D] = None,
    tol: float = 1e-6,
    max_iter: int = 20000,
    optimizer: str = "lbfgs",
    triple: Optional[ElasticTriple] = None,
) -> FieldResult:
    """Minimise over interior nodal values; boundary values stay fixed bit for bit."""
    if not (params.L > 0 and params.L + 4 * params.M / 3 > 0):
        raise ParameterError(f"Elastic constants L={params.L}, M={params.M} are not coercive")
    start = init if isinstance(init, Field2D) else seed_field(mesh, params, init or "interpolated")
    base = start.values.copy()
    base[mesh.boundary_nodes] = boundary_coefficients(mesh, params)
    energy = FieldEnergy(mesh, params, triple)
    free = mesh.interior
    ndof = 5 * len(free)

    def expand(z: np.ndarray) -> np.ndarray:
        values = base.copy()
        values[free] = z.reshape(-1, 5)
        return values

    def fun(z: np.ndarray) -> tuple[float, np.ndarray]:
        values = expand(z)
        return energy.energy(values), energy.nodal_gradient(values)[free].ravel()

    def hessp(z: np.ndarray, p: np.ndarray) -> np.ndarray:
        direction = np.zeros_like(base)
        direction[free] = p.reshape(-1, 5)
        return energy.hessian_apply(expand(z), direction)[free].ravel()

    history: list = []

    def record(intermediate_result) -> None:
        history.append(float(intermediate_result.fun))

    z0 = base[free].ravel()
    if optimizer == "lbfgs":
        result = minimize(
            fun, z0, jac=True, method="L-BFGS-B", callback=record,
            options={"maxiter": max_iter, "maxfun": 2 * max_iter, "gtol": tol, "ftol": 1e-15, "maxcor": 20},
        )
    elif optimizer == "trust-ncg":
        result = minimize(
            fun, z0, jac=True, hessp=hessp, method="trust-ncg", callback=record,
            options={"maxiter": max_iter, "gtol": tol * sqrt(ndof)},
        )
    else:
        raise ValueError(f"Unknown optimizer: {optimizer}")

    values = expand(result.x)
    value, grad = fun(result.x)
    gnorm = float(np.linalg.norm(grad))
    converged = gnorm < tol * sqrt(ndof)
    field = Field2D(mesh, values, params)
    el_norm = el_residual(field).norm
    if converged:
        logger.info(f"Field solve M={params.M} R={params.R} converged in {result.nit} steps, E={value:.8g}")
    else:
        logger.warning(f"Field solve M={params.M} R={params.R} stopped after {result.nit} steps, |g|={gnorm:.3e}")
    return FieldResult(field, value, converged, int(result.nit), gnorm, history, el_norm)


def _projection_basis(mesh: DiskMesh, k: int) -> np.ndarray:
    E = basis_tensors(mesh.angles, k).copy()
    if k % 2:
        # no k-radial field carries e3-mixing components for odd k
        E[:, 3:] = 0.0
    return E


class RadialComponents(NamedTuple):
    r: np.ndarray
    w: np.ndarray
    anisotropy: np.ndarray


def extract_radial_components(f: Field2D, k: Optional[int] = None) -> RadialComponents:
    """Ring-wise angular averages w_i(r) = <tr(Q E_i(phi))> and their angular variance."""
    mesh = f.mesh
    k = f.k if k is None else k
    c = np.einsum("nij,naij->na", f.tensors, _projection_basis(mesh, k))
    counts = np.diff(mesh.ring_offsets)
    w = np.zeros((mesh.n_rings + 1, 5))
    np.add.at(w, mesh.ring_index, c)
    w /= counts[:, None]
    spread = np.zeros(mesh.n_rings + 1)
    np.add.at(spread, mesh.ring_index, np.sum((c - w[mesh.ring_index]) ** 2, axis=1))
    return RadialComponents(mesh.ring_radii.copy(), w.T.copy(), spread / counts)


def symmetry_residual(f: Field2D, cutoff: float = 0.9, n_psi: int = SYMMETRY_SAMPLES) -> float:
    """max over psi = 2 pi j / n_psi of the mass-weighted RMS of psi.Q - Q over |x| <= cutoff*R."""
    mesh = f.mesh
    inside = mesh.radii <= cutoff * mesh.R
    mass = mesh.node_mass[inside]
    worst = 0.0
    for psi in 2 * pi * np.arange(1, n_psi) / n_psi:
        deviation = np.sum((rotate_field(f, psi).values - f.values)[inside] ** 2, axis=1)
        worst = max(worst, float(np.sqrt(mass @ deviation / mass.sum())))
    return worst


def vertical_residual(f: Field2D) -> float:
    """max |Q e3 - (e3.Q e3) e3| over nodes."""
    return float(np.max(np.hypot(f.values[:, 3], f.values[:, 4])) / sqrt(2.0))


def radial_profile_from_field(f: Field2D) -> RadialProfile:
    parts = extract_radial_components(f)
    w = parts.w.copy()
    w[1:, 0] = 0.0
    return RadialProfile(parts.r, w, f.params, converged=True)


class FieldClassification(NamedTuple):
    label: str
    symmetry_residual: float
    vertical_residual: float
    radial_label: Optional[str]


def classify_field(
    f: Field2D, tol: Optional[float] = None, vertical_tol: Optional[float] = None
) -> FieldClassification:
    s = f.params.s_plus
    tol = 1e-3 * s if tol is None else tol
    vertical_tol = 1e-3 * s if vertical_tol is None else vertical_tol
    sym = symmetry_residual(f)
    vert = vertical_residual(f)
    if sym < tol:
        label = classify_profile(radial_profile_from_field(f), tol)
        return FieldClassification("radial", sym, vert, label)
    if vert < vertical_tol:
        return FieldClassification("NR_vertical", sym, vert, None)
    return FieldClassification("NR_tilted", sym, vert, None)


class Defect(NamedTuple):
    position: np.ndarray
    beta: float


def detect_defects(f: Field2D, beta_tol: float = 0.05, merge_radius: Optional[float] = None) -> list[Defect]:
    """Interior local minima of the nodal biaxiality below beta_tol, merged within 2h."""
    mesh = f.mesh
    beta = np.asarray(biaxiality(f.tensors))
    adj = mesh.adjacency
    neighbour_min = np.minimum.reduceat(beta[adj.indices], adj.indptr[:-1])
    candidates = np.flatnonzero(~mesh.is_boundary & (beta <= neighbour_min) & (beta < beta_tol))
    radius = 2.0 * mesh.h if merge_radius is None else merge_radius
    found: list[Defect] = []
    for node in candidates[np.argsort(beta[candidates], kind="stable")]:
        position = mesh.nodes[node]
        if all(np.linalg.norm(position - d.position) > radius for d in found):
            found.append(Defect(position.copy(), float(beta[node])))
    logger.debug(f"Detected {len(found)} defects below beta={beta_tol}")
    return found


class Glyphs(NamedTuple):
    nodes: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lengths: np.ndarray
    beta: np.ndarray


def glyph_export(f: Field2D) -> Glyphs:
    """Eigenframes with lengths lambda_i + sqrt(2/3)|Q|, all nonnegative."""
    Q = f.tensors
    eigenvalues, eigenvectors = np.linalg.eigh(Q)
    norm = np.sqrt(tr2(Q))
    lengths = np.maximum(eigenvalues + sqrt(2.0 / 3.0) * norm[:, None], 0.0)
    return Glyphs(f.mesh.nodes.copy(), eigenvalues, eigenvectors, lengths, np.asarray(biaxiality(Q)))
