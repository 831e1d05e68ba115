"""Q-tensor algebra, bulk potential, boundary data and the moving basis.

Every tensor argument is array-like with trailing shape (3, 3); leading axes broadcast,
so the same functions evaluate a single tensor or a whole nodal field.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from math import sqrt
from typing import NamedTuple, Union

import numpy as np

from nematic.errors import ParameterError, TensorError


IDENTITY = np.eye(3)
PLANAR_IDENTITY = np.diag([1.0, 1.0, 0.0])
UNIAXIAL_EPS = 1e-12

ArrayLike = Union[np.ndarray, float, "QTensor"]


@dataclass(frozen=True)
class MaterialParams:
    a2: float = 1.0
    b2: float = 0.0
    c2: float = 1.0
    L: float = 1.0
    M: float = 0.0
    k: int = 2
    R: float = 50.0

    def __post_init__(self) -> None:
        if not self.c2 > 0:
            raise ParameterError(f"c2 must be positive, got {self.c2}")
        if self.a2 < 0 or self.b2 < 0:
            raise ParameterError(f"Bulk constants must be non-negative: a2={self.a2}, b2={self.b2}")
        if self.k == 0 or int(self.k) != self.k:
            raise ParameterError(f"Winding number must be a nonzero integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if not self.R > 0:
            raise ParameterError(f"Disk radius must be positive, got {self.R}")
        if not (self.L > 0 and self.L + 4.0 * self.M / 3.0 > 0):
            raise ParameterError(
                f"Elastic constants L={self.L}, M={self.M} violate L > 0, L + 4M/3 > 0"
            )

    @property
    def s_plus(self) -> float:
        return s_plus(self)

    @property
    def core_length(self) -> float:
        return sqrt(self.L / self.a2) if self.a2 > 0 else self.R / 10

    @classmethod
    def from_triple(cls, L1: float, L2: float, L3: float, **kwargs) -> "MaterialParams":
        return cls(L=L1, M=(L2 + L3) / 2, **kwargs)

    def replace(self, **changes) -> "MaterialParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class QTensor:
    """Symmetric traceless order parameter, one tensor or a stack with trailing shape (3, 3).

    Symmetry and trace are checked per tensor on construction against
    1e-12 * (1 + |Q|); the stored entries are read-only.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.entries, dtype=float)
        if m.shape[-2:] != (3, 3):
            raise TensorError(f"QTensor needs trailing shape (3, 3), got {m.shape}")
        scale = 1e-12 * (1.0 + np.linalg.norm(m, axis=(-2, -1)))
        asym = np.max(np.abs(m - np.swapaxes(m, -1, -2)), axis=(-2, -1))
        if np.any(asym > scale):
            raise TensorError(f"QTensor entries must be symmetric, max asymmetry {np.max(asym):.3e}")
        trace = np.abs(np.trace(m, axis1=-2, axis2=-1))
        if np.any(trace > scale):
            raise TensorError(f"QTensor entries must be traceless, max |tr Q| = {np.max(trace):.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return self.entries if dtype is None else self.entries.astype(dtype)

    @classmethod
    def from_components(cls, w: ArrayLike, frame: Union["BasisFrame", np.ndarray]) -> "QTensor":
        return cls(from_components(w, frame))

    def components(self, frame: Union["BasisFrame", np.ndarray]) -> np.ndarray:
        return components(self.entries, frame)

    @property
    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.entries, axis=(-2, -1))


def tr2(Q: ArrayLike) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    return np.einsum("...ij,...ij->...", Q, Q)


def tr3(Q: ArrayLike) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    return np.einsum("...ij,...jk,...ki->...", Q, Q, Q)


def inner(A: ArrayLike, B: ArrayLike) -> np.ndarray:
    return np.einsum("...ij,...ij->...", np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def s_plus(params: MaterialParams) -> float:
    a2, b2, c2 = params.a2, params.b2, params.c2
    return (b2 + sqrt(b2 * b2 + 24.0 * a2 * c2)) / (4.0 * c2)


def uniaxial(s: ArrayLike, n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    nn = n[..., :, None] * n[..., None, :]
    return np.asarray(s, dtype=float)[..., None, None] * (nn - IDENTITY / 3.0)


def bulk_potential(Q: ArrayLike, params: MaterialParams) -> np.ndarray:
    t2 = tr2(Q)
    return -0.5 * params.a2 * t2 - params.b2 / 3.0 * tr3(Q) + 0.25 * params.c2 * t2 * t2


def bulk_gradient(Q: ArrayLike, params: MaterialParams) -> np.ndarray:
    """Traceless-projected derivative of the bulk potential."""
    Q = np.asarray(Q, dtype=float)
    t2 = tr2(Q)[..., None, None]
    Q2 = Q @ Q
    return -params.a2 * Q - params.b2 * (Q2 - t2 * IDENTITY / 3.0) + params.c2 * t2 * Q


def bulk_hessian_apply(Q: ArrayLike, H: ArrayLike, params: MaterialParams) -> np.ndarray:
    """Second derivative of the bulk potential at Q applied to the direction H."""
    Q = np.asarray(Q, dtype=float)
    H = np.asarray(H, dtype=float)
    t2 = tr2(Q)[..., None, None]
    qh = inner(Q, H)[..., None, None]
    sym = Q @ H + H @ Q - 2.0 / 3.0 * qh * IDENTITY
    return -params.a2 * H - params.b2 * sym + params.c2 * (t2 * H + 2.0 * qh * Q)


def biaxiality(Q: ArrayLike) -> np.ndarray:
    t2 = tr2(Q)
    t3 = tr3(Q)
    ok = t2 > UNIAXIAL_EPS**2
    denom = np.where(ok, t2, 1.0)
    beta = np.where(ok, 1.0 - 6.0 * t3 * t3 / denom**3, 0.0)
    beta = np.clip(beta, 0.0, 1.0)
    return beta if beta.ndim else float(beta)


def director(phi: ArrayLike, k: int) -> np.ndarray:
    half = 0.5 * k * np.asarray(phi, dtype=float)
    return np.stack([np.cos(half), np.sin(half), np.zeros_like(half)], axis=-1)


def boundary_data(phi: ArrayLike, params: MaterialParams) -> np.ndarray:
    return uniaxial(params.s_plus * np.ones_like(np.asarray(phi, dtype=float)), director(phi, params.k))


def _sym_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[..., :, None] * b[..., None, :] + b[..., :, None] * a[..., None, :]) / sqrt(2.0)


def basis_tensors(phi: ArrayLike, k: int) -> np.ndarray:
    """Moving orthonormal basis E0..E4 at angle phi, shape (..., 5, 3, 3)."""
    phi = np.asarray(phi, dtype=float)
    half = 0.5 * k * phi
    zero = np.zeros_like(half)
    n = np.stack([np.cos(half), np.sin(half), zero], axis=-1)
    m = np.stack([-np.sin(half), np.cos(half), zero], axis=-1)
    e3 = np.broadcast_to(np.array([0.0, 0.0, 1.0]), n.shape)
    e1 = np.broadcast_to(np.array([1.0, 0.0, 0.0]), n.shape)
    e2 = np.broadcast_to(np.array([0.0, 1.0, 0.0]), n.shape)

    E0 = np.broadcast_to(sqrt(1.5) * (np.outer([0, 0, 1.0], [0, 0, 1.0]) - IDENTITY / 3.0), n.shape[:-1] + (3, 3))
    E1 = sqrt(2.0) * (n[..., :, None] * n[..., None, :] - PLANAR_IDENTITY / 2.0)
    E2 = _sym_outer(n, m)
    if k % 2 == 0:
        E3, E4 = _sym_outer(n, e3), _sym_outer(m, e3)
    else:
        # E3(phi), E4(phi) are not 2pi-periodic for odd k
        E3, E4 = _sym_outer(e1, e3), _sym_outer(e2, e3)
    return np.stack([E0, E1, E2, E3, E4], axis=-3)


def basis_derivatives(phi: ArrayLike, k: int) -> np.ndarray:
    """d/dphi of basis_tensors: E1' = k E2, E2' = -k E1, E3' = k/2 E4, E4' = -k/2 E3."""
    E = basis_tensors(phi, k)
    D = np.zeros_like(E)
    D[..., 1, :, :] = k * E[..., 2, :, :]
    D[..., 2, :, :] = -k * E[..., 1, :, :]
    if k % 2 == 0:
        D[..., 3, :, :] = 0.5 * k * E[..., 4, :, :]
        D[..., 4, :, :] = -0.5 * k * E[..., 3, :, :]
    return D


@dataclass(frozen=True)
class BasisFrame:
    phi: Union[float, np.ndarray]
    k: int

    @property
    def tensors(self) -> np.ndarray:
        return basis_tensors(self.phi, self.k)

    @property
    def derivatives(self) -> np.ndarray:
        return basis_derivatives(self.phi, self.k)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.tensors[..., index, :, :]


# fixed Cartesian orthonormal basis of symmetric traceless tensors (the k=1 frame at phi=0)
CARTESIAN_BASIS = basis_tensors(0.0, 1)


def _frame_tensors(frame: Union[BasisFrame, np.ndarray]) -> np.ndarray:
    return frame.tensors if isinstance(frame, BasisFrame) else np.asarray(frame, dtype=float)


def components(Q: ArrayLike, frame: Union[BasisFrame, np.ndarray]) -> np.ndarray:
    """w_i = tr(Q E_i)."""
    return np.einsum("...ij,...aij->...a", np.asarray(Q, dtype=float), _frame_tensors(frame))


def from_components(w: ArrayLike, frame: Union[BasisFrame, np.ndarray]) -> np.ndarray:
    return np.einsum("...a,...aij->...ij", np.asarray(w, dtype=float), _frame_tensors(frame))


def rotation_matrix(psi: ArrayLike, k: int) -> np.ndarray:
    """R_k(psi): rotation about e3 by k*psi/2."""
    theta = 0.5 * k * np.asarray(psi, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    zero, one = np.zeros_like(theta), np.ones_like(theta)
    return np.stack(
        [np.stack([c, -s, zero], -1), np.stack([s, c, zero], -1), np.stack([zero, zero, one], -1)],
        axis=-2,
    )


def rotate_tensor(Q: ArrayLike, psi: ArrayLike, k: int) -> np.ndarray:
    R = rotation_matrix(psi, k)
    return np.einsum("...ij,...jk,...lk->...il", R, np.asarray(Q, dtype=float), R)


class OseenFrank(NamedTuple):
    K1: float
    K2: float
    K3: float
    K4: float
    ericksen_ok: bool


def oseen_frank_constants(L1: float, L2: float, L3: float) -> OseenFrank:
    K1 = L1 + (L2 + L3) / 2.0
    K2 = L1
    K4 = L2 / 2.0
    return OseenFrank(K1, K2, K1, K4, bool(2.0 * K1 > K2 + K4 > 0.0))
