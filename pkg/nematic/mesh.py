"""Quasi-uniform P1 triangulations of the disk B_R built from concentric node rings."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from math import ceil, pi

import numpy as np
from scipy import sparse
from scipy.spatial import Delaunay

from nematic.errors import MeshError


logger = logging.getLogger(__name__)

REFERENCE_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def ring_sizes(n_rings: int) -> list[int]:
    return [1] + [max(6, ceil(2 * pi * j)) for j in range(1, n_rings + 1)]


@dataclass(frozen=True, eq=False)
class DiskMesh:
    """Nodes are stored ring by ring from the centre outwards; the last ring is the boundary."""

    nodes: np.ndarray
    triangles: np.ndarray
    ring_offsets: np.ndarray
    R: float
    h: float
    triangulation: Delaunay

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_rings(self) -> int:
        return len(self.ring_offsets) - 2

    def ring(self, j: int) -> np.ndarray:
        return np.arange(self.ring_offsets[j], self.ring_offsets[j + 1])

    @cached_property
    def ring_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rings + 1), np.diff(self.ring_offsets))

    @cached_property
    def ring_radii(self) -> np.ndarray:
        return self.R * np.arange(self.n_rings + 1) / self.n_rings

    @cached_property
    def radii(self) -> np.ndarray:
        return np.hypot(self.nodes[:, 0], self.nodes[:, 1])

    @cached_property
    def angles(self) -> np.ndarray:
        return np.mod(np.arctan2(self.nodes[:, 1], self.nodes[:, 0]), 2 * pi)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return self.ring(self.n_rings)

    @cached_property
    def boundary_angles(self) -> np.ndarray:
        return self.angles[self.boundary_nodes]

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        t = self.triangles
        rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2], t[:, 1], t[:, 2], t[:, 0]])
        cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0], t[:, 0], t[:, 1], t[:, 2]])
        data = np.ones(len(rows), dtype=bool)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_nodes, self.n_nodes))

    @cached_property
    def near_boundary(self) -> np.ndarray:
        """Boundary nodes and their one-ring neighbours."""
        return self.is_boundary | (self.adjacency @ self.is_boundary.astype(int) > 0)

    @cached_property
    def jacobians(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.det(self.jacobians)

    @cached_property
    def shape_gradients(self) -> np.ndarray:
        """grad(lambda_a) on each triangle, shape (n_triangles, 3, 2)."""
        return np.einsum("ak,ekd->ead", REFERENCE_GRADIENTS, np.linalg.inv(self.jacobians))

    @cached_property
    def node_mass(self) -> np.ndarray:
        mass = np.zeros(self.n_nodes)
        np.add.at(mass, self.triangles.ravel(), np.repeat(self.areas / 3.0, 3))
        return mass

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def element_gradients(self, values: np.ndarray) -> np.ndarray:
        """Constant gradient of a P1 field on each triangle: (n, ...) -> (n_triangles, ..., 2)."""
        values = np.asarray(values, dtype=float)
        return np.einsum("ead,ea...->e...d", self.shape_gradients, values[self.triangles])

    def element_means(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float)[self.triangles].mean(axis=1)

    def recovered_gradients(self, values: np.ndarray) -> np.ndarray:
        """Area-weighted average of the element gradients around each node."""
        g = self.element_gradients(values)
        weighted = self.areas.reshape((-1,) + (1,) * (g.ndim - 1)) * g
        total = np.zeros((self.n_nodes,) + g.shape[1:])
        weight = np.zeros(self.n_nodes)
        for a in range(3):
            np.add.at(total, self.triangles[:, a], weighted)
            np.add.at(weight, self.triangles[:, a], self.areas)
        return total / weight.reshape((-1,) + (1,) * (g.ndim - 1))


def build_mesh(R: float, target_h: float, max_nodes: int = 2_000_000) -> DiskMesh:
    if not 0 < target_h < R:
        raise MeshError(f"Mesh size must satisfy 0 < h < R, got h={target_h}, R={R}")
    n_rings = ceil(R / target_h)
    sizes = ring_sizes(n_rings)
    if sum(sizes) > max_nodes:
        raise MeshError(f"Mesh with h={target_h} needs {sum(sizes)} nodes, budget is {max_nodes}")

    points = [np.zeros((1, 2))]
    for j in range(1, n_rings + 1):
        n = sizes[j]
        offset = 0.5 if j % 2 and j < n_rings else 0.0
        theta = 2 * pi * (np.arange(n) + offset) / n
        points.append(R * j / n_rings * np.column_stack([np.cos(theta), np.sin(theta)]))
    nodes = np.vstack(points)

    triangulation = Delaunay(nodes)
    triangles = triangulation.simplices.astype(np.int64)
    p = nodes[triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    flip = signed < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    keep = np.abs(signed) > 1e-14 * R * R
    if not np.all(keep):
        logger.debug(f"Dropped {np.count_nonzero(~keep)} degenerate triangles")
    triangles = triangles[keep]

    mesh = DiskMesh(nodes, triangles, np.cumsum([0] + sizes), float(R), R / n_rings, triangulation)
    logger.info(f"Disk mesh R={R} h={mesh.h:.4g}: {mesh.n_nodes} nodes, {len(triangles)} triangles")
    return mesh
