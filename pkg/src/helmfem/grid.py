"""Rectangular tensor-product grids with bilinear nodal basis functions.

Nodes are ordered row-major: node (i, j) has flat id ``j*nx + i``, with i
running along x and j along y.  Elements are the (nx-1)*(ny-1) cells, each
listed by its four corner node ids counter-clockwise from the lower-left
corner.  Grids are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class Grid:
    """Axis-aligned rectangular grid with boundary bookkeeping.

    Attributes
    ----------
    x0, x1, y0, y1 : float
        Domain rectangle (x0, x1) x (y0, y1).
    nx, ny : int
        Node counts per side (>= 2).
    hx, hy : float
        Grid spacings (x1-x0)/(nx-1) and (y1-y0)/(ny-1).
    nodes : ndarray, shape (nx*ny, 2)
        Node coordinates, row-major by j then i.
    elements : ndarray, shape ((nx-1)*(ny-1), 4)
        Corner node ids per element, counter-clockwise from lower-left.
    boundary_nodes : ndarray
        Sorted flat ids of the nodes on the domain boundary.
    interior_nodes : ndarray
        Sorted flat ids of all non-boundary nodes.
    edge_nodes : ndarray, shape (m, 2)
        Endpoint node ids of each boundary edge.
    edge_normals : ndarray, shape (m, 2)
        Outward unit normal per boundary edge.
    """

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int
    hx: float
    hy: float
    nodes: np.ndarray = field(repr=False)
    elements: np.ndarray = field(repr=False)
    boundary_nodes: np.ndarray = field(repr=False)
    interior_nodes: np.ndarray = field(repr=False)
    is_boundary: np.ndarray = field(repr=False)
    edge_nodes: np.ndarray = field(repr=False)
    edge_normals: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def n_elements(self) -> int:
        return (self.nx - 1) * (self.ny - 1)

    @property
    def h(self) -> float:
        """Common spacing for square grids; raises if hx != hy."""
        if not math.isclose(self.hx, self.hy, rel_tol=1e-12):
            raise ValueError("grid spacing is anisotropic; use hx/hy")
        return self.hx

    def node_id(self, i: int, j: int) -> int:
        return j * self.nx + i

    def element_centroids(self) -> np.ndarray:
        """Centroid coordinates of every element, shape (n_elements, 2)."""
        corners = self.nodes[self.elements]
        return corners.mean(axis=1)

    def contains(self, x, y, tol: float = 1e-12) -> np.ndarray:
        sx = tol * max(self.x1 - self.x0, self.y1 - self.y0)
        return (
            (np.asarray(x) >= self.x0 - sx)
            & (np.asarray(x) <= self.x1 + sx)
            & (np.asarray(y) >= self.y0 - sx)
            & (np.asarray(y) <= self.y1 + sx)
        )

    def element_of_point(self, x: float, y: float) -> int:
        """Element containing (x, y); points on shared edges go to the
        lower element index."""
        if not self.contains(x, y):
            raise ValueError(f"point ({x}, {y}) outside domain")
        tx = (x - self.x0) / self.hx
        ty = (y - self.y0) / self.hy
        ie = min(max(math.ceil(tx) - 1, 0), self.nx - 2)
        je = min(max(math.ceil(ty) - 1, 0), self.ny - 2)
        return je * (self.nx - 1) + ie

    def local_coords(self, element: int, x, y):
        """Reference coordinates (xi, eta) in [-1, 1]^2 for points inside
        the given element."""
        i0 = self.elements[element, 0]
        xl, yl = self.nodes[i0]
        xi = 2.0 * (np.asarray(x) - xl) / self.hx - 1.0
        eta = 2.0 * (np.asarray(y) - yl) / self.hy - 1.0
        return xi, eta


def build_grid(domain, nx: int, ny: int) -> Grid:
    """Construct a Grid on the rectangle ``domain = (x0, x1, y0, y1)``.

    Node ordering is deterministic (row-major by j then i), so the sparse
    matrix structure of anything assembled on the grid is reproducible
    across runs.
    """
    x0, x1, y0, y1 = (float(v) for v in domain)
    nx, ny = int(nx), int(ny)
    if nx < 2 or ny < 2:
        raise ValueError(f"need at least 2 nodes per side, got nx={nx}, ny={ny}")
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle ({x0},{x1})x({y0},{y1})")

    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    xg, yg = np.meshgrid(xs, ys)  # yg varies along axis 0 -> row-major by j
    nodes = np.column_stack([xg.ravel(), yg.ravel()])

    ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
    ii, jj = ii.ravel(), jj.ravel()
    n00 = jj * nx + ii
    elements = np.column_stack([n00, n00 + 1, n00 + nx + 1, n00 + nx]).astype(np.int64)

    is_boundary = np.zeros(nx * ny, dtype=bool)
    gi = np.arange(nx * ny) % nx
    gj = np.arange(nx * ny) // nx
    is_boundary[(gi == 0) | (gi == nx - 1) | (gj == 0) | (gj == ny - 1)] = True
    boundary_nodes = np.flatnonzero(is_boundary)
    interior_nodes = np.flatnonzero(~is_boundary)

    # Boundary edges in fixed order: bottom, top, left, right.
    edges = []
    normals = []
    for i in range(nx - 1):
        edges.append((i, i + 1))
        normals.append((0.0, -1.0))
    top = (ny - 1) * nx
    for i in range(nx - 1):
        edges.append((top + i, top + i + 1))
        normals.append((0.0, 1.0))
    for j in range(ny - 1):
        edges.append((j * nx, (j + 1) * nx))
        normals.append((-1.0, 0.0))
    for j in range(ny - 1):
        edges.append((j * nx + nx - 1, (j + 1) * nx + nx - 1))
        normals.append((1.0, 0.0))

    return Grid(
        x0=x0, x1=x1, y0=y0, y1=y1, nx=nx, ny=ny,
        hx=(x1 - x0) / (nx - 1), hy=(y1 - y0) / (ny - 1),
        nodes=nodes, elements=elements,
        boundary_nodes=boundary_nodes, interior_nodes=interior_nodes,
        is_boundary=is_boundary,
        edge_nodes=np.array(edges, dtype=np.int64),
        edge_normals=np.array(normals, dtype=float),
    )


def eval_basis(grid: Grid, node: int, point) -> tuple[float, np.ndarray]:
    """Value and gradient of the hat function of ``node`` at ``point``.

    The gradient is defined element-wise; on shared element edges it is
    taken from the containing element per :meth:`Grid.element_of_point`
    (ties toward the lower element index).
    """
    x, y = float(point[0]), float(point[1])
    e = grid.element_of_point(x, y)
    corners = grid.elements[e]
    if node not in corners:
        return 0.0, np.zeros(2)
    k = int(np.flatnonzero(corners == node)[0])
    xi, eta = grid.local_coords(e, x, y)
    sx = _CORNER_SIGNS[k, 0]
    sy = _CORNER_SIGNS[k, 1]
    value = 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta)
    grad = np.array([
        0.25 * sx * (1.0 + sy * eta) * 2.0 / grid.hx,
        0.25 * sy * (1.0 + sx * xi) * 2.0 / grid.hy,
    ])
    return float(value), grad


# Reference-corner signs, counter-clockwise from lower-left.
_CORNER_SIGNS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


class BasisFunction:
    """Bilinear hat function attached to one grid node.

    Satisfies the Kronecker property (1 at its own node, 0 at every other
    node) and, summed over all nodes, the partition of unity.
    """

    def __init__(self, grid: Grid, node: int):
        if not 0 <= node < grid.n_nodes:
            raise ValueError(f"node id {node} out of range")
        self.grid = grid
        self.node = int(node)
        self.support = np.flatnonzero((grid.elements == node).any(axis=1))

    def __call__(self, x: float, y: float) -> float:
        return eval_basis(self.grid, self.node, (x, y))[0]

    def gradient(self, x: float, y: float) -> np.ndarray:
        return eval_basis(self.grid, self.node, (x, y))[1]
