"""Assembly of the sparse block system A1, A2, P1, b1, b2.

The solution ansatz u = u' + i u'' with nodal coefficients (alpha', alpha'')
leads to the real block system

    [ A1   A2^T ] [alpha' ]   [b1]
    [ A2  -A1   ] [alpha'']  =  [b2]

where, on the volume, A1 collects the imaginary parts of the coefficients
(grad-grad against Im L plus mass against Im M) and A2 the real parts.  P1
is the grad-grad part of A1 and feeds the incomplete-Cholesky
preconditioner.  Dirichlet data enters through a nodal lifting baked into
b1/b2; Neumann data through boundary load integrals; Robin data through a
2x2 coupling of the boundary traces that adds a positive multiple of the
boundary mass matrix to A1 (hence requires Re(a) < 0) and folds the rest
into A2 and the right-hand side, preserving the block structure.

All integrals use 2x2 Gauss per element and 2-point Gauss per boundary
edge, which is exact for bilinear basis products against the
piecewise-constant coefficients.  Element contributions are accumulated
in a fixed element order for bit-reproducible matrices.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .coeff import CoefficientField, admissibility
from .grid import Grid
from .sparse import SparseSym


class AssemblyError(ValueError):
    pass


# ----------------------------------------------------------------------
# Reference element
# ----------------------------------------------------------------------

_GAUSS_1D = {
    1: (np.array([0.0]), np.array([2.0])),
    2: (np.array([-1.0, 1.0]) / np.sqrt(3.0), np.array([1.0, 1.0])),
    3: (np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)]),
        np.array([5.0, 8.0, 5.0]) / 9.0),
}

# Corner signs counter-clockwise from lower-left, matching Grid.elements.
_SIGNS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def gauss_1d(order: int):
    """Points and weights of the n-point Gauss rule on [-1, 1]."""
    try:
        return _GAUSS_1D[order]
    except KeyError:
        raise ValueError(f"unsupported Gauss order {order}") from None


def shape_values(xi, eta):
    """Bilinear shape functions at reference coordinates, shape (4, ...)."""
    xi = np.asarray(xi)
    eta = np.asarray(eta)
    return 0.25 * (1.0 + _SIGNS[:, 0, None] * xi[None]) * (1.0 + _SIGNS[:, 1, None] * eta[None])


def shape_gradients(xi, eta):
    """Reference-space gradients (dN/dxi, dN/deta), each shape (4, ...)."""
    xi = np.asarray(xi)
    eta = np.asarray(eta)
    dxi = 0.25 * _SIGNS[:, 0, None] * (1.0 + _SIGNS[:, 1, None] * eta[None])
    deta = 0.25 * _SIGNS[:, 1, None] * (1.0 + _SIGNS[:, 0, None] * xi[None])
    return dxi, deta


def element_templates(hx: float, hy: float, order: int = 2):
    """Template 4x4 matrices (Sx, Sy, Mc) on an hx-by-hy rectangle.

    Sx = integral of dN_k/dx dN_j/dx, Sy likewise in y, Mc = integral of
    N_k N_j.  Every element of a tensor-product grid is congruent, so one
    template of each kind serves the whole mesh.
    """
    pts, wts = gauss_1d(order)
    jac = hx * hy / 4.0
    sx = np.zeros((4, 4))
    sy = np.zeros((4, 4))
    mc = np.zeros((4, 4))
    for a, wa in zip(pts, wts):
        for b, wb in zip(pts, wts):
            n = shape_values(a, b)[:, 0]
            dxi, deta = shape_gradients(a, b)
            dx = dxi[:, 0] * 2.0 / hx
            dy = deta[:, 0] * 2.0 / hy
            w = wa * wb * jac
            sx += w * np.outer(dx, dx)
            sy += w * np.outer(dy, dy)
            mc += w * np.outer(n, n)
    return sx, sy, mc


# ----------------------------------------------------------------------
# Boundary data
# ----------------------------------------------------------------------

def _as_boundary_fn(data):
    """Normalize boundary data to a vectorized complex function of (x, y)."""
    if callable(data):
        return lambda x, y: np.asarray(data(x, y), dtype=complex)
    if isinstance(data, numbers.Number):
        c = complex(data)
        return lambda x, y: np.full(np.shape(np.asarray(x)), c, dtype=complex)
    raise TypeError(f"boundary data must be a number or callable, got {type(data)!r}")


@dataclass(frozen=True)
class DirichletBC:
    """Trace data u = f on the boundary.

    ``f`` may be a complex constant, a function f(x, y), or a dict mapping
    boundary node ids to complex values (which must cover every boundary
    node)."""

    f: object

    kind = "dirichlet"

    def nodal_values(self, grid: Grid) -> np.ndarray:
        out = np.zeros(grid.n_nodes, dtype=complex)
        bn = grid.boundary_nodes
        if isinstance(self.f, dict):
            extra = set(self.f) - set(bn.tolist())
            if extra:
                raise AssemblyError(f"Dirichlet data given for non-boundary nodes {sorted(extra)[:5]}")
            missing = set(bn.tolist()) - set(self.f)
            if missing:
                raise AssemblyError(
                    f"Dirichlet data missing for {len(missing)} boundary nodes "
                    f"(e.g. {sorted(missing)[:5]})"
                )
            for k, v in self.f.items():
                out[k] = complex(v)
        else:
            fn = _as_boundary_fn(self.f)
            out[bn] = fn(grid.nodes[bn, 0], grid.nodes[bn, 1])
        return out


@dataclass(frozen=True)
class NeumannBC:
    """Normal flux data v.n = g on the boundary (v the dual variable
    i L grad u); g constant or function of (x, y)."""

    g: object

    kind = "neumann"


@dataclass(frozen=True)
class RobinBC:
    """Impedance condition u + a v.n = g with strictly negative Re(a).

    The sign constraint makes the boundary contribution to A1 positive
    semidefinite, so positive definiteness of the block is preserved."""

    a: complex
    g: object

    kind = "robin"

    def __post_init__(self):
        a = complex(self.a)
        if not a.real < 0.0:
            raise AssemblyError(
                f"Robin coupling constant must have negative real part, got a = {a}"
            )
        object.__setattr__(self, "a", a)


BoundaryData = DirichletBC | NeumannBC | RobinBC


# ----------------------------------------------------------------------
# Block system
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Assembled system restricted to the free (non-Dirichlet) nodes.

    ``free_nodes`` maps free-node index -> grid node id.  ``lifting`` holds
    the complex nodal Dirichlet interpolant (zero for Neumann/Robin).
    """

    a1: SparseSym
    a2: sps.csr_matrix = field(repr=False)
    p1: SparseSym = field(repr=False)
    b1: np.ndarray = field(repr=False)
    b2: np.ndarray = field(repr=False)
    free_nodes: np.ndarray = field(repr=False)
    lifting: np.ndarray = field(repr=False)
    grid: Grid = field(repr=False)
    bc_kind: str = "dirichlet"

    @property
    def n(self) -> int:
        return len(self.free_nodes)

    def block_matrix_dense(self) -> np.ndarray:
        """Dense [[A1, A2^T], [A2, -A1]] for small-instance checks."""
        a1 = self.a1.dense()
        a2 = self.a2.toarray()
        return np.block([[a1, a2.T], [a2, -a1]])

    def block_residual(self, alpha_re: np.ndarray, alpha_im: np.ndarray) -> float:
        """Relative residual of the full 2N x 2N saddle system."""
        r1 = self.b1 - (self.a1.matvec(alpha_re) + self.a2.T @ alpha_im)
        r2 = self.b2 - (self.a2 @ alpha_re - self.a1.matvec(alpha_im))
        bnorm = np.sqrt(np.linalg.norm(self.b1) ** 2 + np.linalg.norm(self.b2) ** 2)
        rnorm = np.sqrt(np.linalg.norm(r1) ** 2 + np.linalg.norm(r2) ** 2)
        return rnorm / bnorm if bnorm > 0.0 else rnorm


def element_blocks(grid: Grid, fld: CoefficientField, element: int):
    """Local 4x4 blocks (A1, A2, P1) of one element.

    A1 = Im(Lx) Sx + Im(Ly) Sy + Im(M) Mc, A2 the same with real parts,
    P1 the gradient-gradient part of A1.
    """
    if not 0 <= element < grid.n_elements:
        raise ValueError(f"element {element} out of range")
    sx, sy, mc = element_templates(grid.hx, grid.hy)
    lx, ly, m = fld.lxx[element], fld.lyy[element], fld.m[element]
    p1 = lx.imag * sx + ly.imag * sy
    a1 = p1 + m.imag * mc
    a2 = lx.real * sx + ly.real * sy + m.real * mc
    return a1, a2, p1


def _edge_quadrature(grid: Grid):
    """Per-edge 2-point Gauss data: points (m,2,2), scaled weights (m,2),
    endpoint shape values (2,2)."""
    pts, wts = gauss_1d(2)
    pa = grid.nodes[grid.edge_nodes[:, 0]]
    pb = grid.nodes[grid.edge_nodes[:, 1]]
    mid = 0.5 * (pa + pb)
    half = 0.5 * (pb - pa)
    length = 2.0 * np.hypot(half[:, 0], half[:, 1])
    # q-th Gauss point on every edge: mid + t_q * half
    xq = mid[:, None, :] + pts[None, :, None] * half[:, None, :]
    wq = wts[None, :] * (length[:, None] / 2.0)
    shapes = np.stack([(1.0 - pts) / 2.0, (1.0 + pts) / 2.0])  # (2 endpoints, 2 pts)
    return xq, wq, shapes


def _boundary_mass(grid: Grid) -> sps.csr_matrix:
    """Boundary mass matrix int_dOmega psi_a psi_b dS over all nodes."""
    xq, wq, shapes = _edge_quadrature(grid)
    rows, cols, vals = [], [], []
    en = grid.edge_nodes
    for a in range(2):
        for b in range(2):
            rows.append(en[:, a])
            cols.append(en[:, b])
            vals.append((wq * shapes[a][None, :] * shapes[b][None, :]).sum(axis=1))
    n = grid.n_nodes
    return sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()


def _boundary_load(grid: Grid, fn) -> np.ndarray:
    """Complex nodal loads G_j = int_dOmega g psi_j dS."""
    xq, wq, shapes = _edge_quadrature(grid)
    gq = fn(xq[:, :, 0], xq[:, :, 1])  # (m_edges, 2)
    out = np.zeros(grid.n_nodes, dtype=complex)
    for a in range(2):
        np.add.at(out, grid.edge_nodes[:, a], (wq * shapes[a][None, :] * gq).sum(axis=1))
    return out


def _volume_matrix(grid: Grid, coeff_x, coeff_y, coeff_m, sx, sy, mc) -> sps.csr_matrix:
    """Assemble sum_e cx_e Sx + cy_e Sy + cm_e Mc over all nodes."""
    data = (
        coeff_x[:, None, None] * sx[None]
        + coeff_y[:, None, None] * sy[None]
        + (coeff_m[:, None, None] * mc[None] if coeff_m is not None else 0.0)
    )
    conn = grid.elements
    rows = np.broadcast_to(conn[:, :, None], data.shape)
    cols = np.broadcast_to(conn[:, None, :], data.shape)
    n = grid.n_nodes
    return sps.coo_matrix(
        (data.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    ).tocsr()


def assemble_system(grid: Grid, fld: CoefficientField, bc: BoundaryData) -> BlockSystem:
    """Build the block system for one of the three boundary-condition kinds.

    The coefficient field must already be admissible (rotate first if
    needed); otherwise an AssemblyError is raised.
    """
    if fld.n_elements != grid.n_elements:
        raise AssemblyError(
            f"field has {fld.n_elements} elements, grid has {grid.n_elements}"
        )
    rep = admissibility(fld)
    if not rep.ok:
        raise AssemblyError(
            "coefficient field is not admissible "
            f"(min Im L = {rep.min_im_l:.3e}, min Im M = {rep.min_im_m:.3e}); "
            "rotate the coefficients first"
        )

    sx, sy, mc = element_templates(grid.hx, grid.hy)
    a1_full = _volume_matrix(grid, fld.lxx.imag, fld.lyy.imag, fld.m.imag, sx, sy, mc)
    a2_full = _volume_matrix(grid, fld.lxx.real, fld.lyy.real, fld.m.real, sx, sy, mc)
    p1_full = _volume_matrix(grid, fld.lxx.imag, fld.lyy.imag, None, sx, sy, mc)

    n = grid.n_nodes
    lifting = np.zeros(n, dtype=complex)

    if bc.kind == "dirichlet":
        free = grid.interior_nodes
        lifting = bc.nodal_values(grid)
        lift_re, lift_im = lifting.real, lifting.imag
        b1 = -(a1_full[free, :] @ lift_re) - (a2_full[free, :] @ lift_im)
        b2 = -(a2_full[free, :] @ lift_re) + (a1_full[free, :] @ lift_im)
    elif bc.kind == "neumann":
        free = np.arange(n)
        g = _boundary_load(grid, _as_boundary_fn(bc.g))
        b1 = -g.real
        b2 = +g.imag
    elif bc.kind == "robin":
        free = np.arange(n)
        a = complex(bc.a)
        if not a.real < 0.0:
            raise AssemblyError(f"Robin coupling constant must have negative real part, got {a}")
        bmass = _boundary_mass(grid)
        # Trace coupling (1/|a|^2) [[a', a''], [a'', -a']] folded into the
        # blocks: -a'/|a|^2 > 0 multiplies the boundary mass in A1.
        aa = abs(a) ** 2
        a1_full = a1_full + (-a.real / aa) * bmass
        a2_full = a2_full + (-a.imag / aa) * bmass
        ga = _boundary_load(grid, lambda x, y: np.conj(_as_boundary_fn(bc.g)(x, y) / a))
        b1 = -ga.real
        b2 = -ga.imag
    else:  # pragma: no cover - dataclass union keeps kinds closed
        raise AssemblyError(f"unknown boundary condition kind {bc.kind!r}")

    ix = np.ix_(free, free)
    a1 = sps.csr_matrix(a1_full[ix])
    a2 = sps.csr_matrix(a2_full[ix])
    p1 = sps.csr_matrix(p1_full[ix])
    for m in (a1, a2, p1):
        m.sort_indices()

    return BlockSystem(
        a1=SparseSym(a1), a2=a2, p1=SparseSym(p1),
        b1=np.asarray(b1).ravel(), b2=np.asarray(b2).ravel(),
        free_nodes=free, lifting=lifting, grid=grid, bc_kind=bc.kind,
    )
