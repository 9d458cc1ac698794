"""Six-step solution of the assembled block system.

    1. form A1 and A2            4. PCG solve (A1 + A2^T A1^{-1} A2) a' = w1,
    2. compute b1 and b2            preconditioned by A1
    3. w1 = b1 + A2^T A1^{-1} b2 5. w2 = -b2 + A2 a'
                                 6. solve A1 a'' = w2

Both N x N systems are symmetric positive definite.  A rotation pre-pass
multiplies inadmissible coefficients by e^{i*theta} (policy "auto",
"off", or an explicit angle) and transforms the boundary data
accordingly: Neumann flux data g becomes e^{i*theta} g, the Robin
coupling constant a becomes e^{-i*theta} a (its data g is unchanged),
and Dirichlet data is untouched because the unknown u is not rotated.
After the two-stage solve the residual of the full 2N x 2N saddle system
is always computed and reported.
"""

from __future__ import annotations

import dataclasses
import numbers
import time
from dataclasses import dataclass, field

import numpy as np

from .assemble import (
    AssemblyError, BoundaryData, NeumannBC, RobinBC, assemble_system,
    gauss_1d, shape_gradients, shape_values,
)
from .coeff import (
    CoefficientField, HalfPlaneError, admissibility, auto_rotation_angle, rotate,
)
from .grid import Grid, build_grid
from .sparse import A1Solver, PcgConfig, PcgError, SchurOperator, pcg


class SolveError(RuntimeError):
    """Solver failure carrying the stage at which it occurred."""

    def __init__(self, stage, msg):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


@dataclass(frozen=True)
class ProblemSpec:
    """Complete description of one boundary-value problem.

    ``coeff`` is either a materialized CoefficientField (element count
    must match the grid) or a callable Grid -> CoefficientField, which
    lets studies rebuild the field on refined grids.  ``rotation`` is
    "auto", "off", or an explicit angle in radians.
    """

    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    nx: int = 17
    ny: int = 17
    coeff: object = None
    bc: BoundaryData = None
    pcg: PcgConfig = field(default_factory=PcgConfig)
    rotation: object = "auto"
    mode: str = "implicit"

    def with_grid_size(self, n: int) -> "ProblemSpec":
        return dataclasses.replace(self, nx=n, ny=n)

    def build_grid(self) -> Grid:
        return build_grid(self.domain, self.nx, self.ny)

    def build_field(self, grid: Grid) -> CoefficientField:
        if isinstance(self.coeff, CoefficientField):
            if self.coeff.n_elements != grid.n_elements:
                raise SolveError(
                    "setup", "materialized coefficient field does not match the grid; "
                    "pass a callable to let studies rebuild it"
                )
            return self.coeff
        if callable(self.coeff):
            return self.coeff(grid)
        raise SolveError("setup", f"cannot build coefficients from {type(self.coeff)!r}")


@dataclass(frozen=True)
class SolveInfo:
    theta: float
    bc_kind: str
    mode: str
    n_free: int
    iters_rhs: int          # step 3 inner solve
    iters_outer: int        # step 4 Schur PCG
    iters_imag: int         # step 6 A1 solve
    inner_iterations: int   # all nested A1 PCG iterations combined
    residual_rel: float     # relative residual of the full block system
    bnorm: float
    rel_tol: float
    wall_time: float
    outer_residuals: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class SolutionField:
    """Nodal solution u = u' + i u'' with evaluation anywhere in the domain."""

    grid: Grid
    u: np.ndarray = field(repr=False)           # complex nodal values, all nodes
    alpha_re: np.ndarray = field(repr=False)    # free-node coefficients
    alpha_im: np.ndarray = field(repr=False)
    free_nodes: np.ndarray = field(repr=False)
    theta_applied: float = 0.0
    info: SolveInfo = None

    def evaluate(self, points) -> np.ndarray:
        """Bilinear interpolation at points, shape (m, 2) or a single (x, y)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(pts), dtype=complex)
        for k, (x, y) in enumerate(pts):
            e = self.grid.element_of_point(x, y)
            xi, eta = self.grid.local_coords(e, x, y)
            n = shape_values(xi, eta)[:, 0]
            out[k] = n @ self.u[self.grid.elements[e]]
        return out if np.ndim(points) > 1 else out[0]

    def gradient(self, points) -> np.ndarray:
        """Element-wise gradient of the interpolant, shape (m, 2) complex."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((len(pts), 2), dtype=complex)
        for k, (x, y) in enumerate(pts):
            e = self.grid.element_of_point(x, y)
            xi, eta = self.grid.local_coords(e, x, y)
            dxi, deta = shape_gradients(xi, eta)
            corner = self.u[self.grid.elements[e]]
            out[k, 0] = (dxi[:, 0] * 2.0 / self.grid.hx) @ corner
            out[k, 1] = (deta[:, 0] * 2.0 / self.grid.hy) @ corner
        return out if np.ndim(points) > 1 else out[0]


def evaluate(sol: SolutionField, points) -> np.ndarray:
    """Evaluate a solution field at the given points."""
    return sol.evaluate(points)


def _rotated_bc(bc: BoundaryData, theta: float) -> BoundaryData:
    if theta == 0.0 or bc.kind == "dirichlet":
        return bc
    phase = np.exp(1j * theta)
    if bc.kind == "neumann":
        g = bc.g
        if isinstance(g, numbers.Number):
            return NeumannBC(g=complex(g) * phase)
        return NeumannBC(g=lambda x, y: phase * np.asarray(g(x, y), dtype=complex))
    # Robin: the flux variable rotates, so the coupling constant counter-
    # rotates while the data g is unchanged.
    try:
        return RobinBC(a=complex(bc.a) * np.conj(phase), g=bc.g)
    except AssemblyError as exc:
        raise SolveError(
            "rotation",
            f"rotation by theta={theta:.6f} makes the Robin constant invalid: {exc}; "
            "use an explicit theta or rotation='off'",
        ) from exc


def _resolve_rotation(spec: ProblemSpec, fld: CoefficientField) -> float:
    policy = spec.rotation
    if policy == "off":
        return 0.0
    if policy == "auto":
        try:
            return auto_rotation_angle(fld)
        except HalfPlaneError as exc:
            raise SolveError("rotation", str(exc)) from exc
    if isinstance(policy, numbers.Number):
        return float(policy)
    raise SolveError("setup", f"unknown rotation policy {policy!r}")


def solve(spec: ProblemSpec) -> SolutionField:
    """Solve the problem described by ``spec``.

    Returns a SolutionField whose coefficients satisfy the full block
    system to a relative residual reported in ``info.residual_rel``
    (within 10x the configured outer tolerance).  Failures are raised as
    SolveError with the stage label (admissibility / rotation /
    step 3 / step 4 / step 6).
    """
    t0 = time.perf_counter()
    grid = spec.build_grid()
    fld0 = spec.build_field(grid)

    theta = _resolve_rotation(spec, fld0)
    fld = rotate(fld0, theta) if theta != 0.0 else fld0
    rep = admissibility(fld)
    if not rep.ok:
        raise SolveError(
            "admissibility",
            f"coefficients not admissible after rotation policy {spec.rotation!r} "
            f"(theta={theta:.6f}, min Im L={rep.min_im_l:.3e}, min Im M={rep.min_im_m:.3e})",
        )
    bc = _rotated_bc(spec.bc, theta)

    try:
        system = assemble_system(grid, fld, bc)
    except AssemblyError as exc:
        raise SolveError("assembly", str(exc)) from exc

    cfg = spec.pcg
    solver = A1Solver(system.a1, system.p1, mode=spec.mode,
                      rel_tol=cfg.inner_rel_tol, max_iter=cfg.max_iter)
    n = system.n
    bnorm = float(np.sqrt(np.linalg.norm(system.b1) ** 2 + np.linalg.norm(system.b2) ** 2))

    iters_rhs = iters_outer = iters_imag = 0
    outer_res = np.zeros(0)
    if bnorm == 0.0:
        alpha_re = np.zeros(n)
        alpha_im = np.zeros(n)
    else:
        atol = cfg.inner_rel_tol * bnorm
        try:
            before = solver.total_iters
            z = solver.solve(system.b2, atol=atol)
            iters_rhs = solver.total_iters - before
        except PcgError as exc:
            raise SolveError("step 3 (rhs reduction)", str(exc)) from exc
        w1 = system.b1 + system.a2.T @ z

        schur = SchurOperator(system.a1, system.a2, solver)
        try:
            res = pcg(schur.apply, solver.solve, w1, cfg, atol=cfg.rel_tol * bnorm)
        except PcgError as exc:
            raise SolveError("step 4 (Schur solve)", str(exc)) from exc
        alpha_re = res.x
        iters_outer = res.iters
        outer_res = res.residuals

        w2 = -system.b2 + system.a2 @ alpha_re
        try:
            before = solver.total_iters
            alpha_im = solver.solve(w2, atol=atol)
            iters_imag = solver.total_iters - before
        except PcgError as exc:
            raise SolveError("step 6 (imaginary part)", str(exc)) from exc

    residual = system.block_residual(alpha_re, alpha_im)
    u = system.lifting.copy()
    u[system.free_nodes] += alpha_re + 1j * alpha_im

    info = SolveInfo(
        theta=theta, bc_kind=system.bc_kind, mode=spec.mode, n_free=n,
        iters_rhs=iters_rhs, iters_outer=iters_outer, iters_imag=iters_imag,
        inner_iterations=solver.total_iters, residual_rel=float(residual),
        bnorm=bnorm, rel_tol=cfg.rel_tol, wall_time=time.perf_counter() - t0,
        outer_residuals=outer_res,
    )
    return SolutionField(
        grid=grid, u=u, alpha_re=alpha_re, alpha_im=alpha_im,
        free_nodes=system.free_nodes, theta_applied=theta, info=info,
    )


# ----------------------------------------------------------------------
# Saddle functional
# ----------------------------------------------------------------------

def saddle_functional_Y(grid: Grid, fld: CoefficientField,
                        u_re: np.ndarray, u_im: np.ndarray) -> float:
    """Quadrature value of the saddle functional for nodal fields.

    With F' = (grad u', u') and F'' = (grad u'', u''), integrates
    F'.Z''F' + 2 F'.Z'F'' - F''.Z''F'' over the domain.  The discrete
    solution is a saddle point: adding an interior perturbation s to u'
    increases Y by the positive quantity int S.Z''S, and adding it to u''
    decreases Y by the same amount.
    """
    if fld.n_elements != grid.n_elements:
        raise ValueError("field does not match grid")
    pts, wts = gauss_1d(2)
    conn = grid.elements
    re_c = np.asarray(u_re, dtype=float)[conn]   # (n_elem, 4)
    im_c = np.asarray(u_im, dtype=float)[conn]
    jac = grid.hx * grid.hy / 4.0

    lx2, ly2, m2 = fld.lxx.imag, fld.lyy.imag, fld.m.imag
    lx1, ly1, m1 = fld.lxx.real, fld.lyy.real, fld.m.real

    total = 0.0
    for a, wa in zip(pts, wts):
        for b, wb in zip(pts, wts):
            n = shape_values(a, b)[:, 0]
            dxi, deta = shape_gradients(a, b)
            dx = dxi[:, 0] * 2.0 / grid.hx
            dy = deta[:, 0] * 2.0 / grid.hy
            w = wa * wb * jac
            upx, upy, up = re_c @ dx, re_c @ dy, re_c @ n
            vpx, vpy, vp = im_c @ dx, im_c @ dy, im_c @ n
            quad = (
                lx2 * upx ** 2 + ly2 * upy ** 2 + m2 * up ** 2
                + 2.0 * (lx1 * upx * vpx + ly1 * upy * vpy + m1 * up * vp)
                - (lx2 * vpx ** 2 + ly2 * vpy ** 2 + m2 * vp ** 2)
            )
            total += w * quad.sum()
    return float(total)


# ----------------------------------------------------------------------
# Artifact export
# ----------------------------------------------------------------------

def write_solution_csv(sol: SolutionField, path) -> None:
    """CSV of (x, y, u_re, u_im) over all grid nodes, full precision."""
    with open(path, "w") as f:
        f.write("x,y,u_re,u_im\n")
        for (x, y), v in zip(sol.grid.nodes, sol.u):
            f.write(f"{x:.17g},{y:.17g},{v.real:.17g},{v.imag:.17g}\n")


def write_meta(sol: SolutionField, path, extra: dict = None) -> None:
    """Key-value metadata block for a solve."""
    info = sol.info
    lines = {
        "nx": sol.grid.nx, "ny": sol.grid.ny,
        "hx": f"{sol.grid.hx:.17g}", "hy": f"{sol.grid.hy:.17g}",
        "theta_applied": f"{sol.theta_applied:.17g}",
        "bc_kind": info.bc_kind if info else "",
        "mode": info.mode if info else "",
        "n_free": info.n_free if info else "",
        "iters_rhs": info.iters_rhs if info else "",
        "iters_outer": info.iters_outer if info else "",
        "iters_imag": info.iters_imag if info else "",
        "inner_iterations": info.inner_iterations if info else "",
        "block_residual_rel": f"{info.residual_rel:.17g}" if info else "",
        "rel_tol": f"{info.rel_tol:.17g}" if info else "",
        "wall_time_s": f"{info.wall_time:.6f}" if info else "",
    }
    if extra:
        lines.update(extra)
    with open(path, "w") as f:
        for k, v in lines.items():
            f.write(f"{k} = {v}\n")
