"""Error norms, independent oracles, convergence studies, and sweeps.

The error metric throughout is the V-norm,

    ||(u', u'')||_V = (||u'||_H1^2 + ||u''||_H1^2)^(1/2),

evaluated per element with a Gauss rule one order higher than assembly's.
Ground truth for problems without a manufactured solution is the dense
complex Galerkin discretization of the standard variational form, solved
directly; the saddle-point path must reproduce it because its block
equations are real linear recombinations of the complex Galerkin
equations.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assemble import (
    AssemblyError, BlockSystem, DirichletBC, _as_boundary_fn, _boundary_load,
    _boundary_mass, element_templates, gauss_1d, shape_gradients, shape_values,
)
from .coeff import AcousticParams, CoefficientField, acoustic_to_helmholtz, admissibility, rotate
from .grid import Grid, build_grid
from .solve import ProblemSpec, SolutionField, SolveError, solve

_ORACLE_NODE_LIMIT = 64 * 64


# ----------------------------------------------------------------------
# Error norms
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorReport:
    """V-norm and per-component errors of a discrete solution.

    ``v2`` is the squared V-norm error; by definition it equals
    ``h1_re**2 + h1_im**2``.
    """

    v2: float
    h1_re: float
    h1_im: float
    l2_re: float
    l2_im: float
    h: float
    n_nodes: int
    iterations: int = 0
    wall_time: float = 0.0

    @property
    def v_norm(self) -> float:
        return np.sqrt(self.v2)


def _fd_gradient(fn, step=1e-6):
    def grad(x, y):
        gx = (fn(x + step, y) - fn(x - step, y)) / (2.0 * step)
        gy = (fn(x, y + step) - fn(x, y - step)) / (2.0 * step)
        return gx, gy
    return grad


def v_norm_error(sol: SolutionField, exact, exact_grad=None,
                 quadrature_order: int = 3) -> ErrorReport:
    """V-norm error of ``sol`` against an exact solution.

    Parameters
    ----------
    sol : SolutionField
    exact : callable
        Complex exact solution u(x, y); must broadcast over arrays.
    exact_grad : callable, optional
        (du/dx, du/dy); defaults to central differences with step 1e-6.
    quadrature_order : int
        Per-direction Gauss order (default 3, above assembly's 2 to keep
        superconvergence effects out of the measured norm).
    """
    if exact_grad is None:
        exact_grad = _fd_gradient(exact)
    grid = sol.grid
    pts, wts = gauss_1d(quadrature_order)
    conn = grid.elements
    uc = sol.u[conn]  # (n_elem, 4) complex
    jac = grid.hx * grid.hy / 4.0
    corners = grid.nodes[conn[:, 0]]

    l2 = np.zeros(2)
    semi = np.zeros(2)
    for a, wa in zip(pts, wts):
        for b, wb in zip(pts, wts):
            n = shape_values(a, b)[:, 0]
            dxi, deta = shape_gradients(a, b)
            dx = dxi[:, 0] * 2.0 / grid.hx
            dy = deta[:, 0] * 2.0 / grid.hy
            w = wa * wb * jac
            x = corners[:, 0] + (a + 1.0) * grid.hx / 2.0
            y = corners[:, 1] + (b + 1.0) * grid.hy / 2.0
            eu = uc @ n - exact(x, y)
            gx, gy = exact_grad(x, y)
            ex = uc @ dx - gx
            ey = uc @ dy - gy
            l2 += w * np.array([np.sum(eu.real ** 2), np.sum(eu.imag ** 2)])
            semi += w * np.array([
                np.sum(ex.real ** 2) + np.sum(ey.real ** 2),
                np.sum(ex.imag ** 2) + np.sum(ey.imag ** 2),
            ])
    h1 = np.sqrt(l2 + semi)
    info = sol.info
    return ErrorReport(
        v2=float(h1[0] ** 2 + h1[1] ** 2),
        h1_re=float(h1[0]), h1_im=float(h1[1]),
        l2_re=float(np.sqrt(l2[0])), l2_im=float(np.sqrt(l2[1])),
        h=grid.hx, n_nodes=grid.n_nodes,
        iterations=info.iters_outer if info else 0,
        wall_time=info.wall_time if info else 0.0,
    )


# ----------------------------------------------------------------------
# Dense complex Galerkin oracle
# ----------------------------------------------------------------------

def galerkin_oracle(grid: Grid, fld: CoefficientField, bc) -> np.ndarray:
    """Independent ground truth: dense direct solve of the complex
    Galerkin discretization with identical elements and quadrature.

    Returns the complex nodal solution over all nodes.  Limited to grids
    of at most 64 x 64 nodes.
    """
    if grid.n_nodes > _ORACLE_NODE_LIMIT:
        raise ValueError(f"oracle limited to {_ORACLE_NODE_LIMIT} nodes, got {grid.n_nodes}")
    if fld.n_elements != grid.n_elements:
        raise ValueError("field does not match grid")

    sx, sy, mc = element_templates(grid.hx, grid.hy)
    n = grid.n_nodes
    kc = np.zeros((n, n), dtype=complex)
    conn = grid.elements
    for e in range(grid.n_elements):
        loc = fld.lxx[e] * sx + fld.lyy[e] * sy + fld.m[e] * mc
        idx = conn[e]
        kc[np.ix_(idx, idx)] += loc

    if bc.kind == "dirichlet":
        fvals = bc.nodal_values(grid)
        free = grid.interior_nodes
        bnd = grid.boundary_nodes
        rhs = -kc[np.ix_(free, bnd)] @ fvals[bnd]
        u = fvals.astype(complex).copy()
        u[free] = np.linalg.solve(kc[np.ix_(free, free)], rhs)
        return u
    if bc.kind == "neumann":
        g = _boundary_load(grid, _as_boundary_fn(bc.g))
        return np.linalg.solve(kc, -1j * g)
    if bc.kind == "robin":
        a = complex(bc.a)
        bmass = _boundary_mass(grid).toarray()
        g = _boundary_load(grid, _as_boundary_fn(bc.g))
        return np.linalg.solve(kc - (1j / a) * bmass, -(1j / a) * g)
    raise ValueError(f"unknown boundary condition kind {bc.kind!r}")


def oracle_solution_field(grid: Grid, u: np.ndarray) -> SolutionField:
    """Wrap oracle nodal values for interpolation/gradient queries."""
    return SolutionField(
        grid=grid, u=np.asarray(u, dtype=complex),
        alpha_re=u.real.copy(), alpha_im=u.imag.copy(),
        free_nodes=np.arange(grid.n_nodes), theta_applied=0.0, info=None,
    )


# ----------------------------------------------------------------------
# Convergence study
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceStudy:
    """Rows of (nodes per side, h, ErrorReport) plus the fitted slope of
    log(V^2 error) against log h (None when errors vanish)."""

    rows: list
    slope: float

    def table(self):
        return [(n, h, rep.v2) for n, h, rep in self.rows]


def convergence_study(spec: ProblemSpec, n_list, exact, exact_grad=None) -> ConvergenceStudy:
    """Refinement study on square grids of ``n_list`` nodes per side.

    The grids must refine strictly; at least three are required for a
    meaningful least-squares rate.
    """
    n_list = list(n_list)
    if len(n_list) < 3:
        raise ValueError("need at least 3 grid sizes for a convergence study")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("grid sizes must be strictly increasing")
    rows = []
    for n in n_list:
        sol = solve(spec.with_grid_size(n))
        rep = v_norm_error(sol, exact, exact_grad)
        rows.append((n, sol.grid.hx, rep))
    v2 = np.array([rep.v2 for _, _, rep in rows])
    hs = np.array([h for _, h, _ in rows])
    if np.any(v2 <= 0.0):
        slope = None
    else:
        slope = float(np.polyfit(np.log(hs), np.log(v2), 1)[0])
    return ConvergenceStudy(rows=rows, slope=slope)


# ----------------------------------------------------------------------
# Spectra
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConstitutiveSpectrum:
    eigenvalues: np.ndarray
    expected: np.ndarray     # +-|c_j| sorted

    @property
    def max_deviation(self) -> float:
        return float(np.abs(self.eigenvalues - self.expected).max())


def constitutive_spectrum(fld: CoefficientField, element: int) -> ConstitutiveSpectrum:
    """Eigenvalues of the 6x6 coefficient block [[Z'', Z'], [Z', -Z'']].

    For diagonal Z = diag(c_1, c_2, c_3) they are +-|c_j|; the comparison
    values are returned alongside the dense computation.  Works for any
    diagonal Z, including the inadmissible Z'' = 0 limit (diagnostics).
    """
    c = fld.diag_values(element)
    z1 = np.diag(c.real)
    z2 = np.diag(c.imag)
    block = np.block([[z2, z1], [z1, -z2]])
    eigs = np.sort(scipy.linalg.eigvalsh(block))
    expected = np.sort(np.concatenate([np.abs(c), -np.abs(c)]))
    return ConstitutiveSpectrum(eigenvalues=eigs, expected=expected)


@dataclass(frozen=True, eq=False)
class SchurSpectrum:
    raw: np.ndarray            # eigenvalues of A1 + A2^T A1^{-1} A2
    preconditioned: np.ndarray  # eigenvalues of A1^{-1} (A1 + A2^T A1^{-1} A2)

    @property
    def raw_spread(self) -> float:
        return float(self.raw.max() / self.raw.min())

    @property
    def preconditioned_spread(self) -> float:
        return float(self.preconditioned.max() / self.preconditioned.min())


def schur_spectrum(system: BlockSystem, size_limit: int = 900) -> SchurSpectrum:
    """Dense spectra of the Schur complement, raw and A1-preconditioned.

    The preconditioned eigenvalues are real and >= 1 because
    A2^T A1^{-1} A2 is positive semidefinite.
    """
    if system.n > size_limit:
        raise ValueError(f"dense spectrum limited to {size_limit} unknowns, got {system.n}")
    a1 = system.a1.dense()
    a2 = system.a2.toarray()
    s = a1 + a2.T @ np.linalg.solve(a1, a2)
    s = 0.5 * (s + s.T)  # symmetrize roundoff
    raw = np.sort(scipy.linalg.eigvalsh(s))
    pre = np.sort(scipy.linalg.eigh(s, a1, eigvals_only=True))
    return SchurSpectrum(raw=raw, preconditioned=pre)


# ----------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    params: tuple
    value: object
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


def omega_sweep(acoustic: AcousticParams, omega_range, cells_per_wavelength: float = 5.0,
                domain=(0.0, 1.0, 0.0, 1.0), n_min: int = 9, n_max: int = 27):
    """Accuracy of the acoustic problem as the frequency rises.

    For each omega the grid is chosen so omega*h stays approximately
    constant (``cells_per_wavelength`` cells per wavelength, clamped to
    [n_min, n_max] nodes per side).  Each solve is compared in the V-norm
    against the complex Galerkin oracle on the nested refinement with
    2N-1 nodes per side, so the measured error is discretization error,
    not solver noise.  Returns a list of SweepCell((omega, n), (ErrorReport,
    iterations)).
    """
    width = domain[1] - domain[0]
    k_scale = np.sqrt(abs(acoustic.rho) / abs(acoustic.kappa))
    rows = []
    for omega in omega_range:
        params = dataclasses.replace(acoustic, omega=float(omega))
        k_mag = params.omega * k_scale
        h_target = (2.0 * np.pi / k_mag) / cells_per_wavelength
        n = int(np.clip(round(width / h_target) + 1, n_min, n_max))
        spec = ProblemSpec(
            domain=domain, nx=n, ny=n,
            coeff=lambda g, p=params: acoustic_to_helmholtz(p, g),
            bc=DirichletBC(f=lambda x, y, w=params.omega: np.exp(1j * w * np.asarray(x))),
            rotation="off",
        )
        try:
            sol = solve(spec)
            fine = build_grid(domain, 2 * n - 1, 2 * n - 1)
            ref = oracle_solution_field(
                fine, galerkin_oracle(fine, spec.coeff(fine), spec.bc))
            rep = v_norm_error(sol, lambda x, y, r=ref: _field_eval(r, x, y),
                               lambda x, y, r=ref: _field_grad(r, x, y))
            rows.append(SweepCell(params=(float(omega), n),
                                  value=(rep, sol.info.iters_outer)))
        except (SolveError, AssemblyError, ValueError) as exc:
            rows.append(SweepCell(params=(float(omega), n), value=None, error=str(exc)))
    return rows


def _field_eval(ref: SolutionField, x, y):
    pts = np.column_stack([np.ravel(x), np.ravel(y)])
    return ref.evaluate(pts).reshape(np.shape(x))


def _field_grad(ref: SolutionField, x, y):
    pts = np.column_stack([np.ravel(x), np.ravel(y)])
    g = ref.gradient(pts)
    shape = np.shape(x)
    return g[:, 0].reshape(shape), g[:, 1].reshape(shape)


def pcg_iteration_sweep(coeff, n_list, tol_list, domain=(0.0, 1.0, 0.0, 1.0),
                        rotation="auto", mode: str = "implicit"):
    """Outer PCG iteration counts across grid sizes and tolerances.

    ``coeff`` is a CoefficientField builder (Grid -> field) or an (L, M)
    pair of constants.  The probe problem is a Dirichlet solve with unit
    boundary data.  Returns (cells, flatness) where cells is a list of
    SweepCell((n, tol), iterations) and flatness maps each tolerance to
    max-min of the iteration counts over the grid sizes.
    """
    if isinstance(coeff, tuple):
        L, M = coeff
        builder = lambda g: CoefficientField.constant(g, L, M)
    else:
        builder = coeff
    cells = []
    flatness = {}
    for tol in tol_list:
        counts = []
        for n in n_list:
            spec = ProblemSpec(
                domain=domain, nx=n, ny=n, coeff=builder,
                bc=DirichletBC(f=1.0 + 0.0j),
                pcg=dataclasses.replace(ProblemSpec().pcg, rel_tol=tol,
                                        inner_rel_tol=min(1e-12, tol * 1e-2)),
                rotation=rotation, mode=mode,
            )
            try:
                sol = solve(spec)
                cells.append(SweepCell(params=(n, tol), value=sol.info.iters_outer))
                counts.append(sol.info.iters_outer)
            except SolveError as exc:
                cells.append(SweepCell(params=(n, tol), value=None, error=str(exc)))
        if counts:
            flatness[tol] = max(counts) - min(counts)
    return cells, flatness


@dataclass(frozen=True)
class RotationSweepRow:
    theta: float
    admissible: bool
    error_vs_oracle: float = None
    max_diff_vs_base: float = None


def rotation_sweep(spec: ProblemSpec, theta_list):
    """Discretization error as the coefficient rotation angle varies.

    Every admissible theta yields the same discrete solution up to solver
    tolerance, so the error stays flat until the admissibility boundary
    is approached.  The reference is the complex Galerkin oracle on the
    nested refinement with 2N-1 nodes per side (the same-grid oracle
    would only measure solver noise), restricted to the coarse nodes.
    Inadmissible angles are flagged and skipped.  Returns (rows,
    base_error) with errors in the relative nodal 2-norm.
    """
    grid = spec.build_grid()
    fld = spec.build_field(grid)
    fine = build_grid(spec.domain, 2 * spec.nx - 1, 2 * spec.ny - 1)
    fine_u = galerkin_oracle(fine, spec.build_field(fine), spec.bc)
    # coarse node (i, j) is fine node (2i, 2j)
    gi = np.arange(grid.n_nodes) % grid.nx
    gj = np.arange(grid.n_nodes) // grid.nx
    reference = fine_u[2 * gj * fine.nx + 2 * gi]
    rnorm = np.linalg.norm(reference)

    base = solve(dataclasses.replace(spec, rotation=0.0))
    base_err = float(np.linalg.norm(base.u - reference) / rnorm)
    base_scale = float(np.abs(base.u).max())

    rows = []
    for theta in theta_list:
        if not admissibility(rotate(fld, theta)).ok:
            rows.append(RotationSweepRow(theta=float(theta), admissible=False))
            continue
        sol = solve(dataclasses.replace(spec, rotation=float(theta)))
        err = float(np.linalg.norm(sol.u - reference) / rnorm)
        diff = float(np.abs(sol.u - base.u).max() / base_scale)
        rows.append(RotationSweepRow(theta=float(theta), admissible=True,
                                     error_vs_oracle=err, max_diff_vs_base=diff))
    return rows, base_err


# ----------------------------------------------------------------------
# CSV emitters (plot-ready data for external tooling)
# ----------------------------------------------------------------------

def write_convergence_csv(study: ConvergenceStudy, path) -> None:
    with open(path, "w") as f:
        f.write("n,h,v2_error,slope_so_far\n")
        for k, (n, h, rep) in enumerate(study.rows):
            if k >= 1:
                hs = np.array([r[1] for r in study.rows[: k + 1]])
                v2 = np.array([r[2].v2 for r in study.rows[: k + 1]])
                s = (f"{np.polyfit(np.log(hs), np.log(v2), 1)[0]:.17g}"
                     if np.all(v2 > 0) else "undefined")
            else:
                s = ""
            f.write(f"{n},{h:.17g},{rep.v2:.17g},{s}\n")
        f.write(f"# slope = {'undefined' if study.slope is None else f'{study.slope:.17g}'}\n")


def write_spectrum_csv(values: np.ndarray, path) -> None:
    with open(path, "w") as f:
        f.write("index,eigenvalue\n")
        for k, v in enumerate(values):
            f.write(f"{k},{v:.17g}\n")


def write_pcg_sweep_csv(cells, path) -> None:
    with open(path, "w") as f:
        f.write("n,tol,outer_iterations,error\n")
        for c in cells:
            n, tol = c.params
            val = "" if c.value is None else c.value
            f.write(f"{n},{tol:.17g},{val},{c.error}\n")


def write_rotation_sweep_csv(rows, path) -> None:
    with open(path, "w") as f:
        f.write("theta,admissible,error_vs_oracle,max_diff_vs_base\n")
        for r in rows:
            err = "" if r.error_vs_oracle is None else f"{r.error_vs_oracle:.17g}"
            diff = "" if r.max_diff_vs_base is None else f"{r.max_diff_vs_base:.17g}"
            f.write(f"{r.theta:.17g},{int(r.admissible)},{err},{diff}\n")


def write_omega_sweep_csv(rows, path) -> None:
    with open(path, "w") as f:
        f.write("omega,n,v2_error,outer_iterations,error\n")
        for c in rows:
            omega, n = c.params
            if c.value is None:
                f.write(f"{omega:.17g},{n},,,{c.error}\n")
            else:
                rep, iters = c.value
                f.write(f"{omega:.17g},{n},{rep.v2:.17g},{iters},\n")
