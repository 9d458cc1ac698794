"""Sparse symmetric matrices, IC(0), PCG, and the implicit Schur operator.

The saddle-point block system is never solved as one indefinite matrix;
instead the real part of the solution comes from a PCG solve with the
Schur complement ``A1 + A2^T A1^{-1} A2`` applied implicitly, and the
imaginary part from a plain ``A1`` solve.  Every ``A1`` solve (including
the ones nested inside the Schur operator) is itself PCG preconditioned
by an incomplete Cholesky factorization of the gradient-gradient part
``P1`` of ``A1``, or a cached direct factorization in "direct" mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla


class PcgError(RuntimeError):
    pass


class PcgBreakdownError(PcgError):
    """Non-positive curvature encountered: the operator (or the
    preconditioner) is not positive definite.  For assembled systems this
    indicates an inadmissible coefficient field."""


class PcgNonConvergenceError(PcgError):
    def __init__(self, msg, iters, rel_res):
        super().__init__(msg)
        self.iters = iters
        self.rel_res = rel_res


class IcBreakdownError(RuntimeError):
    """IC(0) failed even after diagonal-shift retries."""


@dataclass(frozen=True, eq=False)
class SparseSym:
    """Symmetric sparse matrix in CSR form.

    The full matrix is stored; the pattern is fixed by mesh adjacency at
    assembly time and explicit zeros produced by cancellation are kept
    (no pruning), so the structure is reproducible.  Immutable.
    """

    mat: sps.csr_matrix = field(repr=False)

    def __post_init__(self):
        m = self.mat
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    @property
    def nnz(self) -> int:
        return self.mat.nnz

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.mat @ x

    def diagonal(self) -> np.ndarray:
        return self.mat.diagonal()

    def lower(self) -> sps.csr_matrix:
        """Lower triangle (including diagonal) with sorted indices."""
        low = sps.tril(self.mat, format="csr")
        low.sort_indices()
        return low

    def dense(self) -> np.ndarray:
        return self.mat.toarray()

    def is_value_symmetric(self) -> bool:
        return (self.mat != self.mat.T).nnz == 0


def export_triplets(mat, path) -> None:
    """Write a matrix as plain-text ``row col value`` triplets."""
    coo = (mat.mat if isinstance(mat, SparseSym) else sps.csr_matrix(mat)).tocoo()
    with open(path, "w") as f:
        f.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{i} {j} {v:.17g}\n")


# ----------------------------------------------------------------------
# Preconditioned conjugate gradients
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PcgConfig:
    """Tolerances for the nested solves.

    ``rel_tol`` applies to the outer Schur solve, ``inner_rel_tol`` to the
    nested A1 solves (kept two orders tighter so the outer operator is
    effectively linear).  ``max_iter`` = 0 means 10*N.
    """

    rel_tol: float = 1e-10
    max_iter: int = 0
    inner_rel_tol: float = 1e-12

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError("rel_tol must be in (0, 1)")
        if self.inner_rel_tol > self.rel_tol:
            raise ValueError("inner_rel_tol must not exceed rel_tol")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")

    def iter_limit(self, n: int) -> int:
        return self.max_iter if self.max_iter > 0 else 10 * n


@dataclass(frozen=True, eq=False)
class PcgResult:
    x: np.ndarray
    iters: int
    residuals: np.ndarray  # relative residual after each iteration


def _as_operator(a):
    if a is None:
        return None
    if callable(a):
        return a
    if isinstance(a, SparseSym):
        return a.matvec
    if sps.issparse(a) or isinstance(a, np.ndarray):
        return lambda x: a @ x
    raise TypeError(f"cannot interpret {type(a)!r} as a linear operator")


def pcg(apply_a, apply_minv, b, cfg: PcgConfig = PcgConfig(), atol: float = None) -> PcgResult:
    """Preconditioned conjugate gradients for SPD ``A x = b``.

    Parameters
    ----------
    apply_a, apply_minv : callable, matrix, or SparseSym
        The operator and the preconditioner inverse; ``apply_minv=None``
        disables preconditioning.
    b : ndarray
        Right-hand side.
    cfg : PcgConfig
        Tolerance and iteration limit.
    atol : float, optional
        Extra absolute residual threshold; convergence is declared at
        ``||b - A x|| <= min(rel_tol*||b||, atol)`` when given.

    Returns
    -------
    PcgResult with the solution, iteration count, and the relative
    residual history.

    Raises
    ------
    PcgBreakdownError on a non-SPD operator or preconditioner,
    PcgNonConvergenceError when the iteration limit is hit.
    """
    apply_a = _as_operator(apply_a)
    apply_minv = _as_operator(apply_minv) or (lambda r: r)
    b = np.asarray(b, dtype=float)
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return PcgResult(x=np.zeros(n), iters=0, residuals=np.zeros(0))
    threshold = cfg.rel_tol * bnorm
    if atol is not None:
        threshold = min(threshold, atol)

    x = np.zeros(n)
    r = b.copy()
    z = apply_minv(r)
    p = z.copy()
    rz = float(r @ z)
    if rz <= 0.0:
        raise PcgBreakdownError("preconditioner is not positive definite")

    history = []
    limit = cfg.iter_limit(n)
    for it in range(1, limit + 1):
        q = apply_a(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise PcgBreakdownError(
                "non-positive curvature direction: operator is not positive "
                "definite (inadmissible coefficient field?)"
            )
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        rnorm = np.linalg.norm(r)
        history.append(rnorm / bnorm)
        if rnorm <= threshold:
            return PcgResult(x=x, iters=it, residuals=np.array(history))
        z = apply_minv(r)
        rz_new = float(r @ z)
        if rz_new <= 0.0:
            raise PcgBreakdownError("preconditioner is not positive definite")
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise PcgNonConvergenceError(
        f"PCG did not reach {threshold:.3e} within {limit} iterations "
        f"(relative residual {history[-1]:.3e})",
        iters=limit, rel_res=history[-1],
    )


def write_residual_csv(result: PcgResult, path) -> None:
    """Dump a residual history as (iteration, relative residual) CSV."""
    with open(path, "w") as f:
        f.write("iteration,relative_residual\n")
        for k, r in enumerate(result.residuals, start=1):
            f.write(f"{k},{r:.17g}\n")


# ----------------------------------------------------------------------
# Incomplete Cholesky IC(0)
# ----------------------------------------------------------------------

@dataclass(eq=False)
class ICFactor:
    """Lower-triangular incomplete Cholesky factor with zero fill.

    ``A + shift*I ~= R R^T`` on the sparsity pattern of the source lower
    triangle; ``shift`` is zero unless pivot breakdown forced a diagonal
    shift.  Application of ``(R R^T)^{-1}`` runs through a cached
    factorization object used purely as a fast triangular-substitution
    backend (R is already triangular, so no additional fill occurs).
    """

    lower: sps.csr_matrix
    shift: float = 0.0
    _tri = None

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def _backend(self):
        if self._tri is None:
            self._tri = spla.splu(
                self.lower.tocsc(), permc_spec="NATURAL", diag_pivot_thresh=0.0,
                options={"SymmetricMode": False},
            )
        return self._tri

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Apply (R R^T)^{-1} via forward and transposed substitution."""
        tri = self._backend()
        return tri.solve(tri.solve(np.asarray(b, dtype=float)), trans="T")


def _ic0_attempt(indptr, indices, a, n):
    """One IC(0) pass over a sorted CSR lower triangle.

    Returns (values, -1) on success or (None, row) at the first
    non-positive pivot.
    """
    v = np.zeros_like(a)
    for k in range(n):
        start, end = indptr[k], indptr[k + 1]
        diag_acc = 0.0
        for t in range(start, end):
            j = indices[t]
            if j == k:
                pivot = a[t] - diag_acc
                if pivot <= 0.0:
                    return None, k
                v[t] = np.sqrt(pivot)
                break
            # Sparse dot of row k and row j restricted to columns < j.
            s = 0.0
            p1, p2 = start, indptr[j]
            e1, e2 = t, indptr[j + 1] - 1
            while p1 < e1 and p2 < e2:
                c1, c2 = indices[p1], indices[p2]
                if c1 == c2:
                    s += v[p1] * v[p2]
                    p1 += 1
                    p2 += 1
                elif c1 < c2:
                    p1 += 1
                else:
                    p2 += 1
            vj = v[indptr[j + 1] - 1]
            v[t] = (a[t] - s) / vj
            diag_acc += v[t] * v[t]
    return v, -1


def ic0(p1, max_retries: int = 20) -> ICFactor:
    """Incomplete Cholesky with zero fill on the pattern of ``p1``.

    On pivot breakdown the factorization is retried on ``p1 + shift*I``
    with the shift doubling from ``1e-3 * max(diag)``; after
    ``max_retries`` shifted attempts an :class:`IcBreakdownError` is
    raised.
    """
    if isinstance(p1, SparseSym):
        low = p1.lower()
    else:
        low = sps.tril(sps.csr_matrix(p1), format="csr")
        low.sort_indices()
    n = low.shape[0]
    diag = low.diagonal()
    if np.any(diag <= 0.0):
        raise ValueError("matrix must have a positive diagonal")

    # Diagonal must be the last entry of each row for the kernel.
    base = low.data.astype(float)
    shift = 0.0
    shift0 = 1e-3 * float(diag.max())
    diag_pos = low.indptr[1:] - 1
    for attempt in range(max_retries + 1):
        a = base.copy()
        if shift:
            a[diag_pos] += shift
        v, bad = _ic0_attempt(low.indptr, low.indices, a, n)
        if bad < 0:
            out = sps.csr_matrix((v, low.indices.copy(), low.indptr.copy()), shape=low.shape)
            return ICFactor(lower=out, shift=shift)
        shift = shift0 * (2.0 ** attempt)
    raise IcBreakdownError(
        f"IC(0) pivot breakdown persisted through {max_retries} diagonal shifts"
    )


# ----------------------------------------------------------------------
# A1 solves and the Schur operator
# ----------------------------------------------------------------------

class A1Solver:
    """Reusable solver for systems with the SPD block ``A1``.

    mode "implicit": PCG preconditioned by IC(0) of the gradient part
    ``P1`` (factor built lazily, once).  mode "direct": a cached sparse
    direct factorization of ``A1`` used for exact solves.
    """

    def __init__(self, a1: SparseSym, p1: SparseSym = None, mode: str = "implicit",
                 rel_tol: float = 1e-12, max_iter: int = 0):
        if mode not in ("implicit", "direct"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "implicit" and p1 is None:
            raise ValueError("implicit mode requires P1")
        self.a1 = a1
        self.p1 = p1
        self.mode = mode
        self.rel_tol = rel_tol
        self.max_iter = max_iter
        self.total_iters = 0
        self.n_solves = 0
        self._ic = None
        self._lu = None

    def _precond(self) -> ICFactor:
        if self._ic is None:
            self._ic = ic0(self.p1)
        return self._ic

    def solve(self, b: np.ndarray, atol: float = None) -> np.ndarray:
        self.n_solves += 1
        if self.mode == "direct":
            if self._lu is None:
                self._lu = spla.splu(self.a1.mat.tocsc())
            return self._lu.solve(np.asarray(b, dtype=float))
        cfg = PcgConfig(rel_tol=self.rel_tol, max_iter=self.max_iter,
                        inner_rel_tol=self.rel_tol)
        res = pcg(self.a1, self._precond().solve, b, cfg, atol=atol)
        self.total_iters += res.iters
        return res.x


class SchurOperator:
    """Implicit action of ``A1 + A2^T A1^{-1} A2``.

    Only matrix-vector products are ever formed; the inner ``A1`` solve
    runs through the attached :class:`A1Solver`.  The operator is
    symmetric positive definite up to the inner solve tolerance.
    """

    def __init__(self, a1: SparseSym, a2: sps.spmatrix, solver: A1Solver):
        if a2.shape != (a1.n, a1.n):
            raise ValueError("A1/A2 dimension mismatch")
        self.a1 = a1
        self.a2 = sps.csr_matrix(a2)
        self.a2t = self.a2.T.tocsr()
        self.solver = solver

    @property
    def n(self) -> int:
        return self.a1.n

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = self.a2 @ x
        z = self.solver.solve(y)
        return self.a1.matvec(x) + self.a2t @ z

    __call__ = apply


def schur_apply(op: SchurOperator, x: np.ndarray) -> np.ndarray:
    """Apply the Schur complement operator to a vector."""
    return op.apply(x)
