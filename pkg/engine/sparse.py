"""
Sparse symmetric linear algebra on scipy CSR matrices: incomplete
Cholesky, preconditioned conjugate gradients, a dense expm oracle and a
triplet text format for debugging.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numba import njit

from engine.errors import ConvergenceError, FactorizationBreakdown, NumericalFailure, OutputError

log = logging.getLogger(__name__)

DEFAULT_CG_TOL = 1e-10
MAX_DENSE_EXPM = 512


def as_sym_sparse(A, check_symmetry=True):
    """
    Canonical CSR form: sorted indices, duplicates summed.
    Optionally checks exact (bitwise) symmetry.
    """
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if check_symmetry and (A != A.T).nnz != 0:
        raise ValueError("matrix is not symmetric")
    return A


def matvec(A, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[1],):
        raise ValueError(f"vector of length {x.shape} does not match matrix of size {A.shape}")
    return A @ x


@njit
def _ic0_kernel(indptr, indices, data):
    """
    In-place IC(0) on the lower triangle (CSR, sorted, diagonal last in
    each row). Returns -1 on success, otherwise the failing row.
    """
    n = indptr.shape[0] - 1
    for i in range(n):
        row_start = indptr[i]
        row_end = indptr[i + 1]
        for p in range(row_start, row_end):
            k = indices[p]
            # s = a_ik - sum_{j<k} l_ij l_kj over the shared pattern
            s = data[p]
            a = row_start
            b = indptr[k]
            b_end = indptr[k + 1]
            while a < p and b < b_end:
                ca = indices[a]
                cb = indices[b]
                if cb >= k:
                    break
                if ca == cb:
                    s -= data[a] * data[b]
                    a += 1
                    b += 1
                elif ca < cb:
                    a += 1
                else:
                    b += 1
            if k < i:
                data[p] = s / data[indptr[k + 1] - 1]
            else:
                if s <= 0.0:
                    data[p] = s
                    return i
                data[p] = np.sqrt(s)
    return -1


@njit
def _lower_solve(indptr, indices, data, rhs):
    n = rhs.shape[0]
    y = rhs.copy()
    for i in range(n):
        s = y[i]
        end = indptr[i + 1] - 1
        for p in range(indptr[i], end):
            s -= data[p] * y[indices[p]]
        y[i] = s / data[end]
    return y


@njit
def _upper_solve(indptr, indices, data, rhs):
    """Solve L^T x = rhs using the rows of L"""
    n = rhs.shape[0]
    x = rhs.copy()
    for i in range(n - 1, -1, -1):
        end = indptr[i + 1] - 1
        x[i] = x[i] / data[end]
        xi = x[i]
        for p in range(indptr[i], end):
            x[indices[p]] -= data[p] * xi
    return x


@dataclass
class IC0Factor:
    """Lower factor L with A ~ L L^T, stored as CSR on A's lower pattern"""
    lower: sp.csr_matrix

    @property
    def n(self):
        return self.lower.shape[0]

    def solve(self, r):
        """Apply (L L^T)^{-1}"""
        L = self.lower
        y = _lower_solve(L.indptr, L.indices, L.data, np.asarray(r, dtype=float))
        return _upper_solve(L.indptr, L.indices, L.data, y)

    __call__ = solve


def ic0_factor(A):
    """Zero-fill incomplete Cholesky factor of an SPD matrix"""
    A = as_sym_sparse(A, check_symmetry=False)
    L = sp.tril(A, format="csr")
    L.sort_indices()
    L = sp.csr_matrix((L.data.copy(), L.indices.astype(np.int64), L.indptr.astype(np.int64)), shape=A.shape)
    diag_last = L.indices[L.indptr[1:] - 1] == np.arange(A.shape[0])
    if not np.all(diag_last):
        row = int(np.flatnonzero(~diag_last)[0])
        raise FactorizationBreakdown(row, 0.0)
    failed = _ic0_kernel(L.indptr, L.indices, L.data)
    if failed >= 0:
        raise FactorizationBreakdown(int(failed), float(L.data[L.indptr[failed + 1] - 1]))
    return IC0Factor(L)


def warm_up():
    """Compile the factor and triangular-solve kernels before timed runs"""
    log.info("Warming up sparse kernels...")
    A = sp.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(8, 8), format="csr")
    ic0_factor(A).solve(np.ones(8))
    log.info("Sparse kernels ready")


def cg_solve(A, b, precond=None, tol=DEFAULT_CG_TOL, maxit=None, x0=None):
    """
    Preconditioned conjugate gradients for SPD A.

    Iterates until the preconditioned residual sqrt(r.z) drops below
    tol times its initial value, then confirms the true residual
    ||b - Ax|| <= tol ||b||; an unconfirmed stop restarts from the true
    residual.

    Returns
    -------
    x : ndarray
    iterations : int
    """
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if maxit is None:
        maxit = 10 * n
    apply_m = precond if precond is not None else (lambda r: r)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n), 0

    r = b - A @ x
    z = apply_m(r)
    rz = float(r @ z)
    stop = tol * np.sqrt(abs(rz)) if rz != 0.0 else 0.0
    p = z.copy()
    iterations = 0
    true_residual = np.linalg.norm(r)
    if true_residual <= tol * b_norm:
        return x, 0

    while iterations < maxit:
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        iterations += 1
        z = apply_m(r)
        rz_new = float(r @ z)
        if np.sqrt(abs(rz_new)) <= stop:
            true_residual = np.linalg.norm(b - A @ x)
            if true_residual <= tol * b_norm:
                log.debug("CG converged in %d iterations (residual %.3e)", iterations, true_residual / b_norm)
                return x, iterations
            stop *= tol * b_norm / true_residual
            r = b - A @ x
            z = apply_m(r)
            rz_new = float(r @ z)
            p = z.copy()
            rz = rz_new
            continue
        p = z + (rz_new / rz) * p
        rz = rz_new

    true_residual = np.linalg.norm(b - A @ x)
    if true_residual <= tol * b_norm:
        return x, iterations
    raise ConvergenceError(iterations, true_residual / b_norm)


def dense_expm(A):
    """Matrix exponential by scaling and squaring with a Pade approximant"""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > MAX_DENSE_EXPM:
        raise ValueError(f"dense expm limited to n <= {MAX_DENSE_EXPM}")
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(A)
    if not np.all(np.isfinite(E)):
        raise NumericalFailure("matrix exponential overflowed")
    return E


def write_triplets(A, path):
    """One 'i j value' line per stored entry, 0-based"""
    A = sp.coo_matrix(A)
    path = Path(path)
    try:
        with path.open("w", newline="\n") as f:
            for i, j, v in zip(A.row, A.col, A.data):
                f.write(f"{int(i)} {int(j)} {float(v)!r}\n")
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e


def read_triplets(path, n=None):
    path = Path(path)
    try:
        data = np.loadtxt(path, ndmin=2)
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e
    if data.size == 0:
        size = n or 0
        return sp.csr_matrix((size, size))
    rows = data[:, 0].astype(np.int64)
    cols = data[:, 1].astype(np.int64)
    if n is None:
        n = int(max(rows.max(), cols.max())) + 1
    return sp.csr_matrix((data[:, 2], (rows, cols)), shape=(n, n))
