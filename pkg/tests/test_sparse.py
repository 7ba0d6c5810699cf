import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from engine.errors import ConvergenceError, FactorizationBreakdown, OutputError
from engine.sparse import (as_sym_sparse, cg_solve, dense_expm, ic0_factor, matvec, read_triplets,
                           write_triplets)


def laplacian_2d(m):
    """SPD five-point matrix on an m x m interior grid"""
    T = sp.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(m, m))
    S = sp.diags([-1.0, -1.0], [-1, 1], shape=(m, m))
    I = sp.identity(m)
    return sp.csr_matrix(sp.kron(I, T) + sp.kron(S, I))


def test_as_sym_sparse_checks_shape_and_symmetry():
    with pytest.raises(ValueError):
        as_sym_sparse(np.ones((2, 3)))
    with pytest.raises(ValueError):
        as_sym_sparse(np.array([[1.0, 2.0], [0.0, 1.0]]))
    A = as_sym_sparse(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert A.has_sorted_indices


def test_matvec_dimension_mismatch():
    A = laplacian_2d(3)
    with pytest.raises(ValueError):
        matvec(A, np.ones(4))
    assert matvec(A, np.ones(9)) == pytest.approx(A.toarray() @ np.ones(9))


def test_ic0_is_exact_on_tridiagonal():
    # no fill-in, so IC(0) equals the full Cholesky factor
    n = 12
    A = sp.diags([-1.0, 2.5, -1.0], [-1, 0, 1], shape=(n, n), format="csr")
    factor = ic0_factor(A)
    L = factor.lower.toarray()
    assert L @ L.T == pytest.approx(A.toarray(), abs=1e-12)
    assert L == pytest.approx(scipy.linalg.cholesky(A.toarray(), lower=True), abs=1e-12)
    b = np.arange(n, dtype=float)
    assert factor.solve(b) == pytest.approx(np.linalg.solve(A.toarray(), b), rel=1e-10)


def test_ic0_matches_pattern_products():
    A = laplacian_2d(6)
    L = ic0_factor(A).lower.toarray()
    product = L @ L.T
    pattern = A.toarray() != 0.0
    assert product[pattern] == pytest.approx(A.toarray()[pattern], abs=1e-12)


def test_ic0_breakdown_on_indefinite():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(FactorizationBreakdown):
        ic0_factor(A)


@pytest.mark.parametrize("use_precond", [False, True])
def test_cg_solves_poisson(use_precond):
    A = laplacian_2d(20)
    rng = np.random.default_rng(3)
    x_true = rng.normal(size=A.shape[0])
    b = A @ x_true
    precond = ic0_factor(A) if use_precond else None
    x, iterations = cg_solve(A, b, precond=precond, tol=1e-10)
    assert np.linalg.norm(b - A @ x) <= 1e-10 * np.linalg.norm(b)
    assert x == pytest.approx(x_true, rel=1e-6, abs=1e-6)
    assert iterations > 0


def test_ic0_preconditioning_reduces_iterations():
    A = laplacian_2d(30)
    b = np.ones(A.shape[0])
    _, plain = cg_solve(A, b)
    _, preconditioned = cg_solve(A, b, precond=ic0_factor(A))
    assert preconditioned < plain


def test_cg_zero_rhs_and_maxit():
    A = laplacian_2d(10)
    x, iterations = cg_solve(A, np.zeros(100))
    assert iterations == 0 and not np.any(x)
    with pytest.raises(ConvergenceError) as info:
        cg_solve(A, np.ones(100), maxit=2)
    assert info.value.iterations == 2


def test_dense_expm_diagonal():
    A = np.diag([-1.0, 0.0, 2.0])
    assert np.diag(dense_expm(A)) == pytest.approx(np.exp([-1.0, 0.0, 2.0]))


def test_triplets_round_trip(tmp_path):
    A = laplacian_2d(4)
    path = tmp_path / "a.txt"
    write_triplets(A, path)
    B = read_triplets(path, n=16)
    assert (A != B).nnz == 0
    first = path.read_text().splitlines()[0].split()
    assert len(first) == 3


def test_triplets_unwritable_path(tmp_path):
    with pytest.raises(OutputError):
        write_triplets(laplacian_2d(2), tmp_path / "missing" / "a.txt")
