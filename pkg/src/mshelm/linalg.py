"""Linear algebra kernels: sparse direct solves and small Hermitian
generalized eigenproblems.

Sparse systems are complex CSR/CSC factorised once by SuperLU and reused for
many right-hand sides.  The generalized problem M g = mu G g (M Hermitian
PSD, G Hermitian PD) is reduced with a Cholesky factor of G; if G is
numerically indefinite a single ridge regularisation retry is attempted
before giving up.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    pass


class GramConditioningError(SolverError):
    pass


class SparseFactorization:
    """LU factorisation of a sparse complex matrix with multi-RHS solve."""

    def __init__(self, lu, n):
        self._lu = lu
        self.n = n

    def solve(self, b):
        b = np.asarray(b, dtype=np.complex128)
        if b.ndim == 1:
            return self._lu.solve(b)
        return self._lu.solve(b)


def factorize(K):
    """Factorise a sparse complex system matrix.

    Raises SingularSystemError when a pivot falls below
    1e-14 * max|K| (or SuperLU reports exact singularity).
    """
    Kc = sp.csc_matrix(K, dtype=np.complex128)
    if Kc.shape[0] != Kc.shape[1]:
        raise ValueError("matrix must be square")
    if Kc.shape[0] == 0:
        raise ValueError("empty system")
    try:
        lu = spla.splu(Kc)
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorisation failed: {exc}") from exc
    maxval = np.abs(Kc.data).max() if Kc.nnz else 0.0
    dmin = np.abs(lu.U.diagonal()).min()
    if dmin <= 1e-14 * maxval:
        raise SingularSystemError(
            f"zero pivot: min |U_ii| = {dmin:.3e} vs max|K| = {maxval:.3e}"
        )
    return SparseFactorization(lu, Kc.shape[0])


def solve(fact, b):
    return fact.solve(b)


def top_eigenpairs(M, G, m):
    """Largest m eigenpairs of M g = mu G g with G-orthonormal vectors.

    M must be Hermitian PSD and G Hermitian PD (up to roundoff).  Returns
    (values, vectors) with values real, nonnegative, descending, and
    vectors[:, j] the eigenvector of values[j].
    """
    M = np.asarray(M, dtype=np.complex128)
    G = np.asarray(G, dtype=np.complex128)
    n = M.shape[0]
    if not (M.shape == G.shape == (n, n)):
        raise ValueError("M and G must be square and matching")
    if not 1 <= m <= n:
        raise ValueError(f"m must be in 1..{n}, got {m}")

    M = 0.5 * (M + M.conj().T)
    G = 0.5 * (G + G.conj().T)
    try:
        L = sla.cholesky(G, lower=True)
    except sla.LinAlgError:
        mu = 1e-12 * (np.trace(G).real / n)
        try:
            L = sla.cholesky(G + mu * np.eye(n), lower=True)
        except sla.LinAlgError as exc:
            raise GramConditioningError(
                "gram matrix is numerically indefinite even after "
                f"ridge regularisation mu = {mu:.3e}"
            ) from exc

    W = sla.solve_triangular(L, M, lower=True)
    C = sla.solve_triangular(L, W.conj().T, lower=True).conj().T
    C = 0.5 * (C + C.conj().T)
    vals, vecs = sla.eigh(C)
    order = np.argsort(vals)[::-1][:m]
    values = np.clip(vals[order], 0.0, None)
    vectors = sla.solve_triangular(L.conj().T, vecs[:, order], lower=False)

    res = np.linalg.norm(M @ vectors - (G @ vectors) * values[None, :])
    if res > 1e-8 * max(np.linalg.norm(M), 1e-300):
        raise SolverError(
            f"generalized eigensolve residual {res:.3e} exceeds tolerance"
        )
    return values, vectors
