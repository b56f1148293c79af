"""Dense triangular algebra kernels.

Everything downstream (the penalized-system solvers and the variable-selection
sampler) is built on four things: an upper-triangular Cholesky factorization
R'R = A, forward/backward substitution for real or complex triangular systems,
Givens rotations, and incremental column add/remove updates of a cached factor.

Conventions: factors are upper triangular with positive diagonal (R'R = A);
matrices are dense numpy arrays; column indices are 0-based.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

# pivot acceptance threshold, relative to the largest matrix entry
_PD_RTOL = 1e-12


class NotPositiveDefinite(ValueError):
    """A pivot fell below tolerance: the matrix is not numerically SPD."""


class SingularDiagonal(ValueError):
    """A triangular system has a zero diagonal entry."""


class IndexOutOfRange(IndexError):
    """Column index outside the factor's range."""


@dataclass
class OpCounter:
    """Accumulates scalar multiply-add counts along the instrumented paths."""

    madds: int = 0

    def add(self, k):
        self.madds += int(k)


def cholesky(a):
    """Upper-triangular Cholesky factor R with R'R = a.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric positive-definite matrix.

    Raises
    ------
    NotPositiveDefinite
        If any pivot is <= 1e-12 * max|a|.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("cholesky expects a square matrix")
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    amax = np.abs(a).max()
    if not np.isfinite(amax):
        raise ValueError("cholesky expects finite entries")
    if np.abs(a - a.T).max() > 1e-8 * max(amax, 1.0):
        raise ValueError("cholesky expects a symmetric matrix")
    tol = _PD_RTOL * amax
    r = np.zeros((n, n))
    for i in range(n):
        row = a[i, i:] - r[:i, i] @ r[:i, i:]
        pivot = row[0]
        if pivot <= tol:
            raise NotPositiveDefinite(
                f"pivot {pivot:.3e} at column {i} below tolerance {tol:.3e}"
            )
        rii = math.sqrt(pivot)
        r[i, i] = rii
        r[i, i + 1 :] = row[1:] / rii
    return r


def _check_diag(t):
    d = np.diagonal(t)
    if np.any(d == 0):
        raise SingularDiagonal("zero diagonal entry in triangular system")


def _sub_loop(t, b, lower, counter):
    n = t.shape[0]
    x = np.zeros(n, dtype=np.result_type(t, b))
    order = range(n) if lower else range(n - 1, -1, -1)
    for i in order:
        if lower:
            acc = t[i, :i] @ x[:i] if i else 0.0
        else:
            acc = t[i, i + 1 :] @ x[i + 1 :] if i < n - 1 else 0.0
        x[i] = (b[i] - acc) / t[i, i]
        if counter is not None:
            counter.add((i if lower else n - 1 - i) + 1)
    return x


def forward_sub(lower, b, counter=None):
    """Solve the lower-triangular system lower @ x = b (real or complex).

    Passing an OpCounter routes through the instrumented substitution loop,
    which counts scalar multiply-adds; otherwise LAPACK does the work.
    """
    lower = np.asarray(lower)
    b = np.asarray(b)
    _check_diag(lower)
    if counter is not None:
        return _sub_loop(lower, b, True, counter)
    if lower.shape[0] == 0:
        return np.zeros(0, dtype=np.result_type(lower, b))
    return solve_triangular(lower, b, lower=True, check_finite=False)


def backward_sub(upper, b, counter=None):
    """Solve the upper-triangular system upper @ x = b (real or complex)."""
    upper = np.asarray(upper)
    b = np.asarray(b)
    _check_diag(upper)
    if counter is not None:
        return _sub_loop(upper, b, False, counter)
    if upper.shape[0] == 0:
        return np.zeros(0, dtype=np.result_type(upper, b))
    return solve_triangular(upper, b, lower=False, check_finite=False)


def givens(a, b):
    """Rotation (c, s) with [[c, s], [-s, c]] @ [a, b] = [r, 0], r = hypot(a, b).

    The degenerate call givens(0, 0) returns the identity rotation (1, 0)
    instead of raising; removal never produces it for positive-definite
    factors, but degenerate test matrices should not abort.
    """
    if a == 0.0 and b == 0.0:
        return 1.0, 0.0
    r = math.hypot(a, b)
    return a / r, b / r


def chol_add_column(r, new_col):
    """Grow a factor by one trailing column.

    `r` is the p x p factor of a Gram matrix G; `new_col` has length p+1 and
    holds the cross-products of the incoming covariate against the current
    ones, with its self-product last. Returns the (p+1) x (p+1) factor of the
    bordered Gram matrix. One forward substitution: O(p^2).
    """
    r = np.asarray(r, dtype=float)
    new_col = np.asarray(new_col, dtype=float)
    p = r.shape[0]
    if new_col.shape != (p + 1,):
        raise ValueError(f"new_col must have length {p + 1}")
    head = forward_sub(r.T, new_col[:p]) if p else np.zeros(0)
    pivot = new_col[p] - head @ head
    scale = max(abs(new_col[p]), float(np.max(np.diagonal(r) ** 2, initial=0.0)))
    if pivot <= _PD_RTOL * scale:
        raise NotPositiveDefinite(
            f"new column pivot {pivot:.3e} below tolerance (collinear column)"
        )
    out = np.zeros((p + 1, p + 1))
    out[:p, :p] = r
    out[:p, p] = head
    out[p, p] = math.sqrt(pivot)
    return out


def chol_remove_column(r, k):
    """Shrink a factor by deleting column k (0-based).

    Deleting a column leaves a spike below the diagonal from position k on;
    Givens rotations on adjacent row pairs restore triangularity and the
    trailing all-zero row is dropped. Cost ~3(p-k)^2 flops.
    """
    r = np.asarray(r, dtype=float)
    p = r.shape[0]
    if not 0 <= k < p:
        raise IndexOutOfRange(f"column {k} out of range for dim {p}")
    work = np.delete(r, k, axis=1)
    for j in range(k, p - 1):
        c, s = givens(work[j, j], work[j + 1, j])
        block = work[j : j + 2, j:]
        work[j : j + 2, j:] = [[c, s], [-s, c]] @ block
        work[j + 1, j] = 0.0
    return np.ascontiguousarray(work[: p - 1, :])


@dataclass
class ComplexTriangularPair:
    """Complex triangular factors (R' - i*Sigma, R + i*Sigma) of a shifted system.

    Their product is A + i*S with A = R'R + Sigma^2 and the skew-symmetric
    S = R'Sigma - Sigma*R; applying the inverse is one forward and one
    backward substitution, never an explicit inverse.
    """

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def from_cholesky(cls, r, sigma_diag):
        r = np.asarray(r, dtype=float)
        sigma_diag = np.asarray(sigma_diag, dtype=float)
        if np.any(sigma_diag <= 0):
            raise ValueError("penalty diagonal must be positive")
        upper = r.astype(complex)
        idx = np.diag_indices(r.shape[0])
        upper[idx] += 1j * sigma_diag
        return cls(lower=upper.conj().T.copy(), upper=upper)

    def solve(self, v, counter=None):
        return backward_sub(self.upper, forward_sub(self.lower, v, counter), counter)
