"""Solvers for diagonally penalized least-squares systems.

Every routine here targets the same normal equations

    (R'R + diag(sigma)^2) beta = z,

where ``R`` is the upper-triangular Cholesky factor of a Gram matrix and
``sigma`` holds strictly positive per-coordinate penalties.  The complex
factorization solver rewrites the system through the exactly factorable
Hermitian matrix ``H = (R' - i diag(sigma)) (R + i diag(sigma))`` and
iterates on its real part, so each sweep costs two triangular solves and
one matrix-vector product.  The classical splitting methods (Jacobi,
Gauss-Seidel, SOR), gradient methods (CG, steepest descent), and a direct
Cholesky solve are provided with the same options and report shape so they
can be compared head to head.

All iterative solvers share one stopping rule: stop as soon as the largest
absolute coordinate change falls below ``options.tolerance``, give up after
``options.max_iter`` sweeps, and abort early if the step size blows up
relative to the best step seen so far.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .linalg import (
    ComplexTriangularPair,
    OpCounter,
    backward_sub,
    cholesky,
    forward_sub,
)

__all__ = [
    "PenalizedSystem",
    "SolverOptions",
    "SolverReport",
    "IcfState",
    "solve_icf",
    "solve_direct",
    "solve_jacobi",
    "solve_gauss_seidel",
    "solve_sor",
    "solve_cg",
    "solve_steepest",
    "solve_dual",
    "adapt_omega",
    "estimate_rho",
    "optimal_omega",
]

# Relaxation never drops below this, so a noisy contraction estimate cannot
# freeze the iteration.
_OMEGA_FLOOR = 1e-3
# Contraction-ratio estimates above this are treated as transient noise.
_RHO_CAP = 10.0
# A step this many times larger than the smallest step seen means divergence.
_DIVERGENCE_RATIO = 1e6
# Number of leading unit-relaxation sweeps before adaptation starts.
_WARMUP_SWEEPS = 2


@dataclass
class SolverOptions:
    """Knobs shared by every iterative solver."""

    tolerance: float = 1e-6
    max_iter: int = 200
    omega_sor: float = 1.2
    initial_beta: np.ndarray | None = None


@dataclass
class SolverReport:
    """What a solve produced and how hard it had to work."""

    beta: np.ndarray
    iterations: int
    converged: bool
    max_step: float
    omega_trace: list[float] | None = None
    wall_time: float = 0.0


@dataclass
class PenalizedSystem:
    """The triple (R, sigma, z) defining one penalized system.

    ``r`` is the upper-triangular factor with ``R'R`` equal to the Gram
    matrix, ``sigma`` the positive penalty diagonal, ``z`` the right-hand
    side.  The dense coefficient matrix is built lazily and cached because
    only the direct and splitting solvers need it.
    """

    r: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    _a: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        p = self.r.shape[0]
        if self.r.shape != (p, p):
            raise ValueError("factor must be square")
        if self.sigma.shape != (p,) or self.z.shape != (p,):
            raise ValueError("penalty and right-hand side must have length %d" % p)
        if not np.all(self.sigma > 0):
            raise ValueError("penalty entries must be strictly positive")

    @property
    def p(self) -> int:
        return self.r.shape[0]

    def a_matrix(self) -> np.ndarray:
        """Dense coefficient matrix R'R + diag(sigma)^2, cached."""
        if self._a is None:
            self._a = self.r.T @ self.r + np.diag(self.sigma**2)
        return self._a

    def skew_matrix(self) -> np.ndarray:
        """The exactly skew-symmetric part S = R' diag(sigma) - diag(sigma) R."""
        s = self.r.T * self.sigma[np.newaxis, :] - self.sigma[:, np.newaxis] * self.r
        return s


@dataclass
class IcfState:
    """Rolling window of the three most recent iterates.

    The relaxation schedule needs successive step norms, so the solver keeps
    the current iterate and the two before it.
    """

    current: np.ndarray | None = None
    previous: np.ndarray | None = None
    pre_previous: np.ndarray | None = None

    def push(self, beta: np.ndarray) -> None:
        self.pre_previous = self.previous
        self.previous = self.current
        self.current = beta

    def contraction_estimate(self) -> float | None:
        if self.pre_previous is None:
            return None
        return estimate_rho(self.current, self.previous, self.pre_previous)


def adapt_omega(omega: float, rho_hat: float) -> float:
    """One update of the relaxation factor from an observed contraction ratio.

    The map has omega = 1 as its fixed point exactly when rho_hat = 0 and
    pushes omega toward the value that balances the observed contraction.
    """
    return 2.0 * omega / (1.0 + omega + rho_hat)


def estimate_rho(current, previous, pre_previous) -> float:
    """Ratio of successive step norms; 0 when the older step vanished."""
    denom = float(np.linalg.norm(previous - pre_previous))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(current - previous)) / denom


def optimal_omega(eta_sq_min: float, eta_sq_max: float) -> float:
    """Relaxation factor minimizing the iteration's spectral radius.

    ``eta_sq_min`` and ``eta_sq_max`` are the extreme squared imaginary
    parts of the eigenvalues of A^(-1) S; both must lie in [0, 1).
    """
    if not 0.0 <= eta_sq_min <= eta_sq_max < 1.0:
        raise ValueError("eigenvalue bounds must satisfy 0 <= min <= max < 1")
    return 2.0 / (1.0 / (1.0 - eta_sq_min) + 1.0 / (1.0 - eta_sq_max))


def _initial_beta(system: PenalizedSystem, options: SolverOptions) -> np.ndarray:
    if options.initial_beta is None:
        return np.zeros(system.p)
    beta = np.asarray(options.initial_beta, dtype=float).copy()
    if beta.shape != (system.p,):
        raise ValueError("initial point must have length %d" % system.p)
    return beta


def solve_icf(
    system: PenalizedSystem,
    options: SolverOptions | None = None,
    counter: OpCounter | None = None,
) -> SolverReport:
    """Iterative complex-factorization solve.

    Each sweep applies the inverse of ``H = A + iS`` through its two exact
    triangular factors and relaxes the real part of the result.  The first
    few sweeps run unrelaxed; afterwards the relaxation factor adapts to the
    observed contraction ratio, one sweep behind the estimate it uses.
    """
    options = options or SolverOptions()
    start = time.perf_counter()
    p = system.p
    pair = ComplexTriangularPair.from_cholesky(system.r, system.sigma)
    s = system.skew_matrix()
    z = system.z
    beta = _initial_beta(system, options)
    if p == 0:
        return SolverReport(beta, 0, True, 0.0, [], time.perf_counter() - start)

    state = IcfState()
    state.push(beta)
    # omega_schedule[k] drives the sweep producing iterate k + 1
    omega_schedule = [1.0] * (_WARMUP_SWEEPS + 1)
    trace: list[float] = []
    min_step = np.inf
    max_step = np.inf
    converged = False
    iterations = 0

    for sweep in range(1, options.max_iter + 1):
        omega = omega_schedule[sweep - 1]
        trace.append(omega)
        if counter is not None:
            counter.add(p * p)
        u = pair.solve(z + 1j * (s @ beta), counter)
        beta_next = (1.0 - omega) * beta + omega * u.real
        if counter is not None:
            counter.add(2 * p)
        step = float(np.abs(beta_next - beta).max())
        state.push(beta_next)
        beta = beta_next
        iterations = sweep
        max_step = step
        if not np.isfinite(step):
            break
        if step < options.tolerance:
            converged = True
            break
        min_step = min(min_step, step)
        if step > _DIVERGENCE_RATIO * min_step:
            break
        if sweep >= _WARMUP_SWEEPS:
            rho_hat = min(max(state.contraction_estimate(), 0.0), _RHO_CAP)
            omega_next = adapt_omega(omega_schedule[sweep], rho_hat)
            omega_schedule.append(max(omega_next, _OMEGA_FLOOR))

    return SolverReport(
        beta, iterations, converged, max_step, trace, time.perf_counter() - start
    )


def solve_direct(
    system: PenalizedSystem, counter: OpCounter | None = None
) -> SolverReport:
    """Exact solve by Cholesky factorization of the dense coefficient matrix."""
    start = time.perf_counter()
    factor = cholesky(system.a_matrix())
    y = forward_sub(factor.T, system.z, counter)
    beta = backward_sub(factor, y, counter)
    return SolverReport(beta, 0, True, 0.0, None, time.perf_counter() - start)


def _run_fixed_point(system, options, start, next_beta) -> SolverReport:
    """Shared driver for the splitting methods."""
    beta = _initial_beta(system, options)
    min_step = np.inf
    max_step = np.inf
    converged = False
    iterations = 0
    for sweep in range(1, options.max_iter + 1):
        beta_next = next_beta(beta)
        step = float(np.abs(beta_next - beta).max()) if system.p else 0.0
        beta = beta_next
        iterations = sweep
        max_step = step
        if not np.isfinite(step):
            break
        if step < options.tolerance:
            converged = True
            break
        min_step = min(min_step, step)
        if step > _DIVERGENCE_RATIO * min_step:
            break
    return SolverReport(
        beta, iterations, converged, max_step, None, time.perf_counter() - start
    )


def solve_jacobi(
    system: PenalizedSystem, options: SolverOptions | None = None
) -> SolverReport:
    options = options or SolverOptions()
    start = time.perf_counter()
    a = system.a_matrix()
    d = np.diag(a).copy()

    def next_beta(beta):
        return (system.z - a @ beta + d * beta) / d

    return _run_fixed_point(system, options, start, next_beta)


def solve_gauss_seidel(
    system: PenalizedSystem, options: SolverOptions | None = None
) -> SolverReport:
    options = options or SolverOptions()
    start = time.perf_counter()
    a = system.a_matrix()
    lower = np.tril(a)
    upper = np.triu(a, 1)

    def next_beta(beta):
        return solve_triangular(
            lower, system.z - upper @ beta, lower=True, check_finite=False
        )

    return _run_fixed_point(system, options, start, next_beta)


def solve_sor(
    system: PenalizedSystem, options: SolverOptions | None = None
) -> SolverReport:
    options = options or SolverOptions()
    start = time.perf_counter()
    omega = options.omega_sor
    a = system.a_matrix()
    d = np.diag(a).copy()
    sweep_matrix = omega * np.tril(a, -1) + np.diag(d)
    upper = np.triu(a, 1)

    def next_beta(beta):
        rhs = omega * system.z + (1.0 - omega) * d * beta - omega * (upper @ beta)
        return solve_triangular(sweep_matrix, rhs, lower=True, check_finite=False)

    return _run_fixed_point(system, options, start, next_beta)


def _gradient_loop(system, options, start, conjugate: bool) -> SolverReport:
    """CG and steepest descent on the penalized normal equations.

    The coefficient matrix is applied implicitly as R'(R v) + sigma^2 v, so
    neither method ever forms it.
    """
    sig_sq = system.sigma**2

    def matvec(v):
        return system.r.T @ (system.r @ v) + sig_sq * v

    beta = _initial_beta(system, options)
    resid = system.z - matvec(beta)
    direction = resid.copy()
    resid_sq = float(resid @ resid)
    max_step = np.inf
    min_step = np.inf
    converged = False
    iterations = 0
    for sweep in range(1, options.max_iter + 1):
        iterations = sweep
        a_dir = matvec(direction)
        denom = float(direction @ a_dir)
        if denom == 0.0:
            # a vanished search direction means the residual is exactly zero
            converged = True
            max_step = 0.0
            break
        if denom < 0.0:
            break
        alpha = resid_sq / denom
        update = alpha * direction
        beta = beta + update
        step = float(np.abs(update).max())
        max_step = step
        if not np.isfinite(step):
            break
        if step < options.tolerance:
            converged = True
            break
        min_step = min(min_step, step)
        resid = resid - alpha * a_dir
        new_resid_sq = float(resid @ resid)
        if conjugate:
            direction = resid + (new_resid_sq / resid_sq) * direction
        else:
            direction = resid.copy()
        resid_sq = new_resid_sq
    return SolverReport(
        beta, iterations, converged, max_step, None, time.perf_counter() - start
    )


def solve_cg(
    system: PenalizedSystem, options: SolverOptions | None = None
) -> SolverReport:
    options = options or SolverOptions()
    return _gradient_loop(system, options, time.perf_counter(), conjugate=True)


def solve_steepest(
    system: PenalizedSystem, options: SolverOptions | None = None
) -> SolverReport:
    options = options or SolverOptions()
    return _gradient_loop(system, options, time.perf_counter(), conjugate=False)


def solve_dual(x: np.ndarray, sigma_beta: float, y: np.ndarray) -> np.ndarray:
    """Ridge coefficients through the observation-space system.

    For a wide design this solves the n-by-n system
    ``(X X' + I / sigma_beta^2) w = y`` and maps back with ``X' w``, which
    equals the usual coefficient-space solution with penalty
    ``1 / sigma_beta^2`` on every coordinate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    gram = x @ x.T + np.eye(n) / sigma_beta**2
    factor = cholesky(gram)
    w = backward_sub(factor, forward_sub(factor.T, y))
    return x.T @ w
