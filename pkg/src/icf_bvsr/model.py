"""Statistical kernel for sparse Bayesian regression over covariate subsets.

The model is linear regression on a selected subset gamma of columns, with
independent normal effect priors whose common variance is tied to a
heritability parameter h: the prior variance is chosen so that the expected
proportion of response variance explained by the selected columns equals h.
Intercept and noise precision are integrated out analytically, leaving the
collapsed quantities this module evaluates:

* ``log_L``: the data-dependent likelihood factor, needing only the solution
  of one penalized system;
* ``log_Z``: the determinant-bearing factor.  The sampler is built to avoid
  it, so it exists for oracles and diagnostics, and a module-level call
  counter (``LOG_Z_CALLS``) lets tests prove the sampler never touches it;
* ``log_prior_gamma``: the marginal prior over model size induced by a
  log-uniform sparsity level, either truncated to an interval or in its
  improper limit;
* ``rao_blackwell_pip``: exact per-covariate inclusion conditionals computed
  from the current state's factor by bordering, O(p^2) per covariate.

``ModelState`` carries the selected columns together with the incrementally
maintained Cholesky factor of their Gram matrix, which is what makes single
column moves cheap inside a sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import betainc, betaln, expit, gammaln

from .linalg import (
    NotPositiveDefinite,
    backward_sub,
    chol_add_column,
    chol_remove_column,
    cholesky,
    forward_sub,
)

__all__ = [
    "DataError",
    "Dataset",
    "DomainError",
    "EmptyModel",
    "HOutOfRange",
    "Hyperpriors",
    "ModelState",
    "NonPositiveResidual",
    "RaoBlackwellResult",
    "log_L",
    "log_Z",
    "log_bayes_factor",
    "log_prior_gamma",
    "rao_blackwell_all",
    "rao_blackwell_pip",
    "sigma_beta_sq",
    "size_cap",
]

# incremented on every log_Z evaluation so tests can assert the sampler's
# inner loop is determinant-free
LOG_Z_CALLS = 0


class DataError(ValueError):
    """Input data fails validation."""


class EmptyModel(ValueError):
    """Operation needs at least one selected covariate."""


class HOutOfRange(ValueError):
    """Heritability parameter outside (0, 1)."""


class DomainError(ValueError):
    """Argument outside the prior's domain."""


class NonPositiveResidual(ValueError):
    """Residual sum of squares came out non-positive; numerical breakdown."""


@dataclass
class Hyperpriors:
    """Prior settings for the sparsity level and heritability."""

    pi_min: float = 1e-4
    pi_max: float = 1e-2
    use_improper_pi: bool = False
    h_min: float = 0.0
    h_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.pi_min < self.pi_max <= 1.0:
            raise DomainError("need 0 < pi_min < pi_max <= 1")
        if not 0.0 <= self.h_min < self.h_max <= 1.0:
            raise DomainError("need 0 <= h_min < h_max <= 1")


@dataclass
class Dataset:
    """Column-centered design with the response and cached per-column stats.

    ``s`` holds each column's variance (denominator n) and ``y_ss`` the
    centered response sum of squares, the two scalars the likelihood and
    prior-variance mapping keep reusing.
    """

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    y_ss: float

    @classmethod
    def from_raw(cls, x, y) -> "Dataset":
        x = np.array(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2:
            raise DataError("design must be a 2-D array")
        n = x.shape[0]
        if n < 2:
            raise DataError("need at least 2 samples")
        if y.shape != (n,):
            raise DataError(
                "response length %d does not match %d samples" % (y.shape[0], n)
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("design and response must be finite")
        x -= x.mean(axis=0)
        s = (x * x).mean(axis=0)
        y_ss = float(y @ y - n * y.mean() ** 2)
        if y_ss <= 0.0:
            raise DataError("response has no variance")
        return cls(x, y, s, y_ss)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_cov(self) -> int:
        return self.x.shape[1]


def size_cap(data: Dataset) -> int:
    """Largest model size kept; preserves a positive definite Gram matrix."""
    return min(data.n - 1, data.n_cov)


def sigma_beta_sq(gamma, h: float, s: np.ndarray) -> float:
    """Effect-prior variance making the expected explained fraction equal h."""
    members = list(gamma)
    if not members:
        raise EmptyModel("prior variance needs a non-empty model")
    if not 0.0 < h < 1.0:
        raise HOutOfRange("h must lie strictly inside (0, 1)")
    total = float(np.sum(np.asarray(s)[members]))
    return h / ((1.0 - h) * total)


@dataclass
class ModelState:
    """A selected-subset state with its incrementally maintained caches.

    ``members`` lists selected column indices in insertion order; ``r`` is
    the upper-triangular factor of the Gram matrix of those columns in the
    same order, and ``xty`` their inner products with the response.
    """

    members: list[int]
    h: float
    r: np.ndarray
    xty: np.ndarray
    sigma_beta_sq: float | None
    _s_sum: float = field(default=0.0, repr=False, compare=False)

    @classmethod
    def build(cls, data: Dataset, gamma, h: float) -> "ModelState":
        members = list(gamma)
        if len(set(members)) != len(members):
            raise DataError("duplicate covariate in model")
        cols = data.x[:, members]
        r = cholesky(cols.T @ cols) if members else np.zeros((0, 0))
        state = cls(members, h, r, cols.T @ data.y, None)
        state._s_sum = float(np.sum(data.s[members])) if members else 0.0
        state._refresh_sigma()
        return state

    @property
    def gamma(self) -> tuple[int, ...]:
        return tuple(sorted(self.members))

    @property
    def size(self) -> int:
        return len(self.members)

    def copy(self) -> "ModelState":
        twin = ModelState(
            list(self.members), self.h, self.r.copy(), self.xty.copy(),
            self.sigma_beta_sq,
        )
        twin._s_sum = self._s_sum
        return twin

    def set_h(self, h: float) -> None:
        if not 0.0 < h < 1.0:
            raise HOutOfRange("h must lie strictly inside (0, 1)")
        self.h = h
        self._refresh_sigma()

    def add_covariate(self, data: Dataset, j: int) -> None:
        if j in self.members:
            raise DataError("covariate %d already selected" % j)
        col = data.x[:, j]
        new_col = np.append(data.x[:, self.members].T @ col, col @ col)
        self.r = chol_add_column(self.r, new_col)
        self.members.append(j)
        self.xty = np.append(self.xty, col @ data.y)
        self._s_sum = float(np.sum(data.s[self.members]))
        self._refresh_sigma()

    def remove_covariate(self, data: Dataset, j: int) -> None:
        k = self.members.index(j)
        self.r = chol_remove_column(self.r, k)
        self.members.pop(k)
        self.xty = np.delete(self.xty, k)
        self._s_sum = float(np.sum(data.s[self.members])) if self.members else 0.0
        self._refresh_sigma()

    def _refresh_sigma(self) -> None:
        if self.members:
            self.sigma_beta_sq = self.h / ((1.0 - self.h) * self._s_sum)
        else:
            self.sigma_beta_sq = None


def log_prior_gamma(k: int, n_cov: int, hp: Hyperpriors) -> float:
    """Log prior mass of any one specific size-k subset of n_cov covariates.

    The sparsity level is log-uniform; integrating it out gives, for the
    truncated prior, a normalized incomplete-beta integral (so the masses,
    weighted by subset counts, sum to one).  The improper limit drops the
    normalization and is defined only for k >= 1.
    """
    if not 0 <= k <= n_cov:
        raise DomainError("model size %d outside [0, %d]" % (k, n_cov))
    if hp.use_improper_pi:
        if k == 0:
            raise DomainError("improper sparsity prior has no mass at size 0")
        return float(gammaln(k) + gammaln(n_cov + 1 - k))
    return _log_sparsity_integral(k, n_cov, hp.pi_min, hp.pi_max) - math.log(
        math.log(hp.pi_max / hp.pi_min)
    )


def _log_sparsity_integral(k: int, n_cov: int, lo: float, hi: float) -> float:
    """log of the integral of pi^(k-1) (1-pi)^(n_cov-k) over [lo, hi]."""
    a, b = k, n_cov - k + 1
    if k >= 1:
        hi_val = float(betainc(a, b, hi))
        diff = hi_val - float(betainc(a, b, lo))
        # fall through to quadrature when the regularized values cancel
        if diff > 0.0 and diff >= 1e-9 * hi_val:
            return float(betaln(a, b)) + math.log(diff)

    def log_f(p):
        return (k - 1) * math.log(p) + (n_cov - k) * math.log1p(-p)

    peaks = [log_f(lo), log_f(hi)]
    if k >= 1 and n_cov > 1:
        interior = (k - 1) / (n_cov - 1)
        if lo < interior < hi:
            peaks.append(log_f(interior))
    offset = max(peaks)
    val, _ = quad(
        lambda p: math.exp(log_f(p) - offset), lo, hi, epsabs=0.0, epsrel=1e-11,
        limit=200,
    )
    return offset + math.log(val)


def log_L(n: int, y_ss: float, xty=None, beta_hat=None) -> float:
    """Log collapsed likelihood factor given a solved coefficient vector.

    Pass the cached X'y and the penalized-system solution for the current
    subset; omit both for the empty model.
    """
    resid = y_ss
    if xty is not None and len(xty):
        resid = y_ss - float(xty @ beta_hat)
    if resid <= 0.0:
        raise NonPositiveResidual("residual sum of squares is %g" % resid)
    return -(n / 2.0) * math.log(resid)


def log_Z(state: ModelState) -> float:
    """Log determinant-bearing factor; oracle and diagnostics only.

    The sampler is designed never to need this (tests assert it through
    LOG_Z_CALLS); enumeration oracles combine it with ``log_L`` to get exact
    posterior masses.
    """
    global LOG_Z_CALLS
    LOG_Z_CALLS += 1
    p = state.size
    if p == 0:
        return 0.0
    omega = state.r.T @ state.r + np.eye(p) / state.sigma_beta_sq
    factor = cholesky(omega)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor))))
    return -0.5 * log_det - 0.5 * p * math.log(state.sigma_beta_sq)


def log_bayes_factor(
    state: ModelState, data: Dataset, sigma_beta_sq: float | None = None
) -> float:
    """Log Bayes factor of the state's subset against the empty model."""
    p = state.size
    if p == 0:
        return 0.0
    sb = state.sigma_beta_sq if sigma_beta_sq is None else sigma_beta_sq
    omega = state.r.T @ state.r + np.eye(p) / sb
    factor = cholesky(omega)
    beta = backward_sub(factor, forward_sub(factor.T, state.xty))
    log_det_shifted = p * math.log(sb) + 2.0 * float(
        np.sum(np.log(np.diag(factor)))
    )
    fit_fraction = float(state.xty @ beta) / data.y_ss
    if fit_fraction >= 1.0:
        raise NonPositiveResidual("fit fraction %g >= 1" % fit_fraction)
    return -0.5 * log_det_shifted - (data.n / 2.0) * math.log1p(-fit_fraction)


@dataclass
class RaoBlackwellResult:
    """Per-covariate conditional inclusion probabilities and effect means."""

    pip: np.ndarray
    exact: np.ndarray
    beta_mean: np.ndarray


class _RbContext:
    """Shared pieces of one Rao-Blackwell pass over a fixed state.

    Everything except the per-covariate border solves is computed once: the
    factor of the penalized Gram matrix, the current solution, the cross
    Gram block against all columns, and the two prior-odds values a single
    flip can need.
    """

    def __init__(self, state: ModelState, data: Dataset, hp: Hyperpriors):
        self.state = state
        self.data = data
        self.hp = hp
        self.ok = state.size > 0
        self.member_pos = {j: i for i, j in enumerate(state.members)}
        self.cap = size_cap(data)
        self.diag_gram = data.n * data.s
        self.u = data.x.T @ data.y
        if not self.ok:
            return
        p = state.size
        self.sb = state.sigma_beta_sq
        self.sb_inv = 1.0 / self.sb
        try:
            self.r_omega = cholesky(
                state.r.T @ state.r + np.eye(p) * self.sb_inv
            )
        except NotPositiveDefinite:
            self.ok = False
            return
        self.beta_cur = self._solve(self.r_omega, state.xty)
        self.resid_cur = data.y_ss - float(state.xty @ self.beta_cur)
        self.cross = data.x[:, state.members].T @ data.x
        self._prior = {}
        if self.resid_cur <= 0.0:
            self.ok = False

    @staticmethod
    def _solve(r, v):
        return backward_sub(r, forward_sub(r.T, v))

    def log_prior(self, k: int) -> float | None:
        if k not in self._prior:
            try:
                self._prior[k] = log_prior_gamma(k, self.data.n_cov, self.hp)
            except DomainError:
                self._prior[k] = None
        return self._prior[k]

    def conditional(self, j: int) -> tuple[float, bool, float]:
        """(inclusion probability, exact flag, conditional effect mean)."""
        included = j in self.member_pos
        if not self.ok:
            return (1.0 if included else 0.0), False, 0.0
        if included:
            return self._conditional_included(j)
        return self._conditional_excluded(j)

    def _finish(self, j, k_minus, schur, resid_minus, resid_plus, phi):
        lp_in = self.log_prior(k_minus + 1)
        lp_out = self.log_prior(k_minus)
        if lp_in is None or lp_out is None:
            included = j in self.member_pos
            return (1.0 if included else 0.0), False, 0.0
        log_odds = (
            lp_in
            - lp_out
            - 0.5 * math.log(schur)
            - 0.5 * math.log(self.sb)
            + (self.data.n / 2.0) * (math.log(resid_minus) - math.log(resid_plus))
        )
        prob = float(expit(log_odds))
        return prob, True, prob * phi

    def _conditional_excluded(self, j):
        state, data = self.state, self.data
        p = state.size
        if p + 1 > self.cap:
            return 0.0, True, 0.0
        b = self.cross[:, j]
        w = self._solve(self.r_omega, b)
        schur = self.diag_gram[j] + self.sb_inv - float(b @ w)
        if schur <= 0.0:
            return 0.0, False, 0.0
        phi = (self.u[j] - float(b @ self.beta_cur)) / schur
        fit_plus = (
            float(state.xty @ self.beta_cur)
            - phi * float(state.xty @ w)
            + self.u[j] * phi
        )
        resid_plus = data.y_ss - fit_plus
        if resid_plus <= 0.0 or not np.isfinite(resid_plus):
            return 0.0, False, 0.0
        return self._finish(j, p, schur, self.resid_cur, resid_plus, phi)

    def _conditional_included(self, j):
        state, data = self.state, self.data
        p = state.size
        idx = self.member_pos[j]
        if self.hp.use_improper_pi and p == 1:
            return 1.0, False, 0.0
        try:
            r_minus = chol_remove_column(self.r_omega, idx)
        except (NotPositiveDefinite, ValueError):
            return 1.0, False, 0.0
        xty_minus = np.delete(state.xty, idx)
        b = np.delete(self.cross[:, j], idx)
        beta_minus = self._solve(r_minus, xty_minus)
        w = self._solve(r_minus, b)
        resid_minus = data.y_ss - float(xty_minus @ beta_minus)
        schur = self.diag_gram[j] + self.sb_inv - float(b @ w)
        if schur <= 0.0 or resid_minus <= 0.0:
            return 1.0, False, 0.0
        phi = (self.u[j] - float(b @ beta_minus)) / schur
        fit_plus = (
            float(xty_minus @ beta_minus)
            - phi * float(xty_minus @ w)
            + self.u[j] * phi
        )
        resid_plus = data.y_ss - fit_plus
        if resid_plus <= 0.0 or not np.isfinite(resid_plus):
            return 1.0, False, 0.0
        return self._finish(j, p - 1, schur, resid_minus, resid_plus, phi)


def rao_blackwell_pip(
    state: ModelState, data: Dataset, j: int, hp: Hyperpriors
) -> tuple[float, bool]:
    """Conditional inclusion probability of one covariate given the rest.

    Conditions on the current state's h and prior variance.  On numerical
    failure (or the improper prior's undefined empty model) the crude
    membership indicator is returned with the exact flag cleared.
    """
    prob, exact, _ = _RbContext(state, data, hp).conditional(j)
    return prob, exact


def rao_blackwell_all(
    state: ModelState, data: Dataset, hp: Hyperpriors
) -> RaoBlackwellResult:
    """Rao-Blackwell conditionals for every covariate, sharing one context.

    Costs one p-by-p factorization plus one Gram block, then O(p^2) per
    covariate.
    """
    ctx = _RbContext(state, data, hp)
    n_cov = data.n_cov
    pip = np.zeros(n_cov)
    exact = np.zeros(n_cov, dtype=bool)
    beta_mean = np.zeros(n_cov)
    for j in range(n_cov):
        pip[j], exact[j], beta_mean[j] = ctx.conditional(j)
    return RaoBlackwellResult(pip, exact, beta_mean)
