"""Exchange-algorithm sampler over covariate subsets and heritability.

The collapsed posterior over (gamma, h) carries a determinant factor that
this sampler never evaluates: every move draws a synthetic response from
the proposed model, and the synthetic likelihood terms in the acceptance
ratio cancel the determinants exactly.  A step therefore costs three
penalized-system solves -- the proposal against the observed response,
and both states against the synthetic response -- each done by the
iterative complex-factorization solver on the incrementally maintained
Gram factors; the current state's observed-data likelihood is cached from
the step that produced it.

Proposals flip a random number of covariates in or out (direction chosen
by a fair coin unless the model is empty or saturated, target chosen
uniformly among the eligible columns) and perturb h by reflection inside
its bounds, or by a uniform draw from a fixed grid when one is supplied.
The forward/reverse path probabilities are accumulated exactly; moves
that would exceed the size cap or make the Gram factor lose positive
definiteness are auto-rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc, betaincinv

from .linalg import NotPositiveDefinite, cholesky
from .model import (
    Dataset,
    DomainError,
    Hyperpriors,
    ModelState,
    NonPositiveResidual,
    _log_sparsity_integral,
    log_L,
    log_prior_gamma,
    rao_blackwell_all,
    size_cap,
)
from .solvers import PenalizedSystem, SolverOptions, solve_direct, solve_icf

__all__ = [
    "ChainConfig",
    "ChainOutput",
    "ProposalKernel",
    "SolveStats",
    "cached_log_l",
    "exchange_accept_log_ratio",
    "gibbs_pi_tau",
    "heritability_estimate",
    "merge_outputs",
    "propose",
    "run_chain",
    "sample_synthetic_y",
]

# cadence and threshold for cross-checking the incrementally updated Gram
# factor against a fresh factorization
_DRIFT_INTERVAL = 1000
_DRIFT_TOLERANCE = 1e-8


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0.0 else float("-inf")


@dataclass
class ProposalKernel:
    """Move-size, direction, and heritability step settings for proposals.

    ``flip_probs[i]`` is the probability of flipping i+1 covariates in one
    proposal; the default halves the weight per extra flip over {1..10},
    giving a mean just under two flips.
    """

    flip_probs: np.ndarray | None = None
    h_step: float = 0.05
    add_remove_balance: float = 0.5

    def __post_init__(self):
        if self.flip_probs is None:
            weights = 0.5 ** np.arange(1, 11)
        else:
            weights = np.asarray(self.flip_probs, dtype=float)
        if (
            weights.ndim != 1
            or weights.size == 0
            or np.any(weights < 0.0)
            or not np.all(np.isfinite(weights))
            or weights.sum() <= 0.0
        ):
            raise ValueError("flip probabilities must be non-negative with mass")
        self.flip_probs = weights / weights.sum()
        if not self.h_step > 0.0:
            raise ValueError("h_step must be positive")
        if not 0.0 < self.add_remove_balance <= 1.0:
            raise ValueError("add_remove_balance must lie in (0, 1]")

    def sample_flip_count(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.flip_probs.size, p=self.flip_probs)) + 1


def _reflect(value: float, lo: float, hi: float) -> float:
    for _ in range(8):
        if value < lo:
            value = 2.0 * lo - value
        elif value > hi:
            value = 2.0 * hi - value
        else:
            break
    value = min(max(value, lo), hi)
    # keep strictly inside the legal heritability domain
    if value <= 0.0:
        value = min(hi, 1e-9)
    elif value >= 1.0:
        value = max(lo, 1.0 - 1e-9)
    return value


def propose(
    state: ModelState,
    data: Dataset,
    kernel: ProposalKernel,
    rng: np.random.Generator,
    cap: int,
    hp: Hyperpriors,
    h_grid: np.ndarray | None = None,
) -> tuple[ModelState | None, float]:
    """Draw a proposal and its exact log reverse/forward path-probability ratio.

    Returns ``(None, 0.0)`` when the drawn move must be auto-rejected:
    it would exceed the size cap, or the added column is (numerically)
    collinear with the current selection.  The flip-count term cancels
    between the two path directions and is never accumulated.
    """
    m = kernel.sample_flip_count(rng)
    prop = state.copy()
    balance = kernel.add_remove_balance
    n_cov = data.n_cov
    log_forward = 0.0
    moves: list[tuple[bool, int]] = []
    for _ in range(m):
        p = prop.size
        if p == 0:
            do_add = True
        elif p == n_cov:
            do_add = False
        else:
            do_add = rng.random() < balance
            log_forward += _safe_log(balance if do_add else 1.0 - balance)
        if do_add:
            excluded = np.setdiff1d(np.arange(n_cov), prop.members)
            j = int(excluded[rng.integers(excluded.size)])
            log_forward -= math.log(excluded.size)
            if p + 1 > cap:
                return None, 0.0
            try:
                prop.add_covariate(data, j)
            except NotPositiveDefinite:
                return None, 0.0
        else:
            j = prop.members[int(rng.integers(p))]
            log_forward -= math.log(p)
            prop.remove_covariate(data, j)
        moves.append((do_add, prop.size))

    # Reverse path: inverse flips replayed in reverse order.  Before undoing
    # flip t the model size is exactly the size recorded after flip t.
    log_reverse = 0.0
    for was_add, p_after in reversed(moves):
        if was_add:
            if p_after < n_cov:
                log_reverse += _safe_log(1.0 - balance)
            log_reverse -= math.log(p_after)
        else:
            if p_after > 0:
                log_reverse += _safe_log(balance)
            log_reverse -= math.log(n_cov - p_after)

    if h_grid is not None:
        new_h = float(h_grid[int(rng.integers(len(h_grid)))])
    else:
        step = rng.uniform(-kernel.h_step, kernel.h_step)
        new_h = _reflect(prop.h + step, hp.h_min, hp.h_max)
    prop.set_h(new_h)
    return prop, log_reverse - log_forward


def sample_synthetic_y(
    state: ModelState, data: Dataset, rng: np.random.Generator
) -> np.ndarray:
    """Draw a response from the state's model: random effects plus unit noise."""
    if state.size:
        beta = rng.standard_normal(state.size) * math.sqrt(state.sigma_beta_sq)
        return data.x[:, state.members] @ beta + rng.standard_normal(data.n)
    return rng.standard_normal(data.n)


@dataclass
class SolveStats:
    """Running tally of inner-solver effort across a chain."""

    solves: int = 0
    total_iterations: int = 0
    max_iterations: int = 0
    failures: int = 0

    def record(self, report) -> None:
        self.solves += 1
        self.total_iterations += report.iterations
        self.max_iterations = max(self.max_iterations, report.iterations)
        if not report.converged:
            self.failures += 1

    def merged(self, other: "SolveStats") -> "SolveStats":
        return SolveStats(
            self.solves + other.solves,
            self.total_iterations + other.total_iterations,
            max(self.max_iterations, other.max_iterations),
            self.failures + other.failures,
        )

    @property
    def mean_iterations(self) -> float:
        return self.total_iterations / self.solves if self.solves else 0.0


def _icf_solve(state, z, options, stats):
    """One iterative solve on the state's factor; None when not converged."""
    sigma = np.full(state.size, 1.0 / math.sqrt(state.sigma_beta_sq))
    report = solve_icf(PenalizedSystem(state.r, sigma, z), options)
    if stats is not None:
        stats.record(report)
    if not report.converged:
        return None
    return report.beta


def cached_log_l(
    state: ModelState,
    data: Dataset,
    options: SolverOptions | None = None,
    stats: SolveStats | None = None,
) -> tuple[float, np.ndarray]:
    """Observed-data likelihood factor and coefficients for a state.

    Used to seed the chain's cache; falls back to the direct solver if the
    iterative one fails to converge on the initial state.
    """
    if state.size == 0:
        return log_L(data.n, data.y_ss), np.zeros(0)
    options = options if options is not None else SolverOptions()
    beta = _icf_solve(state, state.xty, options, stats)
    if beta is None:
        sigma = np.full(state.size, 1.0 / math.sqrt(state.sigma_beta_sq))
        beta = solve_direct(PenalizedSystem(state.r, sigma, state.xty)).beta
    return log_L(data.n, data.y_ss, state.xty, beta), beta


def exchange_accept_log_ratio(
    state: ModelState,
    proposal: ModelState,
    data: Dataset,
    y_tilde: np.ndarray,
    log_kernel_ratio: float,
    hp: Hyperpriors,
    log_l_current: float,
    options: SolverOptions | None = None,
    stats: SolveStats | None = None,
) -> tuple[float, float, np.ndarray | None]:
    """Log acceptance ratio for swapping to the proposal.

    Combines the kernel path ratio, the prior size ratio, the observed-data
    likelihood ratio, and the synthetic-data likelihood ratio whose role is
    to cancel the intractable determinant factors.  Returns ``(log_alpha,
    log_l_proposal, beta_proposal)`` so an acceptance can reuse the new
    cache; any numerical breakdown or non-converged solve yields ``-inf``.
    """
    reject = (float("-inf"), float("nan"), None)
    options = options if options is not None else SolverOptions()
    n = data.n
    try:
        prior_term = log_prior_gamma(
            proposal.size, data.n_cov, hp
        ) - log_prior_gamma(state.size, data.n_cov, hp)
    except DomainError:
        return reject

    try:
        if proposal.size:
            beta_prop = _icf_solve(proposal, proposal.xty, options, stats)
            if beta_prop is None:
                return reject
            log_l_prop = log_L(n, data.y_ss, proposal.xty, beta_prop)
        else:
            beta_prop = np.zeros(0)
            log_l_prop = log_L(n, data.y_ss)

        mean_t = y_tilde.mean()
        ss_t = float(y_tilde @ y_tilde) - n * mean_t**2
        if ss_t <= 0.0:
            return reject

        def synthetic_side(side_state):
            # columns are centered, so X'y_tilde is already the centered
            # inner product
            if side_state.size == 0:
                return log_L(n, ss_t)
            z = data.x[:, side_state.members].T @ y_tilde
            beta = _icf_solve(side_state, z, options, stats)
            if beta is None:
                return None
            return log_L(n, ss_t, z, beta)

        synth_prop = synthetic_side(proposal)
        if synth_prop is None:
            return reject
        synth_cur = synthetic_side(state)
        if synth_cur is None:
            return reject
    except NonPositiveResidual:
        return reject

    log_alpha = (
        log_kernel_ratio
        + prior_term
        + (log_l_prop - log_l_current)
        + (synth_cur - synth_prop)
    )
    return log_alpha, log_l_prop, beta_prop


def _truncated_sparsity_draw(
    k: int, n_cov: int, lo: float, hi: float, rng: np.random.Generator
) -> float:
    """Inverse-CDF draw from the sparsity level's conditional on [lo, hi].

    The density is proportional to pi^(k-1) (1-pi)^(n_cov-k).  For k >= 1
    the regularized incomplete beta function gives the CDF directly; when
    its truncation window cancels to noise (and always for k = 0, where
    the kernel is not a beta density) the draw falls back to bisection on
    log partial integrals, using a geometric midpoint since the support
    can span decades.
    """
    if k >= 1:
        a, b = k, n_cov - k + 1
        lo_c = float(betainc(a, b, lo))
        hi_c = float(betainc(a, b, hi))
        spread = hi_c - lo_c
        if spread > 0.0 and spread >= 1e-9 * hi_c:
            u = lo_c + rng.random() * spread
            return min(max(float(betaincinv(a, b, u)), lo), hi)
    v = rng.random()
    if v <= 0.0:
        return lo
    total = _log_sparsity_integral(k, n_cov, lo, hi)
    target = math.log(v) + total
    t_lo, t_hi = lo, hi
    for _ in range(60):
        mid = math.sqrt(t_lo * t_hi)
        if _log_sparsity_integral(k, n_cov, lo, mid) < target:
            t_lo = mid
        else:
            t_hi = mid
    return 0.5 * (t_lo + t_hi)


def gibbs_pi_tau(
    state: ModelState,
    data: Dataset,
    hp: Hyperpriors,
    rng: np.random.Generator,
    beta_hat: np.ndarray | None = None,
) -> tuple[float, float]:
    """Conditional draws of the sparsity level and noise precision.

    Both are read-outs of the collapsed chain, not part of its state: the
    sparsity level follows a (truncated) beta-shaped conditional given the
    model size, and the precision a gamma conditional given the residual
    sum of squares.  Pass the cached coefficient solution to avoid a fresh
    solve.
    """
    k = state.size
    if hp.use_improper_pi:
        if k == 0:
            raise DomainError("improper sparsity prior has no mass at size 0")
        pi_draw = float(rng.beta(k, data.n_cov - k + 1))
    else:
        pi_draw = _truncated_sparsity_draw(
            k, data.n_cov, hp.pi_min, hp.pi_max, rng
        )
    if k:
        if beta_hat is None:
            _, beta_hat = cached_log_l(state, data)
        resid = data.y_ss - float(state.xty @ beta_hat)
    else:
        resid = data.y_ss
    if resid <= 0.0:
        raise NonPositiveResidual("residual sum of squares is %g" % resid)
    tau_draw = float(rng.gamma(data.n / 2.0, scale=2.0 / resid))
    return pi_draw, tau_draw


def heritability_estimate(
    state: ModelState, data: Dataset, beta_hat: np.ndarray | None
) -> float:
    """Fraction of response variance explained by the fitted selection."""
    if state.size == 0 or beta_hat is None or beta_hat.size == 0:
        return 0.0
    fitted = data.x[:, state.members] @ beta_hat
    var_y = data.y_ss / data.n
    if var_y <= 0.0:
        return 0.0
    return min(1.0, max(0.0, float(fitted.var()) / var_y))


@dataclass
class ChainConfig:
    """Settings for one sampler run."""

    burn_in: int
    sampling_steps: int
    rb_interval: int = 1000
    seed: int = 0
    hyperpriors: Hyperpriors = field(default_factory=Hyperpriors)
    kernel: ProposalKernel = field(default_factory=ProposalKernel)
    h_grid: np.ndarray | None = None
    solver_options: SolverOptions = field(default_factory=SolverOptions)
    record_gamma: bool = False

    def __post_init__(self):
        if self.burn_in < 0 or self.sampling_steps < 0:
            raise ValueError("step counts must be non-negative")
        if self.rb_interval < 1:
            raise ValueError("rb_interval must be at least 1")


@dataclass
class ChainOutput:
    """Posterior summaries and per-record traces from one or more chains."""

    pip_raw: np.ndarray
    pip_rb: np.ndarray
    rb_beta: np.ndarray
    h_samples: list[float]
    size_samples: list[int]
    pi_samples: list[float]
    tau_samples: list[float]
    heritability_samples: list[float]
    acceptance_rate: float
    icf_iter_stats: SolveStats
    drift_trace: list[float]
    n_steps: int
    n_records: int
    n_rb_passes: int
    n_repairs: int = 0
    gamma_samples: list[tuple[int, ...]] | None = None


def _factor_drift(state: ModelState, data: Dataset) -> float:
    if state.size == 0:
        return 0.0
    cols = data.x[:, state.members]
    fresh = cholesky(cols.T @ cols)
    return float(np.abs(state.r - fresh).max())


def _rebuild_caches(state: ModelState, data: Dataset) -> None:
    cols = data.x[:, state.members]
    state.r = cholesky(cols.T @ cols)
    state.xty = cols.T @ data.y


def _initial_state(data, hp, rng, cap, h_grid):
    """Seed the chain at the strongest marginal correlations.

    The starting size is the covariate count times the geometric mean of
    the sparsity bounds (at least one, at most the cap); columns that
    would make the factor break down are skipped.
    """
    k0 = max(1, int(round(data.n_cov * math.sqrt(hp.pi_min * hp.pi_max))))
    k0 = min(k0, cap)
    score = np.abs(data.x.T @ data.y) / np.sqrt(
        np.maximum(data.n * data.s, 1e-300)
    )
    order = np.argsort(-score, kind="stable")
    if h_grid is not None:
        h0 = float(h_grid[int(rng.integers(len(h_grid)))])
    else:
        h0 = float(rng.uniform(hp.h_min, hp.h_max))
        h0 = min(max(h0, 1e-6), 1.0 - 1e-6)
    state = ModelState.build(data, [], h0)
    for j in order:
        if state.size == k0:
            break
        try:
            state.add_covariate(data, int(j))
        except NotPositiveDefinite:
            continue
    return state


def run_chain(data: Dataset, config: ChainConfig) -> ChainOutput:
    """Run one sampler chain and aggregate its records.

    Inclusion frequencies accumulate at every post-burn-in step; the
    conditional-probability summaries, sparsity level, and precision are
    refreshed every ``rb_interval`` recorded steps (with a final forced
    pass if the sampling phase was shorter than one interval).  Every 1000
    steps the incrementally updated Gram factor is checked against a fresh
    factorization and rebuilt if the deviation exceeds 1e-8.
    """
    rng = np.random.default_rng(config.seed)
    hp = config.hyperpriors
    cap = size_cap(data)
    n_cov = data.n_cov
    stats = SolveStats()

    state = _initial_state(data, hp, rng, cap, config.h_grid)
    log_l_cur, beta_cur = cached_log_l(state, data, config.solver_options, stats)

    total = config.burn_in + config.sampling_steps
    pip_counts = np.zeros(n_cov)
    rb_pip_sum = np.zeros(n_cov)
    rb_beta_sum = np.zeros(n_cov)
    h_samples: list[float] = []
    size_samples: list[int] = []
    pi_samples: list[float] = []
    tau_samples: list[float] = []
    heritability_samples: list[float] = []
    gamma_samples = [] if config.record_gamma else None
    drift_trace: list[float] = []
    repairs = 0
    accepted = 0
    n_records = 0
    n_rb = 0

    def rb_pass():
        nonlocal n_rb
        n_rb += 1
        pi_draw, tau_draw = gibbs_pi_tau(state, data, hp, rng, beta_hat=beta_cur)
        pi_samples.append(pi_draw)
        tau_samples.append(tau_draw)
        result = rao_blackwell_all(state, data, hp)
        rb_pip_sum[:] += result.pip
        rb_beta_sum[:] += result.beta_mean

    for t in range(total):
        prop, log_kr = propose(
            state, data, config.kernel, rng, cap, hp, config.h_grid
        )
        if prop is not None:
            y_tilde = sample_synthetic_y(prop, data, rng)
            log_alpha, log_l_prop, beta_prop = exchange_accept_log_ratio(
                state,
                prop,
                data,
                y_tilde,
                log_kr,
                hp,
                log_l_cur,
                options=config.solver_options,
                stats=stats,
            )
            if log_alpha >= 0.0 or (
                np.isfinite(log_alpha) and math.log(rng.random()) < log_alpha
            ):
                state = prop
                log_l_cur = log_l_prop
                beta_cur = beta_prop
                accepted += 1

        if t >= config.burn_in:
            n_records += 1
            if state.members:
                pip_counts[state.members] += 1.0
            h_samples.append(state.h)
            size_samples.append(state.size)
            heritability_samples.append(
                heritability_estimate(state, data, beta_cur)
            )
            if gamma_samples is not None:
                gamma_samples.append(state.gamma)
            if (t - config.burn_in) % config.rb_interval == 0:
                rb_pass()

        if (t + 1) % _DRIFT_INTERVAL == 0:
            drift = _factor_drift(state, data)
            drift_trace.append(drift)
            if drift > _DRIFT_TOLERANCE:
                _rebuild_caches(state, data)
                repairs += 1

    if n_rb == 0 and config.sampling_steps > 0:
        rb_pass()

    pip_raw = pip_counts / n_records if n_records else pip_counts
    pip_rb = rb_pip_sum / n_rb if n_rb else rb_pip_sum
    rb_beta = rb_beta_sum / n_rb if n_rb else rb_beta_sum
    return ChainOutput(
        pip_raw=pip_raw,
        pip_rb=pip_rb,
        rb_beta=rb_beta,
        h_samples=h_samples,
        size_samples=size_samples,
        pi_samples=pi_samples,
        tau_samples=tau_samples,
        heritability_samples=heritability_samples,
        acceptance_rate=accepted / total if total else 0.0,
        icf_iter_stats=stats,
        drift_trace=drift_trace,
        n_steps=total,
        n_records=n_records,
        n_rb_passes=n_rb,
        n_repairs=repairs,
        gamma_samples=gamma_samples,
    )


def merge_outputs(outputs: list[ChainOutput]) -> ChainOutput:
    """Combine chain outputs: frequency summaries are record-weighted means,
    traces concatenate in the order given."""
    if not outputs:
        raise ValueError("nothing to merge")
    n_records = sum(o.n_records for o in outputs)
    n_rb = sum(o.n_rb_passes for o in outputs)
    n_steps = sum(o.n_steps for o in outputs)

    def weighted(attr, weights, total):
        acc = np.zeros_like(getattr(outputs[0], attr))
        if total == 0:
            return acc
        for out, w in zip(outputs, weights):
            acc += getattr(out, attr) * w
        return acc / total

    rec_w = [o.n_records for o in outputs]
    rb_w = [o.n_rb_passes for o in outputs]
    stats = SolveStats()
    for out in outputs:
        stats = stats.merged(out.icf_iter_stats)
    gamma = None
    if all(o.gamma_samples is not None for o in outputs):
        gamma = [g for o in outputs for g in o.gamma_samples]
    return ChainOutput(
        pip_raw=weighted("pip_raw", rec_w, n_records),
        pip_rb=weighted("pip_rb", rb_w, n_rb),
        rb_beta=weighted("rb_beta", rb_w, n_rb),
        h_samples=[v for o in outputs for v in o.h_samples],
        size_samples=[v for o in outputs for v in o.size_samples],
        pi_samples=[v for o in outputs for v in o.pi_samples],
        tau_samples=[v for o in outputs for v in o.tau_samples],
        heritability_samples=[
            v for o in outputs for v in o.heritability_samples
        ],
        acceptance_rate=(
            sum(o.acceptance_rate * o.n_steps for o in outputs) / n_steps
            if n_steps
            else 0.0
        ),
        icf_iter_stats=stats,
        drift_trace=[v for o in outputs for v in o.drift_trace],
        n_steps=n_steps,
        n_records=n_records,
        n_rb_passes=n_rb,
        n_repairs=sum(o.n_repairs for o in outputs),
        gamma_samples=gamma,
    )
