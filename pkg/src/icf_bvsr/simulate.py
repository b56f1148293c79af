"""Synthetic genotype designs, heritability-controlled phenotypes, and
evaluation metrics.

Designs are dosage matrices (0/1/2 per entry before centering) in two
flavors: ``ind`` draws columns independently at random allele
frequencies, while ``dep`` thresholds a latent Gaussian AR(1) process so
adjacent columns are strongly correlated, stressing solver conditioning
the way physically adjacent markers do.  Phenotypes place standard-normal
effects on a random causal subset and rescale them so the realized
in-sample explained-variance fraction hits the target exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

__all__ = [
    "CalibrationBin",
    "DegenerateDenominator",
    "DesignSpec",
    "PhenoSpec",
    "ZeroSignal",
    "calibration_bins",
    "gen_design",
    "mse",
    "rpg",
    "simulate_phenotype",
]


class ZeroSignal(ValueError):
    """The causal signal is empty or numerically zero."""


class DegenerateDenominator(ValueError):
    """Prediction-gain baseline is zero; the metric is undefined."""


@dataclass
class DesignSpec:
    """Settings for one synthetic design matrix."""

    n: int
    p_total: int
    mode: str
    dep_rho: float = 0.95
    maf_range: tuple[float, float] = (0.05, 0.5)
    seed: object = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 samples")
        if self.p_total < 1:
            raise ValueError("need at least 1 column")
        if self.mode not in ("ind", "dep"):
            raise ValueError("mode must be 'ind' or 'dep'")
        if not 0.0 <= self.dep_rho < 1.0:
            raise ValueError("dep_rho must lie in [0, 1)")
        lo, hi = self.maf_range
        if not 0.0 < lo <= hi <= 0.5:
            raise ValueError("allele-frequency bounds must satisfy 0 < lo <= hi <= 0.5")


@dataclass
class PhenoSpec:
    """Settings for one simulated phenotype on a given design."""

    n_causal: int
    h_target: float
    seed: object = 0

    def __post_init__(self):
        if self.n_causal < 0:
            raise ValueError("causal count cannot be negative")
        if not 0.0 < self.h_target < 1.0:
            raise ValueError("heritability target must lie in (0, 1)")


def _dosage_ind(rng: np.random.Generator, n: int, maf: np.ndarray) -> np.ndarray:
    return rng.binomial(2, maf, size=(n, maf.size)).astype(float)


def _dosage_dep(
    rng: np.random.Generator, n: int, maf: np.ndarray, rho: float
) -> np.ndarray:
    p = maf.size
    latent = np.empty((n, p))
    latent[:, 0] = rng.standard_normal(n)
    scale = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        latent[:, j] = rho * latent[:, j - 1] + scale * rng.standard_normal(n)
    # two thresholds per column giving Hardy-Weinberg dosage frequencies
    t_one = norm.ppf((1.0 - maf) ** 2)
    t_two = norm.ppf(1.0 - maf**2)
    return (
        (latent >= t_one[None, :]).astype(float)
        + (latent >= t_two[None, :]).astype(float)
    )


def gen_design(spec: DesignSpec) -> np.ndarray:
    """Generate a centered dosage design matrix for the requested mode."""
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.maf_range
    maf = rng.uniform(lo, hi, size=spec.p_total)
    if spec.mode == "ind":
        x = _dosage_ind(rng, spec.n, maf)
    else:
        x = _dosage_dep(rng, spec.n, maf, spec.dep_rho)
    # a constant column carries no information and breaks the Gram factor;
    # redraw any as independent dosages (only reachable at tiny n)
    for j in range(spec.p_total):
        for _ in range(1000):
            if x[:, j].var() > 0.0:
                break
            x[:, j] = rng.binomial(2, 0.5, size=spec.n).astype(float)
        else:
            raise ValueError("could not produce a non-constant column")
    return x - x.mean(axis=0)


def simulate_phenotype(
    x: np.ndarray, spec: PhenoSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate a phenotype with an exact in-sample heritability.

    Draws the causal subset and standard-normal effects, then scales the
    genetic component so that 1 - Var(resid)/Var(y) equals the target
    exactly.  Returns ``(y, beta_true, gamma_true)`` with ``beta_true``
    a full-length coefficient vector (scaled effects on the causal set,
    zeros elsewhere).
    """
    n, p_total = x.shape
    if spec.n_causal == 0:
        raise ZeroSignal("no causal covariates requested")
    if spec.n_causal > p_total:
        raise ValueError("more causal covariates than columns")
    rng = np.random.default_rng(spec.seed)
    gamma_true = np.sort(rng.choice(p_total, size=spec.n_causal, replace=False))
    effects = rng.standard_normal(spec.n_causal)
    signal = x[:, gamma_true] @ effects
    eps = rng.standard_normal(n)
    v_sig = float(signal.var())
    if not v_sig > 0.0:
        raise ZeroSignal("causal signal has zero variance")
    v_eps = float(eps.var())
    cov = float(np.mean(signal * eps) - signal.mean() * eps.mean())
    h = spec.h_target
    # Var(lam*signal + eps) must equal Var(eps)/(1-h); take the positive
    # root of the resulting quadratic in lam.
    lam = (-cov + math.sqrt(cov * cov + v_sig * v_eps * h / (1.0 - h))) / v_sig
    beta_true = np.zeros(p_total)
    beta_true[gamma_true] = lam * effects
    y = lam * signal + eps
    return y, beta_true, gamma_true


def mse(beta_hat: np.ndarray, beta_true: np.ndarray, x: np.ndarray) -> float:
    """Mean squared error of the fitted signal against the true signal."""
    diff = x @ (np.asarray(beta_true, dtype=float) - np.asarray(beta_hat, dtype=float))
    return float(diff @ diff) / x.shape[0]


def rpg(beta_hat: np.ndarray, beta_true: np.ndarray, x: np.ndarray) -> float:
    """Relative prediction gain over the zero estimator (1 at the truth)."""
    base = mse(np.zeros_like(beta_true), beta_true, x)
    if base <= 0.0:
        raise DegenerateDenominator("true signal is zero; gain undefined")
    return (base - mse(beta_hat, beta_true, x)) / base


@dataclass
class CalibrationBin:
    """One probability bin of a calibration table."""

    lo: float
    hi: float
    count: int
    mean_pip: float
    tp_fraction: float
    se: float


def calibration_bins(
    pips: np.ndarray, gamma_true, bin_width: float = 0.05
) -> list[CalibrationBin]:
    """Group inclusion probabilities into fixed-width bins with TP fractions.

    ``gamma_true`` is either a boolean mask over the covariates or an
    index array of the truly causal ones.  Always emits the full set of
    bins covering [0, 1]; empty bins carry zero count and zeroed stats.
    ``se`` is the binomial standard error of the bin's TP fraction.
    """
    pips = np.asarray(pips, dtype=float)
    if pips.size and (pips.min() < 0.0 or pips.max() > 1.0):
        raise ValueError("inclusion probabilities must lie in [0, 1]")
    truth = np.asarray(gamma_true)
    if truth.dtype != bool:
        mask = np.zeros(pips.size, dtype=bool)
        mask[truth.astype(int)] = True
        truth = mask
    n_bins = int(round(1.0 / bin_width))
    idx = np.minimum((pips / bin_width).astype(int), n_bins - 1)
    rows = []
    for i in range(n_bins):
        members = idx == i
        count = int(members.sum())
        if count:
            mean_pip = float(pips[members].mean())
            tp = float(truth[members].mean())
            se = math.sqrt(tp * (1.0 - tp) / count)
        else:
            mean_pip = tp = se = 0.0
        rows.append(
            CalibrationBin(i * bin_width, (i + 1) * bin_width, count, mean_pip, tp, se)
        )
    return rows
