"""Estimator-style interface around the sampler, following the familiar
fit/predict/get_params protocol so the model drops into standard tooling.

``fit`` runs one or more chains (distinct seeds, optionally in a bounded
worker pool) and merges their outputs; coefficients are the conditional
posterior-mean effects, so ``predict`` gives model-averaged predictions.
"""

from __future__ import annotations

import inspect
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .mcmc import ChainConfig, merge_outputs, run_chain
from .model import Dataset, Hyperpriors

__all__ = ["BvsrRegressor", "worker_cap"]


def worker_cap(requested: int) -> int:
    """Bound a worker-count request by the ICF_BVSR_THREADS environment cap."""
    limit = os.environ.get("ICF_BVSR_THREADS")
    if limit:
        try:
            return max(1, min(requested, int(limit)))
        except ValueError:
            pass
    return max(1, requested)


class BvsrRegressor:
    """Sparse Bayesian regression fitted by the exchange-algorithm sampler."""

    def __init__(
        self,
        burn_in: int = 2000,
        sampling_steps: int = 10_000,
        rb_interval: int = 1000,
        pi_min: float = 1e-4,
        pi_max: float = 1e-2,
        use_improper_pi: bool = False,
        h_min: float = 0.0,
        h_max: float = 1.0,
        n_chains: int = 1,
        seed: int = 0,
    ):
        self.burn_in = burn_in
        self.sampling_steps = sampling_steps
        self.rb_interval = rb_interval
        self.pi_min = pi_min
        self.pi_max = pi_max
        self.use_improper_pi = use_improper_pi
        self.h_min = h_min
        self.h_max = h_max
        self.n_chains = n_chains
        self.seed = seed

    @classmethod
    def _param_names(cls) -> list[str]:
        signature = inspect.signature(cls.__init__)
        return [name for name in signature.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "BvsrRegressor":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError("unknown parameter %r" % name)
            setattr(self, name, value)
        return self

    def _hyperpriors(self) -> Hyperpriors:
        return Hyperpriors(
            pi_min=self.pi_min,
            pi_max=self.pi_max,
            use_improper_pi=self.use_improper_pi,
            h_min=self.h_min,
            h_max=self.h_max,
        )

    def fit(self, X, y) -> "BvsrRegressor":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.x_mean_ = X.mean(axis=0)
        self.y_mean_ = float(y.mean())
        data = Dataset.from_raw(X, y)
        hp = self._hyperpriors()
        configs = [
            ChainConfig(
                burn_in=self.burn_in,
                sampling_steps=self.sampling_steps,
                rb_interval=self.rb_interval,
                seed=self.seed + chain,
                hyperpriors=hp,
            )
            for chain in range(self.n_chains)
        ]
        if len(configs) > 1:
            with ThreadPoolExecutor(
                max_workers=worker_cap(len(configs))
            ) as pool:
                outputs = list(pool.map(lambda c: run_chain(data, c), configs))
        else:
            outputs = [run_chain(data, configs[0])]
        self.chain_outputs_ = outputs
        self.output_ = merge_outputs(outputs)
        self.pip_raw_ = self.output_.pip_raw
        self.pip_rb_ = self.output_.pip_rb
        self.coef_ = self.output_.rb_beta
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "coef_"):
            raise ValueError("estimator is not fitted; call fit first")

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        return self.y_mean_ + (X - self.x_mean_) @ self.coef_

    def score(self, X, y) -> float:
        """Coefficient of determination of the predictions."""
        self._check_fitted()
        y = np.asarray(y, dtype=float)
        resid = y - self.predict(X)
        total = y - y.mean()
        denom = float(total @ total)
        if denom == 0.0:
            return 0.0
        return 1.0 - float(resid @ resid) / denom
