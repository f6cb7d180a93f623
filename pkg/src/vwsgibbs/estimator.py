"""scikit-learn style wrapper around the Gibbs samplers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state

from .sae import ModelData, SamplerConfig, default_init, run_sampler


class JointSAE(RegressorMixin, BaseEstimator):
    """Joint area-level model for log estimates and their sampling variances.

    Parameters
    ----------
    sampler : {"vwg", "mwg", "vwg-basic"}
        Strategy for the latent variance draws.
    iterations, burn : int or None
        Scan counts; ``None`` picks 30,000/28,000 for ``"mwg"`` and
        3,000/1,000 otherwise.
    eps1, eps2 : float
        Self-tuning tolerances.
    max_regions : int
        Region cap for ``"vwg-basic"``.
    sigma2_init : {"ones", "data"}
        Start the latent variances at 1 or at the direct estimates.
    random_state : int, Generator or None

    Attributes
    ----------
    chain_ : ChainOutput
    theta_ : ndarray of shape (m,)
        Posterior means of the area means.
    sigma2_ : ndarray of shape (m,)
        Posterior means of the latent variances.
    coef_, gamma_ : ndarray
        Posterior means of the mean and variance regression coefficients.
    phi2_, tau2_ : float
    """

    def __init__(self, sampler="vwg", iterations=None, burn=None, eps1=0.85, eps2=1e-4, max_regions=50,
                 sigma2_init="ones", random_state=None):
        self.sampler = sampler
        self.iterations = iterations
        self.burn = burn
        self.eps1 = eps1
        self.eps2 = eps2
        self.max_regions = max_regions
        self.sigma2_init = sigma2_init
        self.random_state = random_state

    def _config(self):
        it, burn = (30_000, 28_000) if self.sampler == "mwg" else (3000, 1000)
        return SamplerConfig(
            sampler=self.sampler,
            iterations=it if self.iterations is None else self.iterations,
            burn=burn if self.burn is None else self.burn,
            eps1=self.eps1,
            eps2=self.eps2,
            max_regions=self.max_regions,
        )

    def fit(self, X, y, s2, d=None, n=None, Z=None):
        """Fit on design ``X`` (an intercept column is added) and log estimates ``y``.

        ``s2`` are the log-scale sampling variances; give the degrees of
        freedom ``d`` directly or sample sizes ``n`` (then ``d = n - 1``).
        ``Z`` defaults to ``[1, log n]``.
        """
        X = check_array(X, ensure_2d=True)
        y = np.asarray(y, dtype=float).ravel()
        s2 = np.asarray(s2, dtype=float).ravel()
        if d is None and n is None:
            raise ValueError("give degrees of freedom d or sample sizes n")
        n_arr = None if n is None else np.asarray(n, dtype=float).ravel()
        d = n_arr - 1.0 if d is None else np.asarray(d, dtype=float).ravel()
        if Z is None:
            if n_arr is None:
                raise ValueError("Z defaults to [1, log n] and needs n")
            Z = np.log(n_arr)[:, None]
        Z = check_array(Z, ensure_2d=False)
        Z = Z.reshape(len(Z), -1)
        ones = np.ones((X.shape[0], 1))
        data = ModelData(y=y, s2=s2, n=n_arr if n_arr is not None else d + 1.0, d=d,
                         X=np.hstack([ones, X]), Z=np.hstack([ones, Z]))
        if self.sigma2_init not in ("ones", "data"):
            raise ValueError("sigma2_init must be 'ones' or 'data'")
        init = default_init(data)
        if self.sigma2_init == "data":
            init.sigma2 = data.s2.copy()
        rs = self.random_state
        rng = rs if isinstance(rs, np.random.Generator) else np.random.default_rng(check_random_state(rs).randint(2**31))
        out = run_sampler(data, self._config(), init=init, rng=rng)
        self.chain_ = out
        self.theta_ = out.draws["theta"].mean(axis=0)
        self.sigma2_ = out.draws["sigma2"].mean(axis=0)
        beta = out.draws["beta"].mean(axis=0)
        self.intercept_, self.coef_ = float(beta[0]), beta[1:]
        self.gamma_ = out.draws["gamma"].mean(axis=0)
        self.phi2_ = float(out.draws["phi2"].mean())
        self.tau2_ = float(out.draws["tau2"].mean())
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Regression prediction ``x' beta`` at posterior-mean coefficients."""
        check_is_fitted(self, "coef_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.intercept_ + X @ self.coef_
