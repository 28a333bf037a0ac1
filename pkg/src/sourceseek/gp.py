"""Squared-exponential Gaussian-process regressor used as the comparison model.

Unit kernel amplitude, zero prior mean (callers supply a constant prior mean
when they center the data), Gaussian observation noise on the training
diagonal. The optional ``limit_k`` caps inference to the k training points
nearest the query, mirroring the global-neighbor cap of the factor-graph
model. New points are only accepted once the sensor has moved ``d_min``
from the last accepted location, matching the graph's node-creation rule.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import GaussianBelief, Location, Measurement, euclidean_distance


class EmptyModelError(ValueError):
    """Prediction was requested before any training or hypothetical point exists."""


class NotPositiveDefiniteError(ValueError):
    """The training covariance could not be Cholesky-factorized."""


class GaussianProcess:
    def __init__(
        self,
        length_scale: float = 3.0,
        sigma2_obs: float = 0.01,
        limit_k: Optional[int] = None,
        d_min: float = 0.25,
    ) -> None:
        if length_scale <= 0.0:
            raise ValueError(f"length_scale must be positive, got {length_scale}")
        if sigma2_obs <= 0.0:
            raise ValueError(f"sigma2_obs must be positive, got {sigma2_obs}")
        if limit_k is not None and limit_k < 1:
            raise ValueError(f"limit_k must be >= 1, got {limit_k}")
        if d_min <= 0.0:
            raise ValueError(f"d_min must be positive, got {d_min}")
        self.length_scale = length_scale
        self.sigma2_obs = sigma2_obs
        self.limit_k = limit_k
        self.d_min = d_min
        self._x: list[tuple[float, float]] = []
        self._y: list[float] = []

    @property
    def size(self) -> int:
        return len(self._y)

    @property
    def locations(self) -> list[Location]:
        return [Location(x, y) for x, y in self._x]

    @property
    def values(self) -> list[float]:
        return list(self._y)

    def add(self, m: Measurement) -> None:
        """Append iff the sensor moved more than d_min since the last accepted point."""
        if self._x:
            last = Location(*self._x[-1])
            if euclidean_distance(last, m.location) <= self.d_min:
                return
        self._x.append((m.location.x, m.location.y))
        self._y.append(m.value)

    def predict(
        self,
        query: Location,
        hypo: Sequence[tuple[Location, float]] = (),
        prior_mean: float = 0.0,
    ) -> GaussianBelief:
        """Posterior N(K_* K^-1 y, K_** - K_* K^-1 K_*^T) at ``query``.

        Hypothetical (location, value) pairs are appended as temporary
        training points for this prediction only. ``limit_k`` restricts the
        stored training set to the k points nearest the query (ties broken by
        insertion order); hypothetical points are always included.
        """
        xs, ys = self._select(query)
        for loc, val in hypo:
            if not math.isfinite(val):
                raise ValueError(f"hypothetical value must be finite, got {val}")
            xs.append((loc.x, loc.y))
            ys.append(val)
        if not xs:
            raise EmptyModelError("prediction requires at least one training or hypothetical point")

        x_arr = np.asarray(xs)
        y_arr = np.asarray(ys) - prior_mean
        k_train = self._kernel(x_arr, x_arr)
        k_train[np.diag_indices_from(k_train)] += self.sigma2_obs
        k_star = self._kernel(np.asarray([(query.x, query.y)]), x_arr)[0]
        try:
            factor = cho_factor(k_train, lower=True)
        except LinAlgError as exc:
            raise NotPositiveDefiniteError(f"training covariance is not PD: {exc}") from exc
        alpha = cho_solve(factor, y_arr)
        mean = prior_mean + float(k_star @ alpha)
        variance = 1.0 - float(k_star @ cho_solve(factor, k_star))
        return GaussianBelief(mean, variance)

    def training_posterior_means(self, prior_mean: float = 0.0) -> np.ndarray:
        """Posterior mean at every accepted training location.

        With ``limit_k`` unset this is one batched solve; with it set the
        neighbor subset differs per query point, so each is solved separately.
        """
        if not self._x:
            return np.zeros(0)
        if self.limit_k is None or self.size <= self.limit_k:
            x_arr = np.asarray(self._x)
            y_arr = np.asarray(self._y) - prior_mean
            k_noiseless = self._kernel(x_arr, x_arr)
            k_train = k_noiseless + self.sigma2_obs * np.eye(len(x_arr))
            try:
                factor = cho_factor(k_train, lower=True)
            except LinAlgError as exc:
                raise NotPositiveDefiniteError(f"training covariance is not PD: {exc}") from exc
            return prior_mean + k_noiseless @ cho_solve(factor, y_arr)
        means = np.empty(self.size)
        for i, (x, y) in enumerate(self._x):
            means[i] = self.predict(Location(x, y), prior_mean=prior_mean).mean
        return means

    def _select(self, query: Location) -> tuple[list[tuple[float, float]], list[float]]:
        if self.limit_k is None or self.size <= self.limit_k:
            return list(self._x), list(self._y)
        pts = np.asarray(self._x)
        d2 = (pts[:, 0] - query.x) ** 2 + (pts[:, 1] - query.y) ** 2
        idx = np.argsort(d2, kind="stable")[: self.limit_k]
        return [self._x[i] for i in idx], [self._y[i] for i in idx]

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        return np.exp(-d2 / (2.0 * self.length_scale**2))
