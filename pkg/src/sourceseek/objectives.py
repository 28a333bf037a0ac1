"""Acquisition functions for the hierarchical planner.

UCB drives local exploration, expected improvement scores global frontier
goals, and a multiplicative front-loading weight discounts reward that is
gathered later in the mission. Note that UCB here weights the variance, not
the standard deviation, and the expected-improvement standardization divides
by the variance; both follow the model this planner was built around, with a
``standard_ei`` switch for the textbook form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import GaussianBelief

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ObjectiveParams:
    """Weights for the acquisition functions.

    beta: UCB exploration weight (multiplies the variance).
    xi: expected-improvement exploration offset, on scaled signal values.
    lambda_front: front-loading decay per second of travel.
    gamma: per-step discount in the local receding-horizon objective.
    standard_ei: use the textbook Z = I/sigma instead of I/sigma^2.
    """

    beta: float = 3.0
    xi: float = 0.01
    lambda_front: float = 0.95
    gamma: float = 0.95
    standard_ei: bool = False

    def __post_init__(self) -> None:
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.xi < 0.0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")
        if not 0.0 < self.lambda_front <= 1.0:
            raise ValueError(f"lambda_front must lie in (0, 1], got {self.lambda_front}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")


def normal_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def normal_cdf(z: float) -> float:
    # erfc-based form is accurate to ~1e-15 across the whole real line.
    return 0.5 * math.erfc(-z / _SQRT2)


def ucb(belief: GaussianBelief, beta: float) -> float:
    """Upper confidence bound mu + beta * sigma^2 (variance-weighted)."""
    return belief.mean + beta * belief.variance


def expected_improvement(
    belief: GaussianBelief,
    best_mu: float,
    xi: float,
    standard_ei: bool = False,
) -> float:
    """Expected improvement of ``belief`` over the best observed mean.

    I = mu - best_mu - xi and Z = I / sigma^2 (or I / sigma with
    ``standard_ei``); the score is I*Phi(Z) + sigma*phi(Z), clamped at zero
    to absorb floating-point residue in the deep-negative-I tail.
    """
    sigma = belief.std
    improvement = belief.mean - best_mu - xi
    z = improvement / belief.variance if not standard_ei else improvement / sigma
    value = improvement * normal_cdf(z) + sigma * normal_pdf(z)
    return max(value, 0.0)


def front_load(t_reach: float, lambda_front: float) -> float:
    """Multiplicative time-decay weight lambda^t, with F(0) = 1."""
    if t_reach < 0.0:
        raise ValueError(f"t_reach must be >= 0, got {t_reach}")
    return lambda_front**t_reach
