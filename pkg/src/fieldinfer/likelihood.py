"""Marginalized Gaussian likelihood and the conditional noise-precision posterior.

The iid Gaussian error variance is integrated out under a conjugate Gamma
prior on the precision, leaving a residual-sum statistic.  Additive constants
that are fixed across all calls of a run are dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import gamma as gamma_dist

from .prior import Hyperparams

__all__ = [
    "ObservationSet",
    "SigmaPosterior",
    "log_marginal_likelihood",
    "sigma_posterior",
    "sigma_posterior_summary",
    "observations_to_json",
    "observations_from_json",
]


@dataclass(frozen=True)
class ObservationSet:
    """Sensor locations with their measured responses."""

    locations: np.ndarray  # (n, dim)
    y: np.ndarray          # (n,)
    provenance: dict | None = None

    @property
    def n(self) -> int:
        return len(self.y)

    def __post_init__(self):
        if len(self.locations) != len(self.y):
            raise ValueError("sensor count and observation count differ")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("observations must be finite")


@dataclass(frozen=True)
class SigmaPosterior:
    """Gamma posterior for the noise precision sigma^(-2)."""

    shape: float
    rate: float

    def precision_mean(self) -> float:
        return self.shape / self.rate

    def sample_sigma(self, rng: np.random.Generator, size: int | None = None):
        prec = rng.gamma(self.shape, 1.0 / self.rate, size=size)
        return 1.0 / np.sqrt(prec)

    def sigma_quantile(self, q):
        """Quantile of sigma; decreasing map from the precision quantile."""
        prec_q = gamma_dist.ppf(1.0 - np.asarray(q), self.shape, scale=1.0 / self.rate)
        return 1.0 / np.sqrt(prec_q)


def log_marginal_likelihood(obs: ObservationSet, pred: np.ndarray, hp: Hyperparams) -> float:
    """log Gamma(a + n/2) - (a + n/2) log(b + 0.5 sum r_i^2), up to a run constant."""
    pred = np.asarray(pred, dtype=float)
    if pred.shape != obs.y.shape:
        raise ValueError("prediction not aligned with observations")
    if not np.all(np.isfinite(pred)):
        return -np.inf
    n = obs.n
    ss = float(np.dot(obs.y - pred, obs.y - pred))
    a = hp.a_err + 0.5 * n
    return float(gammaln(a) - a * np.log(hp.b_err + 0.5 * ss))


def sigma_posterior(obs: ObservationSet, pred: np.ndarray, hp: Hyperparams) -> SigmaPosterior:
    """Conditional Gamma posterior of the noise precision given predictions."""
    pred = np.asarray(pred, dtype=float)
    n = obs.n
    ss = float(np.dot(obs.y - pred, obs.y - pred)) if n else 0.0
    return SigmaPosterior(hp.a_err + 0.5 * n, hp.b_err + 0.5 * ss)


def sigma_posterior_summary(weights: np.ndarray, posteriors: list[SigmaPosterior],
                            mu_a: float, rng: np.random.Generator,
                            n_draws: int = 20000) -> dict:
    """Mixture summary of sigma_r across weighted particles, normalized by mu_A.

    Draws particle indices by weight, then sigma from each particle's Gamma
    conditional; reports mean/median and 5/95% quantiles of sigma_r / mu_A.
    """
    weights = np.asarray(weights, dtype=float)
    idx = rng.choice(len(posteriors), size=n_draws, p=weights)
    shapes = np.array([posteriors[i].shape for i in idx])
    rates = np.array([posteriors[i].rate for i in idx])
    prec = rng.gamma(shapes, 1.0 / rates)
    sig = 1.0 / np.sqrt(prec) / mu_a
    return {
        "mu_a": float(mu_a),
        "n_draws": int(n_draws),
        "mean": float(np.mean(sig)),
        "median": float(np.median(sig)),
        "q05": float(np.quantile(sig, 0.05)),
        "q95": float(np.quantile(sig, 0.95)),
        "mixture": [
            {"weight": float(w), "shape": p.shape, "rate": p.rate}
            for w, p in zip(weights, posteriors)
        ],
    }


def observations_to_json(obs: ObservationSet) -> str:
    payload = {
        "locations": [[float(v) for v in row] for row in np.atleast_2d(obs.locations)],
        "y": [float(v) for v in obs.y],
        "provenance": obs.provenance,
    }
    return json.dumps(payload, indent=1, sort_keys=True)


def observations_from_json(text: str) -> ObservationSet:
    payload = json.loads(text)
    return ObservationSet(
        locations=np.array(payload["locations"], dtype=float),
        y=np.array(payload["y"], dtype=float),
        provenance=payload.get("provenance"),
    )
