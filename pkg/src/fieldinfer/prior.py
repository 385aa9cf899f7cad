"""Hierarchical prior over kernel-expansion states, hyperparameters marginalized.

The cardinality hyperparameter, the per-term scale locations and the common
amplitude variance are all integrated out analytically, so the prior density
is evaluated directly on (k, a0, {a_j, tau_j, x_j}).  All per-term
normalization constants are kept: they depend on k through the term count and
matter for trans-dimensional acceptance ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, field as _dfield, replace

import numpy as np
from scipy.special import gammaln

from .field import Domain, ThetaState

__all__ = [
    "Hyperparams",
    "log_prior",
    "sample_prior",
    "sample_k",
    "k_log_pmf",
    "tau_log_pdf",
    "tau_cdf",
    "sample_tau",
    "amplitude_log_marginal",
]


@dataclass(frozen=True)
class Hyperparams:
    """Fixed prior and sampler constants; defaults follow the benchmark setup."""

    s: float = 0.1            # cardinality prior decay
    a_tau: float = 1.0        # scale prior shape
    a_mu: float = 1e-4        # scale-location hyperprior mean
    a_amp: float = 1.0        # amplitude variance prior shape
    b_amp: float = 1.0        # amplitude variance prior rate
    a_err: float = 2.0        # noise precision prior shape
    b_err: float = 1e-6       # noise precision prior rate
    k_max: int = 100
    c_move: float = 0.2       # trans-dimensional move probability constant
    delta_x: float = 1.0      # merge distance gate
    delta_a: float = 1.0      # merge amplitude gate
    zeta: float = 0.95        # ESS decay target per bridging step
    ess_min_frac: float = 0.5  # resample when ESS drops below this fraction of N

    def __post_init__(self):
        positive = ("s", "a_tau", "a_mu", "a_amp", "b_amp", "a_err", "b_err",
                    "delta_x", "delta_a")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.k_max < 0:
            raise ValueError("k_max must be >= 0")
        if not 0.0 < self.c_move < 0.5:
            raise ValueError("c_move must lie in (0, 0.5)")
        if not 0.0 < self.zeta < 1.0:
            raise ValueError("zeta must lie in (0, 1)")
        if not 0.0 < self.ess_min_frac <= 1.0:
            raise ValueError("ess_min_frac must lie in (0, 1]")

    def updated(self, **kwargs) -> "Hyperparams":
        return replace(self, **kwargs)


# ---------------------------------------------------------------------------
# cardinality
# ---------------------------------------------------------------------------

def k_log_pmf(hp: Hyperparams) -> np.ndarray:
    """Normalized log pmf of k on 0..k_max (truncated geometric in s)."""
    ks = np.arange(hp.k_max + 1)
    logp = -(ks + 1) * np.log(hp.s + 1.0)
    logp -= _logsumexp(logp)
    return logp


def sample_k(hp: Hyperparams, rng: np.random.Generator, size: int | None = None):
    pmf = np.exp(k_log_pmf(hp))
    out = rng.choice(hp.k_max + 1, size=size, p=pmf)
    return out


def _logsumexp(v: np.ndarray) -> float:
    m = np.max(v)
    return float(m + np.log(np.exp(v - m).sum()))


# ---------------------------------------------------------------------------
# kernel scale tau (location hyperparameter integrated out)
# ---------------------------------------------------------------------------

def tau_log_pdf(tau, hp: Hyperparams):
    """Marginal log density of a single kernel precision.

    p(tau) = [Gamma(a+1)/Gamma(a)] a^a tau^(a-1) / (a_mu (a tau + 1/a_mu)^(a+1))
    with a = a_tau; tau^(a-1) sits in the numerator.
    """
    tau = np.asarray(tau, dtype=float)
    a = hp.a_tau
    out = np.where(
        tau > 0,
        (gammaln(a + 1.0) - gammaln(a) + a * np.log(a)
         + (a - 1.0) * np.log(np.where(tau > 0, tau, 1.0))
         - np.log(hp.a_mu)
         - (a + 1.0) * np.log(a * np.where(tau > 0, tau, 1.0) + 1.0 / hp.a_mu)),
        -np.inf,
    )
    return out if out.ndim else float(out)


def tau_cdf(tau, hp: Hyperparams):
    """Closed-form CDF of the marginal scale density: (a t / (a t + 1/a_mu))^a."""
    tau = np.asarray(tau, dtype=float)
    a = hp.a_tau
    t = np.clip(tau, 0.0, None)
    out = (a * t / (a * t + 1.0 / hp.a_mu)) ** a
    return out if out.ndim else float(out)


def sample_tau(hp: Hyperparams, rng: np.random.Generator, size: int | None = None):
    """Ancestral draw: mu ~ Exp(mean a_mu), tau | mu ~ Gamma(a_tau, rate a_tau*mu)."""
    n = 1 if size is None else size
    mu = rng.exponential(scale=hp.a_mu, size=n)
    mu = np.maximum(mu, 1e-300)
    tau = rng.gamma(shape=hp.a_tau, scale=1.0 / (hp.a_tau * mu))
    if size is None:
        return float(tau[0])
    return tau


# ---------------------------------------------------------------------------
# amplitudes (common variance integrated out)
# ---------------------------------------------------------------------------

def amplitude_log_marginal(amps_with_a0: np.ndarray, hp: Hyperparams) -> float:
    """Log of the marginalized joint density of (a_0, ..., a_k)."""
    m = len(amps_with_a0)  # = k + 1
    ss = float(np.dot(amps_with_a0, amps_with_a0))
    return float(
        -0.5 * m * np.log(2.0 * np.pi)
        + gammaln(hp.a_amp + 0.5 * m)
        - (hp.a_amp + 0.5 * m) * np.log(hp.b_amp + 0.5 * ss)
    )


# ---------------------------------------------------------------------------
# complete prior
# ---------------------------------------------------------------------------

def log_prior(theta: ThetaState, hp: Hyperparams, domain: Domain) -> float:
    """Log density of the complete marginalized prior; -inf outside support."""
    k = theta.k
    if k > hp.k_max:
        return -np.inf
    if k > 0:
        if np.any(theta.taus <= 0) or not np.all(np.isfinite(theta.taus)):
            return -np.inf
        if not np.all(domain.contains(theta.centers)):
            return -np.inf
    if not np.isfinite(theta.a0) or (k > 0 and not np.all(np.isfinite(theta.amps))):
        return -np.inf

    total = -(k + 1) * np.log(hp.s + 1.0)
    if k > 0:
        total += float(np.sum(tau_log_pdf(theta.taus, hp)))
        total += -k * np.log(domain.measure)  # 0 for the unit domains
    amps = np.concatenate(([theta.a0], theta.amps))
    total += amplitude_log_marginal(amps, hp)
    return float(total)


def sample_prior(hp: Hyperparams, rng: np.random.Generator, domain: Domain) -> ThetaState:
    """Ancestral draw whose marginal law matches log_prior."""
    k = int(sample_k(hp, rng))
    # sigma_a^2 ~ InvGamma(a_amp, b_amp), then amplitudes iid normal
    sigma2 = hp.b_amp / rng.gamma(shape=hp.a_amp, scale=1.0)
    amps_all = rng.normal(0.0, np.sqrt(sigma2), size=k + 1)
    a0 = float(amps_all[0])
    if k == 0:
        return ThetaState.constant(a0, domain.dim)
    taus = sample_tau(hp, rng, size=k)
    centers = domain.sample(rng, k)
    return ThetaState(a0, amps_all[1:].copy(), np.asarray(taus, dtype=float), centers)
