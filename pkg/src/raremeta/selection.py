"""Publication-bias machinery.

A latent Gaussian decides publication: study i is published iff
alpha0 + alpha1*sqrt(n_i) + delta_i > 0, so the publish probability is
Phi(alpha0 + alpha1*sqrt(n_i)).  The (alpha0, alpha1) pair is pinned down by
the publish probabilities (p_min, p_max) assigned to the smallest and largest
study.  Correlating delta_i with the study-specific true effect ties selection
to outcomes and yields the conditional likelihoods implemented here:

* the GLMM-based conditional likelihood (selection on sqrt(n), exact
  within-study counts),
* the classic size-based NN selection likelihood (selection on sqrt(n),
  within-study variance 1/n),
* the SE-based NN selection likelihood (selection on 1/s_i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dists import DomainError, std_normal_cdf, std_normal_logcdf, std_normal_quantile
from .models import (GLMM_KINDS, CoreParams, ModelKind, QuadSpec, _gh_rule,
                     check_dataset, within_loglik_nodes)

RHO_MAX = 0.99

_HALF_LOG_PI = 0.5 * math.log(math.pi)


@dataclass(frozen=True)
class SensitivitySpec:
    """Fixed selection function on sqrt(study size).

    ``p_min``/``p_max`` are the publish probabilities anchored at ``n_min``/
    ``n_max`` subjects; ``alpha0``/``alpha1`` are the probit constants they
    imply.
    """

    p_min: float
    p_max: float
    n_min: float
    n_max: float
    alpha0: float
    alpha1: float


@dataclass(frozen=True)
class SelectionParams:
    """Model parameters of a selection fit: (theta, tau) plus correlation rho."""

    core: CoreParams
    rho: float

    def __post_init__(self):
        if abs(self.rho) > RHO_MAX:
            raise DomainError(f"|rho|={abs(self.rho)} exceeds {RHO_MAX}")


@dataclass(frozen=True)
class CopasShiParams:
    """Probit selection constants (gamma0, gamma1) held fixed during a fit."""

    gamma0: float
    gamma1: float


def alphas_from_probs(p_min: float, p_max: float, n_min: float,
                      n_max: float) -> SensitivitySpec:
    """Solve Phi(a0 + a1*sqrt(n_min)) = p_min, Phi(a0 + a1*sqrt(n_max)) = p_max.

    alpha1 = (qnorm(p_max) - qnorm(p_min)) / (sqrt(n_max) - sqrt(n_min)),
    alpha0 = qnorm(p_max) - alpha1 * sqrt(n_max).
    """
    if not (0.0 < p_min < 1.0 and 0.0 < p_max < 1.0):
        raise DomainError(f"probabilities must lie in (0,1): {p_min}, {p_max}")
    if p_min > p_max:
        raise DomainError(f"need p_min <= p_max, got {p_min} > {p_max}")
    if n_min >= n_max:
        raise DomainError(f"need n_min < n_max, got {n_min} >= {n_max}")
    q_lo = std_normal_quantile(p_min)
    q_hi = std_normal_quantile(p_max)
    alpha1 = (q_hi - q_lo) / (math.sqrt(n_max) - math.sqrt(n_min))
    alpha0 = q_hi - alpha1 * math.sqrt(n_max)
    return SensitivitySpec(p_min, p_max, n_min, n_max, alpha0, alpha1)


def spec_for_sizes(p_min: float, p_max: float, ns) -> SensitivitySpec:
    """Anchor (p_min, p_max) at the smallest/largest size in ``ns``."""
    return alphas_from_probs(p_min, p_max, min(ns), max(ns))


def publish_prob(spec: SensitivitySpec, n: float) -> float:
    """Phi(alpha0 + alpha1 * sqrt(n))."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return std_normal_cdf(spec.alpha0 + spec.alpha1 * math.sqrt(n))


def m_from_probs(probs) -> float:
    """Expected unpublished count sum (1 - P_i)/P_i given publish probs."""
    p = np.asarray(probs, dtype=float)
    return float(np.sum((1.0 - p) / p))


def expected_unpublished(spec: SensitivitySpec, ns) -> float:
    """Expected number of unpublished studies implied by the selection function.

    Raw (real-valued) sum; tables round it to the nearest integer.
    """
    if len(ns) == 0:
        raise DomainError("need at least one study size")
    return m_from_probs([publish_prob(spec, n) for n in ns])


def gammas_from_probs_se(p_min: float, p_max: float, s_min: float,
                         s_max: float) -> CopasShiParams:
    """Selection constants for the SE-based probit Phi(g0 + g1/s).

    ``p_max`` anchors at the smallest SE (most precise study), ``p_min`` at
    the largest, so publish probability rises with precision.
    """
    if not (0.0 < p_min < 1.0 and 0.0 < p_max < 1.0):
        raise DomainError(f"probabilities must lie in (0,1): {p_min}, {p_max}")
    if s_min >= s_max:
        raise DomainError(f"need s_min < s_max, got {s_min} >= {s_max}")
    q_lo = std_normal_quantile(p_min)
    q_hi = std_normal_quantile(p_max)
    gamma1 = (q_hi - q_lo) / (1.0 / s_min - 1.0 / s_max)
    gamma0 = q_hi - gamma1 / s_min
    return CopasShiParams(gamma0, gamma1)


def proposed_conditional_loglik(kind: ModelKind, params: SelectionParams,
                                spec: SensitivitySpec, studies,
                                quad: QuadSpec = QuadSpec()) -> float:
    """Conditional log-likelihood of the published studies under a GLMM.

    Per study, with u_i = alpha0 + alpha1*sqrt(n_i),

        log int Phi((u_i + rho*(theta_i - theta)/tau) / sqrt(1 - rho^2))
                * exp(within(theta_i)) phi((theta_i - theta)/tau)/tau dtheta_i
        - log Phi(u_i),

    evaluated with the same Gauss-Hermite rule as the no-selection marginal.
    At rho = 0 the selection factor is constant in theta_i and cancels the
    denominator, recovering the no-selection GLMM likelihood.
    """
    if kind not in GLMM_KINDS:
        raise ValueError(f"no conditional likelihood for {kind}")
    check_dataset(kind, studies)
    rho = params.rho
    if abs(rho) >= 1.0:
        raise DomainError(f"|rho| must be < 1, got {rho}")
    theta, tau = params.core.theta, params.core.tau
    x, logw = _gh_rule(quad.node_count)
    thetas = theta + math.sqrt(2.0) * tau * x
    # (theta_i - theta)/tau at the nodes is sqrt(2)*x regardless of (theta, tau)
    shift = rho * math.sqrt(2.0) * x / math.sqrt(1.0 - rho * rho)
    scale = 1.0 / math.sqrt(1.0 - rho * rho)
    total = 0.0
    for i, s in enumerate(studies):
        u = spec.alpha0 + spec.alpha1 * math.sqrt(s.n_total)
        num = logsumexp(logw + std_normal_logcdf(scale * u + shift)
                        + within_loglik_nodes(kind, s, thetas)) - _HALF_LOG_PI
        term = num - std_normal_logcdf(u)
        if not np.isfinite(term):
            raise RuntimeError(
                f"non-finite conditional likelihood for study {i + 1}")
        total += term
    return float(total)


def copas_shi_loglik(core: CoreParams, rho: float, gamma: CopasShiParams,
                     effects) -> float:
    """SE-based selection log-likelihood on the NN model.

    Per study (dropping the -log(2*pi)/2 constant),

        -log(tau^2 + s_i^2)/2 - (theta_hat_i - theta)^2 / (2*(tau^2 + s_i^2))
        - log Phi(g0 + g1/s_i) + log Phi(v_i)

    with rho_i = rho * s_i / sqrt(tau^2 + s_i^2) and
    v_i = (g0 + g1/s_i + rho_i*(theta_hat_i - theta)/sqrt(tau^2 + s_i^2))
          / sqrt(1 - rho_i^2).
    """
    if abs(rho) > RHO_MAX:
        raise DomainError(f"|rho|={abs(rho)} exceeds {RHO_MAX}")
    th = np.array([e.theta_hat for e in effects])
    s = np.array([e.se for e in effects])
    if np.any(s <= 0):
        raise DomainError("standard errors must be positive")
    var = core.tau ** 2 + s ** 2
    sd = np.sqrt(var)
    u = gamma.gamma0 + gamma.gamma1 / s
    rho_i = rho * s / sd
    v = (u + rho_i * (th - core.theta) / sd) / np.sqrt(1.0 - rho_i ** 2)
    terms = (-0.5 * np.log(var) - (th - core.theta) ** 2 / (2.0 * var)
             - std_normal_logcdf(u) + std_normal_logcdf(v))
    return float(np.sum(terms))


def copas_n_loglik(core: CoreParams, rho: float, gamma: CopasShiParams,
                   effects) -> float:
    """Size-based selection log-likelihood on the NN model.

    Same shape as :func:`copas_shi_loglik` but the selection probit is
    Phi(g0 + g1*sqrt(n_i)), the within-study variance is 1/n_i rather than
    s_i^2, and the correlation enters unattenuated.  At rho = 0 the two
    Phi terms cancel, so the value does not depend on gamma.
    """
    if abs(rho) > RHO_MAX:
        raise DomainError(f"|rho|={abs(rho)} exceeds {RHO_MAX}")
    th = np.array([e.theta_hat for e in effects])
    n = np.array([float(e.n_total) for e in effects])
    var = core.tau ** 2 + 1.0 / n
    sd = np.sqrt(var)
    u = gamma.gamma0 + gamma.gamma1 * np.sqrt(n)
    v = (u + rho * (th - core.theta) / sd) / math.sqrt(1.0 - rho * rho)
    terms = (-0.5 * np.log(var) - (th - core.theta) ** 2 / (2.0 * var)
             - std_normal_logcdf(u) + std_normal_logcdf(v))
    return float(np.sum(terms))
