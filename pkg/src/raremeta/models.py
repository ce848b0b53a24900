"""Marginal log-likelihoods of the random-effects models without selection.

Four models share one structure: a within-study likelihood for the observed
counts given the study-specific effect, mixed over a normal between-study law
N(theta, tau^2).  The normal-normal (NN) marginal is closed form; the exact
hypergeometric (HN) and the two binomial models (CBN, 1SBN) are integrated
with Gauss-Hermite quadrature after the substitution
theta_i = theta + sqrt(2) * tau * x.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .dists import (binomial_log_pmf_vec, expit, fnch_log_pmf_nodes,
                    fnch_support)
from .effects import OneArmStudy, TwoArmStudy

TAU_MIN = 1e-3
TAU_MAX = 10.0

_HALF_LOG_PI = 0.5 * math.log(math.pi)


class ModelKind(enum.Enum):
    NN = "nn"
    HN = "hn"
    CBN = "cbn"
    SBN1 = "1sbn"


#: Model kinds whose marginal likelihood needs quadrature.
GLMM_KINDS = (ModelKind.HN, ModelKind.CBN, ModelKind.SBN1)


@dataclass(frozen=True)
class CoreParams:
    """Overall effect and between-study SD."""

    theta: float
    tau: float

    def __post_init__(self):
        if not TAU_MIN <= self.tau <= TAU_MAX:
            raise ValueError(
                f"tau={self.tau} outside [{TAU_MIN}, {TAU_MAX}]")


@dataclass(frozen=True)
class QuadSpec:
    """Gauss-Hermite rule size and the node-doubling cross-check tolerance."""

    node_count: int = 41
    rel_tol: float = 1e-6

    def __post_init__(self):
        if self.node_count < 15:
            raise ValueError("node_count must be >= 15")


@lru_cache(maxsize=32)
def _gh_rule(n: int):
    x, w = np.polynomial.hermite.hermgauss(n)
    return x, np.log(w)


def hn_within_loglik(theta_i: float, study: TwoArmStudy) -> float:
    """FNCH log-pmf of the treatment-arm count given both margins."""
    return float(hn_within_loglik_nodes(np.array([theta_i]), study)[0])


def hn_within_loglik_nodes(thetas: np.ndarray, study: TwoArmStudy) -> np.ndarray:
    return fnch_log_pmf_nodes(study.y1, study.n1, study.n0, study.y_total, thetas)


def cbn_within_loglik(theta_i: float, study: TwoArmStudy) -> float:
    """Binomial approximation: y1 ~ Bin(y_total, expit(log(n1/n0) + theta_i))."""
    return float(cbn_within_loglik_nodes(np.array([theta_i]), study)[0])


def cbn_within_loglik_nodes(thetas: np.ndarray, study: TwoArmStudy) -> np.ndarray:
    if study.y_total == 0:
        return np.zeros_like(np.asarray(thetas, dtype=float))
    p = expit(math.log(study.n1 / study.n0) + np.asarray(thetas, dtype=float))
    return binomial_log_pmf_vec(study.y1, study.y_total, p)


def sbn_within_loglik(theta_i: float, study: OneArmStudy) -> float:
    """One-group binomial: y ~ Bin(n, expit(theta_i))."""
    return float(sbn_within_loglik_nodes(np.array([theta_i]), study)[0])


def sbn_within_loglik_nodes(thetas: np.ndarray, study: OneArmStudy) -> np.ndarray:
    p = expit(np.asarray(thetas, dtype=float))
    return binomial_log_pmf_vec(study.y, study.n, p)


def within_loglik_nodes(kind: ModelKind, study, thetas: np.ndarray) -> np.ndarray:
    """Within-study log-likelihood at an array of effect values."""
    if kind is ModelKind.HN:
        return hn_within_loglik_nodes(thetas, study)
    if kind is ModelKind.CBN:
        return cbn_within_loglik_nodes(thetas, study)
    if kind is ModelKind.SBN1:
        return sbn_within_loglik_nodes(thetas, study)
    raise ValueError(f"no within-study likelihood for {kind}")


def check_dataset(kind: ModelKind, studies) -> None:
    """Raise if the arm structure of the dataset does not match the model."""
    if not studies:
        raise ValueError("empty dataset")
    want = OneArmStudy if kind is ModelKind.SBN1 else TwoArmStudy
    for i, s in enumerate(studies):
        if not isinstance(s, want):
            raise ValueError(
                f"study {i + 1} is {type(s).__name__}; {kind.value} needs "
                f"{want.__name__}")
        if isinstance(s, TwoArmStudy):
            # guards the FNCH support; CBN shares the same feasibility
            fnch_support(s.n1, s.n0, s.y_total)


def nn_loglik(params: CoreParams, effects) -> float:
    """Closed-form NN marginal: sum of log N(theta_hat_i; theta, s_i^2 + tau^2)."""
    th = np.array([e.theta_hat for e in effects])
    v = np.array([e.se for e in effects]) ** 2 + params.tau ** 2
    return float(np.sum(-0.5 * np.log(2.0 * np.pi * v)
                        - (th - params.theta) ** 2 / (2.0 * v)))


def glmm_marginal_loglik(kind: ModelKind, params: CoreParams, studies,
                         quad: QuadSpec = QuadSpec()) -> float:
    """Marginal log-likelihood of an HN / CBN / 1SBN model.

    Each study contributes log of the Gauss-Hermite approximation to
    int exp(within(theta_i)) phi((theta_i - theta)/tau)/tau dtheta_i,
    combined in log space.

    Raises
    ------
    ValueError
        If ``kind`` has no quadrature form (NN) or the dataset is malformed.
    RuntimeError
        If a study's integrated term is not finite, naming the study.
    """
    if kind not in GLMM_KINDS:
        raise ValueError(f"glmm_marginal_loglik does not handle {kind}")
    check_dataset(kind, studies)
    x, logw = _gh_rule(quad.node_count)
    thetas = params.theta + math.sqrt(2.0) * params.tau * x
    total = 0.0
    for i, s in enumerate(studies):
        term = logsumexp(logw + within_loglik_nodes(kind, s, thetas)) - _HALF_LOG_PI
        if not np.isfinite(term):
            raise RuntimeError(
                f"non-finite integrated likelihood for study {i + 1} at "
                f"theta={params.theta}, tau={params.tau}")
        total += term
    return float(total)
