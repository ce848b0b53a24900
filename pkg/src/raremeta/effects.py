"""Per-study effect estimates: lnOR for 2x2 tables, log odds for one group.

Zero cells make both estimators undefined; a continuity-correction policy
decides which studies get 0.5 added to every event and non-event count.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

CORRECTION = 0.5


class UndefinedEstimateError(ValueError):
    """Zero cell left uncorrected by the chosen policy."""


@dataclass(frozen=True)
class TwoArmStudy:
    """2x2 count data: events/subjects in treatment (1) and control (0) arms."""

    y1: int
    n1: int
    y0: int
    n0: int

    def __post_init__(self):
        if self.n1 < 1 or self.n0 < 1:
            raise ValueError(f"arm sizes must be >= 1, got {self}")
        if not (0 <= self.y1 <= self.n1 and 0 <= self.y0 <= self.n0):
            raise ValueError(f"event counts outside arm sizes: {self}")

    @property
    def n_total(self) -> int:
        return self.n1 + self.n0

    @property
    def y_total(self) -> int:
        return self.y1 + self.y0

    def has_zero_cell(self) -> bool:
        return 0 in (self.y1, self.n1 - self.y1, self.y0, self.n0 - self.y0)


@dataclass(frozen=True)
class OneArmStudy:
    """Single-group count data: y events out of n subjects."""

    y: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self}")
        if not 0 <= self.y <= self.n:
            raise ValueError(f"y outside 0..n: {self}")

    @property
    def n_total(self) -> int:
        return self.n

    def has_zero_cell(self) -> bool:
        return self.y == 0 or self.y == self.n


class CorrectionPolicy(enum.Enum):
    """Which studies get 0.5 added to all event and non-event cells."""

    NONE = "none"
    ONLY_ZERO = "only_zero"
    ALL = "all"


@dataclass(frozen=True)
class EffectEstimate:
    """Estimated lnOR or log odds with its standard error."""

    theta_hat: float
    se: float
    n_total: int


def _corrected(policy: CorrectionPolicy, has_zero: bool) -> bool:
    if policy is CorrectionPolicy.ALL:
        return True
    if policy is CorrectionPolicy.ONLY_ZERO:
        return has_zero
    return False


def lnor_estimate(study: TwoArmStudy, policy: CorrectionPolicy) -> EffectEstimate:
    """Log odds ratio and SE from a 2x2 table.

    theta_hat = log[(y1/(n1-y1)) / (y0/(n0-y0))],
    se = sqrt(1/y1 + 1/(n1-y1) + 1/y0 + 1/(n0-y0)),

    on cells corrected per ``policy`` (0.5 added to each event and non-event
    count; arm totals grow by 1).  ``n_total`` keeps the original size.
    """
    add = CORRECTION if _corrected(policy, study.has_zero_cell()) else 0.0
    a = study.y1 + add
    b = study.n1 - study.y1 + add
    c = study.y0 + add
    d = study.n0 - study.y0 + add
    if min(a, b, c, d) <= 0.0:
        raise UndefinedEstimateError(
            f"zero cell in {study} not resolved by policy {policy.value}")
    theta = math.log((a / b) / (c / d))
    se = math.sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d)
    return EffectEstimate(theta, se, study.n_total)


def logodds_estimate(study: OneArmStudy, policy: CorrectionPolicy) -> EffectEstimate:
    """Log odds and SE from a single group: log(y/(n-y)), sqrt(1/y + 1/(n-y))."""
    add = CORRECTION if _corrected(policy, study.has_zero_cell()) else 0.0
    a = study.y + add
    b = study.n - study.y + add
    if min(a, b) <= 0.0:
        raise UndefinedEstimateError(
            f"zero cell in {study} not resolved by policy {policy.value}")
    return EffectEstimate(math.log(a / b), math.sqrt(1.0 / a + 1.0 / b),
                          study.n_total)


def estimate_effects(studies, policy: CorrectionPolicy):
    """Apply the matching estimator to a homogeneous list of studies."""
    out = []
    for i, s in enumerate(studies):
        try:
            if isinstance(s, TwoArmStudy):
                out.append(lnor_estimate(s, policy))
            else:
                out.append(logodds_estimate(s, policy))
        except UndefinedEstimateError as exc:
            raise UndefinedEstimateError(f"study {i + 1}: {exc}") from None
    return out
