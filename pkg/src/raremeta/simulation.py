"""Monte-Carlo study harness: generate, select, fit, summarize.

Three data-generating processes produce populations of rare-event studies
whose true effects are correlated with a latent publication variable; a fixed
probit selection on sqrt(study size) picks the published subset.  Every
estimator is then fit per replicate and summarized as bias (x100), coverage
of the true effect, convergence rate, and mean tau^2 estimate, with the
selection parameters of the sensitivity methods held at their true values.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from .dists import expit, fnch_sample
from .effects import CorrectionPolicy, OneArmStudy, TwoArmStudy, estimate_effects
from .estimation import (FitOptions, QuadSpec, fit_copas_n, fit_copas_shi,
                         fit_glmm, fit_nn, fit_proposed)
from .models import ModelKind
from .selection import SensitivitySpec, alphas_from_probs, gammas_from_probs_se

DGPS = ("hn", "2sbn", "1sbn")


class ScenarioError(ValueError):
    """Scenario configuration cannot generate data."""


@dataclass(frozen=True)
class Scenario:
    """One simulation design row.

    Two-arm designs (dgp 'hn' and '2sbn') need an allocation ratio; the 'hn'
    design additionally fixes the per-study total event count range, and
    '2sbn' the baseline control event probability.  The one-group design
    ('1sbn') takes none of those.
    """

    dgp: str
    s_population: int
    n_range: tuple
    tau2: float
    theta: float = -2.0
    rho: float = 0.8
    alloc_ratio: str | None = None
    y_total_range: tuple | None = None
    p0: float | None = None
    p_min: float = 0.2
    p_max: float = 0.99

    def __post_init__(self):
        if self.dgp not in DGPS:
            raise ScenarioError(f"dgp must be one of {DGPS}, got {self.dgp!r}")
        if self.s_population < 1:
            raise ScenarioError("s_population must be >= 1")
        if not self.n_range[0] <= self.n_range[1]:
            raise ScenarioError(f"empty n_range {self.n_range}")
        if self.n_range[0] < 1:
            raise ScenarioError("study sizes must be >= 1")
        if self.tau2 <= 0:
            raise ScenarioError("tau2 must be > 0")
        two_arm = self.dgp in ("hn", "2sbn")
        if two_arm and self.alloc_ratio not in ("1:1", "2:1"):
            raise ScenarioError("two-arm designs need alloc_ratio 1:1 or 2:1")
        if not two_arm and self.alloc_ratio is not None:
            raise ScenarioError("alloc_ratio is not a 1sbn field")
        if self.dgp == "hn":
            if self.y_total_range is None or not (
                    1 <= self.y_total_range[0] <= self.y_total_range[1]):
                raise ScenarioError("hn design needs a nonempty y_total_range")
        elif self.y_total_range is not None:
            raise ScenarioError("y_total_range is an hn-only field")
        if self.dgp == "2sbn":
            if self.p0 is None or not 0.0 < self.p0 < 1.0:
                raise ScenarioError("2sbn design needs p0 in (0,1)")
        elif self.p0 is not None:
            raise ScenarioError("p0 is a 2sbn-only field")

    @property
    def tau(self) -> float:
        return math.sqrt(self.tau2)

    def true_spec(self) -> SensitivitySpec:
        """Selection function anchored at the n-range endpoints."""
        return alphas_from_probs(self.p_min, self.p_max,
                                 self.n_range[0], self.n_range[1])

    def label(self) -> str:
        parts = [self.dgp, f"S{self.s_population}",
                 f"n{self.n_range[0]}-{self.n_range[1]}"]
        if self.alloc_ratio:
            parts.append(self.alloc_ratio)
        parts.append(f"tau2={self.tau2}")
        return " ".join(parts)


def draw_effects_and_residuals(theta, tau, rho, s, rng):
    """Joint draws of true effects and selection residuals.

    (theta_i, delta_i) is bivariate normal with means (theta, 0), variances
    (tau^2, 1), covariance tau*rho.
    """
    if not abs(rho) < 1:
        raise ScenarioError("need |rho| < 1")
    if tau <= 0:
        raise ScenarioError("need tau > 0")
    a = rng.standard_normal(s)
    b = rng.standard_normal(s)
    thetas = theta + tau * a
    deltas = rho * a + math.sqrt(1.0 - rho * rho) * b
    return thetas, deltas


def _split_arms(n: int, ratio: str):
    # treatment arm takes the larger share when n does not divide evenly
    if ratio == "1:1":
        n1 = n - n // 2
    else:
        n1 = int(round(2 * n / 3))
    return n1, n - n1


def gen_hn_population(sc: Scenario, rng):
    """Population under the exact-hypergeometric design: fixed margins per
    study, treatment count drawn from the noncentral hypergeometric law."""
    thetas, deltas = draw_effects_and_residuals(sc.theta, sc.tau, sc.rho,
                                                sc.s_population, rng)
    lo, hi = sc.n_range
    ylo, yhi = sc.y_total_range
    out = []
    for i in range(sc.s_population):
        n = int(rng.integers(lo, hi + 1))
        n1, n0 = _split_arms(n, sc.alloc_ratio)
        y = int(rng.integers(ylo, yhi + 1))
        y1 = fnch_sample(n1, n0, y, thetas[i], rng)
        out.append((TwoArmStudy(y1, n1, y - y1, n0), float(deltas[i])))
    return out


def gen_2sbn_population(sc: Scenario, rng, max_attempts: int = 10_000):
    """Population with independent binomial arms: control probability drawn
    around p0 (resampled into (0,1)), treatment probability shifted by the
    study's own log odds ratio."""
    thetas, deltas = draw_effects_and_residuals(sc.theta, sc.tau, sc.rho,
                                                sc.s_population, rng)
    lo, hi = sc.n_range
    sd0 = sc.tau / 2.0
    out = []
    for i in range(sc.s_population):
        n = int(rng.integers(lo, hi + 1))
        n1, n0 = _split_arms(n, sc.alloc_ratio)
        for attempt in range(max_attempts):
            p0 = rng.normal(sc.p0, sd0)
            if 0.0 < p0 < 1.0:
                break
        else:
            raise ScenarioError(
                f"could not draw a control probability in (0,1) from "
                f"N({sc.p0}, {sd0 ** 2:.4g}) after {max_attempts} tries")
        p1 = expit(math.log(p0 / (1.0 - p0)) + thetas[i])
        y1 = int(rng.binomial(n1, p1))
        y0 = int(rng.binomial(n0, p0))
        out.append((TwoArmStudy(y1, n1, y0, n0), float(deltas[i])))
    return out


def gen_1sbn_population(sc: Scenario, rng):
    """One-group population: y ~ Bin(n, expit(theta_i))."""
    thetas, deltas = draw_effects_and_residuals(sc.theta, sc.tau, sc.rho,
                                                sc.s_population, rng)
    lo, hi = sc.n_range
    out = []
    for i in range(sc.s_population):
        n = int(rng.integers(lo, hi + 1))
        y = int(rng.binomial(n, expit(thetas[i])))
        out.append((OneArmStudy(y, n), float(deltas[i])))
    return out


def gen_population(sc: Scenario, rng):
    if sc.dgp == "hn":
        return gen_hn_population(sc, rng)
    if sc.dgp == "2sbn":
        return gen_2sbn_population(sc, rng)
    return gen_1sbn_population(sc, rng)


def apply_selection(population, spec: SensitivitySpec):
    """Keep study i iff alpha0 + alpha1*sqrt(n_i) + delta_i > 0."""
    return [s for s, d in population
            if spec.alpha0 + spec.alpha1 * math.sqrt(s.n_total) + d > 0]


def rare_event_share(studies) -> float:
    """Share of studies with fewer than 3 events in some arm."""
    def rare(s):
        if isinstance(s, TwoArmStudy):
            return s.y1 < 3 or s.y0 < 3
        return s.y < 3
    return sum(rare(s) for s in studies) / len(studies)


# ---------------------------------------------------------------------------
# per-replicate fitting and aggregation

_OR_ESTIMATORS = ("nn_p", "hn_p", "cbn_p", "nn_o", "hn_o", "cbn_o",
                  "copas_n", "copas_shi", "prop_hn", "prop_cbn")
_PROP_ESTIMATORS = ("nn_p", "1sbn_p", "nn_o", "1sbn_o",
                    "copas_n", "copas_shi", "prop_1sbn")

#: estimators whose coverage the tables report
SENSITIVITY_ESTIMATORS = ("copas_n", "copas_shi",
                          "prop_hn", "prop_cbn", "prop_1sbn")


def estimator_names(sc: Scenario):
    return _PROP_ESTIMATORS if sc.dgp == "1sbn" else _OR_ESTIMATORS


def _record(result):
    theta_ci = result.ci.get("theta")
    return {"converged": bool(result.converged),
            "theta": result.params.get("theta", math.nan),
            "tau2": result.params.get("tau", math.nan) ** 2,
            "ci": theta_ci}


_FAILED = {"converged": False, "theta": math.nan, "tau2": math.nan, "ci": None}


def _try(fitter):
    try:
        return _record(fitter())
    except Exception:
        return _FAILED.copy()


def simulate_replicate(sc: Scenario, seed_seq) -> dict:
    """Generate one meta-analysis, select, and fit every estimator."""
    rng = np.random.default_rng(seed_seq)
    population = gen_population(sc, rng)
    spec = sc.true_spec()
    published = apply_selection(population, spec)
    pop_studies = [s for s, _ in population]
    out = {"published": len(published),
           "rare_p": rare_event_share(pop_studies),
           "rare_o": rare_event_share(published) if published else math.nan,
           "degenerate": not published,
           "fits": {}}
    if not published:
        return out

    fit_seed = int(seed_seq.generate_state(1)[0])
    quad = QuadSpec()
    init2 = (sc.theta, sc.tau)
    init3 = (sc.theta, sc.tau, sc.rho)
    opts2 = FitOptions(restarts=1, init=init2, seed=fit_seed)
    opts3 = FitOptions(restarts=1, init=init3, seed=fit_seed)
    policy = CorrectionPolicy.ONLY_ZERO

    def nn_on(studies):
        return fit_nn(estimate_effects(studies, policy), opts2)

    fits = out["fits"]
    glmm_kinds = ((ModelKind.SBN1,) if sc.dgp == "1sbn"
                  else (ModelKind.HN, ModelKind.CBN))
    fits["nn_p"] = _try(lambda: nn_on(pop_studies))
    fits["nn_o"] = _try(lambda: nn_on(published))
    for kind in glmm_kinds:
        fits[f"{kind.value}_p"] = _try(
            lambda k=kind: fit_glmm(k, pop_studies, quad, opts2))
        fits[f"{kind.value}_o"] = _try(
            lambda k=kind: fit_glmm(k, published, quad, opts2))

    pub_effects = estimate_effects(published, policy)
    fits["copas_n"] = _try(lambda: fit_copas_n(
        pub_effects, sc.p_min, sc.p_max, opts3, spec=spec))

    def cs():
        ses = [e.se for e in pub_effects]
        gamma = gammas_from_probs_se(sc.p_min, sc.p_max, min(ses), max(ses))
        return fit_copas_shi(pub_effects, sc.p_min, sc.p_max, opts3,
                             gamma=gamma)

    fits["copas_shi"] = _try(cs)
    for kind in glmm_kinds:
        fits[f"prop_{kind.value}"] = _try(lambda k=kind: fit_proposed(
            k, published, sc.p_min, sc.p_max, quad, opts3, spec=spec))
    return out


@dataclass
class EstimatorSummary:
    attempts: int
    converged: int
    bias_x100: float
    mean_tau2: float
    coverage: float
    ci_count: int

    @property
    def convergence_rate(self) -> float:
        return 100.0 * self.converged / self.attempts if self.attempts else math.nan


@dataclass
class MetricsRow:
    scenario: Scenario
    reps: int
    degenerate: int
    mean_published: float
    rare_share_population: float
    rare_share_published: float
    estimators: dict


def run_scenario(sc: Scenario, reps: int, seed: int, jobs: int = 1) -> MetricsRow:
    """Run ``reps`` replicates and aggregate the metrics tables.

    Deterministic for a fixed (scenario, reps, seed), independent of ``jobs``:
    replicate seeds are spawned from a root sequence keyed by the seed and a
    scenario fingerprint, and aggregation runs in replicate order.
    """
    if reps < 1:
        raise ScenarioError("reps must be >= 1")
    fingerprint = int.from_bytes(
        hashlib.sha256(repr(sc).encode()).digest()[:8], "big")
    root = np.random.SeedSequence([seed, fingerprint])
    children = root.spawn(reps)
    if jobs > 1:
        with get_context("spawn").Pool(jobs) as pool:
            raw = pool.starmap(simulate_replicate,
                               [(sc, ch) for ch in children], chunksize=1)
    else:
        raw = [simulate_replicate(sc, ch) for ch in children]

    names = estimator_names(sc)
    usable = [r for r in raw if not r["degenerate"]]
    degenerate = len(raw) - len(usable)
    per_est = {}
    for name in names:
        records = [r["fits"][name] for r in usable]
        attempts = len(records)
        conv = [rec for rec in records
                if rec["converged"] and math.isfinite(rec["theta"])]
        thetas = np.array([rec["theta"] for rec in conv])
        tau2s = np.array([rec["tau2"] for rec in conv])
        with_ci = [rec for rec in conv if rec["ci"] is not None]
        n_cov = sum(rec["ci"][0] <= sc.theta <= rec["ci"][1]
                    for rec in with_ci)
        per_est[name] = EstimatorSummary(
            attempts=attempts,
            converged=len(conv),
            bias_x100=(100.0 * (float(np.mean(thetas)) - sc.theta)
                       if len(conv) else math.nan),
            mean_tau2=float(np.mean(tau2s)) if len(conv) else math.nan,
            coverage=(100.0 * n_cov / len(with_ci)
                      if with_ci else math.nan),
            ci_count=len(with_ci),
        )
    return MetricsRow(
        scenario=sc,
        reps=reps,
        degenerate=degenerate,
        mean_published=float(np.mean([r["published"] for r in usable]))
        if usable else 0.0,
        rare_share_population=float(np.mean([r["rare_p"] for r in raw])),
        rare_share_published=float(np.nanmean([r["rare_o"] for r in raw]))
        if usable else math.nan,
        estimators=per_est,
    )
