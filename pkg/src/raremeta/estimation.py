"""Maximum-likelihood fitting with transforms, numeric SEs, and grid sweeps.

All objectives are maximized over an internal vector (theta, log tau[, rho])
with box constraints keeping tau in [TAU_MIN, TAU_MAX] and rho in
[-RHO_MAX, RHO_MAX]; multi-start with jittered initials keeps the best local
maximizer.  Standard errors come from the central finite-difference Hessian of
the natural-scale log-likelihood at the MLE; coordinates sitting on a box
boundary are excluded and their SEs reported as absent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .effects import CorrectionPolicy, estimate_effects
from .models import (TAU_MAX, TAU_MIN, CoreParams, ModelKind, QuadSpec,
                     glmm_marginal_loglik, nn_loglik)
from .selection import (RHO_MAX, CopasShiParams, SelectionParams,
                        SensitivitySpec, copas_n_loglik, copas_shi_loglik,
                        expected_unpublished, gammas_from_probs_se,
                        m_from_probs, proposed_conditional_loglik,
                        spec_for_sizes, std_normal_cdf)

Z975 = 1.959963984540054

_LOG_TAU_BOUNDS = (math.log(TAU_MIN), math.log(TAU_MAX))
_RHO_BOUNDS = (-RHO_MAX, RHO_MAX)

GRID_METHODS = ("proposed-hn", "proposed-cbn", "proposed-1sbn",
                "copas-n", "copas-shi")

DEFAULT_PMIN_GRID = (0.99, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)
DEFAULT_PMAX = 0.999


class InitializationError(RuntimeError):
    """Objective non-finite at every starting point."""


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 500
    f_tol: float = 1e-10
    x_tol: float = 1e-9
    restarts: int = 5
    init: tuple | None = None  # natural-scale (theta, tau[, rho])
    seed: int = 20260501


@dataclass
class FitResult:
    """ML estimates on the natural scale plus Wald inference and diagnostics."""

    method: str
    params: dict
    se: dict
    ci: dict
    loglik: float
    converged: bool
    on_boundary: tuple = ()
    m_raw: float | None = None
    p_min: float | None = None
    p_max: float | None = None
    error: str | None = None
    z_internal: tuple = field(default=(), repr=False)

    @property
    def m_rounded(self):
        if self.m_raw is None:
            return None
        return int(math.floor(self.m_raw + 0.5))

    @property
    def theta(self):
        return self.params["theta"]


@dataclass
class OptResult:
    x: np.ndarray
    loglik: float
    converged: bool


def _clip_tau(tau: float) -> float:
    return min(max(tau, TAU_MIN), TAU_MAX)


def _clip_rho(rho: float) -> float:
    return min(max(rho, -RHO_MAX), RHO_MAX)


def fit_ml(objective, opts: FitOptions, starts, bounds) -> OptResult:
    """Maximize ``objective`` over a box, multi-start, best result kept.

    ``starts`` is a sequence of initial vectors; ``opts.restarts`` jittered
    copies of the first start (uniform +-0.1 per coordinate, clipped into the
    box) are appended.  Quasi-Newton (L-BFGS-B) with numeric gradients runs
    first; Nelder-Mead is the fallback when it reports failure.  Converging
    nowhere is flagged in the result, not raised.

    Raises
    ------
    InitializationError
        If the objective is non-finite at every start.
    """
    rng = np.random.default_rng(opts.seed)
    starts = [np.asarray(s, dtype=float) for s in starts]
    primary = starts[0]
    lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
    for _ in range(opts.restarts):
        jit = primary + rng.uniform(-0.1, 0.1, size=primary.size)
        starts.append(np.clip(jit, lo, hi))

    def neg(z):
        v = objective(z)
        return -v if np.isfinite(v) else np.inf

    best_conv = None
    best_all = None
    any_finite = False
    for x0 in starts:
        x0 = np.clip(x0, lo, hi)
        if not np.isfinite(objective(x0)):
            continue
        any_finite = True
        res = minimize(neg, x0, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": opts.max_iter, "ftol": opts.f_tol})
        if not res.success:
            nm = minimize(neg, res.x, method="Nelder-Mead", bounds=bounds,
                          options={"maxiter": 4 * opts.max_iter,
                                   "fatol": max(opts.f_tol, 1e-10),
                                   "xatol": opts.x_tol})
            if nm.fun <= res.fun:
                res = nm
        cand = OptResult(np.clip(res.x, lo, hi), -res.fun, bool(res.success))
        if best_all is None or cand.loglik > best_all.loglik:
            best_all = cand
        if cand.converged and (best_conv is None
                               or cand.loglik > best_conv.loglik):
            best_conv = cand
    if not any_finite:
        raise InitializationError("objective non-finite at every start")
    # a clean convergence wins unless an unconverged run found a clearly
    # higher maximum, which then gets reported with the flag down
    if best_conv is not None and best_conv.loglik >= best_all.loglik - 1e-6:
        return best_conv
    return best_all


def observed_information_se(objective, mle, bounds=None):
    """SEs from the central finite-difference Hessian at the MLE.

    ``objective`` is the log-likelihood on the NATURAL scale and ``mle`` the
    natural-scale optimum.  Coordinates on (or within a step of) a bound are
    excluded from differentiation and get ``nan`` SEs, as does everything when
    the negated Hessian is not positive definite.

    Returns
    -------
    se : ndarray
        Per-parameter SEs, ``nan`` where unavailable.
    ok : bool
        True when the interior-block Hessian was positive definite.
    """
    x = np.asarray(mle, dtype=float)
    p = x.size
    if bounds is None:
        bounds = [(None, None)] * p
    h = np.empty(p)
    interior = []
    for i in range(p):
        step = 1e-4 * max(1.0, abs(x[i]))
        lo_i, hi_i = bounds[i]
        if lo_i is not None:
            step = min(step, (x[i] - lo_i) / 2.0)
        if hi_i is not None:
            step = min(step, (hi_i - x[i]) / 2.0)
        h[i] = step
        if step > 1e-8 * max(1.0, abs(x[i])):
            interior.append(i)
    se = np.full(p, np.nan)
    if not interior:
        return se, False
    f0 = objective(x)
    k = len(interior)
    H = np.empty((k, k))
    for a, i in enumerate(interior):
        ei = np.zeros(p)
        ei[i] = h[i]
        H[a, a] = (objective(x + ei) - 2.0 * f0 + objective(x - ei)) / h[i] ** 2
        for b in range(a + 1, k):
            j = interior[b]
            ej = np.zeros(p)
            ej[j] = h[j]
            val = (objective(x + ei + ej) - objective(x + ei - ej)
                   - objective(x - ei + ej) + objective(x - ei - ej))
            H[a, b] = H[b, a] = val / (4.0 * h[i] * h[j])
    try:
        np.linalg.cholesky(-H)
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        return se, False
    d = np.diag(cov)
    if np.any(d <= 0):
        return se, False
    for a, i in enumerate(interior):
        se[i] = math.sqrt(d[a])
    return se, True


def _boundary_names(z, bounds, names, atol=1e-7):
    out = []
    for zi, (lo, hi), name in zip(z, bounds, names):
        if lo is not None and zi - lo <= atol:
            out.append(name)
        elif hi is not None and hi - zi <= atol:
            out.append(name)
    return tuple(out)


def _wald(params, se, names):
    ci = {}
    se_d = {}
    for i, name in enumerate(names):
        if np.isfinite(se[i]):
            se_d[name] = float(se[i])
            ci[name] = (params[name] - Z975 * se[i], params[name] + Z975 * se[i])
        else:
            se_d[name] = None
            ci[name] = None
    return se_d, ci


def _finish(method, opt, bounds, names, natural_objective, has_rho,
            m_raw=None, p_min=None, p_max=None) -> FitResult:
    z = opt.x
    nat = np.array([z[0], math.exp(z[1])] + ([z[2]] if has_rho else []))
    params = {"theta": float(nat[0]), "tau": float(nat[1])}
    if has_rho:
        params["rho"] = float(nat[2])
    nat_bounds = [(None, None), (TAU_MIN, TAU_MAX)]
    if has_rho:
        nat_bounds.append(_RHO_BOUNDS)
    se, _ = observed_information_se(natural_objective, nat, nat_bounds)
    se_d, ci = _wald(params, se, names)
    on_boundary = _boundary_names(z, bounds, names)
    converged = bool(opt.converged and np.all(np.isfinite(nat)))
    return FitResult(method=method, params=params, se=se_d, ci=ci,
                     loglik=float(opt.loglik), converged=converged,
                     on_boundary=on_boundary, m_raw=m_raw,
                     p_min=p_min, p_max=p_max, z_internal=tuple(z))


def _crude_effect_start(effects):
    th = np.array([e.theta_hat for e in effects])
    w = 1.0 / (np.array([e.se for e in effects]) ** 2)
    theta0 = float(np.sum(w * th) / np.sum(w))
    tau0 = float(max(np.std(th), 2 * TAU_MIN))
    return theta0, tau0


def _starts_2(init, theta0, tau0):
    if init is not None:
        return [np.array([init[0], math.log(_clip_tau(init[1]))])]
    return [np.array([theta0, math.log(_clip_tau(tau0))]),
            np.array([theta0, math.log(0.5)])]


def _starts_3(init, theta0, tau0, extra_starts=()):
    pre = [np.array([t, math.log(_clip_tau(u)), _clip_rho(r)])
           for (t, u, r) in extra_starts]
    if init is not None:
        theta0, tau0 = init[0], init[1]
        rho0 = init[2] if len(init) > 2 else 0.0
        return pre + [np.array([theta0, math.log(_clip_tau(tau0)),
                                _clip_rho(rho0)])]
    u0 = math.log(_clip_tau(tau0))
    return pre + [np.array([theta0, u0, r]) for r in (0.0, 0.5, -0.5)]


def fit_nn(effects, opts: FitOptions = FitOptions()) -> FitResult:
    """ML fit of the NN model to precomputed effect estimates."""

    def f_int(z):
        return nn_loglik(CoreParams(z[0], _clip_tau(math.exp(z[1]))), effects)

    def f_nat(v):
        return nn_loglik(CoreParams(v[0], _clip_tau(v[1])), effects)

    theta0, tau0 = _crude_effect_start(effects)
    bounds = [(None, None), _LOG_TAU_BOUNDS]
    opt = fit_ml(f_int, opts, _starts_2(opts.init, theta0, tau0), bounds)
    return _finish("nn", opt, bounds, ("theta", "tau"), f_nat, has_rho=False)


def fit_glmm(kind: ModelKind, studies, quad: QuadSpec = QuadSpec(),
             opts: FitOptions = FitOptions()) -> FitResult:
    """ML fit of an HN / CBN / 1SBN marginal likelihood."""

    def f_int(z):
        return glmm_marginal_loglik(
            kind, CoreParams(z[0], _clip_tau(math.exp(z[1]))), studies, quad)

    def f_nat(v):
        return glmm_marginal_loglik(
            kind, CoreParams(v[0], _clip_tau(v[1])), studies, quad)

    effects = estimate_effects(studies, CorrectionPolicy.ONLY_ZERO)
    theta0, tau0 = _crude_effect_start(effects)
    bounds = [(None, None), _LOG_TAU_BOUNDS]
    opt = fit_ml(f_int, opts, _starts_2(opts.init, theta0, tau0), bounds)
    return _finish(kind.value, opt, bounds, ("theta", "tau"), f_nat,
                   has_rho=False)


def fit_proposed(kind: ModelKind, studies, p_min: float, p_max: float,
                 quad: QuadSpec = QuadSpec(), opts: FitOptions = FitOptions(),
                 spec: SensitivitySpec | None = None,
                 extra_starts=()) -> FitResult:
    """Sensitivity fit of the GLMM-based conditional likelihood.

    ``spec`` overrides the default anchoring of (p_min, p_max) at the
    smallest/largest published study; the simulation harness uses it to fix
    the selection function at its true values.
    """
    if spec is None:
        spec = spec_for_sizes(p_min, p_max, [s.n_total for s in studies])

    def f_int(z):
        return proposed_conditional_loglik(
            kind,
            SelectionParams(CoreParams(z[0], _clip_tau(math.exp(z[1]))),
                            _clip_rho(z[2])),
            spec, studies, quad)

    def f_nat(v):
        return proposed_conditional_loglik(
            kind, SelectionParams(CoreParams(v[0], _clip_tau(v[1])),
                                  _clip_rho(v[2])),
            spec, studies, quad)

    if opts.init is None:
        base = fit_glmm(kind, studies, quad,
                        FitOptions(restarts=2, seed=opts.seed))
        starts = _starts_3(None, base.params["theta"], base.params["tau"],
                           extra_starts)
    else:
        starts = _starts_3(opts.init, 0.0, 0.5, extra_starts)
    bounds = [(None, None), _LOG_TAU_BOUNDS, _RHO_BOUNDS]
    opt = fit_ml(f_int, opts, starts, bounds)
    m = expected_unpublished(spec, [s.n_total for s in studies])
    return _finish(f"proposed-{kind.value}", opt, bounds,
                   ("theta", "tau", "rho"), f_nat, has_rho=True,
                   m_raw=m, p_min=spec.p_min, p_max=spec.p_max)


def fit_copas_n(effects, p_min: float, p_max: float,
                opts: FitOptions = FitOptions(),
                spec: SensitivitySpec | None = None,
                extra_starts=()) -> FitResult:
    """Sensitivity fit of the size-based NN selection likelihood."""
    ns = [e.n_total for e in effects]
    if spec is None:
        spec = spec_for_sizes(p_min, p_max, ns)
    gamma = CopasShiParams(spec.alpha0, spec.alpha1)

    def f_int(z):
        return copas_n_loglik(CoreParams(z[0], _clip_tau(math.exp(z[1]))),
                              _clip_rho(z[2]), gamma, effects)

    def f_nat(v):
        return copas_n_loglik(CoreParams(v[0], _clip_tau(v[1])),
                              _clip_rho(v[2]), gamma, effects)

    if opts.init is None:
        base = fit_nn(effects, FitOptions(restarts=2, seed=opts.seed))
        starts = _starts_3(None, base.params["theta"], base.params["tau"],
                           extra_starts)
    else:
        starts = _starts_3(opts.init, 0.0, 0.5, extra_starts)
    bounds = [(None, None), _LOG_TAU_BOUNDS, _RHO_BOUNDS]
    opt = fit_ml(f_int, opts, starts, bounds)
    m = expected_unpublished(spec, ns)
    return _finish("copas-n", opt, bounds, ("theta", "tau", "rho"), f_nat,
                   has_rho=True, m_raw=m, p_min=spec.p_min, p_max=spec.p_max)


def fit_copas_shi(effects, p_min: float, p_max: float,
                  opts: FitOptions = FitOptions(),
                  gamma: CopasShiParams | None = None,
                  extra_starts=()) -> FitResult:
    """Sensitivity fit of the SE-based NN selection likelihood.

    (p_min, p_max) anchor at the largest and smallest observed SE.
    """
    s = [e.se for e in effects]
    if gamma is None:
        gamma = gammas_from_probs_se(p_min, p_max, min(s), max(s))

    def f_int(z):
        return copas_shi_loglik(CoreParams(z[0], _clip_tau(math.exp(z[1]))),
                                _clip_rho(z[2]), gamma, effects)

    def f_nat(v):
        return copas_shi_loglik(CoreParams(v[0], _clip_tau(v[1])),
                                _clip_rho(v[2]), gamma, effects)

    if opts.init is None:
        base = fit_nn(effects, FitOptions(restarts=2, seed=opts.seed))
        starts = _starts_3(None, base.params["theta"], base.params["tau"],
                           extra_starts)
    else:
        starts = _starts_3(opts.init, 0.0, 0.5, extra_starts)
    bounds = [(None, None), _LOG_TAU_BOUNDS, _RHO_BOUNDS]
    opt = fit_ml(f_int, opts, starts, bounds)
    m = m_from_probs([std_normal_cdf(gamma.gamma0 + gamma.gamma1 / si)
                      for si in s])
    return _finish("copas-shi", opt, bounds, ("theta", "tau", "rho"), f_nat,
                   has_rho=True, m_raw=m, p_min=p_min, p_max=p_max)


def fit_model(kind: ModelKind, studies, policy=CorrectionPolicy.ONLY_ZERO,
              quad: QuadSpec = QuadSpec(),
              opts: FitOptions = FitOptions()) -> FitResult:
    """No-selection fit dispatch: NN needs a correction policy, GLMMs do not."""
    if kind is ModelKind.NN:
        return fit_nn(estimate_effects(studies, policy), opts)
    return fit_glmm(kind, studies, quad, opts)


def sensitivity_grid(method: str, studies, grid=None,
                     policy=CorrectionPolicy.ONLY_ZERO,
                     quad: QuadSpec = QuadSpec(),
                     opts: FitOptions = FitOptions()):
    """One sensitivity fit per (p_min, p_max) pair, ordered by falling p_min.

    Each row adds the previous row's solution to its start set, so the sweep
    tracks one likelihood branch; rows that fail to converge are recorded
    in-row and never abort the sweep.
    """
    if method not in GRID_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {GRID_METHODS}")
    if grid is None:
        grid = [(p, DEFAULT_PMAX) for p in DEFAULT_PMIN_GRID]
    grid = sorted(grid, key=lambda pq: -pq[0])
    if not grid:
        raise ValueError("empty sensitivity grid")

    needs_effects = method in ("copas-n", "copas-shi")
    effects = estimate_effects(studies, policy) if needs_effects else None

    rows = []
    warm = ()
    for p_min, p_max in grid:
        try:
            if method == "copas-n":
                res = fit_copas_n(effects, p_min, p_max, opts,
                                  extra_starts=warm)
            elif method == "copas-shi":
                res = fit_copas_shi(effects, p_min, p_max, opts,
                                    extra_starts=warm)
            else:
                kind = ModelKind(method.removeprefix("proposed-"))
                res = fit_proposed(kind, studies, p_min, p_max, quad, opts,
                                   extra_starts=warm)
        except (InitializationError, RuntimeError) as exc:
            res = FitResult(method=method, params={}, se={}, ci={},
                            loglik=math.nan, converged=False,
                            p_min=p_min, p_max=p_max, error=str(exc))
            rows.append(res)
            continue
        if res.converged:
            warm = ((res.params["theta"], res.params["tau"],
                     res.params.get("rho", 0.0)),)
        rows.append(res)
    return rows
