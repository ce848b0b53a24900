"""Rare-event meta-analysis with publication-bias sensitivity analysis.

Random-effects models with exact within-study likelihoods (hypergeometric and
binomial) alongside the classic normal-normal model, plus probit selection
functions on study size or standard error for assessing how selective
publication moves the pooled estimate.
"""

from .datasets import EXAMPLE_NAMES, load_example
from .dists import (DomainError, FnchSupport, binomial_log_pmf, fnch_log_pmf,
                    fnch_support, std_normal_cdf, std_normal_pdf,
                    std_normal_quantile)
from .effects import (CorrectionPolicy, EffectEstimate, OneArmStudy,
                      TwoArmStudy, UndefinedEstimateError, estimate_effects,
                      lnor_estimate, logodds_estimate)
from .estimation import (FitOptions, FitResult, fit_copas_n, fit_copas_shi,
                         fit_glmm, fit_ml, fit_model, fit_nn, fit_proposed,
                         observed_information_se, sensitivity_grid)
from .models import (TAU_MAX, TAU_MIN, CoreParams, ModelKind, QuadSpec,
                     cbn_within_loglik, glmm_marginal_loglik, hn_within_loglik,
                     nn_loglik, sbn_within_loglik)
from .selection import (RHO_MAX, CopasShiParams, SelectionParams,
                        SensitivitySpec, alphas_from_probs, copas_n_loglik,
                        copas_shi_loglik, expected_unpublished,
                        gammas_from_probs_se, proposed_conditional_loglik,
                        publish_prob, spec_for_sizes)
from .simulation import (Scenario, apply_selection, draw_effects_and_residuals,
                         gen_1sbn_population, gen_2sbn_population,
                         gen_hn_population, run_scenario)

__version__ = "0.1.0"
