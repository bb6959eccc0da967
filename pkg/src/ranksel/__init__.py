"""Rank-sum based robust model selection with bootstrap confidence sets."""

from .bootstrap import (BootstrapConfig, BootstrapResult, multiplier_min_bootstrap,
                        normal_quantile, p_value, run_min_bootstrap)
from .errors import (ConfigError, ContractError, DataError, LearnerError,
                     NumericalError, RankselError)
from .models import (Dataset, FittedLinear, LambdaPath, LossFn, adaptive_tau,
                     enumerate_subsets, fit_huber, fit_huber_adaptive,
                     fit_huber_lasso, fit_ols, huber_location, lambda_fold_correction,
                     lambda_path, loss_eval, mad_scale)
from .ranksum import (EmpiricalCdf, LossPanel, PairStats, conformal_pvalue_single,
                      gamma_hat, pair_stats, projection_estimates, ranksum_u,
                      se_ranksum, xi_element)
from .rng import TieStreams, keyed_stream, multiplier_matrix, subseed
from .select import (Candidate, ConfidenceSet, SelectionConfig, cv_select,
                     cvc_style_select, make_folds, make_split, panel_from_folds,
                     panel_from_split, pcv_select, rsr_from_panel, rsr_split,
                     rsr_vfold, screen)
from .simlab import (AggregateReport, Case1Config, Case2Config, ar1_design,
                     run_case1, run_case2, sample_ar1_gaussian, sample_student_t,
                     subset_candidates)

__version__ = "0.1.0"
