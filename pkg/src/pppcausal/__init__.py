"""Posterior predictive p-values for causal effects in observational studies."""

from .data import ObservedSample, SimSample, load_csv, validate, write_csv
from .errors import (
    DataFormatError,
    DegenerateVarianceError,
    DesignError,
    InitializationError,
    ModelError,
    PPPError,
    SeparationError,
    SingularDesignError,
    StatisticUndefined,
    StudyReliabilityError,
    UnstableBootstrapError,
    ValidationError,
)
from .estimators import (
    EffectEstimate,
    estimate_effect,
    sandwich_se,
    studentize,
    tau_dr,
    tau_ipw_hajek,
    tau_reg,
)
from .outcome import FittedOutcome, fit_outcome_models, predict_means
from .ppp import (
    BernoulliDesign,
    CompleteRandomization,
    PValueReport,
    StatisticSpec,
    compute_statistic,
    frt_pvalue,
    normal_pvalue,
    ppp_algorithm_a,
    ppp_algorithm_b,
    ppp_pvalue,
)
from .propensity import (
    FittedPropensity,
    PosteriorDraws,
    draw_assignments,
    fit_logistic,
    log_posterior,
    predict_propensity,
    sample_posterior,
)
from .resampling import BootstrapResult, bootstrap_se

__version__ = "0.1.0"
