"""Two-stage orthogonal statistical learning at desk scale.

Split-sample estimation with a damped Newton second stage, concrete partially
linear and semi-parametric logistic models, orthogonality and stability
diagnostics, and Monte Carlo sweeps that measure excess-risk decay rates.
"""

from .errors import (
    ContractViolationError,
    NumericDomainError,
    OslearnError,
    SweepFailureError,
    UnsupportedOperationError,
)
from .model_core import (
    EmpiricalMoments,
    LossModel,
    Sample,
    SampleBatch,
    check_gradient_consistency,
    check_hessian_consistency,
    empirical_moments,
    empirical_risk,
)
from .solver import FitReport, SolverOptions, newton_decrement, newton_minimize
from .nuisance import (
    NuisanceConfig,
    NuisanceFn,
    TrigFunction,
    basis_features,
    corrupt_oracle,
    fit_first_stage,
    sup_norm_distance,
    unit_direction,
)
from .losses import (
    LogitDgp,
    LogitLossModel,
    PlmDgp,
    PlmLossModel,
    default_logit_dgp,
    default_plm_dgp,
    logit_model,
    plm_excess_risk,
    plm_model,
    plm_unresidualized_excess_risk,
    plm_unresidualized_model,
    sample,
    self_concordance_ratio,
)
from .orthogonalize import (
    default_nuisance_directions,
    orthogonal_score,
    orthogonality_defect,
)
from .diagnostics import (
    EffDimReport,
    EigendecayRegime,
    StabilityReport,
    comparison_dimension,
    effective_dimension,
    eigendecay_regimes,
    hessian_stability,
    profile_effective_dimension,
)
from .experiments import (
    NuisanceMode,
    RunResult,
    SweepConfig,
    SweepRecord,
    SweepResult,
    derive_seed,
    effective_dimension_estimate,
    rate_sweep,
    run_osl,
    slope_fit,
)

__version__ = "0.1.0"
