"""Network structure discovery from synchronized time series.

A semi-parametric model: each node carries an independent GP trend, and
nodes additionally receive weighted, noisy copies of the other nodes'
latent signals through a directed network. Fitting recovers a posterior
over arc existence and strength by stochastic variational inference;
companion modules audit the model's numerical-stability guarantees.
"""

from .benchmark import PlantedInstance, RocCurve, plant_instance, roc_auc, score_matrix
from .errors import (
    ConfigError,
    DegenerateTruth,
    DimensionMismatch,
    EigenFailure,
    NetgpError,
    NotPositiveDefinite,
    ShapeMismatch,
    SingularSystem,
    TrainingAbort,
    UnstableInstance,
)
from .kernels import KernelConfig, TimeGrid, chol_with_jitter, kernel_matrix, se_kernel
from .likelihood import (
    dense_covariance,
    log_ml_kron,
    log_ml_naive,
    marginal_covariance_entry,
)
from .network import (
    ModelHyper,
    NetworkParams,
    ObservationGrid,
    PriorConfig,
    StructuralMatrices,
    hadamard_mask,
    sample_prior,
    simulate_observations,
    spectral_radius,
    structural_matrices,
)
from .stability import (
    ConcreteGaussianModel,
    ModelMStats,
    SandwichBounds,
    SandwichCheck,
    check_nonsingularity,
    check_sandwich,
    folded_gaussian_bound_check,
    likelihood_envelope,
    matsushita_inequality_check,
    mgf_closed_form,
    model_m_stats,
    subgaussian_bound_check,
)
from .training import AdamConfig, FitReport, TrainConfig, adam_step, fit
from .variational import (
    ElboGradient,
    NoiseDraw,
    TemperaturePair,
    VariationalState,
    concrete_log_density,
    elbo_estimate,
    elbo_gradient,
    kl_concrete_mc,
    kl_gaussian,
    sample_concrete_logit,
    sample_weight,
)

__version__ = "0.1.0"
