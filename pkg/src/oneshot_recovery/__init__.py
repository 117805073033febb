"""Non-iterative signal recovery from single index model observations under generative priors."""

from .diagnostics import (
    corollary_noise_curve,
    event_E_frequency,
    mu_hat_concentration,
    orthogonal_tail,
    theoretical_rate,
)
from .estimators import EstimatorSpec, RecoveryResult, bipg, csgm, lasso_ista, one_shot, pgd, run_estimator
from .generators import (
    LatentBall,
    Layer,
    LinearGenerator,
    MlpGenerator,
    load_generator,
    orthonormal_linear,
    random_mlp,
    save_generator,
)
from .harness import RateConfig, SweepConfig, emit_plot_data, run_rate_study, run_sweep
from .metrics import cosine_similarity, fit_rate_slope, score
from .observation import (
    MeasurementEnsemble,
    ObservationModel,
    SimParameters,
    apply_bounded_corruption,
    sample_ensemble,
    sim_parameters,
    validate_sim_assumptions,
)
from .projection import ProjectionConfig, project, project_exact_linear, project_latent
from .seeding import derive_seed, make_rng

__version__ = "0.1.0"
