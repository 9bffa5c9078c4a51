"""Digit-lattice segmentation: derivative-free regression by digitwise
combinatorial descent against a black-box forward model."""

from .errors import ConfigError, ContractError, DomainError, InvalidDigitError
from .lattice import (
    DigitConfig,
    DigitVector,
    clipping_error_bound,
    decode,
    lattice_range,
    perturb,
    project,
)
from .models import (
    ForwardModel,
    InterpolatedModel,
    LinearModel,
    LossSpec,
    WaveModel,
    deceptive_instance,
    digit_sensitivity,
    error,
    geometric_weights,
    loss,
)
from .refine import (
    GridStage,
    RefinementConfig,
    entropy_refine_hook,
    fine_tune,
    multiscale_refine,
)
from .sampler import (
    EmpiricalDigitDistribution,
    McEstimate,
    NoiseModel,
    RegisterDistribution,
    SamplerSpec,
    candidates,
    entropy,
    entropy_threshold,
    full_candidates,
    majority_vote,
    measure_mse,
    mse_upper_bound,
    predict_mse,
    refine_flag,
    sample,
    shots_required,
)
from .search import (
    RunReport,
    SearchConfig,
    TraceRow,
    annealed_restarts,
    annealed_select,
    beam_segment,
    call_count_prediction,
    greedy_segment,
    hybrid_segment,
)
from .harness import ExperimentConfig, RunArtifacts, preset, run

__version__ = "0.1.0"
