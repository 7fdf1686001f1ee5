"""Simulation and bound verification for continual learning of dependent
nonlinear-regression tasks."""

from .bounds import (
    BoundInputs,
    BoundResult,
    ConditionReport,
    bound_nu0,
    bound_sigma0,
    derive_inputs,
    net_size,
    radii,
    sample_condition,
    theorem_bound,
    validate_norm_concentration,
    validate_projection_difference,
)
from .datagen import (
    SampleStore,
    TaskSequenceSpec,
    export_csv,
    fresh_eval_batch,
    generate_full,
    import_csv,
    sample_task1,
)
from .learner import (
    DistillConfig,
    ReplayObjective,
    TrainOutcome,
    WeightScheme,
    fit_distill_sequence,
    fit_replay,
    fit_weighted_dependent,
    objective_value,
)
from .memory import MemoryPolicy, balance_report, restrict
from .metrics import (
    DiscrepancyResult,
    ErrorReport,
    SupEstimate,
    TaskInputLaw,
    discrepancy_distance,
    estimate_kappa,
    estimate_m2,
    estimation_error,
)
from .models import (
    DirectDifferenceMap,
    ModelSpec,
    ParameterSpace,
    Predictor,
    eval_G,
    evaluate,
    project,
)
from .transforms import (
    DependencyChain,
    Transformation,
    affine,
    apply,
    chain_of,
    compose,
    from_record,
    identity,
    lipschitz_constants,
    permutation,
    rotation,
    rotation_from_planes,
    scaling,
)

__version__ = "0.1.0"
