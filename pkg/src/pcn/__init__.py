"""Predictive-coding network engine.

Activities and weights both descend a free energy equal to the sum of
squared layerwise prediction errors: inference relaxes the activities to
an equilibrium (prospective configuration), then a local Hebbian update
consolidates the change into the weights.  Exact backpropagation and
target-propagation baselines plus closed-form linear equilibria serve as
oracles, and a CLI experiment runner emits every figure panel and theorem
check as deterministic CSV traces.
"""

from .analytic import (
    EquilibriumSolution,
    convexity_certificate,
    linear_equilibrium_layer,
    path_to_convergence,
    precision_equilibrium_layer,
    solve_linear_network_equilibrium,
)
from .baselines import Adjoints, TPTargets, backprop, backprop_through_activities, bp_train, targetprop_targets
from .data import Dataset, load_mnist_idx, synthetic_digits, synthetic_gaussian
from .estimator import PCClassifier, PCRegressor
from .exceptions import (
    DefinitenessError,
    DivergenceError,
    DomainError,
    IdxFormatError,
    NonConvergenceError,
    NonInvertibleActivationError,
    PcnError,
)
from .inference import (
    ActivityState,
    ClampMode,
    InferenceSettings,
    InferenceTrace,
    InitMode,
    activity_step,
    compute_errors,
    init_activities,
    precision_activity_step,
    run_inference,
)
from .learning import (
    SgdMomentum,
    TrainRecord,
    TrainSettings,
    accuracy,
    em_train_step,
    energy_gradient_bound_check,
    mse_loss,
    train,
    weight_gradient,
)
from .linalg import matrix_exponential, min_eigenvalue_symmetric, pseudoinverse, solve_spd
from .metrics import (
    EnergyReport,
    activity_gradient,
    cosine_similarity,
    distance_to_reference,
    energy_report,
    lambda_energy,
    marginal_condition_residual,
    total_energy,
)
from .network import (
    ActivationKind,
    Network,
    NetworkSpec,
    activation_apply,
    activation_derivative,
    activation_inverse,
    build_network,
    forward_pass,
    load_network,
    mlp_spec,
    save_network,
)

__version__ = "0.1.0"
