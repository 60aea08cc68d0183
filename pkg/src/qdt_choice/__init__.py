"""Quantum-decision-theory models of binary risky choice, fitted per subject."""

from .errors import QDTChoiceError
from .estimation import (
    FitResult,
    ModelSpec,
    ObjectiveSpec,
    fit,
    fit_subject,
    grid_search_init,
    heldout_probabilities,
    regularized_nll,
)
from .model import (
    AttractionParams,
    Component,
    ProspectProbabilities,
    UtilityParams,
    attraction_factor,
    cpt_baseline_probability,
    option_utility_gain,
    prelec_weight,
    prospect_probabilities,
    utility_factors,
    value_fn,
)
from .simplex import SimplexConfig, nelder_mead_minimize
from .trials import (
    DerivedTrial,
    FoldPlan,
    GameTrial,
    derive_features,
    kfold_split,
    load_trials,
)

__version__ = "0.1.0"
