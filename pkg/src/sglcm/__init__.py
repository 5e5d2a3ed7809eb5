"""Sparse-graph latent class models for multivariate categorical data.

Identifiability checking of the latent structure, forward simulation, a
Polya-Gamma augmented Gibbs sampler with spike-and-slab graph selection
(fixed or shrinkage-selected latent dimension), and evaluation of
latent-structure recovery.
"""

from .core import (
    ConstraintMatrix,
    Dataset,
    GraphicalMatrix,
    LcmParams,
    TwoLayerParams,
    attribute_distribution,
    binary_patterns,
    constraint_matrix_from_graph,
    lcm_cell_probability,
    marginal_y_probability,
    two_layer_conditional,
    two_layer_to_lcm,
)
from .errors import CapacityError, DataError, InputError, NumericalError
from .gibbs import (
    ChainState,
    PosteriorDraws,
    SamplerConfig,
    estimate_k_star,
    run_chain,
)
from .identify import (
    IdVerdict,
    check_generic,
    check_multilayer,
    check_strict_corollary,
    check_strict_theorem1,
    check_two_layer,
    has_distinct_columns,
    khatri_rao,
    kr_rank_oracle,
)
from .pg import sample_pg, sample_pg_many
from .postproc import (
    EvalReport,
    align_columns,
    evaluate_run,
    posterior_mode_estimates,
    recovery_errors,
    rmse_blocks,
)
from .simulate import (
    BooleanLayer,
    MainEffectLayer,
    MultinomialLayer,
    SimOutput,
    reference_truth,
    simulate_pyramid,
    simulate_two_layer,
)

__version__ = "0.1.0"
