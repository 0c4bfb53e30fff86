"""Max-ent policy composition on exactly solvable tabular MDPs.

Library + CLI implementing and cross-validating transfer composition
methods (compositional optimism, max-ent GPI, divergence correction and
its cheap variants, direct conditional solving) against exact tabular
oracles, plus the self-normalized importance-sampling toolkit used for
Boltzmann policies over bounded continuous action spaces.
"""

from .mdp import (
    GridSpec,
    TabularMdp,
    TaskWeights,
    build_grid_world,
    build_pointmass_grid,
    build_task_suite,
    validate,
)
from .solver import (
    SoftSolution,
    SolveConfig,
    SuccessorFeatures,
    boltzmann_policy,
    compute_successor_features,
    evaluate_policy_maxent,
    soft_value_iteration,
)
from .compose import (
    METHODS,
    ComposedPolicy,
    CorrectionTable,
    compose_co,
    compose_condq,
    compose_dc,
    compose_gpi,
    dc_cheap,
    dc_cheap_gpi,
    dc_fixed_point,
    dc_n_fixed_point,
    renyi_correction_step,
)

__version__ = "0.1.0"
