"""Gaussian averages of composite function classes.

Monte Carlo estimators for G(Y) and R(F, Y), exact D(Y) and L(F, Y), a
chain-rule verifier, constructive generic chaining, and closed-form bound
calculators for two-layer, multitask and deep compositions.
"""

from ._backend import BACKEND
from .bounds import (
    BoundReport,
    LayerSummary,
    RiskBoundInput,
    TwoLayerSpec,
    deep_iterated_bound,
    multitask_bound,
    multitask_scaling_empirical,
    risk_bound,
    two_layer_bound,
    two_layer_empirical,
)
from .chaining import (
    PartitionTree,
    SubgaussianSpec,
    build_partition_tree,
    chaining_functional,
    chaining_thresholds,
    covering_number,
    dudley_integral,
    empirical_threshold_check,
    explicit_esup_bound,
    validate_tree,
)
from .chainrule import ChainTerms, FittedConstants, chain_terms, fit_constants, proof_tail_check
from .classes import (
    KernelBallClass,
    LipschitzMap,
    TabulatedClass,
    convex_closure_sample,
    estimate_R,
    image_set,
    lipschitz_constant,
    precompose,
    quotient_set,
)
from .geometry import PointSet, concentration_tail_check, diameter, estimate_G
from .montecarlo import GaussianStream, McEstimate

__version__ = "0.1.0"
