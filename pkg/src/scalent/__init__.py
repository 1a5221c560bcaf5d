"""Scaling-entropy profiles of measure-preserving systems on finite samples."""

from .cover import (
    Cover,
    EntropyValue,
    OracleLimitError,
    entropy_curve,
    estimate_entropy,
    exact_entropy,
    greedy_entropy,
    is_valid_cover,
)
from .dynamics import (
    BernoulliShift,
    CyclicRotation,
    ProductSystem,
    SubstitutionShift,
    TorusRotation,
    Transformation,
    averaged_semimetric,
    sample_space,
    shifted_semimetric,
)
from .mm_space import (
    DistanceMatrix,
    SampledSpace,
    Semimetric,
    arc_semimetric,
    cut_semimetric,
    eval_matrix,
    hamming_semimetric,
    interval_labeling,
    symbol_labeling,
    weighted_sum_semimetric,
    zero_semimetric,
)
from .profile import ProfileGrid, compute_profile, equivalent, preceq_check, stability_diagnostic
from .subadd import subadditive_hull, verify_lm_pz, verify_prop1

__version__ = "0.1.0"
