"""Stable rank normalization of dense linear operators, with diagnostics and a toy MLP harness."""

from .errors import (
    DegeneratePair,
    DimensionMismatch,
    DimensionTooLarge,
    Infeasible,
    InvalidTarget,
    MalformedCsv,
    NonConvergence,
    ParseError,
    SrnError,
    ZeroMargin,
    ZeroMatrix,
    ZeroOutput,
)
from .linalg import (
    SingularTriplet,
    SvdResult,
    frobenius_norm,
    full_svd_oracle,
    power_iteration,
    stable_rank,
    top_k_svd,
)
from .normalize import (
    NormalizationReport,
    SrnConfig,
    spectral_clip_optimal,
    spectral_normalize_approx,
    srn_greedy,
    srn_layer_step,
    srn_optimal,
    truncate_rank,
)

__version__ = "0.1.0"
