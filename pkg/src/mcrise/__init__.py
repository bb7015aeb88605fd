"""Black-box saliency engine.

Computes positional saliency (RISE), debiased saliency, and per-color
saliency stacks (MC-RISE) for any classifier reachable through a batch
scoring interface, and evaluates explanations with deletion-style metrics.
"""

__version__ = "0.1.0"

from .errors import ConfigError, ScorerResponseError, TransportError
from .estimators import (
    ColorResponseMap,
    ColorSaliencyStack,
    SaliencyMap,
    classify_color_response,
    debiased_saliency,
    mcrise_saliency,
    rise_saliency,
)
from .maskgen import (
    DEFAULT_COLORS,
    ColorMaskSample,
    RunConfig,
    apply_binary_mask,
    apply_color_mask,
    binary_mask,
    color_mask,
)
from .metrics import DeletionCurve, ca_deletion, deletion_curve, trapezoid_auc
from .modelio import (
    ConstantSpec,
    HttpScorer,
    IgnorePixelSpec,
    LinearMixScorer,
    ModelScorer,
    PixelLinearSpec,
    RegionColorSpec,
    SyntheticScorer,
    make_synthetic_scorer,
    reid_confidence,
)
from .oracle import (
    OracleConfig,
    exact_debiased,
    exact_mcrise,
    exact_rise,
)

__all__ = [
    "__version__",
    "ConfigError",
    "ScorerResponseError",
    "TransportError",
    "ColorResponseMap",
    "ColorSaliencyStack",
    "SaliencyMap",
    "classify_color_response",
    "debiased_saliency",
    "mcrise_saliency",
    "rise_saliency",
    "DEFAULT_COLORS",
    "ColorMaskSample",
    "RunConfig",
    "apply_binary_mask",
    "apply_color_mask",
    "binary_mask",
    "color_mask",
    "DeletionCurve",
    "ca_deletion",
    "deletion_curve",
    "trapezoid_auc",
    "ConstantSpec",
    "HttpScorer",
    "IgnorePixelSpec",
    "LinearMixScorer",
    "ModelScorer",
    "PixelLinearSpec",
    "RegionColorSpec",
    "SyntheticScorer",
    "make_synthetic_scorer",
    "reid_confidence",
    "OracleConfig",
    "exact_debiased",
    "exact_mcrise",
    "exact_rise",
]
