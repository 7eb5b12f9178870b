"""Token-level adaptive visual attention boosting on a small constructed decoder."""

from .errors import (
    CapacityError,
    ConfigError,
    InterventionError,
    InvalidInputError,
    PreconditionError,
    ReportError,
    ShapeError,
)
from .generation import (
    AdaVBoost,
    FixedBoost,
    GenerationRequest,
    GenerationResult,
    Greedy,
    Sample,
    TokenRecord,
    Vanilla,
    generate,
    select_token,
)
from .intervention import InterventionConfig, Scope, StepModulator, apply
from .model import (
    ModelConfig,
    ModelWeights,
    Segment,
    SegmentMap,
    SyntheticImage,
    build_model,
    decode_step,
    encode_image,
    forward_full,
    load_weights,
    prefill,
    save_weights,
)
from .risk import RiskReadout, boost_strength, grounding_score, grounding_vector, normalized_entropy, readout, risk_score, vge

__version__ = "0.1.0"
