"""dragkit: drag-field estimation, token injection, and position-consistent
attention on a deterministic toy transformer, with file formats, a CLI, and
an HTTP edit service on top."""

from .attention import (
    NEG_BIAS,
    AttentionMask,
    MaskPolicy,
    RopeTable,
    TokenTensor,
    apply_rope,
    build_overlap_mask,
    grid_positions,
    joint_attention,
    re_encode_reference_keys,
)
from .errors import (
    ConflictingControlPoints,
    DragkitError,
    EmptySourceRegion,
    InvalidLambda,
    InvalidStep,
    MalformedSpec,
    MaskSizeMismatch,
    MissingPosition,
    NonFiniteInput,
    ShapeMismatch,
)
from .harness import (
    BlockRecord,
    DragOutputs,
    HarnessConfig,
    RunTrace,
    run_mechanism,
    stream_values,
    synth_tokens,
)
from .injection import (
    FeatureGrid,
    InjectionConfig,
    LambdaSchedule,
    blend,
    lambda_at,
    warp_reference,
)
from .lrm import (
    BinaryMask,
    Correspondence,
    DragPair,
    LrmConfig,
    Point2,
    VectorField,
    build_coarse_target,
    forward_displacement,
    reverse_displacement,
    reverse_map,
    round_half_away,
)

__version__ = "0.1.0"
