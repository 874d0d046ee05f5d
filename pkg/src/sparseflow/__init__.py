"""Sparse global matching for large-motion video frame interpolation.

The package corrects coarse intermediate optical flows in two steps: locate
likely flow errors with warp-roundtrip difference maps, then repair them
with sparse softmax-correlation matching over global feature maps, shifted
to the target timestep and convex-merged into the initial flows. Everything
runs on plain numpy arrays wrapped in small immutable grid types.
"""

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    EmptyFlowError,
    EmptySelectionError,
    EvenRadiusError,
    FusionOutOfRangeError,
    IoFailureError,
    KOutOfRangeError,
    MissingFlowFileError,
    NonFiniteValueError,
    SparseFlowError,
    TruncatedError,
)
from .types import FeatureMap, FlowField, Image, ScalarMap, constant_flow, zero_flow
from .tensor_io import (
    downscale_image_area,
    read_flo,
    read_fmap,
    read_image,
    resize_flow,
    write_flo,
    write_fmap,
    write_heatmap,
    write_image,
)
from .warping import backward_warp, forward_warp, hole_mask
from .flaws import (
    DifferenceMapPair,
    difference_maps,
    masked_difference,
    pull_back,
    raw_difference,
    warp_roundtrip,
)
from .matching import (
    SparseFlow,
    SparsePointSet,
    coordinate_map,
    match_bidirectional,
    sparse_match,
    top_k,
)
from .shifting import linear_combination, linear_reversal, shift_to_t
from .merging import WeightVolume, convex_merge, heuristic_weights, merge_pipeline
from .synthesis import constant_fusion, synthesize, upsample_flow_to_full
from .metrics import (
    endpoint_error,
    laplacian_loss,
    psnr,
    ssim,
    warp_loss,
)
from .curation import MotionStats, curate, motion_stats, sufficiency
from .scenes import (
    SceneFixture,
    corrupt_flow,
    moving_square,
    patch_features,
    positional_features,
    roll_ground_truth,
    translation_scene,
)
from .pipeline import (
    CompensationReport,
    PipelineConfig,
    compensate,
    compensate_random_baseline,
)

__version__ = "0.1.0"
