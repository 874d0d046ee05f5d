"""Intermediate-frame synthesis from final flows and a fusion map."""

from __future__ import annotations

import numpy as np

from .errors import FusionOutOfRangeError
from .types import FlowField, Image, ScalarMap, require_same_grid
from .tensor_io import resize_flow
from .warping import backward_warp


def synthesize(
    i0: Image,
    i1: Image,
    ft0: FlowField,
    ft1: FlowField,
    fusion: ScalarMap,
) -> Image:
    """Blend the two backward-warped inputs under the fusion map.

    out = fusion * warp(i0, ft0) + (1 - fusion) * warp(i1, ft1), with
    clamp-border sampling; fusion values must lie in [0, 1].
    """
    require_same_grid(
        (i0.height, i0.width),
        (i1.height, i1.width),
        (ft0.height, ft0.width),
        (ft1.height, ft1.width),
        (fusion.height, fusion.width),
    )
    if fusion.data.min() < 0.0 or fusion.data.max() > 1.0:
        raise FusionOutOfRangeError(
            f"fusion values must lie in [0, 1], got "
            f"[{fusion.data.min()}, {fusion.data.max()}]"
        )
    w0 = backward_warp(i0, ft0, border="clamp")
    w1 = backward_warp(i1, ft1, border="clamp")
    o = fusion.data[None, :, :]
    return Image(o * w0.data + (1.0 - o) * w1.data)


def constant_fusion(h: int, w: int, t: float) -> ScalarMap:
    """Linear time blending: weight 1-t on the frame-0 warp."""
    if not 0.0 <= t <= 1.0:
        raise FusionOutOfRangeError(f"t must lie in [0, 1], got {t}")
    return ScalarMap(np.full((h, w), 1.0 - t))


def upsample_flow_to_full(flow: FlowField, h: int, w: int) -> FlowField:
    """Bring a matching-scale flow back to image resolution."""
    return resize_flow(flow, h, w)
