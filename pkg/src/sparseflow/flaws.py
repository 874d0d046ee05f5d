"""Difference-map construction: scoring each pixel's flow-error likelihood.

The roundtrip warp (backward toward the target time, forward toward the
other frame) reconstructs one input frame from the other through the
intermediate flows. Where the reconstruction disagrees with the real frame,
at least one of the flows is wrong. Splat-starved cells are occlusion or
cropping, not flow error, so the hole mask removes them before the
disagreement is pulled back onto the source frame's own pixel grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .types import FlowField, Image, ScalarMap, require_same_grid
from .warping import DEFAULT_HOLE_TAU, backward_warp, forward_warp, hole_mask


@dataclass(frozen=True)
class DifferenceMapPair:
    """Flaw scores for both source frames at one grid scale."""

    d0: ScalarMap
    d1: ScalarMap
    scale_exponent: int = 0


def warp_roundtrip(
    img: Image, f_t_to_a: FlowField, f_t_to_b: FlowField
) -> tuple[Image, ScalarMap]:
    """Backward-warp img by f_t_to_a, forward-warp the result by f_t_to_b.

    Returns the reconstructed frame and the forward-splat weight map.
    """
    require_same_grid(
        (img.height, img.width),
        (f_t_to_a.height, f_t_to_a.width),
        (f_t_to_b.height, f_t_to_b.width),
    )
    at_t = backward_warp(img, f_t_to_a, border="clamp")
    return forward_warp(at_t, f_t_to_b)


def raw_difference(i_ref: Image, i_warped: Image) -> ScalarMap:
    """Channel-summed absolute difference."""
    require_same_grid((i_ref.height, i_ref.width), (i_warped.height, i_warped.width))
    if i_ref.channels != i_warped.channels:
        raise DimensionMismatchError("channel counts disagree")
    return ScalarMap(np.abs(i_ref.data - i_warped.data).sum(axis=0))


def masked_difference(raw: ScalarMap, holes: ScalarMap) -> ScalarMap:
    """Zero the difference where the splat mask flagged holes."""
    require_same_grid((raw.height, raw.width), (holes.height, holes.width))
    return ScalarMap(raw.data * holes.data)


def pull_back(
    diff_at_target: ScalarMap, f_t_to_b: FlowField, f_t_to_a: FlowField
) -> ScalarMap:
    """Carry a difference map at frame b back onto frame a's pixel grid.

    Reverses the roundtrip: backward warp by the flow toward b, forward warp
    by the flow toward a, weight-normalized like any splat.
    """
    at_t = backward_warp(diff_at_target, f_t_to_b, border="clamp")
    pulled, _ = forward_warp(at_t, f_t_to_a)
    return pulled


def difference_maps(
    i0: Image,
    i1: Image,
    ft0: FlowField,
    ft1: FlowField,
    tau: float = DEFAULT_HOLE_TAU,
    scale_exponent: int = 0,
) -> DifferenceMapPair:
    """Score both frames' pixels for flow error at the inputs' resolution.

    The frame-0 score reconstructs frame 1 through (ft0, ft1), masks holes,
    and pulls the masked mismatch back to frame-0 coordinates; the frame-1
    score is the same construction with the roles swapped.
    """
    require_same_grid(
        (i0.height, i0.width),
        (i1.height, i1.width),
        (ft0.height, ft0.width),
        (ft1.height, ft1.width),
    )

    def one_direction(src: Image, ref: Image, f_to_src: FlowField, f_to_ref: FlowField):
        recon, weight = warp_roundtrip(src, f_to_src, f_to_ref)
        raw = raw_difference(ref, recon)
        masked = masked_difference(raw, hole_mask(weight, tau))
        return pull_back(masked, f_to_ref, f_to_src)

    d0 = one_direction(i0, i1, ft0, ft1)
    d1 = one_direction(i1, i0, ft1, ft0)
    return DifferenceMapPair(d0=d0, d1=d1, scale_exponent=scale_exponent)
