"""End-to-end flow compensation: flaw maps, matching, shift, merge.

The pipeline consumes full-resolution frames and initial intermediate flows
plus feature maps at the matching scale, and produces corrected
full-resolution flows. All sparse work happens on the feature grid
(H/2^i x W/2^i): difference maps are computed there so top-k indices address
feature cells directly, and the merge result returns to full resolution as
an upsampled residual added onto the initial flows, which leaves them
bit-level untouched wherever no correction applies.

Two guards keep corrections honest. Matched flows are photometrically
verified before shifting: a correspondence p -> p + f only survives if the
source pixel actually resembles the target it points at, which discards
matches from occluded content (such content has no true correspondence, so
its softmax row is noise). And compensation cells whose shifted flaw
evidence falls below ``trust_floor`` are dropped before merging: near-zero
difference maps mean the initial flows already explain both frames, and an
unrequested correction could only do harm there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flaws import difference_maps, raw_difference
from .matching import (
    DEFAULT_SIMILARITY_BUDGET,
    SparseFlow,
    SparsePointSet,
    sparse_match,
    top_k,
)
from .merging import DEFAULT_GAIN, DEFAULT_RADIUS, convex_merge, heuristic_weights
from .metrics import endpoint_error
from .shifting import shift_to_t, splat_sparse_values
from .tensor_io import downscale_image_area, resize_flow
from .types import FeatureMap, FlowField, Image, ScalarMap
from .warping import DEFAULT_HOLE_TAU, backward_warp

from .errors import DimensionMismatchError


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs shared by every compensation run."""

    tau: float = DEFAULT_HOLE_TAU
    radius: int = DEFAULT_RADIUS
    gain: float = DEFAULT_GAIN
    temperature: float = 1.0
    trust_floor: float = 0.02
    verify_threshold: float = 0.05
    similarity_budget: int = DEFAULT_SIMILARITY_BUDGET


@dataclass
class CompensationReport:
    """Per-stage statistics from one compensation run."""

    k: int
    scale: int
    mean_d0: float
    mean_d1: float
    support_f01: int
    support_f10: int
    verified_f01: int
    verified_f10: int
    support_ft1: int
    support_ft0: int
    effective_ft1: int
    effective_ft0: int
    epe_ft0: float | None = None
    epe_ft1: float | None = None


def _downscale_flow(flow: FlowField, hs: int, ws: int) -> FlowField:
    return resize_flow(flow, hs, ws)


def _shifted_trust(
    d: ScalarMap, matched: SparseFlow, move: float, h: int, w: int
) -> ScalarMap:
    """Carry flaw scores to the cells their corrections landed on."""
    vals = d.data.ravel()[matched.support.indices][:, None]
    disp = FlowField(move * matched.grid.u, move * matched.grid.v)
    acc, wacc = splat_sparse_values(vals, matched.support, disp, h, w)
    out = np.zeros((h, w))
    covered = wacc > 0
    out[covered] = acc[0][covered] / wacc[covered]
    return ScalarMap(out)


def _restrict_support(sf: SparseFlow, keep: np.ndarray) -> SparseFlow | None:
    """Drop support cells where keep is false; None when nothing is left."""
    mask = keep.ravel()[sf.support.indices]
    if not mask.any():
        return None
    if mask.all():
        return sf
    idx = sf.support.indices[mask]
    h, w = sf.grid.height, sf.grid.width
    u = np.zeros(h * w)
    v = np.zeros(h * w)
    u[idx] = sf.grid.u.ravel()[idx]
    v[idx] = sf.grid.v.ravel()[idx]
    return SparseFlow(
        grid=FlowField(u.reshape(h, w), v.reshape(h, w)),
        support=SparsePointSet(idx, sf.support.scores[mask]),
    )


def _verify_matches(
    matched: SparseFlow, img_src: Image, img_dst: Image, threshold: float
) -> SparseFlow | None:
    """Keep only matches whose source pixel resembles the pixel it points at.

    The residual is the channel-summed absolute difference between the
    source frame and the destination frame sampled along the matched flow,
    evaluated at support cells. Occluded content fails this for every
    possible flow, so its (necessarily spurious) matches are discarded.
    """
    if not np.isfinite(threshold):
        return matched
    resampled = backward_warp(img_dst, matched.grid, border="clamp")
    residual = raw_difference(img_src, resampled)
    return _restrict_support(matched, residual.data <= threshold)


def _merge_direction(
    main_scale: FlowField,
    comp: SparseFlow | None,
    trust: ScalarMap,
    cfg: PipelineConfig,
) -> FlowField:
    if comp is None:
        return main_scale
    weights = heuristic_weights(main_scale, comp, trust, cfg.radius, cfg.gain)
    return convex_merge(main_scale, comp, weights)


def _apply_residual(full: FlowField, merged: FlowField, main_scale: FlowField) -> FlowField:
    residual = FlowField(merged.u - main_scale.u, merged.v - main_scale.v)
    up = resize_flow(residual, full.height, full.width)
    return FlowField(full.u + up.u, full.v + up.v)


def _compensate_with_points(
    i0: Image,
    i1: Image,
    ft0: FlowField,
    ft1: FlowField,
    a0: FeatureMap,
    a1: FeatureMap,
    t: float,
    k: int,
    cfg: PipelineConfig,
    select,
    gt_flows: tuple[FlowField, FlowField] | None,
) -> tuple[FlowField, FlowField, CompensationReport]:
    scale = a0.scale
    factor = 2**scale
    hs, ws = a0.height, a0.width
    if (i0.height, i0.width) != (hs * factor, ws * factor):
        raise DimensionMismatchError(
            f"features at scale {scale} imply {hs * factor}x{ws * factor}, "
            f"got image {i0.height}x{i0.width}"
        )

    i0s = downscale_image_area(i0, factor) if factor > 1 else i0
    i1s = downscale_image_area(i1, factor) if factor > 1 else i1
    ft0s = _downscale_flow(ft0, hs, ws)
    ft1s = _downscale_flow(ft1, hs, ws)

    dmaps = difference_maps(i0s, i1s, ft0s, ft1s, cfg.tau, scale_exponent=scale)

    points0 = select(dmaps.d0, k)
    points1 = select(dmaps.d1, k)
    f01 = sparse_match(a0, a1, points0, cfg.temperature, cfg.similarity_budget)
    f10 = sparse_match(a1, a0, points1, cfg.temperature, cfg.similarity_budget)

    # Cells without flaw evidence could only splat no-op vectors that dilute
    # real corrections landing beside them, so they sit out entirely.
    f01_f = _restrict_support(f01, dmaps.d0.data >= cfg.trust_floor)
    f10_f = _restrict_support(f10, dmaps.d1.data >= cfg.trust_floor)

    f01_v = None if f01_f is None else _verify_matches(f01_f, i0s, i1s, cfg.verify_threshold)
    f10_v = None if f10_f is None else _verify_matches(f10_f, i1s, i0s, cfg.verify_threshold)

    ft1_comp = None if f01_v is None else shift_to_t(f01_v, t, "from0", k, cfg.tau)
    ft0_comp = None if f10_v is None else shift_to_t(f10_v, t, "from1", k, cfg.tau)

    trust1 = (
        ScalarMap(np.zeros((hs, ws)))
        if f01_v is None
        else _shifted_trust(dmaps.d0, f01_v, t, hs, ws)
    )
    trust0 = (
        ScalarMap(np.zeros((hs, ws)))
        if f10_v is None
        else _shifted_trust(dmaps.d1, f10_v, 1.0 - t, hs, ws)
    )

    eff1 = (
        None
        if ft1_comp is None
        else _restrict_support(ft1_comp, trust1.data >= cfg.trust_floor)
    )
    eff0 = (
        None
        if ft0_comp is None
        else _restrict_support(ft0_comp, trust0.data >= cfg.trust_floor)
    )

    merged0 = _merge_direction(ft0s, eff0, trust0, cfg)
    merged1 = _merge_direction(ft1s, eff1, trust1, cfg)

    out0 = _apply_residual(ft0, merged0, ft0s)
    out1 = _apply_residual(ft1, merged1, ft1s)

    report = CompensationReport(
        k=k,
        scale=scale,
        mean_d0=float(dmaps.d0.data.mean()),
        mean_d1=float(dmaps.d1.data.mean()),
        support_f01=points0.k,
        support_f10=points1.k,
        verified_f01=0 if f01_v is None else f01_v.support.k,
        verified_f10=0 if f10_v is None else f10_v.support.k,
        support_ft1=0 if ft1_comp is None else ft1_comp.support.k,
        support_ft0=0 if ft0_comp is None else ft0_comp.support.k,
        effective_ft1=0 if eff1 is None else eff1.support.k,
        effective_ft0=0 if eff0 is None else eff0.support.k,
    )
    if gt_flows is not None:
        report.epe_ft0 = endpoint_error(out0, gt_flows[0])
        report.epe_ft1 = endpoint_error(out1, gt_flows[1])
    return out0, out1, report


def sparsity_to_k(sparsity: float, hs: int, ws: int) -> int:
    if not 0.0 < sparsity <= 1.0:
        raise ValueError(f"sparsity must lie in (0, 1], got {sparsity}")
    return int(np.ceil(sparsity * hs * ws))


def compensate(
    i0: Image,
    i1: Image,
    ft0: FlowField,
    ft1: FlowField,
    a0: FeatureMap,
    a1: FeatureMap,
    t: float = 0.5,
    sparsity: float = 0.125,
    cfg: PipelineConfig = PipelineConfig(),
    gt_flows: tuple[FlowField, FlowField] | None = None,
) -> tuple[FlowField, FlowField, CompensationReport]:
    """Correct initial intermediate flows via sparse global matching.

    Selects the ceil(sparsity * cells) worst cells of each difference map,
    matches them globally, shifts the matches to time t, and merges. Returns
    (corrected t-to-0 flow, corrected t-to-1 flow, report).
    """
    k = sparsity_to_k(sparsity, a0.height, a0.width)
    return _compensate_with_points(
        i0, i1, ft0, ft1, a0, a1, t, k, cfg, top_k, gt_flows
    )


def compensate_random_baseline(
    i0: Image,
    i1: Image,
    ft0: FlowField,
    ft1: FlowField,
    a0: FeatureMap,
    a1: FeatureMap,
    t: float = 0.5,
    sparsity: float = 0.125,
    cfg: PipelineConfig = PipelineConfig(),
    gt_flows: tuple[FlowField, FlowField] | None = None,
    seed: int = 0,
) -> tuple[FlowField, FlowField, CompensationReport]:
    """Ablation twin of ``compensate``: seeded uniform cell selection."""
    k = sparsity_to_k(sparsity, a0.height, a0.width)
    rng = np.random.default_rng(seed)

    def select(d: ScalarMap, kk: int) -> SparsePointSet:
        n = d.height * d.width
        idx = np.sort(rng.choice(n, size=kk, replace=False))
        return SparsePointSet(indices=idx, scores=d.data.ravel()[idx])

    return _compensate_with_points(
        i0, i1, ft0, ft1, a0, a1, t, k, cfg, select, gt_flows
    )
