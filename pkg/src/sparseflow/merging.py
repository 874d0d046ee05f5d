"""Adaptive convex merge of initial flows with sparse compensation.

Each output vector is a softmax-weighted combination over an R x R window
of the main flow and the same window of the compensation flow: 2*R*R
candidate taps per pixel, weights normalized jointly so the result is a
convex combination. Border neighbors clamp to the grid.

The weight source is pluggable: any WeightVolume works, whether produced by
``heuristic_weights`` below or loaded from elsewhere (e.g. an externally
trained predictor). The heuristic keeps the main flow bit-exact wherever no
compensation exists, and at compensation cells raises the compensation's
center-tap logit in proportion to the local flaw score, so strong evidence
of error hands the pixel over to the correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EvenRadiusError
from .flaws import DifferenceMapPair
from .matching import SparseFlow
from .types import FlowField, ScalarMap, require_same_grid

# exp(-1e4) underflows to exactly 0.0 in float64, giving exact masking.
MASKED_LOGIT = -1e4

DEFAULT_RADIUS = 3

# Calibrated so flaw scores of area-downscaled unit-range images (typically
# 0.1..0.3 where flows are wrong) saturate the center-tap softmax.
DEFAULT_GAIN = 50.0


@dataclass(frozen=True)
class WeightVolume:
    """Per-pixel logits for 2*R*R merge taps, shape (2*R*R, H, W).

    Tap order: main-flow window first, then compensation window, each
    row-major over (dy, dx) offsets from -(R-1)/2 to +(R-1)/2.
    """

    logits: np.ndarray
    radius: int

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        r = int(self.radius)
        if r < 1 or r % 2 == 0:
            raise EvenRadiusError(f"radius must be odd and >= 1, got {r}")
        if logits.ndim != 3 or logits.shape[0] != 2 * r * r:
            raise DimensionMismatchError(
                f"logits must be (2*R^2, H, W) with R={r}, got {logits.shape}"
            )
        if not np.isfinite(logits).all():
            raise DimensionMismatchError("logits must be finite")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "radius", r)

    def weights(self) -> np.ndarray:
        """Softmax over the tap axis; sums to 1 per pixel."""
        shifted = self.logits - self.logits.max(axis=0, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=0, keepdims=True)


def _shifted(plane: np.ndarray, dy: int, dx: int, r: int) -> np.ndarray:
    padded = np.pad(plane, r, mode="edge")
    h, w = plane.shape
    return padded[r + dy : r + dy + h, r + dx : r + dx + w]


def convex_merge(main: FlowField, comp: SparseFlow, weights: WeightVolume) -> FlowField:
    """Blend main and compensation flows under the given tap weights."""
    grid = comp.grid
    require_same_grid(
        (main.height, main.width),
        (grid.height, grid.width),
        (weights.logits.shape[1], weights.logits.shape[2]),
    )
    radius = weights.radius
    half = (radius - 1) // 2
    wts = weights.weights()

    out_u = np.zeros((main.height, main.width))
    out_v = np.zeros((main.height, main.width))
    tap = 0
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            w_main = wts[tap]
            w_comp = wts[radius * radius + tap]
            out_u += w_main * _shifted(main.u, dy, dx, half)
            out_v += w_main * _shifted(main.v, dy, dx, half)
            out_u += w_comp * _shifted(grid.u, dy, dx, half)
            out_v += w_comp * _shifted(grid.v, dy, dx, half)
            tap += 1
    return FlowField(out_u, out_v)


def heuristic_weights(
    main: FlowField,
    comp: SparseFlow,
    trust: ScalarMap,
    radius: int = DEFAULT_RADIUS,
    gain: float = DEFAULT_GAIN,
) -> WeightVolume:
    """Flaw-score-driven merge weights.

    The main flow's center tap gets logit 0 everywhere. The compensation's
    center tap gets gain * trust(p) at support cells and the masked logit
    elsewhere; all off-center taps are masked. Pixels without compensation
    therefore reproduce the main flow exactly, and support cells blend the
    two center taps by how strongly the flaw evidence scores the pixel.
    """
    require_same_grid(
        (main.height, main.width),
        (comp.grid.height, comp.grid.width),
        (trust.height, trust.width),
    )
    if radius < 1 or radius % 2 == 0:
        raise EvenRadiusError(f"radius must be odd and >= 1, got {radius}")
    h, w = main.height, main.width
    n_taps = radius * radius
    center = n_taps // 2

    logits = np.full((2 * n_taps, h, w), MASKED_LOGIT)
    logits[center] = 0.0

    sgm_center = np.full(h * w, MASKED_LOGIT)
    idx = comp.support.indices
    sgm_center[idx] = gain * trust.data.ravel()[idx]
    logits[n_taps + center] = sgm_center.reshape(h, w)
    return WeightVolume(logits=logits, radius=radius)


def merge_pipeline(
    main0: FlowField,
    main1: FlowField,
    f_t0: SparseFlow,
    f_t1: SparseFlow,
    dmaps: DifferenceMapPair,
    radius: int = DEFAULT_RADIUS,
    gain: float = DEFAULT_GAIN,
) -> tuple[FlowField, FlowField]:
    """Merge both directions with heuristic weights.

    The toward-frame-0 compensation descends from the frame-1 flaw map and
    vice versa, so each direction is trusted by the map that selected it.
    """
    w0 = heuristic_weights(main0, f_t0, dmaps.d1, radius, gain)
    w1 = heuristic_weights(main1, f_t1, dmaps.d0, radius, gain)
    return (
        convex_merge(main0, f_t0, w0),
        convex_merge(main1, f_t1, w1),
    )
