"""Core grid value types shared by every pipeline stage.

Conventions (global to the package, stated once here):

* Pixel centers sit at integer coordinates; coordinate (x, y) means
  (column, row), with x growing rightward and y growing downward.
* Flow vectors are displacements in pixels of the grid they live on:
  a flow (u, v) at (x, y) points at (x + u, y + v).
* Images hold real values in [0, 1], stored planar as (C, H, W).
* All types are immutable after construction and safe to share across
  threads; their backing arrays are marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, NonFiniteValueError

# Range slack absorbed silently when validating [0, 1] image data: convex
# combinations of in-range float values can overshoot by a few ulp.
_RANGE_EPS = 1e-9


def _as_readonly_f64(arr, name: str) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    if not np.isfinite(out).all():
        raise NonFiniteValueError(f"{name} contains non-finite values")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Image:
    """Planar (C, H, W) image with 1 or 3 channels, values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = _as_readonly_f64(self.data, "Image.data")
        if data.ndim != 3:
            raise DimensionMismatchError(
                f"Image.data must be (C, H, W), got shape {data.shape}"
            )
        c, h, w = data.shape
        if c not in (1, 3):
            raise DimensionMismatchError(f"Image must have 1 or 3 channels, got {c}")
        if h <= 0 or w <= 0:
            raise DimensionMismatchError(f"Image dimensions must be positive, got {h}x{w}")
        lo, hi = float(data.min()), float(data.max())
        if lo < -_RANGE_EPS or hi > 1.0 + _RANGE_EPS:
            raise NonFiniteValueError(
                f"Image values must lie in [0, 1], got range [{lo}, {hi}]"
            )
        if lo < 0.0 or hi > 1.0:
            data = np.clip(data, 0.0, 1.0)
            data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement map: u (x-right) and v (y-down) planes."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = _as_readonly_f64(self.u, "FlowField.u")
        v = _as_readonly_f64(self.v, "FlowField.v")
        if u.ndim != 2 or v.ndim != 2:
            raise DimensionMismatchError("FlowField planes must be 2-D")
        if u.shape != v.shape:
            raise DimensionMismatchError(
                f"FlowField planes disagree: u {u.shape} vs v {v.shape}"
            )
        if u.shape[0] <= 0 or u.shape[1] <= 0:
            raise DimensionMismatchError("FlowField dimensions must be positive")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def magnitudes(self) -> np.ndarray:
        """Per-pixel Euclidean magnitude, shape (H, W)."""
        return np.hypot(self.u, self.v)


@dataclass(frozen=True)
class ScalarMap:
    """Single-channel (H, W) map: difference maps, masks, splat weights."""

    data: np.ndarray

    def __post_init__(self):
        data = _as_readonly_f64(self.data, "ScalarMap.data")
        if data.ndim != 2:
            raise DimensionMismatchError(
                f"ScalarMap.data must be (H, W), got shape {data.shape}"
            )
        if data.shape[0] <= 0 or data.shape[1] <= 0:
            raise DimensionMismatchError("ScalarMap dimensions must be positive")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FeatureMap:
    """Planar (C, H, W) descriptor grid at scale H/2^i x W/2^i.

    `scale` records the exponent i so downstream stages know which grid the
    feature indices address.
    """

    data: np.ndarray
    scale: int = 0

    def __post_init__(self):
        data = _as_readonly_f64(self.data, "FeatureMap.data")
        if data.ndim != 3:
            raise DimensionMismatchError(
                f"FeatureMap.data must be (C, H, W), got shape {data.shape}"
            )
        if data.shape[0] < 1:
            raise DimensionMismatchError("FeatureMap needs at least one channel")
        if data.shape[1] <= 0 or data.shape[2] <= 0:
            raise DimensionMismatchError("FeatureMap dimensions must be positive")
        if int(self.scale) < 0:
            raise DimensionMismatchError(f"scale exponent must be >= 0, got {self.scale}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "scale", int(self.scale))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def constant_flow(h: int, w: int, u: float, v: float) -> FlowField:
    """Flow field with the same (u, v) displacement everywhere."""
    return FlowField(np.full((h, w), float(u)), np.full((h, w), float(v)))


def zero_flow(h: int, w: int) -> FlowField:
    return constant_flow(h, w, 0.0, 0.0)


def require_same_grid(*shapes: tuple[int, int]) -> None:
    """Raise DimensionMismatchError unless all (H, W) shapes agree."""
    first = shapes[0]
    for s in shapes[1:]:
        if s != first:
            raise DimensionMismatchError(f"grid shapes disagree: {shapes}")
