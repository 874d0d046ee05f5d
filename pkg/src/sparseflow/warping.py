"""Backward (gather) and forward (splat) warp kernels.

Backward warping samples the source at flow-displaced coordinates with
bilinear interpolation. Forward warping is average splatting: each source
pixel deposits value*w and w onto the four integer neighbors of its target
coordinate, and the result is the weight-normalized accumulation. The weight
accumulator doubles as the occlusion/hole evidence used by the flaw stage.

Splatting runs in a single deterministic pass (source index order), so
results never depend on the thread count.
"""

from __future__ import annotations

import numpy as np

from . import parallel
from .types import FlowField, Image, ScalarMap, require_same_grid

DEFAULT_HOLE_TAU = 0.5

GridValue = Image | FlowField | ScalarMap


def _planes_of(src: GridValue) -> tuple[list[np.ndarray], tuple[int, int]]:
    if isinstance(src, Image):
        return [src.data[c] for c in range(src.channels)], (src.height, src.width)
    if isinstance(src, FlowField):
        return [src.u, src.v], (src.height, src.width)
    if isinstance(src, ScalarMap):
        return [src.data], (src.height, src.width)
    raise TypeError(f"cannot warp {type(src).__name__}")


def _rebuild(src: GridValue, planes: list[np.ndarray]) -> GridValue:
    if isinstance(src, Image):
        return Image(np.stack(planes))
    if isinstance(src, FlowField):
        return FlowField(planes[0], planes[1])
    return ScalarMap(planes[0])


def backward_warp(src: GridValue, flow: FlowField, border: str = "clamp") -> GridValue:
    """Sample src at (x + u, y + v) per output pixel, bilinearly.

    border='clamp' clamps the sample coordinate to the grid; border='zero'
    treats out-of-bounds taps as zero.
    """
    if border not in ("clamp", "zero"):
        raise ValueError(f"border must be 'clamp' or 'zero', got {border!r}")
    planes, (h, w) = _planes_of(src)
    require_same_grid((h, w), (flow.height, flow.width))

    xs = np.arange(w, dtype=np.float64)[None, :] + flow.u
    ys = np.arange(h, dtype=np.float64)[:, None] + flow.v
    if border == "clamp":
        xs = np.clip(xs, 0.0, w - 1.0)
        ys = np.clip(ys, 0.0, h - 1.0)

    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0i = x0.astype(np.int64)
    y0i = y0.astype(np.int64)

    taps = []
    for dy, dx, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        tx = x0i + dx
        ty = y0i + dy
        inb = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
        taps.append((np.clip(tx, 0, w - 1), np.clip(ty, 0, h - 1), wgt, inb))

    out_planes = []
    for plane in planes:
        out = np.empty((h, w), dtype=np.float64)

        def fill(r0: int, r1: int, plane=plane, out=out):
            acc = np.zeros((r1 - r0, w), dtype=np.float64)
            for tx, ty, wgt, inb in taps:
                vals = plane[ty[r0:r1], tx[r0:r1]]
                if border == "zero":
                    vals = np.where(inb[r0:r1], vals, 0.0)
                acc += wgt[r0:r1] * vals
            out[r0:r1] = acc

        parallel.run_rows(fill, h)
        out_planes.append(out)
    return _rebuild(src, out_planes)


def splat_points(
    values: np.ndarray,
    tx: np.ndarray,
    ty: np.ndarray,
    h: int,
    w: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear-splat point samples onto an (h, w) grid.

    values has shape (N, P) for P planes; (tx, ty) are the N target
    coordinates. Returns (accumulated values (P, h, w), accumulated weight
    (h, w)). Contributions falling outside the grid are dropped.
    """
    p = values.shape[1]
    acc = np.zeros((p, h, w), dtype=np.float64)
    wacc = np.zeros((h, w), dtype=np.float64)

    x0 = np.floor(tx)
    y0 = np.floor(ty)
    fx = tx - x0
    fy = ty - y0
    x0i = x0.astype(np.int64)
    y0i = y0.astype(np.int64)

    for dy, dx, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        cx = x0i + dx
        cy = y0i + dy
        ok = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h) & (wgt > 0)
        if not ok.any():
            continue
        flat = cy[ok] * w + cx[ok]
        wv = wgt[ok]
        np.add.at(wacc.reshape(-1), flat, wv)
        for c in range(p):
            np.add.at(acc[c].reshape(-1), flat, values[ok, c] * wv)
    return acc, wacc


def forward_warp(src: GridValue, flow: FlowField) -> tuple[GridValue, ScalarMap]:
    """Average-splat src along flow; returns (warped, splat-weight map).

    warped = accumulated value / accumulated weight where weight > 0, else 0.
    """
    planes, (h, w) = _planes_of(src)
    require_same_grid((h, w), (flow.height, flow.width))

    ys, xs = np.mgrid[0:h, 0:w]
    tx = (xs + flow.u).ravel()
    ty = (ys + flow.v).ravel()
    values = np.stack([p.ravel() for p in planes], axis=1)
    acc, wacc = splat_points(values, tx, ty, h, w)

    covered = wacc > 0
    out_planes = []
    for c in range(len(planes)):
        out = np.zeros((h, w), dtype=np.float64)
        np.divide(acc[c], wacc, out=out, where=covered)
        out_planes.append(out)
    if isinstance(src, Image):
        # Normalized splats of [0,1] data can overshoot by float eps only.
        out_planes = [np.clip(p, 0.0, 1.0) for p in out_planes]
    return _rebuild(src, out_planes), ScalarMap(wacc)


def hole_mask(weight: ScalarMap, tau: float = DEFAULT_HOLE_TAU) -> ScalarMap:
    """Binary map: 1 where splat weight >= tau, 0 where it fell short."""
    return ScalarMap((weight.data >= tau).astype(np.float64))
