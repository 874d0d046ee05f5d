"""Flow shifting: anchoring frame-to-frame sparse flows at time t.

A matched flow still starts at a source-frame pixel. To correct an
intermediate flow it must start at the time-t position of that pixel, so we
keep the complementary portion of each vector and splat it forward along the
consumed portion: the surviving vector lands where the pixel sits at time t
and points the rest of the way to the other frame.

After splatting, cells are re-selected: low splat weight means the landing
site is contested or barely covered (a likely occlusion), so only cells at
or above the weight threshold survive, capped at the k highest-weight cells
with ties going to the smaller index.

``linear_combination`` and ``linear_reversal`` are deliberately naive
alternatives kept for side-by-side comparison; both leave vectors at their
source-frame positions.
"""

from __future__ import annotations

import numpy as np

from .matching import SparseFlow, SparsePointSet
from .types import FlowField
from .warping import DEFAULT_HOLE_TAU, splat_points


def splat_sparse_values(
    values: np.ndarray,
    support: SparsePointSet,
    displacement: FlowField,
    h: int,
    w: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Splat per-support-cell values along the displacement at those cells.

    Only support cells act as sources; everything else carries no mass.
    values has shape (k, P). Returns ((P, h, w) accumulated, (h, w) weight).
    """
    idx = support.indices
    xs = (idx % w).astype(np.float64)
    ys = (idx // w).astype(np.float64)
    tx = xs + displacement.u.ravel()[idx]
    ty = ys + displacement.v.ravel()[idx]
    return splat_points(values, tx, ty, h, w)


def shift_to_t(
    sparse: SparseFlow,
    t: float,
    direction: str,
    k: int,
    tau: float = DEFAULT_HOLE_TAU,
) -> SparseFlow:
    """Convert a matched sparse flow into time-t-anchored compensation.

    direction='from0' turns a 0-to-1 flow into a t-to-1 flow carrying
    (1-t) of each vector, moved along t of it; direction='from1' turns a
    1-to-0 flow into a t-to-0 flow carrying t of each vector, moved along
    (1-t) of it.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if direction == "from0":
        keep, move = 1.0 - t, t
    elif direction == "from1":
        keep, move = t, 1.0 - t
    else:
        raise ValueError(f"direction must be 'from0' or 'from1', got {direction!r}")

    h, w = sparse.grid.height, sparse.grid.width
    idx = sparse.support.indices
    u = sparse.grid.u.ravel()[idx]
    v = sparse.grid.v.ravel()[idx]
    values = np.stack([keep * u, keep * v], axis=1)
    displacement = FlowField(move * sparse.grid.u, move * sparse.grid.v)

    acc, weight = splat_sparse_values(values, sparse.support, displacement, h, w)

    flat_w = weight.ravel()
    survivors = np.flatnonzero(flat_w >= tau)
    if survivors.size == 0:
        # Degenerate splat: keep the single heaviest cell so the support
        # invariant (never empty) holds.
        survivors = np.array([int(np.argmax(flat_w))])
    if survivors.size > k:
        # Highest weight wins; stable sort keeps smaller indices on ties.
        order = np.argsort(-flat_w[survivors], kind="stable")[:k]
        survivors = np.sort(survivors[order])

    out_u = np.zeros(h * w)
    out_v = np.zeros(h * w)
    out_u[survivors] = acc[0].ravel()[survivors] / flat_w[survivors]
    out_v[survivors] = acc[1].ravel()[survivors] / flat_w[survivors]
    return SparseFlow(
        grid=FlowField(out_u.reshape(h, w), out_v.reshape(h, w)),
        support=SparsePointSet(indices=survivors, scores=flat_w[survivors]),
    )


def linear_combination(
    f01: FlowField, f10: FlowField, t: float
) -> tuple[FlowField, FlowField]:
    """Time-weighted blend of bidirectional flows, no position shift.

    Returns (f_t0, f_t1) estimated at source-frame grid positions:
    f_t0 = -(1-t)*t*f01 + t^2*f10 and f_t1 = (1-t)^2*f01 - t*(1-t)*f10.
    """
    ft0_u = -(1 - t) * t * f01.u + t * t * f10.u
    ft0_v = -(1 - t) * t * f01.v + t * t * f10.v
    ft1_u = (1 - t) ** 2 * f01.u - t * (1 - t) * f10.u
    ft1_v = (1 - t) ** 2 * f01.v - t * (1 - t) * f10.v
    return FlowField(ft0_u, ft0_v), FlowField(ft1_u, ft1_v)


def linear_reversal(
    f01: FlowField, f10: FlowField, t: float
) -> tuple[FlowField, FlowField]:
    """Scale each directional flow in place, no position shift.

    Returns (f_t0, f_t1) with f_t0 = t*f10 and f_t1 = (1-t)*f01.
    """
    return (
        FlowField(t * f10.u, t * f10.v),
        FlowField((1 - t) * f01.u, (1 - t) * f01.v),
    )
