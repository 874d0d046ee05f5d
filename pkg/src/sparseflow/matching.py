"""Sparse global matching: top-k flaw selection and softmax correlation.

For each selected source cell, the matcher scores every target cell by the
scaled feature dot product, softmax-normalizes the row, and reads the match
as the softmax-weighted average of the full coordinate table. The flow at
the cell is that expected coordinate minus the cell's own coordinate; cells
outside the selection stay exactly zero.

Note on the flow extraction: the expected target position is the similarity
row applied to the full coordinate map (all target cells), not to the sparse
source coordinates: the row weighs target positions, so only that pairing
is shape-consistent.

Rows are computed in 64-bit with max-subtraction before exponentiation, and
reduced in a fixed order, chunked so the dense rows-by-cells matrix is never
materialized beyond a configurable budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptySelectionError,
    KOutOfRangeError,
)
from .flaws import DifferenceMapPair
from .types import FeatureMap, FlowField, ScalarMap

# Streamed similarity chunks stay below this many matrix elements.
DEFAULT_SIMILARITY_BUDGET = 4_000_000


@dataclass(frozen=True)
class SparsePointSet:
    """k unique grid indices (row-major, strictly increasing) with scores."""

    indices: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        sc = np.asarray(self.scores, dtype=np.float64)
        if idx.ndim != 1 or sc.shape != idx.shape:
            raise DimensionMismatchError("indices and scores must be 1-D and aligned")
        if idx.size == 0:
            raise EmptySelectionError("point set is empty")
        if np.any(np.diff(idx) <= 0):
            raise DimensionMismatchError("indices must be strictly increasing")
        if idx[0] < 0:
            raise KOutOfRangeError("negative grid index")
        if not np.isfinite(sc).all():
            raise DimensionMismatchError("scores must be finite")
        idx.setflags(write=False)
        sc.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "scores", sc)

    @property
    def k(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class SparseFlow:
    """Flow grid that is exactly zero off its recorded support."""

    grid: FlowField
    support: SparsePointSet

    def __post_init__(self):
        n = self.grid.height * self.grid.width
        if self.support.indices[-1] >= n:
            raise KOutOfRangeError("support index outside grid")
        off = np.ones(n, dtype=bool)
        off[self.support.indices] = False
        if np.any(self.grid.u.ravel()[off] != 0.0) or np.any(self.grid.v.ravel()[off] != 0.0):
            raise DimensionMismatchError("sparse flow has nonzero values off support")


def top_k(diff: ScalarMap, k: int) -> SparsePointSet:
    """Indices of the k largest values; ties go to the smaller index."""
    n = diff.height * diff.width
    if not 1 <= k <= n:
        raise KOutOfRangeError(f"k={k} outside [1, {n}]")
    flat = diff.data.ravel()
    # Stable sort on negated values: descending by value, ascending by index.
    order = np.argsort(-flat, kind="stable")[:k]
    chosen = np.sort(order)
    return SparsePointSet(indices=chosen, scores=flat[chosen])


def coordinate_map(h: int, w: int) -> np.ndarray:
    """(H*W, 2) table of (x, y) for each row-major index."""
    idx = np.arange(h * w)
    return np.stack([idx % w, idx // w], axis=1).astype(np.float64)


def similarity_rows(
    feat_src: FeatureMap,
    feat_dst: FeatureMap,
    indices: np.ndarray,
    temperature_scale: float = 1.0,
) -> np.ndarray:
    """Softmax correlation rows (k, H*W) for the selected source cells."""
    c = feat_src.channels
    src_flat = feat_src.data.reshape(c, -1)
    dst_flat = feat_dst.data.reshape(c, -1)
    logits = (src_flat[:, indices].T @ dst_flat) * (temperature_scale / np.sqrt(c))
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    return logits


def sparse_match(
    feat_src: FeatureMap,
    feat_dst: FeatureMap,
    points: SparsePointSet,
    temperature_scale: float = 1.0,
    similarity_budget: int = DEFAULT_SIMILARITY_BUDGET,
) -> SparseFlow:
    """Globally match the selected cells of feat_src against all of feat_dst."""
    if (
        feat_src.channels != feat_dst.channels
        or feat_src.height != feat_dst.height
        or feat_src.width != feat_dst.width
    ):
        raise DimensionMismatchError("feature maps must share C, H, W")
    h, w = feat_src.height, feat_src.width
    n = h * w
    if points.indices[-1] >= n:
        raise KOutOfRangeError("selected index outside feature grid")

    coords = coordinate_map(h, w)
    k = points.k
    chunk = max(1, min(k, similarity_budget // max(n, 1)))
    matched = np.empty((k, 2), dtype=np.float64)
    for start in range(0, k, chunk):
        idx = points.indices[start : start + chunk]
        rows = similarity_rows(feat_src, feat_dst, idx, temperature_scale)
        matched[start : start + len(idx)] = rows @ coords

    flow_vecs = matched - coords[points.indices]
    u = np.zeros(n)
    v = np.zeros(n)
    u[points.indices] = flow_vecs[:, 0]
    v[points.indices] = flow_vecs[:, 1]
    return SparseFlow(
        grid=FlowField(u.reshape(h, w), v.reshape(h, w)),
        support=points,
    )


def match_bidirectional(
    a0: FeatureMap,
    a1: FeatureMap,
    dmaps: DifferenceMapPair,
    k: int,
    temperature_scale: float = 1.0,
    similarity_budget: int = DEFAULT_SIMILARITY_BUDGET,
) -> tuple[SparseFlow, SparseFlow]:
    """Top-k each difference map and match in both directions."""
    if (a0.height, a0.width) != (dmaps.d0.height, dmaps.d0.width):
        raise DimensionMismatchError("difference maps do not address the feature grid")
    points0 = top_k(dmaps.d0, k)
    points1 = top_k(dmaps.d1, k)
    f01 = sparse_match(a0, a1, points0, temperature_scale, similarity_budget)
    f10 = sparse_match(a1, a0, points1, temperature_scale, similarity_budget)
    return f01, f10
