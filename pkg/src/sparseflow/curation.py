"""Motion-magnitude statistics and hardest-subset selection.

A triplet's difficulty is judged by the minimum magnitude among its largest
p-fraction of pixel flows: the ceil(p*N)-th largest magnitude, so at least a
p fraction of pixels move at least that far. Curation either keeps triplets
passing a fixed threshold or ranks every triplet and keeps the hardest half.

The manifest is one line per triplet, tab-separated:
``id<TAB>flow_path[<TAB>flow_path2]``. When two flow files are given
(forward and backward), the harsher of the two governs the statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyFlowError, MissingFlowFileError
from .tensor_io import read_flo
from .types import FlowField

DEFAULT_TOP_FRACTION = 0.05


@dataclass(frozen=True)
class MotionStats:
    """Summary of a flow field's motion magnitudes."""

    mean_magnitude: float
    top_p_min_magnitude: float
    p: float


@dataclass(frozen=True)
class TripletRecord:
    """Per-triplet curation outcome."""

    triplet_id: str
    mean_magnitude: float
    top_p_min: float
    kept: bool


def motion_stats(flow: FlowField, p: float = DEFAULT_TOP_FRACTION) -> MotionStats:
    """Mean magnitude and the ceil(p*N)-th largest magnitude."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    mags = flow.magnitudes().ravel()
    if mags.size == 0:
        raise EmptyFlowError("flow has no pixels")
    count = int(np.ceil(p * mags.size))
    top = np.partition(mags, mags.size - count)[mags.size - count :]
    return MotionStats(
        mean_magnitude=float(mags.mean()),
        top_p_min_magnitude=float(top.min()),
        p=p,
    )


def sufficiency(flow: FlowField, p: float, threshold: float) -> bool:
    """True when the top p-fraction of pixel flows all reach threshold."""
    return motion_stats(flow, p).top_p_min_magnitude >= threshold


def parse_manifest(path: str | Path) -> list[tuple[str, list[Path]]]:
    """Read the tab-separated triplet manifest."""
    entries = []
    base = Path(path).parent
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise MissingFlowFileError(f"cannot read manifest {path}: {exc}") from exc
    for ln, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise MissingFlowFileError(
                f"{path}:{ln}: expected 'id<TAB>flow_path[<TAB>flow_path2]'"
            )
        flow_paths = []
        for raw in parts[1:3]:
            p = Path(raw)
            flow_paths.append(p if p.is_absolute() else base / p)
        entries.append((parts[0], flow_paths))
    return entries


def curate(
    entries: list[tuple[str, list[Path]]],
    p: float = DEFAULT_TOP_FRACTION,
    mode: str = "rank-half",
    threshold: float = 0.0,
) -> list[TripletRecord]:
    """Score every triplet and mark the kept subset.

    mode='rank-half' keeps the ceil(n/2) triplets with the largest
    top-p-min magnitude (ties broken by id); mode='threshold' keeps those
    whose statistic reaches the threshold. Records come back sorted by id.
    """
    if mode not in ("rank-half", "threshold"):
        raise ValueError(f"mode must be 'rank-half' or 'threshold', got {mode!r}")
    if not entries:
        raise EmptyFlowError("manifest has no triplets")

    scored = []
    for triplet_id, flow_paths in entries:
        stats = []
        for fp in flow_paths:
            if not Path(fp).exists():
                raise MissingFlowFileError(f"triplet {triplet_id}: missing {fp}")
            stats.append(motion_stats(read_flo(fp), p))
        # Harsher motion governs difficulty when both directions exist.
        scored.append(
            (
                triplet_id,
                max(s.mean_magnitude for s in stats),
                max(s.top_p_min_magnitude for s in stats),
            )
        )

    if mode == "threshold":
        kept_ids = {tid for tid, _, top in scored if top >= threshold}
    else:
        ranked = sorted(scored, key=lambda row: (-row[2], row[0]))
        keep_n = int(np.ceil(len(ranked) / 2))
        kept_ids = {tid for tid, _, _ in ranked[:keep_n]}

    return [
        TripletRecord(tid, mean, top, tid in kept_ids)
        for tid, mean, top in sorted(scored, key=lambda row: row[0])
    ]


def write_curation_csv(records: list[TripletRecord], path: str | Path) -> None:
    """CSV columns: id, mean_magnitude, top_p_min, kept."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "mean_magnitude", "top_p_min", "kept"])
        for r in records:
            writer.writerow(
                [r.triplet_id, f"{r.mean_magnitude:.6g}", f"{r.top_p_min:.6g}", int(r.kept)]
            )


def write_cdf_csv(records: list[TripletRecord], path: str | Path) -> None:
    """Cumulative-distribution points for regenerating ranking charts.

    Rows are (fraction, top_p_min, mean_magnitude) with triplets sorted by
    ascending difficulty; fraction is the share of triplets at or below the
    row's statistic.
    """
    ordered = sorted(records, key=lambda r: (r.top_p_min, r.triplet_id))
    n = len(ordered)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "top_p_min", "mean_magnitude"])
        for i, r in enumerate(ordered, 1):
            writer.writerow([f"{i / n:.6g}", f"{r.top_p_min:.6g}", f"{r.mean_magnitude:.6g}"])


def write_subset_manifest(
    records: list[TripletRecord],
    entries: list[tuple[str, list[Path]]],
    path: str | Path,
) -> None:
    """Write the kept triplets back out in manifest form."""
    kept = {r.triplet_id for r in records if r.kept}
    by_id = dict(entries)
    with open(path, "w") as fh:
        for r in records:
            if r.triplet_id in kept:
                paths = "\t".join(str(p) for p in by_id[r.triplet_id])
                fh.write(f"{r.triplet_id}\t{paths}\n")
