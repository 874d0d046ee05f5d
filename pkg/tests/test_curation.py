import csv

import numpy as np
import pytest

from sparseflow.curation import (
    curate,
    motion_stats,
    parse_manifest,
    sufficiency,
    write_cdf_csv,
    write_curation_csv,
    write_subset_manifest,
)
from sparseflow.errors import EmptyFlowError, MissingFlowFileError
from sparseflow.tensor_io import write_flo
from sparseflow.types import FlowField, constant_flow


def flow_with_magnitudes(mags, w=10):
    """Flow whose u-plane carries the given magnitudes, v zero."""
    arr = np.asarray(mags, dtype=np.float64).reshape(-1, w)
    return FlowField(arr, np.zeros_like(arr))


# --- motion stats ------------------------------------------------------------


def test_constant_flow_stats():
    f = constant_flow(6, 6, 3.0, 4.0)
    for p in (0.01, 0.05, 0.5, 1.0):
        st = motion_stats(f, p)
        assert st.mean_magnitude == pytest.approx(5.0)
        assert st.top_p_min_magnitude == pytest.approx(5.0)


def test_top_p_min_is_fifth_largest_of_hundred():
    f = flow_with_magnitudes(np.arange(1, 101, dtype=float))
    st = motion_stats(f, 0.05)
    assert st.top_p_min_magnitude == 96.0
    assert st.mean_magnitude == pytest.approx(50.5)


def test_motion_stats_matches_sort_oracle():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = int(rng.integers(4, 200))
        w = int(rng.integers(1, n + 1))
        while n % w:
            w = int(rng.integers(1, n + 1))
        mags = rng.uniform(0, 80, size=n)
        f = flow_with_magnitudes(mags, w=w)
        p = float(rng.uniform(0.01, 1.0))
        st = motion_stats(f, p)
        srt = np.sort(mags)[::-1]
        want = srt[int(np.ceil(p * n)) - 1]
        assert st.top_p_min_magnitude == pytest.approx(want)


def test_motion_stats_p_validation():
    f = constant_flow(2, 2, 1.0, 0.0)
    with pytest.raises(ValueError):
        motion_stats(f, 0.0)
    with pytest.raises(ValueError):
        motion_stats(f, 1.5)


# --- sufficiency -----------------------------------------------------------


def test_sufficiency_cases():
    assert sufficiency(constant_flow(8, 8, 10.0, 0.0), 0.05, 8.0)
    assert not sufficiency(constant_flow(8, 8, 0.0, 0.0), 0.05, 1.0)
    # Construction mirroring the extreme-benchmark reading: 5% of pixels at
    # magnitude >= 150 passes the (0.05, 150) gate.
    mags = np.full(100, 10.0)
    mags[:5] = 151.0
    f = flow_with_magnitudes(mags)
    assert sufficiency(f, 0.05, 150.0)
    mags[4] = 100.0
    assert not sufficiency(flow_with_magnitudes(mags), 0.05, 150.0)


def test_sufficiency_monotone_in_threshold():
    rng = np.random.default_rng(1)
    f = flow_with_magnitudes(rng.uniform(0, 60, size=100))
    results = [sufficiency(f, 0.05, thr) for thr in np.linspace(0, 80, 30)]
    # Once false, never true again.
    assert results == sorted(results, reverse=True)


# --- curate -----------------------------------------------------------------


def make_manifest(tmp_path, mags_by_id, two_files=()):
    lines = []
    for tid, mag in mags_by_id.items():
        p1 = tmp_path / f"{tid}_a.flo"
        write_flo(constant_flow(4, 4, float(mag), 0.0), p1)
        if tid in two_files:
            p2 = tmp_path / f"{tid}_b.flo"
            write_flo(constant_flow(4, 4, float(mag) * 2, 0.0), p2)
            lines.append(f"{tid}\t{p1}\t{p2}")
        else:
            lines.append(f"{tid}\t{p1}")
    mpath = tmp_path / "manifest.tsv"
    mpath.write_text("\n".join(lines) + "\n")
    return mpath


def test_curate_rank_half_keeps_hardest(tmp_path):
    mpath = make_manifest(tmp_path, {"a": 10, "b": 20, "c": 30, "d": 40})
    entries = parse_manifest(mpath)
    records = curate(entries, p=0.05, mode="rank-half")
    kept = {r.triplet_id for r in records if r.kept}
    assert kept == {"c", "d"}
    assert [r.triplet_id for r in records] == ["a", "b", "c", "d"]


def test_curate_single_triplet_keeps_one(tmp_path):
    mpath = make_manifest(tmp_path, {"only": 5})
    records = curate(parse_manifest(mpath), mode="rank-half")
    assert sum(r.kept for r in records) == 1


def test_curate_threshold_mode(tmp_path):
    mpath = make_manifest(tmp_path, {"a": 10, "b": 200})
    records = curate(parse_manifest(mpath), p=0.05, mode="threshold", threshold=150.0)
    kept = {r.triplet_id for r in records if r.kept}
    assert kept == {"b"}


def test_curate_two_files_takes_harsher(tmp_path):
    mpath = make_manifest(tmp_path, {"a": 10, "b": 12}, two_files={"a"})
    # a's second file doubles its magnitude to 20 > b's 12.
    records = curate(parse_manifest(mpath), mode="rank-half")
    winners = {r.triplet_id for r in records if r.kept}
    assert winners == {"a"}
    rec_a = next(r for r in records if r.triplet_id == "a")
    assert rec_a.top_p_min == pytest.approx(20.0)


def test_curate_missing_file(tmp_path):
    mpath = tmp_path / "m.tsv"
    mpath.write_text("x\t/nonexistent/never.flo\n")
    with pytest.raises(MissingFlowFileError):
        curate(parse_manifest(mpath))


def test_curate_empty_manifest(tmp_path):
    with pytest.raises(EmptyFlowError):
        curate([])


def test_curate_halving_384_instances(tmp_path):
    # A doubled-gap style manifest with 384 instances halves to exactly 192.
    mags = {f"t{i:03d}": i + 1 for i in range(384)}
    mpath = make_manifest(tmp_path, mags)
    records = curate(parse_manifest(mpath), mode="rank-half")
    kept = [r.triplet_id for r in records if r.kept]
    assert len(kept) == 192
    # The hardest half is exactly the top-192 magnitudes.
    assert set(kept) == {f"t{i:03d}" for i in range(192, 384)}


def test_csv_outputs(tmp_path):
    mpath = make_manifest(tmp_path, {"a": 10, "b": 20, "c": 30})
    entries = parse_manifest(mpath)
    records = curate(entries, mode="rank-half")
    out = tmp_path / "out.csv"
    write_curation_csv(records, out)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["id", "mean_magnitude", "top_p_min", "kept"]
    assert len(rows) == 4
    assert rows[1][0] == "a" and rows[1][3] == "0"

    cdf = tmp_path / "cdf.csv"
    write_cdf_csv(records, cdf)
    crows = list(csv.reader(cdf.open()))
    assert crows[0] == ["fraction", "top_p_min", "mean_magnitude"]
    assert crows[-1][0] == "1"

    sub = tmp_path / "subset.tsv"
    write_subset_manifest(records, entries, sub)
    kept_lines = sub.read_text().strip().splitlines()
    assert len(kept_lines) == 2
    assert all("\t" in ln for ln in kept_lines)
