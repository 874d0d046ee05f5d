"""Command-line interface: every pipeline stage as a subcommand.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 numeric or validation error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import parallel
from .config import Resolver, env_config, parse_kv_file
from .curation import (
    curate,
    parse_manifest,
    write_cdf_csv,
    write_curation_csv,
    write_subset_manifest,
)
from .errors import IoError, IoFailureError, SparseFlowError, ValidationError
from .flaws import difference_maps
from .matching import SparseFlow, SparsePointSet, sparse_match, top_k
from .merging import DEFAULT_GAIN, DEFAULT_RADIUS, convex_merge, heuristic_weights
from .metrics import endpoint_error, psnr, ssim
from .pipeline import PipelineConfig, compensate, compensate_random_baseline
from .scenes import corrupt_flow, moving_square, patch_features, translation_scene
from .shifting import linear_combination, linear_reversal, shift_to_t
from .synthesis import constant_fusion, synthesize
from .tensor_io import (
    downscale_image_area,
    read_flo,
    read_fmap,
    read_image,
    read_scalar_map,
    resize_flow,
    write_flo,
    write_fmap,
    write_heatmap,
    write_image,
)
from .types import FeatureMap, FlowField, Image, ScalarMap
from .warping import DEFAULT_HOLE_TAU, backward_warp, forward_warp, hole_mask


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; our contract says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def fmt(x: float) -> str:
    return f"{x:.6g}"


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _load_grid(path: str):
    """Dispatch on extension: .flo flow, .png image."""
    suffix = Path(path).suffix.lower()
    if suffix == ".flo":
        return read_flo(path)
    if suffix == ".png":
        return read_image(path)
    raise IoFailureError(f"cannot infer grid kind from {path} (use .flo or .png)")


def _save_grid(value, path: str) -> None:
    if isinstance(value, FlowField):
        write_flo(value, path)
    elif isinstance(value, Image):
        write_image(value, path)
    else:
        write_heatmap(value, path)


def _write_scalar(smap: ScalarMap, path: str) -> None:
    if Path(path).suffix.lower() == ".png":
        write_heatmap(smap, path)
    else:
        write_fmap(FeatureMap(smap.data[None]), path)


def _sparse_from_flow(flow: FlowField) -> SparseFlow:
    """Rebuild a sparse flow from a grid, treating nonzero cells as support."""
    nz = np.flatnonzero((flow.u.ravel() != 0.0) | (flow.v.ravel() != 0.0))
    if nz.size == 0:
        nz = np.array([0])
    return SparseFlow(
        grid=_zero_off_support(flow, nz),
        support=SparsePointSet(nz, np.zeros(nz.size)),
    )


def _zero_off_support(flow: FlowField, idx: np.ndarray) -> FlowField:
    u = np.zeros(flow.height * flow.width)
    v = np.zeros(flow.height * flow.width)
    u[idx] = flow.u.ravel()[idx]
    v[idx] = flow.v.ravel()[idx]
    return FlowField(u.reshape(flow.height, flow.width), v.reshape(flow.height, flow.width))


# --- fixture directories -----------------------------------------------------

META_NAME = "meta.txt"


def _read_fixture(fx_dir: str) -> dict:
    d = Path(fx_dir)
    if not d.is_dir():
        raise IoFailureError(f"fixture directory {fx_dir} does not exist")
    meta = parse_kv_file(d / META_NAME) if (d / META_NAME).exists() else {}
    fx = {
        "meta": meta,
        "i0": read_image(d / "i0.png"),
        "i1": read_image(d / "i1.png"),
        "mid": read_image(d / "mid_gt.png"),
        "ft0_init": read_flo(d / "ft0_init.flo"),
        "ft1_init": read_flo(d / "ft1_init.flo"),
        "ft0_gt": read_flo(d / "ft0_gt.flo"),
        "ft1_gt": read_flo(d / "ft1_gt.flo"),
        "feat0": read_fmap(d / "feat0.fmp"),
        "feat1": read_fmap(d / "feat1.fmp"),
    }
    return fx


def _pipeline_config(args, layers) -> tuple[PipelineConfig, float, float]:
    res = Resolver(*layers)
    cfg = PipelineConfig(
        tau=res.get(args.tau, "tau", DEFAULT_HOLE_TAU),
        radius=int(res.get(args.radius, "radius", DEFAULT_RADIUS, int)),
        gain=res.get(args.gain, "gain", DEFAULT_GAIN),
        temperature=res.get(args.temperature, "temperature", 1.0),
        trust_floor=res.get(args.trust_floor, "trust_floor", 0.02),
        verify_threshold=res.get(args.verify_threshold, "verify_threshold", 0.05),
    )
    t = res.get(args.t, "t", 0.5)
    sparsity = res.get(args.sparsity, "sparsity", 0.125)
    return cfg, t, sparsity


# --- subcommand implementations ---------------------------------------------


def cmd_warp(args) -> int:
    src = _load_grid(args.src)
    flow = read_flo(args.flow)
    if args.mode == "backward":
        out = backward_warp(src, flow, border=args.border)
    else:
        out, weight = forward_warp(src, flow)
        if args.weight_out:
            _write_scalar(weight, args.weight_out)
        if args.mask_out:
            res = Resolver(env_config())
            tau = res.get(args.tau, "tau", DEFAULT_HOLE_TAU)
            _write_scalar(hole_mask(weight, tau), args.mask_out)
    _save_grid(out, args.out)
    _say(args, f"wrote {args.out}")
    return 0


def cmd_diffmap(args) -> int:
    i0 = read_image(args.i0)
    i1 = read_image(args.i1)
    ft0 = read_flo(args.ft0)
    ft1 = read_flo(args.ft1)
    res = Resolver(env_config())
    tau = res.get(args.tau, "tau", DEFAULT_HOLE_TAU)
    scale = int(res.get(args.scale, "scale", 0, int))
    if scale > 0:
        factor = 2**scale
        i0 = downscale_image_area(i0, factor)
        i1 = downscale_image_area(i1, factor)
        ft0 = resize_flow(ft0, i0.height, i0.width)
        ft1 = resize_flow(ft1, i0.height, i0.width)
    pair = difference_maps(i0, i1, ft0, ft1, tau, scale_exponent=scale)
    _write_scalar(pair.d0, args.d0_out)
    _write_scalar(pair.d1, args.d1_out)
    _say(args, f"wrote {args.d0_out}, {args.d1_out}")
    return 0


def cmd_match(args) -> int:
    a0 = read_fmap(args.feat0)
    a1 = read_fmap(args.feat1)
    d0 = read_scalar_map(args.d0)
    d1 = read_scalar_map(args.d1)
    res = Resolver(env_config())
    temperature = res.get(args.temperature, "temperature", 1.0)
    if args.k is not None:
        k = args.k
    else:
        sparsity = res.get(args.sparsity, "sparsity", 0.125)
        k = int(np.ceil(sparsity * a0.height * a0.width))
    f01 = sparse_match(a0, a1, top_k(d0, k), temperature)
    f10 = sparse_match(a1, a0, top_k(d1, k), temperature)
    write_flo(f01.grid, args.f01_out)
    write_flo(f10.grid, args.f10_out)
    _say(args, f"wrote {args.f01_out}, {args.f10_out} (k={k})")
    return 0


def cmd_shift(args) -> int:
    sparse = _sparse_from_flow(read_flo(args.flow))
    res = Resolver(env_config())
    t = res.get(args.t, "t", 0.5)
    tau = res.get(args.tau, "tau", DEFAULT_HOLE_TAU)
    k = args.k if args.k is not None else sparse.support.k
    out = shift_to_t(sparse, t, args.direction, k, tau)
    write_flo(out.grid, args.out)
    _say(args, f"wrote {args.out} (surviving support {out.support.k})")
    return 0


def cmd_merge(args) -> int:
    main0 = read_flo(args.main0)
    main1 = read_flo(args.main1)
    comp0 = _sparse_from_flow(read_flo(args.comp0))
    comp1 = _sparse_from_flow(read_flo(args.comp1))
    d0 = read_scalar_map(args.d0)
    d1 = read_scalar_map(args.d1)
    res = Resolver(env_config())
    radius = int(res.get(args.radius, "radius", DEFAULT_RADIUS, int))
    gain = res.get(args.gain, "gain", DEFAULT_GAIN)
    out0 = convex_merge(main0, comp0, heuristic_weights(main0, comp0, d1, radius, gain))
    out1 = convex_merge(main1, comp1, heuristic_weights(main1, comp1, d0, radius, gain))
    write_flo(out0, args.out0)
    write_flo(out1, args.out1)
    _say(args, f"wrote {args.out0}, {args.out1}")
    return 0


def cmd_synthesize(args) -> int:
    i0 = read_image(args.i0)
    i1 = read_image(args.i1)
    ft0 = read_flo(args.ft0)
    ft1 = read_flo(args.ft1)
    if args.fusion:
        fusion = read_scalar_map(args.fusion)
    else:
        res = Resolver(env_config())
        t = res.get(args.t, "t", 0.5)
        fusion = constant_fusion(i0.height, i0.width, t)
    out = synthesize(i0, i1, ft0, ft1, fusion)
    write_image(out, args.out)
    _say(args, f"wrote {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    rows = []
    for test_path, ref_path in args.pair:
        test = read_image(test_path)
        ref = read_image(ref_path)
        rows.append((test_path, psnr(test, ref), ssim(test, ref)))
    with open(args.csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "psnr", "ssim"])
        for name, p, s in rows:
            writer.writerow([name, fmt(p), fmt(s)])
    _say(args, f"wrote {args.csv} ({len(rows)} rows)")
    return 0


def cmd_curate(args) -> int:
    entries = parse_manifest(args.manifest)
    res = Resolver(env_config())
    p = res.get(args.p, "p", 0.05)
    threshold = res.get(args.threshold, "threshold", 0.0)
    records = curate(entries, p=p, mode=args.mode, threshold=threshold)
    write_curation_csv(records, args.csv)
    if args.subset_out:
        write_subset_manifest(records, entries, args.subset_out)
    if args.cdf_out:
        write_cdf_csv(records, args.cdf_out)
    kept = sum(r.kept for r in records)
    _say(args, f"kept {kept}/{len(records)} triplets")
    return 0


def cmd_synth(args) -> int:
    res = Resolver(env_config())
    seed = int(res.get(args.seed, "seed", 0, int))
    t = res.get(args.t, "t", 0.5)
    scale = int(res.get(args.scale, "scale", 3, int))
    h, w = args.height, args.width
    if args.scene == "moving-square":
        sc = moving_square(h, w, args.square, (args.dx, args.dy), texture_seed=seed, t=t)
    else:
        sc = translation_scene(h, w, args.square, (args.dx, args.dy), texture_seed=seed, t=t)

    if args.corrupt == "zero-all":
        ft0_init = corrupt_flow(sc.ft0, (0, 0, h, w), mode="zero")
        ft1_init = corrupt_flow(sc.ft1, (0, 0, h, w), mode="zero")
    elif args.corrupt == "noise-all":
        ft0_init = corrupt_flow(sc.ft0, (0, 0, h, w), mode="noise", sigma=args.sigma, seed=seed)
        ft1_init = corrupt_flow(sc.ft1, (0, 0, h, w), mode="noise", sigma=args.sigma, seed=seed + 1)
    else:
        ft0_init, ft1_init = sc.ft0, sc.ft1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_image(sc.i0, out / "i0.png")
    write_image(sc.i1, out / "i1.png")
    write_image(sc.mid, out / "mid_gt.png")
    write_flo(sc.ft0, out / "ft0_gt.flo")
    write_flo(sc.ft1, out / "ft1_gt.flo")
    write_flo(sc.flow01, out / "flow01_gt.flo")
    write_flo(sc.flow10, out / "flow10_gt.flo")
    write_flo(ft0_init, out / "ft0_init.flo")
    write_flo(ft1_init, out / "ft1_init.flo")
    write_fmap(patch_features(sc.i0, scale), out / "feat0.fmp")
    write_fmap(patch_features(sc.i1, scale), out / "feat1.fmp")
    meta = {
        "scene": args.scene,
        "height": h,
        "width": w,
        "square": args.square,
        "dx": args.dx,
        "dy": args.dy,
        "t": t,
        "scale": scale,
        "seed": seed,
        "corrupt": args.corrupt,
        # Patch features are sharp; matching needs a hot softmax.
        "temperature": 10.0,
    }
    (out / META_NAME).write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    _say(args, f"wrote fixture to {out}")
    return 0


def _fixture_metrics(fx, ft0, ft1, t):
    h, w = fx["i0"].height, fx["i0"].width
    img = synthesize(fx["i0"], fx["i1"], ft0, ft1, constant_fusion(h, w, t))
    return (
        psnr(img, fx["mid"]),
        ssim(img, fx["mid"]),
        endpoint_error(ft0, fx["ft0_gt"]),
        endpoint_error(ft1, fx["ft1_gt"]),
    )


def cmd_run(args) -> int:
    fx = _read_fixture(args.fixtures)
    cfg, t, sparsity = _pipeline_config(args, [env_config(), fx["meta"]])

    run = compensate_random_baseline if args.selection == "random" else compensate
    kwargs = {"seed": int(args.seed or 0)} if args.selection == "random" else {}
    out0, out1, report = run(
        fx["i0"], fx["i1"], fx["ft0_init"], fx["ft1_init"],
        fx["feat0"], fx["feat1"], t, sparsity, cfg,
        gt_flows=(fx["ft0_gt"], fx["ft1_gt"]), **kwargs,
    )

    rows = []
    for variant, f0, f1 in (
        ("initial", fx["ft0_init"], fx["ft1_init"]),
        ("compensated", out0, out1),
    ):
        p, s, e0, e1 = _fixture_metrics(fx, f0, f1, t)
        rows.append([variant, fmt(sparsity), report.k, fmt(p), fmt(s), fmt(e0), fmt(e1)])

    with open(args.report, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "sparsity", "k", "psnr", "ssim", "epe_ft0", "epe_ft1"])
        writer.writerows(rows)

    if args.out_dir:
        od = Path(args.out_dir)
        od.mkdir(parents=True, exist_ok=True)
        write_flo(out0, od / "ft0_final.flo")
        write_flo(out1, od / "ft1_final.flo")
        h, w = fx["i0"].height, fx["i0"].width
        img = synthesize(fx["i0"], fx["i1"], out0, out1, constant_fusion(h, w, t))
        write_image(img, od / "mid_synth.png")
    _say(args, f"wrote {args.report}")
    return 0


def cmd_compare_reversal(args) -> int:
    fx = _read_fixture(args.fixtures)
    cfg, t, sparsity = _pipeline_config(args, [env_config(), fx["meta"]])

    a0, a1 = fx["feat0"], fx["feat1"]
    hs, ws = a0.height, a0.width
    factor = 2**a0.scale
    i0s = downscale_image_area(fx["i0"], factor)
    i1s = downscale_image_area(fx["i1"], factor)
    ft0s = resize_flow(fx["ft0_init"], hs, ws)
    ft1s = resize_flow(fx["ft1_init"], hs, ws)
    dmaps = difference_maps(i0s, i1s, ft0s, ft1s, cfg.tau, scale_exponent=a0.scale)

    k = int(np.ceil(sparsity * hs * ws))
    f01 = sparse_match(a0, a1, top_k(dmaps.d0, k), cfg.temperature)
    f10 = sparse_match(a1, a0, top_k(dmaps.d1, k), cfg.temperature)

    gt_t0 = resize_flow(fx["ft0_gt"], hs, ws)
    gt_t1 = resize_flow(fx["ft1_gt"], hs, ws)

    shift_t1 = shift_to_t(f01, t, "from0", k, cfg.tau)
    shift_t0 = shift_to_t(f10, t, "from1", k, cfg.tau)
    lc_t0, lc_t1 = linear_combination(f01.grid, f10.grid, t)
    lr_t0, lr_t1 = linear_reversal(f01.grid, f10.grid, t)

    rows = []
    for method, m_t0, m_t1 in (
        ("flow-shift", shift_t0.grid, shift_t1.grid),
        ("linear-combination", lc_t0, lc_t1),
        ("linear-reversal", lr_t0, lr_t1),
    ):
        rows.append(
            [
                method,
                fmt(endpoint_error(m_t0, gt_t0)),
                fmt(endpoint_error(m_t1, gt_t1)),
                fmt((endpoint_error(m_t0, gt_t0) + endpoint_error(m_t1, gt_t1)) / 2),
            ]
        )
    with open(args.csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "epe_ft0", "epe_ft1", "epe_mean"])
        writer.writerows(rows)
    _say(args, f"wrote {args.csv}")
    return 0


# --- parser ----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="sparseflow", description=__doc__)
    parser.add_argument("--threads", type=int, default=None, help="worker threads, 0 = auto")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized stages")
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(fn=fn)
        return p

    p = add("warp", cmd_warp, "warp an image, flow, or map along a flow")
    p.add_argument("--mode", choices=["backward", "forward"], required=True)
    p.add_argument("--src", required=True, help="source .png or .flo")
    p.add_argument("--flow", required=True, help="displacement .flo")
    p.add_argument("--out", required=True)
    p.add_argument("--border", choices=["clamp", "zero"], default="clamp")
    p.add_argument("--tau", type=float, default=None, help="hole-mask threshold")
    p.add_argument("--weight-out", default=None, help="splat weight map output")
    p.add_argument("--mask-out", default=None, help="hole mask output")

    p = add("diffmap", cmd_diffmap, "flaw-localization difference maps")
    p.add_argument("--i0", required=True)
    p.add_argument("--i1", required=True)
    p.add_argument("--ft0", required=True)
    p.add_argument("--ft1", required=True)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--scale", type=int, default=None, help="compute at H/2^scale")
    p.add_argument("--d0-out", required=True, help=".fmp exact or .png heat map")
    p.add_argument("--d1-out", required=True)

    p = add("match", cmd_match, "sparse global matching over feature maps")
    p.add_argument("--feat0", required=True)
    p.add_argument("--feat1", required=True)
    p.add_argument("--d0", required=True)
    p.add_argument("--d1", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--sparsity", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--f01-out", required=True)
    p.add_argument("--f10-out", required=True)

    p = add("shift", cmd_shift, "anchor a matched sparse flow at time t")
    p.add_argument("--flow", required=True, help="sparse flow .flo (zeros off support)")
    p.add_argument("--direction", choices=["from0", "from1"], required=True)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--k", type=int, default=None, help="re-selection cap")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--out", required=True)

    p = add("merge", cmd_merge, "convex-merge initial flows with compensation")
    p.add_argument("--main0", required=True)
    p.add_argument("--main1", required=True)
    p.add_argument("--comp0", required=True)
    p.add_argument("--comp1", required=True)
    p.add_argument("--d0", required=True)
    p.add_argument("--d1", required=True)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--gain", type=float, default=None)
    p.add_argument("--out0", required=True)
    p.add_argument("--out1", required=True)

    p = add("synthesize", cmd_synthesize, "synthesize the intermediate frame")
    p.add_argument("--i0", required=True)
    p.add_argument("--i1", required=True)
    p.add_argument("--ft0", required=True)
    p.add_argument("--ft1", required=True)
    p.add_argument("--fusion", default=None, help="fusion map; default constant 1-t")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "PSNR/SSIM of image pairs to CSV")
    p.add_argument(
        "--pair", nargs=2, action="append", metavar=("TEST", "REF"), required=True
    )
    p.add_argument("--csv", required=True)

    p = add("curate", cmd_curate, "select the hardest-motion benchmark subset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--p", type=float, default=None, help="top fraction of pixels")
    p.add_argument("--mode", choices=["rank-half", "threshold"], default="rank-half")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--csv", required=True)
    p.add_argument("--subset-out", default=None, help="kept-triplet manifest")
    p.add_argument("--cdf-out", default=None, help="cumulative-distribution CSV")

    p = add("synth", cmd_synth, "generate a ground-truth fixture directory")
    p.add_argument("--out", required=True)
    p.add_argument("--scene", choices=["moving-square", "translation"], default="moving-square")
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--square", type=int, default=48, help="square/block side")
    p.add_argument("--dx", type=int, default=40)
    p.add_argument("--dy", type=int, default=0)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--scale", type=int, default=None, help="feature scale exponent")
    p.add_argument("--corrupt", choices=["zero-all", "noise-all", "none"], default="zero-all")
    p.add_argument("--sigma", type=float, default=2.0, help="noise corruption sigma")

    p = add("run", cmd_run, "full compensation pipeline on a fixture")
    p.add_argument("--fixtures", required=True)
    p.add_argument("--sparsity", type=float, default=None)
    p.add_argument("--selection", choices=["topk", "random"], default="topk")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--gain", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--trust-floor", type=float, default=None)
    p.add_argument("--verify-threshold", type=float, default=None)
    p.add_argument("--report", required=True, help="output CSV")
    p.add_argument("--out-dir", default=None, help="write final flows and frame")

    p = add(
        "compare-reversal",
        cmd_compare_reversal,
        "flow shifting vs linear combination vs linear reversal",
    )
    p.add_argument("--fixtures", required=True)
    p.add_argument("--sparsity", type=float, default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--gain", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--trust-floor", type=float, default=None)
    p.add_argument("--verify-threshold", type=float, default=None)
    p.add_argument("--csv", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return 1

    res = Resolver(env_config())
    threads = int(res.get(args.threads, "threads", 1, int))
    parallel.set_num_threads(threads)

    try:
        return args.fn(args)
    except IoError as exc:
        print(f"sparseflow: i/o error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ValueError) as exc:
        print(f"sparseflow: invalid input: {exc}", file=sys.stderr)
        return 3
    except SparseFlowError as exc:
        print(f"sparseflow: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
