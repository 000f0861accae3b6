"""Command-line surface: shape maps into polygons, evaluate predictions,
benchmark sampling against NMS, generate synthetic fixtures, render overlays.

Exit codes: 0 success, 1 evaluation below the --assert-f1 bar, 2 usage or
I/O error. Structured metric output goes to stdout as key=value lines; logs
and errors go to stderr.
"""

from __future__ import annotations

import argparse
import math
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dataio import (AnnotationError, ImageFormatError, MapFileError, SynthBand, SynthSpec,
                     draw_polygon_outline, parse_annotations, read_geometry_maps, read_pgm,
                     synth_maps, write_annotations, write_geometry_maps, write_ppm)
from .evaluation import ImageCounts, aggregate, format_report, match_image, report_lines
from .geometry import RotatedRect, TextPolygon, normalize_angle
from .grids import ShapeMismatchError, resize_bilinear
from .pyramid import (PyramidSpec, backbone_stub, dsf_forward, geometry_maps_from_head,
                      init_dsf_params, init_stub_params)
from .shaping import (OVERLAP_COUNTER, ShapingConfig, farthest_point_sample_indices,
                      nms_baseline, shape_text)

_CLI_ERRORS = (AnnotationError, ImageFormatError, MapFileError, ShapeMismatchError,
               ValueError, OSError)


def _add_shaping_flags(p: argparse.ArgumentParser) -> None:
    d = ShapingConfig()
    p.add_argument("--text-thresh", type=float, default=d.text_thresh,
                   help="text map binarization threshold")
    p.add_argument("--center-thresh", type=float, default=d.center_thresh,
                   help="center-region map binarization threshold")
    p.add_argument("--rect-width", type=float, default=d.rect_width,
                   help="fixed component rectangle width (map px)")
    p.add_argument("--fps-budget", type=int, default=d.fps_budget,
                   help="max sampled centers per component")
    p.add_argument("--fps-stop-dist", type=float, default=d.fps_stop_dist,
                   help="stop sampling once max-min distance falls below this (px)")
    p.add_argument("--close-kernel", type=int, default=d.close_kernel,
                   help="square closing kernel side (odd)")
    p.add_argument("--min-area", type=float, default=d.min_area,
                   help="drop contours below this pixel area")
    p.add_argument("--center-mode", choices=("absolute", "offset"), default=d.center_mode,
                   help="interpretation of the regressed (x, y) channels")


def _shaping_config(args) -> ShapingConfig:
    return ShapingConfig(
        text_thresh=args.text_thresh, center_thresh=args.center_thresh,
        rect_width=args.rect_width, fps_budget=args.fps_budget,
        fps_stop_dist=args.fps_stop_dist, close_kernel=args.close_kernel,
        min_area=args.min_area, center_mode=args.center_mode)


def cmd_shape(args) -> int:
    cfg = _shaping_config(args)
    scale = args.scale
    if args.image is not None:
        image = read_pgm(args.image)
        size = args.resize
        if size % 32:
            raise ValueError(f"--resize must be divisible by 32, got {size}")
        image = resize_bilinear(image, size, size)
        spec = PyramidSpec()
        feats = backbone_stub(image, init_stub_params(args.seed, channels=spec.channels))
        out = dsf_forward(feats, init_dsf_params(spec, args.seed), spec)
        maps = geometry_maps_from_head(out.head)
        scale *= 4.0
    else:
        if args.maps is None:
            raise ValueError("either --maps or --image is required")
        maps = read_geometry_maps(args.maps)
    polys = shape_text(maps, cfg)
    scaled = [TextPolygon(p.vertices * scale) for p in polys]
    write_annotations(args.out, scaled)
    print(f"polygons={len(scaled)}", file=sys.stderr)
    return 0


def _eval_one(task) -> ImageCounts:
    name, pred_path, gt_path, iou_thresh, use_ignore = task
    preds = parse_annotations(pred_path)[0] if pred_path else []
    if gt_path:
        gts, flags = parse_annotations(gt_path)
    else:
        gts, flags = [], []
    tp, fp, fn = match_image(preds, gts, iou_thresh,
                             ignore=flags if use_ignore else None)
    return ImageCounts(name=name, tp=tp, fp=fp, fn=fn)


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    if not gt_dir.is_dir():
        raise OSError(f"ground-truth directory not found: {gt_dir}")
    if not pred_dir.is_dir():
        raise OSError(f"prediction directory not found: {pred_dir}")
    names = sorted({p.name for p in gt_dir.glob("*.txt")} | {p.name for p in pred_dir.glob("*.txt")})
    tasks = []
    for name in names:
        pred = pred_dir / name
        gt = gt_dir / name
        tasks.append((name, str(pred) if pred.exists() else None,
                      str(gt) if gt.exists() else None, args.iou, args.use_ignore))
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            counts = list(pool.map(_eval_one, tasks))
    else:
        counts = [_eval_one(t) for t in tasks]
    report = aggregate(counts)
    print(format_report(report))
    for line in report_lines(report):
        print(line)
    if args.assert_f1 is not None and report.f1 * 100.0 < args.assert_f1:
        print(f"f1 {100 * report.f1:.2f} below required {args.assert_f1:.2f}", file=sys.stderr)
        return 1
    return 0


def _bench_candidates(k: int, seed: int):
    """Candidate component centers jittered around a sinusoidal centerline."""
    rng = np.random.default_rng(seed)
    frame_w, y0, amp, period = 512.0, 128.0, 18.0, 160.0
    xs = rng.uniform(24.0, frame_w - 24.0, k)
    arg = 2.0 * math.pi * xs / period
    ys = y0 + amp * np.sin(arg) + rng.normal(0.0, 2.0, k)
    thetas = np.arctan(amp * 2.0 * math.pi / period * np.cos(arg))
    heights = np.full(k, 12.0)
    scores = rng.uniform(0.5, 1.0, k)
    return np.column_stack([xs, ys]), thetas, heights, scores


def _rects_at(points, thetas, heights, width) -> list[RotatedRect]:
    return [RotatedRect(cx=float(x), cy=float(y), h=float(h), w=width,
                        theta=normalize_angle(float(t)))
            for (x, y), t, h in zip(points, thetas, heights)]


def cmd_bench(args) -> int:
    k = args.n_candidates
    if k < 1:
        raise ValueError(f"--n-candidates must be >= 1, got {k}")
    width = args.rect_width
    fps_times, nms_times = [], []
    fps_ops = nms_ops = 0
    fps_kept = nms_kept = 0
    for trial in range(args.trials):
        pts, thetas, heights, scores = _bench_candidates(k, args.seed + trial)

        OVERLAP_COUNTER.reset()
        t0 = time.perf_counter()
        idx = farthest_point_sample_indices(pts, args.fps_budget, width / 2.0)
        fps_rects = _rects_at(pts[idx], thetas[idx], heights[idx], width)
        fps_times.append(time.perf_counter() - t0)
        fps_ops = OVERLAP_COUNTER.count
        fps_kept = len(fps_rects)

        OVERLAP_COUNTER.reset()
        t0 = time.perf_counter()
        all_rects = _rects_at(pts, thetas, heights, width)
        kept = nms_baseline(all_rects, scores, args.nms_iou)
        nms_times.append(time.perf_counter() - t0)
        nms_ops = OVERLAP_COUNTER.count
        nms_kept = len(kept)
    print(f"k={k}")
    print(f"trials={args.trials}")
    print(f"fps_median_ms={1000 * statistics.median(fps_times):.3f}")
    print(f"nms_median_ms={1000 * statistics.median(nms_times):.3f}")
    print(f"fps_overlap_ops={fps_ops}")
    print(f"nms_overlap_ops={nms_ops}")
    print(f"fps_kept={fps_kept}")
    print(f"nms_kept={nms_kept}")
    return 0


def _build_spec(args) -> SynthSpec:
    h, w = args.frame
    margin = 12.0
    x0, x1 = margin, w - margin
    if args.kind == "straight":
        bands = (SynthBand(y_center=h / 2.0, height=args.height, x_start=x0, x_end=x1),)
    elif args.kind == "sinusoid":
        bands = (SynthBand(y_center=h / 2.0, height=args.height, x_start=x0, x_end=x1,
                           amplitude=args.amplitude, period=args.period, phase=args.phase),)
    else:  # two-band
        bands = (
            SynthBand(y_center=h / 3.0, height=args.height, x_start=x0, x_end=x1,
                      amplitude=args.amplitude, period=args.period, phase=args.phase),
            SynthBand(y_center=2.0 * h / 3.0, height=args.height, x_start=x0, x_end=x1),
        )
    return SynthSpec(frame_h=h, frame_w=w, bands=bands,
                     noise_sigma=args.noise, gamma=args.gamma)


def cmd_synth(args) -> int:
    spec = _build_spec(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    maps, gt = synth_maps(spec, args.seed)
    write_geometry_maps(out_dir / "maps.tmap", maps)
    write_annotations(out_dir / "gt.txt", gt)
    print(f"wrote {out_dir / 'maps.tmap'} and {out_dir / 'gt.txt'}", file=sys.stderr)
    return 0


def cmd_render(args) -> int:
    gray = read_pgm(args.image)
    polys, _ = parse_annotations(args.polys)
    rgb = np.repeat((gray * 255.0).round().astype(np.uint8)[:, :, None], 3, axis=2)
    for poly in polys:
        draw_polygon_outline(rgb, poly, color=(255, 0, 0))
    write_ppm(args.out, rgb)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textshaper",
        description="Bottom-up text shaping, evaluation, and benchmarking tools.")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("shape", formatter_class=fmt,
                       help="shape head maps into text polygons")
    p.add_argument("--maps", help="input .tmap file with the seven head map sections")
    p.add_argument("--image", help="EXPERIMENTAL: grayscale PGM run through the untrained "
                                   "backbone stub and pyramid (slow at the default size)")
    p.add_argument("--resize", type=int, default=640,
                   help="square frame for --image (divisible by 32)")
    p.add_argument("--out", required=True, help="output polygon annotation file")
    p.add_argument("--scale", type=float, default=1.0,
                   help="multiply output coordinates by this factor")
    p.add_argument("--seed", type=int, default=0, help="parameter seed for --image")
    _add_shaping_flags(p)
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser("eval", formatter_class=fmt,
                       help="match prediction polygons against ground truth")
    p.add_argument("--pred", required=True, help="directory of predicted .txt files")
    p.add_argument("--gt", required=True, help="directory of ground-truth .txt files")
    p.add_argument("--iou", type=float, default=0.5, help="match IoU threshold")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--use-ignore", action="store_true",
                   help="honor #ignore flags in the ground truth")
    p.add_argument("--assert-f1", type=float, default=None,
                   help="exit 1 when F1 (percent) falls below this value")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", formatter_class=fmt,
                       help="time farthest-point sampling against greedy NMS")
    p.add_argument("--n-candidates", type=int, default=2000, help="candidate count K")
    p.add_argument("--trials", type=int, default=20, help="timed trials")
    p.add_argument("--seed", type=int, default=0, help="candidate generator seed")
    p.add_argument("--fps-budget", type=int, default=64, help="sampling budget")
    p.add_argument("--rect-width", type=float, default=4.0, help="component width")
    p.add_argument("--nms-iou", type=float, default=0.5, help="NMS suppression threshold")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", formatter_class=fmt,
                       help="generate synthetic head maps plus ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--kind", choices=("straight", "sinusoid", "two-band"), default="sinusoid")
    p.add_argument("--frame", type=int, nargs=2, default=(128, 224), metavar=("H", "W"))
    p.add_argument("--height", type=float, default=14.0, help="band height (px)")
    p.add_argument("--amplitude", type=float, default=8.0, help="sinusoid amplitude (px)")
    p.add_argument("--period", type=float, default=96.0, help="sinusoid period (px)")
    p.add_argument("--phase", type=float, default=0.0, help="sinusoid phase (rad)")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian map noise sigma")
    p.add_argument("--gamma", type=float, default=1.0,
                   help="score contrast gain in (0, 1]; lower is murkier")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", formatter_class=fmt,
                       help="draw polygon outlines over a PGM image as PPM")
    p.add_argument("--image", required=True, help="input grayscale PGM (P5)")
    p.add_argument("--polys", required=True, help="polygon annotation file")
    p.add_argument("--out", required=True, help="output PPM (P6)")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CLI_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
