#!/usr/bin/env python3
"""Sweep candidate counts and compare the sampling path against greedy NMS.

Prints one row per K: median wall time of each post-processing path, the
instrumented pairwise-overlap counts, and the survivor counts.
"""

import argparse
import statistics
import time

from textshaper.cli import _bench_candidates, _rects_at
from textshaper.shaping import OVERLAP_COUNTER, farthest_point_sample_indices, nms_baseline


def run_sweep(ks, trials, seed, width, budget, nms_iou):
    print(f"{'K':>6} {'fps_ms':>9} {'nms_ms':>9} {'fps_ops':>9} {'nms_ops':>10} "
          f"{'fps_kept':>8} {'nms_kept':>8}")
    for k in ks:
        fps_t, nms_t = [], []
        fps_ops = nms_ops = fps_kept = nms_kept = 0
        for trial in range(trials):
            pts, thetas, heights, scores = _bench_candidates(k, seed + trial)
            OVERLAP_COUNTER.reset()
            t0 = time.perf_counter()
            idx = farthest_point_sample_indices(pts, budget, width / 2.0)
            kept_fps = _rects_at(pts[idx], thetas[idx], heights[idx], width)
            fps_t.append(time.perf_counter() - t0)
            fps_ops, fps_kept = OVERLAP_COUNTER.count, len(kept_fps)

            OVERLAP_COUNTER.reset()
            t0 = time.perf_counter()
            kept_nms = nms_baseline(_rects_at(pts, thetas, heights, width), scores, nms_iou)
            nms_t.append(time.perf_counter() - t0)
            nms_ops, nms_kept = OVERLAP_COUNTER.count, len(kept_nms)
        print(f"{k:>6} {1000 * statistics.median(fps_t):>9.2f} "
              f"{1000 * statistics.median(nms_t):>9.2f} {fps_ops:>9} {nms_ops:>10} "
              f"{fps_kept:>8} {nms_kept:>8}")


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--ks", type=int, nargs="+", default=[50, 200, 500, 1000, 2000])
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rect-width", type=float, default=4.0)
    ap.add_argument("--fps-budget", type=int, default=64)
    ap.add_argument("--nms-iou", type=float, default=0.5)
    args = ap.parse_args()
    run_sweep(args.ks, args.trials, args.seed, args.rect_width, args.fps_budget, args.nms_iou)


if __name__ == "__main__":
    main()
