"""Bottom-up text shaping: threshold the center-region map, pick component
centers by farthest point sampling, accumulate fixed-width rotated
rectangles, close the gaps morphologically, and trace the final contours.

Candidate filtering is overlap-free by construction: farthest point
sampling never compares rectangles pairwise. A module-level counter
instruments every rotated-rectangle overlap computation so the contrast
with the greedy-NMS baseline is measurable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import RotatedRect, TextPolygon, normalize_angle, rasterize, rect_corners
from .maps import GeometryMaps

MIN_RECT_HEIGHT = 1e-3


class OverlapCounter:
    """Counts pairwise rectangle-overlap computations (not thread-safe)."""

    def __init__(self):
        self.count = 0

    def add(self, n: int = 1) -> None:
        self.count += n

    def reset(self) -> None:
        self.count = 0


OVERLAP_COUNTER = OverlapCounter()


@dataclass(frozen=True)
class ShapingConfig:
    """Knobs of the shaping pipeline; defaults work at map scale.

    center_mode selects how the regressed (x, y) channels are read:
    "absolute" map coordinates, or "offset" relative to the sampled pixel.
    """

    text_thresh: float = 0.5
    center_thresh: float = 0.5
    rect_width: float = 4.0
    fps_budget: int = 64
    fps_stop_dist: float = 2.0
    close_kernel: int = 5
    min_area: float = 150.0
    contour_eps: float = 1.0
    center_mode: str = "absolute"

    def __post_init__(self):
        if not (0.0 < self.text_thresh < 1.0) or not (0.0 < self.center_thresh < 1.0):
            raise ValueError("thresholds must lie in (0, 1)")
        if self.rect_width <= 0:
            raise ValueError(f"rect_width must be positive, got {self.rect_width}")
        if self.fps_budget < 1:
            raise ValueError(f"fps_budget must be >= 1, got {self.fps_budget}")
        if self.fps_stop_dist < 0:
            raise ValueError(f"fps_stop_dist must be >= 0, got {self.fps_stop_dist}")
        if self.close_kernel < 1 or self.close_kernel % 2 == 0:
            raise ValueError(f"close_kernel must be a positive odd int, got {self.close_kernel}")
        if self.center_mode not in ("absolute", "offset"):
            raise ValueError(f"center_mode must be 'absolute' or 'offset', got {self.center_mode}")


@dataclass(frozen=True)
class CenterPointSet:
    """Candidate center pixels of one component, plus the sampled subset."""

    candidates: np.ndarray
    selected: np.ndarray | None = None


def _label8(mask: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """8-connected labeling. Returns (label grid, per-label (n,2) x,y points).

    Labels follow first-appearance scan order; each component's points are
    sorted row-major.
    """
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    labels = np.full((h, w), -1, dtype=np.int32)
    comps: list[np.ndarray] = []
    for sy, sx in zip(*np.nonzero(m)):
        if labels[sy, sx] >= 0:
            continue
        lab = len(comps)
        labels[sy, sx] = lab
        stack = [(int(sy), int(sx))]
        pts = []
        while stack:
            y, x = stack.pop()
            pts.append((x, y))
            for dy in (-1, 0, 1):
                ny = y + dy
                if ny < 0 or ny >= h:
                    continue
                for dx in (-1, 0, 1):
                    nx = x + dx
                    if 0 <= nx < w and m[ny, nx] and labels[ny, nx] < 0:
                        labels[ny, nx] = lab
                        stack.append((ny, nx))
        pts.sort(key=lambda p: (p[1], p[0]))
        comps.append(np.array(pts, dtype=np.int64).reshape(-1, 2))
    return labels, comps


def connected_components(mask) -> list[np.ndarray]:
    """Point sets (x, y) of the 8-connected components of a binary mask."""
    return _label8(mask)[1]


def extract_centers(center_map, thresh: float) -> list[CenterPointSet]:
    """Threshold the center-region map and split it into connected components."""
    cm = np.asarray(center_map, dtype=np.float64)
    if cm.ndim != 2:
        raise ValueError(f"center map must be 2-d, got shape {cm.shape}")
    return [CenterPointSet(candidates=pts) for pts in connected_components(cm >= thresh)]


def farthest_point_sample_indices(points, budget: int, stop_dist: float = 0.0,
                                  seed_index: int | None = None) -> list[int]:
    """Indices into `points` chosen by greedy farthest point sampling."""
    flat = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = flat.shape[0]
    if n == 0:
        raise ValueError("cannot sample from an empty point set")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if seed_index is None:
        centroid = flat.mean(axis=0)
        seed_index = int(np.argmin(((flat - centroid) ** 2).sum(axis=1)))
    chosen = [seed_index]
    min_d2 = ((flat - flat[seed_index]) ** 2).sum(axis=1)
    stop2 = float(stop_dist) * float(stop_dist)
    while len(chosen) < budget:
        nxt = int(np.argmax(min_d2))
        best = min_d2[nxt]
        if best <= 0.0 or best < stop2:
            break
        chosen.append(nxt)
        d2 = ((flat - flat[nxt]) ** 2).sum(axis=1)
        np.minimum(min_d2, d2, out=min_d2)
    return chosen


def farthest_point_sample(points, budget: int, stop_dist: float = 0.0,
                          seed_index: int | None = None) -> np.ndarray:
    """Greedy max-min selection of up to `budget` points.

    Seeds with the point nearest the centroid (or an explicit seed index),
    then repeatedly adds the point farthest from the selected set, breaking
    ties toward the lowest index. Stops early once the best max-min distance
    drops below stop_dist, or when only duplicates of selected points remain.
    """
    pts = np.asarray(points).reshape(-1, 2)
    return pts[farthest_point_sample_indices(pts, budget, stop_dist, seed_index)]


def build_components(centers, maps: GeometryMaps, cfg: ShapingConfig) -> list[RotatedRect]:
    """One rotated rectangle per sampled center, read off the regression maps.

    Height is clamped to a small positive floor so degenerate regressions
    stay representable; width is fixed by the config.
    """
    h_map, w_max = maps.shape
    rects = []
    for px, py in np.asarray(centers).reshape(-1, 2):
        ix, iy = int(px), int(py)
        if not (0 <= iy < h_map and 0 <= ix < w_max):
            raise ValueError(f"center ({px}, {py}) outside the {maps.shape} map frame")
        cx = float(maps.x[iy, ix])
        cy = float(maps.y[iy, ix])
        if cfg.center_mode == "offset":
            cx += ix
            cy += iy
        rects.append(RotatedRect(
            cx=cx, cy=cy,
            h=max(float(maps.h[iy, ix]), MIN_RECT_HEIGHT),
            w=cfg.rect_width,
            theta=normalize_angle(float(maps.theta[iy, ix])),
        ))
    return rects


def dilate(mask, kernel: int) -> np.ndarray:
    """Binary dilation with a kernel x kernel square structuring element."""
    m = np.asarray(mask, dtype=bool)
    r = kernel // 2
    padded = np.pad(m, r, constant_values=False)
    return sliding_window_view(padded, (kernel, kernel)).any(axis=(2, 3))


def erode(mask, kernel: int) -> np.ndarray:
    """Binary erosion with a kernel x kernel square structuring element."""
    m = np.asarray(mask, dtype=bool)
    r = kernel // 2
    padded = np.pad(m, r, constant_values=False)
    return sliding_window_view(padded, (kernel, kernel)).all(axis=(2, 3))


def close_binary(mask, kernel: int) -> np.ndarray:
    """Morphological closing (dilate then erode), border-safe.

    The working frame is padded by the kernel radius so shapes touching the
    frame edge are not eaten by the erosion step.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be a positive odd int, got {kernel}")
    if kernel == 1:
        return np.asarray(mask, dtype=bool).copy()
    r = kernel // 2
    padded = np.pad(np.asarray(mask, dtype=bool), r, constant_values=False)
    closed = erode(dilate(padded, kernel), kernel)
    return closed[r:-r, r:-r]


def accumulate_and_close(rects, frame: tuple[int, int], cfg: ShapingConfig) -> np.ndarray:
    """Union of rasterized rectangles, then a closing to bridge small gaps."""
    h, w = frame
    if h <= 0 or w <= 0:
        raise ValueError(f"frame must be positive, got {frame}")
    mask = np.zeros((h, w), dtype=bool)
    for rect in rects:
        mask |= rasterize(rect, h, w)
    return close_binary(mask, cfg.close_kernel)


# Crack-boundary walk directions: R, D, L, U as (dx, dy) with y pointing down.
_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))
_LEFT_TURN = (3, 0, 1, 2)
_RIGHT_TURN = (1, 2, 3, 0)
# Pixel offsets (dx, dy) from a corner to the pixels right/left of an edge
# leaving that corner in direction d.
_RIGHT_PIXEL = ((0, 0), (-1, 0), (-1, -1), (0, -1))
_LEFT_PIXEL = ((0, -1), (0, 0), (-1, 0), (-1, -1))


def trace_boundary(mask) -> np.ndarray:
    """Outer boundary of a connected pixel region, walked along pixel edges.

    Vertices are lattice corners (pixel (i, j) spans [j, j+1] x [i, i+1]),
    so the traced polygon covers the pixels' full area and re-rasterizes to
    the region. Emits only direction-change corners, counter-clockwise by
    the shoelace sign. Preferring left turns keeps diagonally connected
    pixels on a single contour.
    """
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    ys, xs = np.nonzero(m)
    if ys.size == 0:
        return np.empty((0, 2))

    def filled(px, py):
        return 0 <= py < h and 0 <= px < w and m[py, px]

    def valid(cx, cy, d):
        rx, ry = _RIGHT_PIXEL[d]
        lx, ly = _LEFT_PIXEL[d]
        return filled(cx + rx, cy + ry) and not filled(cx + lx, cy + ly)

    start = (int(xs[0]), int(ys[0]))
    cx, cy, d = start[0], start[1], 0
    verts = [start]
    while True:
        nx, ny = cx + _DIRS[d][0], cy + _DIRS[d][1]
        for nd in (_LEFT_TURN[d], d, _RIGHT_TURN[d]):
            if valid(nx, ny, nd):
                break
        else:
            break
        if (nx, ny) == start and nd == 0:
            break
        if nd != d:
            verts.append((nx, ny))
        cx, cy, d = nx, ny, nd
    return np.array(verts, dtype=np.float64)


def _point_segment_dist(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)


def _dp_open(pts: np.ndarray, eps: float) -> np.ndarray:
    n = pts.shape[0]
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        d = _point_segment_dist(pts[i + 1:j], pts[i], pts[j])
        k = int(np.argmax(d))
        if d[k] > eps:
            keep[i + 1 + k] = True
            stack.append((i, i + 1 + k))
            stack.append((i + 1 + k, j))
    return pts[keep]


def douglas_peucker(pts, eps: float) -> np.ndarray:
    """Douglas-Peucker simplification of a closed vertex ring."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    n = pts.shape[0]
    if n <= 4:
        return pts
    far = int(np.argmax(((pts - pts[0]) ** 2).sum(axis=1)))
    if far == 0:
        return pts[:1]
    first = _dp_open(pts[:far + 1], eps)
    second = _dp_open(np.vstack([pts[far:], pts[:1]]), eps)
    return np.vstack([first[:-1], second[:-1]])


def trace_contours(mask, min_area: float, eps: float = 1.0) -> list[TextPolygon]:
    """Polygons of the 8-connected components covering at least min_area pixels."""
    labels, comps = _label8(mask)
    polys = []
    for lab, pts in enumerate(comps):
        if pts.shape[0] < min_area:
            continue
        verts = trace_boundary(labels == lab)
        simplified = douglas_peucker(verts, eps)
        if simplified.shape[0] >= 3:
            polys.append(TextPolygon(simplified))
    return polys


def shape_text(maps: GeometryMaps, cfg: ShapingConfig | None = None) -> list[TextPolygon]:
    """Full bottom-up shaping of one image's head maps into text polygons.

    Each center-region component is sampled and accumulated independently;
    the output may be empty. Deterministic for fixed inputs and config.
    """
    cfg = cfg or ShapingConfig()
    frame = maps.shape
    polys: list[TextPolygon] = []
    for comp in extract_centers(maps.center, cfg.center_thresh):
        selected = farthest_point_sample(comp.candidates, cfg.fps_budget, cfg.fps_stop_dist)
        rects = build_components(selected, maps, cfg)
        mask = accumulate_and_close(rects, frame, cfg)
        polys.extend(trace_contours(mask, cfg.min_area, cfg.contour_eps))
    return polys


def _rect_geom(rect: RotatedRect):
    pts = [(float(x), float(y)) for x, y in rect_corners(rect)]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return pts, (min(xs), min(ys), max(xs), max(ys)), rect.h * rect.w


def _convex_clip_area(subject, clip) -> float:
    """Area of subject clipped by a convex CCW polygon (plain-float clipping)."""
    out = subject
    n = len(clip)
    for i in range(n):
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        if not inp:
            return 0.0
        sx, sy = inp[-1]
        s_in = ex * (sy - ay) - ey * (sx - ax) >= 0
        for px, py in inp:
            p_in = ex * (py - ay) - ey * (px - ax) >= 0
            if p_in != s_in:
                dx, dy = px - sx, py - sy
                den = ex * dy - ey * dx
                if den != 0.0:
                    t = (ex * (ay - sy) - ey * (ax - sx)) / den
                    out.append((sx + t * dx, sy + t * dy))
            if p_in:
                out.append((px, py))
            sx, sy, s_in = px, py, p_in
    if len(out) < 3:
        return 0.0
    area = 0.0
    m = len(out)
    for i in range(m):
        x1, y1 = out[i]
        x2, y2 = out[(i + 1) % m]
        area += x1 * y2 - x2 * y1
    return abs(area) / 2.0


def _pair_iou(ga, gb) -> float:
    """Counted IoU of two precomputed rect geometries, bbox-rejected early."""
    OVERLAP_COUNTER.add(1)
    (pa, ba, aa) = ga
    (pb, bb, ab) = gb
    if ba[2] <= bb[0] or bb[2] <= ba[0] or ba[3] <= bb[1] or bb[3] <= ba[1]:
        return 0.0
    inter = _convex_clip_area(pa, pb)
    union = aa + ab - inter
    return inter / union if union > 0 else 0.0


def rect_iou(a: RotatedRect, b: RotatedRect) -> float:
    """Exact IoU of two rotated rectangles; increments the overlap counter."""
    return _pair_iou(_rect_geom(a), _rect_geom(b))


def nms_baseline(rects, scores, iou_thresh: float = 0.5) -> list[RotatedRect]:
    """Greedy score-descending NMS over rotated rectangles (benchmark baseline).

    Ties in score keep the earlier candidate. A candidate is suppressed when
    its IoU with any already-kept rectangle exceeds iou_thresh. Each candidate
    is compared against the kept set pairwise; every comparison counts toward
    the overlap-computation counter.
    """
    rects = list(rects)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(rects),):
        raise ValueError(f"got {len(rects)} rects but {scores.shape} scores")
    geoms = [_rect_geom(r) for r in rects]
    kept: list[int] = []
    for i in np.argsort(-scores, kind="stable"):
        gi = geoms[int(i)]
        if all(_pair_iou(gi, geoms[j]) <= iou_thresh for j in kept):
            kept.append(int(i))
    return [rects[i] for i in kept]
