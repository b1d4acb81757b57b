"""Pathfinder-Segmentation: dashed-path images with per-pixel labels.

Label 0 is background (including circles and distractors), 2 marks the main path
whose two endpoints both carry circles, 1 marks the other main path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dlr.errors import LayoutInfeasible

MAX_RETRIES = 200


@dataclass(frozen=True)
class PathfinderParams:
    dashes_per_main_path: int = 8
    n_distractors: int = 4
    distractor_dashes: int = 2
    dash_len_range: tuple[float, float] = (3.0, 5.0)
    gap_range: tuple[float, float] = (2.0, 3.0)
    thickness: float = 1.5
    circle_radius: float = 2.0
    max_turn: float = np.pi / 6
    min_separation: float = 4.0


@dataclass
class PathfinderSample:
    image: np.ndarray  # (M, M) in [0, 1]
    mask: np.ndarray  # (M, M) in {0, 1, 2}
    metadata: dict = field(default_factory=dict)


def _segment_distance(M: int, p0, p1) -> np.ndarray:
    """Distance from every pixel centre to the segment p0-p1 (points are (row, col))."""
    rr, cc = np.mgrid[0:M, 0:M].astype(np.float64)
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    d = p1 - p0
    denom = float(d @ d)
    t = np.zeros_like(rr) if denom == 0 else np.clip(((rr - p0[0]) * d[0] + (cc - p0[1]) * d[1]) / denom, 0, 1)
    return np.hypot(rr - (p0[0] + t * d[0]), cc - (p0[1] + t * d[1]))


def dash_coverage(M: int, dashes, thickness: float) -> np.ndarray:
    """Anti-aliased ink in [0, 1]: one pixel of linear falloff beyond half the thickness."""
    cov = np.zeros((M, M))
    for p0, p1 in dashes:
        dist = _segment_distance(M, p0, p1)
        np.maximum(cov, np.clip(thickness / 2 + 0.5 - dist, 0.0, 1.0), out=cov)
    return cov


def dash_pixels(M: int, dashes, thickness: float) -> np.ndarray:
    """Pixels counted as part of the dashes: ink coverage >= 0.5."""
    return dash_coverage(M, dashes, thickness) >= 0.5


def disk_pixels(M: int, center, radius: float) -> np.ndarray:
    rr, cc = np.mgrid[0:M, 0:M]
    return np.hypot(rr - center[0], cc - center[1]) <= radius


def _grow_path(rng, M, n_dashes, params: PathfinderParams, margin: float, blocked: np.ndarray | None):
    """Random walk with bounded turning; returns the list of dash endpoints or None."""
    lo, hi = margin, M - 1 - margin
    pos = rng.uniform(lo, hi, 2)
    angle = rng.uniform(0, 2 * np.pi)
    dashes = []
    for _ in range(n_dashes):
        for _attempt in range(20):
            a = angle + rng.uniform(-params.max_turn, params.max_turn)
            length = rng.uniform(*params.dash_len_range)
            end = pos + length * np.array([np.sin(a), np.cos(a)])
            if lo <= end[0] <= hi and lo <= end[1] <= hi:
                if blocked is None or not np.any(dash_pixels(M, [(pos, end)], params.thickness) & blocked):
                    break
            angle += np.pi / 2 * rng.choice([-1, 1])  # turn away from the edge / obstacle
        else:
            return None
        dashes.append((pos.copy(), end))
        angle = a
        gap = rng.uniform(*params.gap_range)
        pos = end + gap * np.array([np.sin(a), np.cos(a)])
        pos = np.clip(pos, lo, hi)
    return dashes


def _dilate(mask: np.ndarray, radius: float) -> np.ndarray:
    """Pixels within ``radius`` of any pixel of ``mask`` (brute force, small images)."""
    M = mask.shape[0]
    out = np.zeros_like(mask)
    r = int(np.ceil(radius))
    pts = np.argwhere(mask)
    for dr in range(-r, r + 1):
        for dc in range(-r, r + 1):
            if dr * dr + dc * dc > radius * radius:
                continue
            rr = np.clip(pts[:, 0] + dr, 0, M - 1)
            cc = np.clip(pts[:, 1] + dc, 0, M - 1)
            out[rr, cc] = True
    return out


def gen_pathfinder(M: int = 64, params: PathfinderParams | None = None, seed: int = 0) -> PathfinderSample:
    params = params or PathfinderParams()
    if M < 32:
        raise ValueError("M must be >= 32")
    rng = np.random.default_rng(seed)
    margin = params.circle_radius + 1.0
    for _ in range(MAX_RETRIES):
        first = _grow_path(rng, M, params.dashes_per_main_path, params, margin, None)
        if first is None:
            continue
        blocked = _dilate(dash_pixels(M, first, params.thickness), params.min_separation)
        second = _grow_path(rng, M, params.dashes_per_main_path, params, margin, blocked)
        if second is not None:
            break
    else:
        raise LayoutInfeasible("layout infeasible: could not place two separated main paths")
    main = [first, second]

    distractors = []
    for _ in range(params.n_distractors):
        for _attempt in range(MAX_RETRIES):
            d = _grow_path(rng, M, params.distractor_dashes, params, margin, None)
            if d is not None:
                distractors.append(d)
                break
        else:
            raise LayoutInfeasible("layout infeasible: distractor placement failed")

    closed = int(rng.integers(2))  # the path with both endpoints circled
    circles = []
    for i, path in enumerate(main):
        ends = [path[0][0], path[-1][1]]
        if i == closed:
            circles.extend((i, tuple(e)) for e in ends)
        elif rng.random() < 0.5:
            circles.append((i, tuple(ends[int(rng.integers(2))])))

    image = dash_coverage(M, [s for p in main + distractors for s in p], params.thickness)
    for _, c in circles:
        image = np.maximum(image, disk_pixels(M, c, params.circle_radius).astype(float))

    mask = np.zeros((M, M), dtype=np.int64)
    for i, path in enumerate(main):
        mask[dash_pixels(M, path, params.thickness)] = 2 if i == closed else 1

    metadata = {
        "M": M,
        "thickness": params.thickness,
        "circle_radius": params.circle_radius,
        "dashes_per_main_path": params.dashes_per_main_path,
        "main_paths": [[(tuple(map(float, a)), tuple(map(float, b))) for a, b in p] for p in main],
        "distractors": [[(tuple(map(float, a)), tuple(map(float, b))) for a, b in p] for p in distractors],
        "circles": [(i, tuple(map(float, c))) for i, c in circles],
        "closed_path": closed,
    }
    return PathfinderSample(image=image, mask=mask, metadata=metadata)


def validate_pathfinder(sample: PathfinderSample) -> tuple[bool, list[str]]:
    """Check the label invariants against the metadata; stops at the first violated rule."""
    mask, meta = sample.mask, sample.metadata
    M = mask.shape[0]

    def fail(msg):
        return False, [msg]

    if not np.isin(mask, (0, 1, 2)).all():
        return fail("invalid class: mask has labels outside {0, 1, 2}")
    main = meta.get("main_paths", [])
    if len(main) != 2:
        return fail(f"expected 2 main paths, found {len(main)}")
    want = meta.get("dashes_per_main_path")
    if want is not None and any(len(p) != want for p in main):
        return fail("dash count differs from dashes_per_main_path")
    ends = [{tuple(p[0][0]), tuple(p[-1][1])} for p in main]
    circled = [{tuple(c) for i, c in meta.get("circles", []) if i == k} for k in range(2)]
    full = [k for k in range(2) if circled[k] >= ends[k] and len(ends[k]) == 2]
    if len(full) != 1:
        return fail(f"exactly one main path must be circled at both ends, found {len(full)}")
    closed = full[0]
    if meta.get("closed_path", closed) != closed:
        return fail("closed_path metadata disagrees with circle placement")
    thickness = meta["thickness"]
    pix = [dash_pixels(M, p, thickness) for p in main]
    if np.any(pix[0] & pix[1]):
        return fail("main paths overlap")
    if np.any((mask == 2) & ~pix[closed]):
        return fail("class-2 pixels off the circled path")
    if np.any((mask == 1) & ~pix[1 - closed]):
        return fail("class-1 pixels off the open path")
    if np.any(mask[pix[closed]] != 2) or np.any(mask[pix[1 - closed]] != 1):
        return fail("main-path pixels missing their label")
    distractor = dash_pixels(M, [s for p in meta.get("distractors", []) for s in p], thickness) \
        if meta.get("distractors") else np.zeros_like(mask, dtype=bool)
    if np.any(mask[distractor & ~pix[0] & ~pix[1]] != 0):
        return fail("distractor pixels carry a non-zero label")
    return True, []


def flatten(images: np.ndarray) -> np.ndarray:
    """Row-major flattening of (..., M, M) to (..., M*M)."""
    images = np.asarray(images)
    return images.reshape(images.shape[:-2] + (-1,))


def unflatten(seq: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq)
    M = int(round(np.sqrt(seq.shape[-1])))
    if M * M != seq.shape[-1]:
        raise ValueError(f"length {seq.shape[-1]} is not a perfect square")
    return seq.reshape(seq.shape[:-1] + (M, M))
