"""Euler advection of gated pixels and sink clustering into instances.

Pixels with foreground probability above the gate are treated as
particles, advected along the flow field for a fixed number of unit
Euler steps, and grouped by the histogram bin their trajectories settle
in. Instance separation comes purely from trajectory convergence; there
is no watershed or non-maximum suppression anywhere in this module.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError
from .flows import filter_by_flow_error, keep_largest_component
from .raster import bilinear_sample, check_same_shape, relabel_sequential

__all__ = ["SegmentationSettings", "advect", "cluster_sinks", "segment"]


@dataclass(frozen=True)
class SegmentationSettings:
    niter: int = 200
    flow_threshold: float = 1.0
    cellprob_threshold: float = 0.0
    min_area: int = 15
    h_min: int = 10          # min trajectory count for a sink seed bin
    grow_iters: int = 5      # basin growth rounds around each seed
    grow_min: int = 3        # min bin count absorbed during growth

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def advect(flow, prob, settings):
    """Advect every gated pixel for ``settings.niter`` Euler steps.

    Gating is strict (prob > cellprob_threshold). Returns
    (origins_y, origins_x, final_y, final_x) with origins in row-major
    order and finals clamped to the image bounds.
    """
    check_same_shape(flow[0], prob)
    h, w = prob.shape
    oy, ox = np.nonzero(prob > settings.cellprob_threshold)
    y = oy.astype(np.float64)
    x = ox.astype(np.float64)
    for _ in range(settings.niter):
        vy, vx = bilinear_sample(flow, y, x)
        y = np.clip(y + vy, 0.0, h - 1.0)
        x = np.clip(x + vx, 0.0, w - 1.0)
    return oy, ox, y, x


def _find_seeds(counts, h_min):
    # candidate bins are 5x5-window maxima with enough mass; among tied
    # maxima in one window the earliest row-major bin wins
    neighborhood_max = ndimage.maximum_filter(counts, size=5, mode="constant")
    cand_y, cand_x = np.nonzero((counts >= h_min) & (counts == neighborhood_max))
    seeds = []
    for y, x in zip(cand_y, cand_x):
        if any(abs(y - sy) <= 2 and abs(x - sx) <= 2 for sy, sx in seeds):
            continue
        seeds.append((int(y), int(x)))
    return seeds


def cluster_sinks(oy, ox, fy, fx, dims, settings):
    """Group trajectory endpoints into a label map.

    Finals are rounded to integer bins and histogrammed; seed bins grow
    basins over their 8-neighborhood for a fixed number of rounds
    (seeds processed by descending seed-bin mass, then row-major, so the
    result is schedule-independent). Each origin pixel takes the label
    of the basin holding its final bin, else background.
    """
    h, w = dims
    labels = np.zeros((h, w), np.uint16)
    if oy.size == 0:
        return labels
    by = np.clip(np.rint(fy).astype(np.intp), 0, h - 1)
    bx = np.clip(np.rint(fx).astype(np.intp), 0, w - 1)
    counts = np.bincount(by * w + bx, minlength=h * w).reshape(h, w)

    seeds = _find_seeds(counts, settings.h_min)
    if not seeds:
        return labels

    claims = np.full((h, w), -1, np.int32)
    order = sorted(range(len(seeds)),
                   key=lambda i: (-counts[seeds[i]], seeds[i]))
    frontiers = {}
    for i in order:
        claims[seeds[i]] = i
        frontiers[i] = [seeds[i]]
    for _ in range(settings.grow_iters):
        for i in order:
            new = []
            for y, x in frontiers[i]:
                for ny in range(max(y - 1, 0), min(y + 2, h)):
                    for nx in range(max(x - 1, 0), min(x + 2, w)):
                        if claims[ny, nx] < 0 and counts[ny, nx] >= settings.grow_min:
                            claims[ny, nx] = i
                            new.append((ny, nx))
            frontiers[i] = new

    basin = claims[by, bx]
    keep = basin >= 0
    labels[oy[keep], ox[keep]] = (basin[keep] + 1).astype(np.uint16)
    return relabel_sequential(labels)


def _cleanup_instances(labels):
    # per instance: keep the largest 4-connected chunk and fill enclosed
    # background holes (holes are advection artifacts, not topology)
    out = labels.copy()
    for sl, k in zip(ndimage.find_objects(labels), range(1, labels.max() + 1)):
        if sl is None:
            continue
        mask = out[sl] == k
        if not mask.any():
            continue
        main = keep_largest_component(mask)
        filled = ndimage.binary_fill_holes(main)
        region = out[sl]
        region[mask & ~main] = 0
        region[filled & (region == 0)] = k
    return out


def segment(flow, prob, settings=None):
    """Full flow-convergence grouping: advect, cluster, clean, filter.

    Pipeline: advect -> cluster_sinks -> per-instance connectivity
    cleanup -> area filter -> flow-consistency filter -> sequential
    relabel. Pure function of its inputs.
    """
    settings = settings or SegmentationSettings()
    if flow[0].shape != prob.shape:
        raise DimensionMismatchError(
            f"flow {flow[0].shape} vs prob {prob.shape}")
    oy, ox, fy, fx = advect(flow, prob, settings)
    labels = cluster_sinks(oy, ox, fy, fx, prob.shape, settings)
    if labels.max() == 0:
        return labels
    labels = _cleanup_instances(labels)
    if settings.min_area > 0:
        areas = np.bincount(labels.ravel())
        small = np.nonzero(areas < settings.min_area)[0]
        small = small[small != 0]
        if small.size:
            labels[np.isin(labels, small)] = 0
    labels = relabel_sequential(labels)
    if labels.max() == 0:
        return labels
    return filter_by_flow_error(labels, flow, settings.flow_threshold)
