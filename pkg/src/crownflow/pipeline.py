"""Pipeline orchestration: diameter-prior rescaling and tiled runs.

The diameter prior d rescales inputs by DEFAULT_DIAMETER / d before
segmentation (and the label map back afterwards), so the flow dynamics
always operate near their native convergence scale. Large rasters are
processed tile by tile in row-major order and stitched by merging
seam-crossing instances when their cross-tile IoU reaches 0.5.
"""

import numpy as np

from .dynamics import SegmentationSettings, segment
from .errors import ValidationError
from .gate import apply_mask_flows
from .raster import (DEFAULT_DIAMETER, check_same_shape, instance_ids,
                     relabel_sequential, rescale_bilinear, rescale_nearest)

SEAM_MERGE_IOU = 0.5


def _renormalize(flow):
    mag = np.sqrt(flow[0] ** 2 + flow[1] ** 2)
    out = np.where(mag > 1e-6, flow / (mag + 1e-12), 0.0)
    return out.astype(np.float32)


def segment_scaled(flow, prob, settings=None, diameter=DEFAULT_DIAMETER,
                   semantic=None):
    """Semantic gate, diameter rescale, segment, rescale labels back."""
    settings = settings or SegmentationSettings()
    if not np.isfinite(diameter) or diameter <= 0:
        raise ValidationError(f"diameter must be finite and > 0, got {diameter}")
    if semantic is not None:
        flow, prob = apply_mask_flows(flow, prob, semantic)
    factor = DEFAULT_DIAMETER / diameter
    if factor == 1.0:
        return segment(flow, prob, settings)
    h, w = prob.shape
    dy = rescale_bilinear(flow[0], factor)
    dx = rescale_bilinear(flow[1], factor)
    flow_s = _renormalize(np.stack([dy, dx]))
    prob_s = np.clip(rescale_bilinear(prob, factor), 0.0, 1.0)
    labels_s = segment(flow_s, prob_s, settings)
    return rescale_nearest(labels_s, 1.0 / factor, out_shape=(h, w))


def tile_starts(extent, tile, step):
    """Row-major tile origins covering [0, extent) with the last tile
    flush against the edge."""
    if extent <= tile:
        return [0]
    starts = list(range(0, extent - tile, step))
    starts.append(extent - tile)
    return starts


def _merge_tile(canvas, tile_labels, y0, x0):
    """Fold one tile's instances into the global canvas.

    A tile instance that overlaps an existing canvas instance with
    IoU >= 0.5 is unioned into it; at lower IoU the larger of the two
    survives; otherwise it becomes a new instance.
    """
    next_id = int(canvas.max()) + 1
    th, tw = tile_labels.shape
    window = canvas[y0:y0 + th, x0:x0 + tw]
    for k in instance_ids(tile_labels):
        pix = tile_labels == k
        area = int(pix.sum())
        existing = window[pix]
        hits = np.bincount(existing[existing > 0])
        if hits.size <= 1 or hits[1:].max() == 0:
            window[pix & (window == 0)] = next_id
            next_id += 1
            continue
        other = int(np.argmax(hits[1:])) + 1
        inter = int(hits[other])
        other_area = int((canvas == other).sum())
        iou = inter / (area + other_area - inter)
        if iou >= SEAM_MERGE_IOU:
            window[pix & (window == 0)] = other
        elif area > other_area:
            canvas[canvas == other] = 0
            window[pix & (window == 0)] = next_id
            window[pix & (window == other)] = next_id
            next_id += 1
        # else: smaller newcomer is dropped


def segment_tiled(flow, prob, settings=None, diameter=DEFAULT_DIAMETER,
                  semantic=None, tile=1024, overlap=128):
    """Segment a large raster tile by tile and stitch the results.

    Tiles are traversed row-major; stitching is a deterministic
    sequential reduction, so repeated runs are bit-identical.
    """
    settings = settings or SegmentationSettings()
    if overlap < 0 or 2 * overlap > tile:
        raise ValidationError(
            f"tile/overlap invalid: need 0 <= 2*overlap <= tile, got "
            f"tile={tile} overlap={overlap}")
    check_same_shape(flow[0], prob)
    h, w = prob.shape
    if semantic is not None:
        flow, prob = apply_mask_flows(flow, prob, semantic)
    if h <= tile and w <= tile:
        return segment_scaled(flow, prob, settings, diameter)
    step = tile - overlap
    canvas = np.zeros((h, w), np.uint32)
    for y0 in tile_starts(h, tile, step):
        for x0 in tile_starts(w, tile, step):
            sub_flow = flow[:, y0:y0 + tile, x0:x0 + tile]
            sub_prob = prob[y0:y0 + tile, x0:x0 + tile]
            tl = segment_scaled(sub_flow, sub_prob, settings, diameter)
            _merge_tile(canvas, tl, y0, x0)
    return relabel_sequential(canvas)
