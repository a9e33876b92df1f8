"""Shared raster primitives: sub-pixel sampling, rescaling, relabeling.

Conventions used throughout the package:

* coordinates are (row y, col x), origin top-left, row-major storage
* flow fields are float32 arrays of shape (2, H, W); index 0 is dy
  (vertical, pixels/step), index 1 is dx (horizontal)
* label maps are uint16 arrays (H, W); 0 = background, 1..K = instances
* probability maps are float32 arrays (H, W) with values in [0, 1]
* semantic masks are uint8 arrays (H, W) with values in {0, 1}

Out-of-range sample coordinates are edge-clamped so advected points can
never leave the image domain.
"""

import numpy as np

from .errors import DimensionMismatchError, LabelCapacityError, ValidationError

# Native scale of the flow construction: a diameter prior d rescales
# inputs by DEFAULT_DIAMETER / d before segmentation.
DEFAULT_DIAMETER = 30.0

MAX_LABEL = 65535


def check_same_shape(*arrays):
    """Raise DimensionMismatchError unless all (H, W) footprints agree."""
    shapes = {a.shape[-2:] for a in arrays}
    if len(shapes) > 1:
        raise DimensionMismatchError(f"raster shapes differ: {sorted(shapes)}")


def as_flow(dy, dx):
    """Stack dy/dx grids into a (2, H, W) float32 flow field."""
    dy = np.asarray(dy, np.float32)
    dx = np.asarray(dx, np.float32)
    check_same_shape(dy, dx)
    return np.stack([dy, dx])


def bilinear_sample(flow, y, x):
    """Sample a (2, H, W) flow field at sub-pixel points with edge clamp.

    ``y`` and ``x`` may be scalars or arrays; returns (vy, vx) of the
    same shape. Exact at integer nodes and bounded by the surrounding
    node values.
    """
    _, h, w = flow.shape
    y = np.clip(y, 0.0, h - 1.0)
    x = np.clip(x, 0.0, w - 1.0)
    y0 = np.floor(y).astype(np.intp)
    x0 = np.floor(x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = y - y0
    fx = x - x0
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx
    vy = (w00 * flow[0, y0, x0] + w01 * flow[0, y0, x1] +
          w10 * flow[0, y1, x0] + w11 * flow[0, y1, x1])
    vx = (w00 * flow[1, y0, x0] + w01 * flow[1, y0, x1] +
          w10 * flow[1, y1, x0] + w11 * flow[1, y1, x1])
    return vy, vx


def _target_size(n, factor):
    return max(1, int(round(n * factor)))


def _source_coords(n_out, n_in):
    # align-corners mapping: endpoints map to endpoints, constants are
    # preserved exactly
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def rescale_bilinear(grid, factor, out_shape=None):
    """Bilinear resampling of a 2D float grid by ``factor``.

    ``out_shape`` overrides the rounded target size (used to hit an
    exact original size on the inverse rescale). factor=1 returns the
    input unchanged.
    """
    if not np.isfinite(factor) or factor <= 0:
        raise ValidationError(f"rescale factor must be finite and > 0, got {factor}")
    grid = np.asarray(grid, np.float32)
    h, w = grid.shape
    if out_shape is None:
        out_shape = (_target_size(h, factor), _target_size(w, factor))
    if out_shape == (h, w) and factor == 1:
        return grid.copy()
    ys = _source_coords(out_shape[0], h)
    xs = _source_coords(out_shape[1], w)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    vy, _ = bilinear_sample(np.stack([grid, grid]), yy, xx)
    return vy.astype(np.float32)


def rescale_nearest(labels, factor, out_shape=None):
    """Nearest-neighbor rescale for label maps; value set is preserved."""
    if not np.isfinite(factor) or factor <= 0:
        raise ValidationError(f"rescale factor must be finite and > 0, got {factor}")
    labels = np.asarray(labels)
    h, w = labels.shape
    if out_shape is None:
        out_shape = (_target_size(h, factor), _target_size(w, factor))
    if out_shape == (h, w):
        return labels.copy()
    ys = np.rint(_source_coords(out_shape[0], h)).astype(np.intp)
    xs = np.rint(_source_coords(out_shape[1], w)).astype(np.intp)
    return labels[np.ix_(ys, xs)]


def relabel_sequential(labels):
    """Compact instance ids to 1..K in row-major first-occurrence order."""
    labels = np.asarray(labels)
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    nonzero = ids != 0
    ids = ids[nonzero]
    first = first[nonzero]
    order = np.argsort(first, kind="stable")
    ids = ids[order]
    if ids.size > MAX_LABEL:
        raise LabelCapacityError(f"{ids.size} instances exceed uint16 capacity")
    lut = np.zeros(int(flat.max()) + 1 if flat.size else 1, np.uint16)
    lut[ids] = np.arange(1, ids.size + 1, dtype=np.uint16)
    return lut[flat].reshape(labels.shape)


def instance_ids(labels):
    """Sorted nonzero ids present in a label map."""
    ids = np.unique(labels)
    return ids[ids != 0]
