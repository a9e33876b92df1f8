"""Ground-truth flow synthesis from label masks via heat diffusion.

Each instance gets a potential surface built by iterated masked
diffusion from its center pixel; the normalized gradient of the
log-compressed potential is the flow field that carries every pixel of
the instance toward the center. The same construction doubles as the
reference for the flow-consistency filter: a candidate mask whose
recomputed flows disagree with the predicted flows beyond a threshold
is discarded.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import UnknownLabelError
from .raster import check_same_shape, instance_ids, relabel_sequential

NORM_EPS = 1e-12


@dataclass(frozen=True)
class InstanceStats:
    id: int
    center: tuple          # (y, x) medoid pixel
    bbox: tuple            # (y0, x0, y1, x1) inclusive
    area: int


def _mask_and_bbox(labels, k):
    mask = labels == k
    if not mask.any():
        raise UnknownLabelError(f"label {k} not present")
    ys, xs = np.nonzero(mask)
    return mask, (ys.min(), xs.min(), ys.max(), xs.max()), ys, xs


def instance_center(labels, k):
    """Medoid of instance k: the mask pixel closest to the mask centroid.

    Ties break toward the smallest row, then smallest column (the pixel
    lists from np.nonzero are row-major, so argmin already does this).
    """
    _, _, ys, xs = _mask_and_bbox(labels, k)
    cy = ys.mean()
    cx = xs.mean()
    d2 = (ys - cy) ** 2 + (xs - cx) ** 2
    i = int(np.argmin(d2))
    return int(ys[i]), int(xs[i])


def instance_stats(labels, k):
    mask, bbox, ys, xs = _mask_and_bbox(labels, k)
    return InstanceStats(int(k), instance_center(labels, k), bbox, int(ys.size))


def diffuse_potential(labels, k):
    """Heat potential for instance k on its bbox extended by a 1 px margin.

    Runs 2*(bbox_h + bbox_w) Jacobi iterations: each iteration injects
    +1 heat at the center pixel, then replaces every in-mask pixel by
    the mean of itself and its 4 neighbors, with out-of-mask neighbors
    reading 0 and still counting toward the divisor of 5. Returns
    (psi, (y0, x0)) where psi = log(1 + T) on the extended patch and
    (y0, x0) is the patch origin in image coordinates (may be -1 at the
    image border; the margin row/col is outside the mask by
    construction, so psi is 0 there).
    """
    mask, (y0, x0, y1, x1), _, _ = _mask_and_bbox(labels, k)
    bh = y1 - y0 + 1
    bw = x1 - x0 + 1
    patch = np.zeros((bh + 2, bw + 2), bool)
    patch[1:-1, 1:-1] = mask[y0:y1 + 1, x0:x1 + 1]
    cy, cx = instance_center(labels, k)
    cy, cx = cy - y0 + 1, cx - x0 + 1

    t = np.zeros(patch.shape)
    inner = patch[1:-1, 1:-1]
    for _ in range(2 * (bh + bw)):
        t[cy, cx] += 1.0
        # off-mask entries of t stay exactly 0, so shifted reads already
        # implement the "out-of-mask neighbors contribute 0" rule
        nb = t[:-2, 1:-1] + t[2:, 1:-1] + t[1:-1, :-2] + t[1:-1, 2:]
        new = (t[1:-1, 1:-1] + nb) / 5.0
        t[1:-1, 1:-1] = np.where(inner, new, 0.0)
    return np.log1p(t), (y0 - 1, x0 - 1)


def flows_from_labels(labels):
    """Unit-or-zero flow field pointing toward each instance's center.

    Per instance: central-difference gradient of the diffusion
    potential, normalized by g / (|g| + eps). Background pixels are
    exactly (0, 0). Deterministic: repeated calls are bit-identical.
    """
    labels = np.asarray(labels)
    h, w = labels.shape
    flow = np.zeros((2, h, w), np.float32)
    for k in instance_ids(labels):
        psi, (py, px) = diffuse_potential(labels, k)
        gy, gx = np.gradient(psi)
        mag = np.sqrt(gy * gy + gx * gx)
        vy = gy / (mag + NORM_EPS)
        vx = gx / (mag + NORM_EPS)
        ys, xs = np.nonzero(labels[max(py, 0):py + psi.shape[0],
                                   max(px, 0):px + psi.shape[1]] == k)
        oy, ox = max(py, 0), max(px, 0)
        flow[0, ys + oy, xs + ox] = vy[ys + oy - py, xs + ox - px]
        flow[1, ys + oy, xs + ox] = vx[ys + oy - py, xs + ox - px]
    return flow


def flow_error(labels, flow_pred):
    """Per-instance mean squared flow disagreement.

    Recomputes reference flows from ``labels`` and returns
    {id: mean((dy_p - dy_r)^2 + (dx_p - dx_r)^2)} over each instance's
    pixels. For unit-or-zero fields the value lies in [0, 4].
    """
    labels = np.asarray(labels)
    check_same_shape(labels, flow_pred[0])
    ref = flows_from_labels(labels)
    diff = (flow_pred[0] - ref[0]) ** 2 + (flow_pred[1] - ref[1]) ** 2
    out = {}
    for k in instance_ids(labels):
        out[int(k)] = float(diff[labels == k].mean())
    return out


def filter_by_flow_error(labels, flow_pred, flow_threshold):
    """Drop instances whose flow error exceeds the threshold; relabel."""
    errs = flow_error(labels, flow_pred)
    bad = [k for k, e in errs.items() if e > flow_threshold]
    if not bad:
        return relabel_sequential(labels)
    out = np.asarray(labels).copy()
    out[np.isin(out, bad)] = 0
    return relabel_sequential(out)


def keep_largest_component(mask):
    """Largest 4-connected component of a boolean mask (first in
    row-major order on ties)."""
    comp, n = ndimage.label(mask, structure=[[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    if n <= 1:
        return mask
    sizes = ndimage.sum_labels(mask, comp, np.arange(1, n + 1))
    return comp == (int(np.argmax(sizes)) + 1)
