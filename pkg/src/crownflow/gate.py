"""Semantic gating: restrict instance inference to canopy pixels.

The canopy mask is applied up front (zeroing image bands or predicted
flows/probabilities outside canopy); an optional instance-level overlap
filter can additionally drop detections that mostly fall on background.
"""

import numpy as np

from .errors import ValidationError
from .raster import check_same_shape, instance_ids, relabel_sequential


def apply_mask_image(bands, mask):
    """Zero image bands outside the canopy mask (elementwise product)."""
    bands = np.asarray(bands, np.float32)
    check_same_shape(bands, mask)
    return bands * (np.asarray(mask) > 0)


def apply_mask_flows(flow, prob, mask):
    """Zero flows and probabilities outside the canopy mask."""
    check_same_shape(flow[0], prob, mask)
    keep = np.asarray(mask) > 0
    return flow * keep, (prob * keep).astype(np.float32)


def filter_instances_by_canopy(labels, mask, rho=0.5):
    """Drop instances whose in-canopy pixel fraction is below ``rho``."""
    if not 0.0 <= rho <= 1.0:
        raise ValidationError(f"rho must be in [0,1], got {rho}")
    labels = np.asarray(labels)
    check_same_shape(labels, mask)
    canopy = np.asarray(mask) > 0
    out = labels.copy()
    for k in instance_ids(labels):
        pix = labels == k
        if canopy[pix].mean() < rho:
            out[pix] = 0
    return relabel_sequential(out)
