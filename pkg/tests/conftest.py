import numpy as np
import pytest

from crownflow import SceneSpec, flows_from_labels, generate_scene


def disk_labels(h, w, centers, radii):
    """Label map of disks; overlap goes to the nearest center."""
    yy, xx = np.mgrid[0:h, 0:w]
    dists = np.stack([((yy - cy) ** 2 + (xx - cx) ** 2) / (r * r)
                      for (cy, cx), r in zip(centers, radii)])
    fg = (dists <= 1.0).any(axis=0)
    labels = np.zeros((h, w), np.uint16)
    nearest = np.argmin(dists, axis=0)
    for i in range(len(centers)):
        labels[fg & (nearest == i)] = i + 1
    return labels


def foreground(labels):
    return (labels > 0).astype(np.float32)


@pytest.fixture(scope="session")
def two_disk_labels():
    """Touching truncated disks r=12, centers 20 px apart (A2 geometry)."""
    return disk_labels(64, 64, [(32, 22), (32, 42)], [12, 12])


@pytest.fixture(scope="session")
def two_disk_flows(two_disk_labels):
    return flows_from_labels(two_disk_labels)


@pytest.fixture(scope="session")
def merged_lobes():
    """Two flattened-ellipse lobes plus their merged union.

    Returns (two_labels, merged_labels); the merged blob scored against
    the two-lobe flows is the canonical flow-filter victim.
    """
    h, w = 30, 70
    yy, xx = np.mgrid[0:h, 0:w]
    d1 = ((yy - 15) / 7.0) ** 2 + ((xx - 20) / 18.0) ** 2
    d2 = ((yy - 15) / 7.0) ** 2 + ((xx - 50) / 18.0) ** 2
    fg = (d1 <= 1) | (d2 <= 1)
    two = np.zeros((h, w), np.uint16)
    two[fg & (d1 <= d2)] = 1
    two[fg & (d1 > d2)] = 2
    return two, fg.astype(np.uint16)


@pytest.fixture(scope="session")
def small_scene():
    return generate_scene(SceneSpec(height=192, width=192, n_crowns=12,
                                    radius_range=(8, 14), max_occlusion=0.4,
                                    seed=123))
