"""Seeded synthetic crown scenes for closed-loop verification.

Crowns are star-convex blobs: a base radius modulated by low-order
angular harmonics (starting at j=2 so the nominal center stays the
visual center). Placement is z-ordered, topmost crown wins overlaps,
and a candidate is rejected if it would hide too much of any crown
already placed. All randomness comes from a single numpy PCG64
generator seeded from the spec, so identical specs give bit-identical
scenes within this implementation.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import PlacementError, ValidationError

BACKGROUND_COLOR = np.array([0.35, 0.28, 0.20], np.float32)   # bare soil
NOISE_SIGMA = 0.02


@dataclass(frozen=True)
class SceneSpec:
    height: int = 512
    width: int = 512
    n_crowns: int = 50
    radius_range: tuple = (8.0, 24.0)
    lobe_amplitude: float = 0.3
    max_occlusion: float = 0.5
    clutter: bool = False
    seed: int = 0

    def validate(self):
        r_min, r_max = self.radius_range
        if r_min < 3:
            raise ValidationError(f"r_min must be >= 3, got {r_min}")
        if r_min > r_max:
            raise ValidationError("radius_range must be (r_min, r_max) with r_min <= r_max")
        if not 0.0 <= self.lobe_amplitude < 0.5:
            raise ValidationError("lobe_amplitude must be in [0, 0.5)")
        if not 0.0 <= self.max_occlusion < 1.0:
            raise ValidationError("max_occlusion must be in [0, 1)")
        if self.height < 8 or self.width < 8:
            raise ValidationError("scene must be at least 8x8")
        if self.n_crowns < 0:
            raise ValidationError("n_crowns must be >= 0")


@dataclass(frozen=True)
class Scene:
    image: np.ndarray      # (3, H, W) float32 in [0, 1]
    labels: np.ndarray     # (H, W) uint16 ground truth
    semantic: np.ndarray   # (H, W) uint8 canopy mask
    spec: SceneSpec
    crowns: list = field(default_factory=list, repr=False)


def crown_shape(center, r0, harmonics, dims):
    """Rasterize the star-convex region dist <= r(theta) around center.

    r(theta) = r0 * (1 + sum_j a_j * cos(j*theta + phi_j)); the
    amplitudes must sum below 0.5 so r stays positive and every ray
    from the center crosses the boundary exactly once.
    """
    amp_sum = sum(a for a, _ in harmonics)
    if amp_sum >= 0.5:
        raise ValidationError(f"harmonic amplitudes sum to {amp_sum} >= 0.5")
    h, w = dims
    cy, cx = center
    reach = r0 * (1.0 + amp_sum)
    y0 = max(int(np.floor(cy - reach)) - 1, 0)
    y1 = min(int(np.ceil(cy + reach)) + 1, h - 1)
    x0 = max(int(np.floor(cx - reach)) - 1, 0)
    x1 = min(int(np.ceil(cx + reach)) + 1, w - 1)
    yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    dy = yy - cy
    dx = xx - cx
    theta = np.arctan2(dy, dx)
    r = np.full(theta.shape, r0)
    for j, (a, phi) in enumerate(harmonics, start=2):
        r += r0 * a * np.cos(j * theta + phi)
    inside = dy * dy + dx * dx <= r * r
    mask = np.zeros(dims, bool)
    mask[y0:y1 + 1, x0:x1 + 1] = inside
    return mask


def _sample_crown(rng, spec):
    r_min, r_max = spec.radius_range
    r0 = rng.uniform(r_min, r_max)
    if spec.lobe_amplitude > 0:
        raw = rng.random(3)
        total = spec.lobe_amplitude * rng.random()
        amps = raw / raw.sum() * total
    else:
        amps = np.zeros(3)
        rng.random(4)  # keep the draw count fixed either way
    phases = rng.uniform(0.0, 2 * np.pi, 3)
    margin = r0 * (1.0 + float(amps.sum())) + 1.0
    if spec.height - 1 - 2 * margin <= 0 or spec.width - 1 - 2 * margin <= 0:
        raise PlacementError(
            f"scene {spec.height}x{spec.width} too small for radius {r0:.1f}")
    cy = rng.uniform(margin, spec.height - 1 - margin)
    cx = rng.uniform(margin, spec.width - 1 - margin)
    color = np.array([rng.uniform(0.05, 0.25),
                      rng.uniform(0.35, 0.75),
                      rng.uniform(0.05, 0.30)], np.float32)
    harmonics = list(zip(amps.tolist(), phases.tolist()))
    return (cy, cx), r0, harmonics, color


def generate_scene(spec):
    """Generate a deterministic scene from its spec.

    Crowns are placed in z-order; a placement that would hide more than
    ``max_occlusion`` of any existing crown is rejected and resampled.
    After 1000 * n_crowns rejections a PlacementError reports how many
    crowns were achieved. Clutter patches (false-positive bait for the
    semantic gate) touch the image only, never labels or semantic.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    dims = (spec.height, spec.width)
    labels = np.zeros(dims, np.uint16)
    crowns = []          # (center, r0, harmonics, color)
    full_area = []
    visible = []

    rejections = 0
    budget = 1000 * max(spec.n_crowns, 1)
    while len(crowns) < spec.n_crowns:
        center, r0, harmonics, color = _sample_crown(rng, spec)
        mask = crown_shape(center, r0, harmonics, dims)
        area = int(mask.sum())
        hidden = np.bincount(labels[mask], minlength=len(crowns) + 1)
        ok = area > 0
        for k in range(1, len(crowns) + 1):
            if visible[k - 1] - hidden[k] < (1.0 - spec.max_occlusion) * full_area[k - 1]:
                ok = False
                break
        if not ok:
            rejections += 1
            if rejections > budget:
                raise PlacementError(
                    f"placement failed after {rejections} rejections",
                    achieved=len(crowns))
            continue
        for k in range(1, len(crowns) + 1):
            visible[k - 1] -= int(hidden[k])
        labels[mask] = len(crowns) + 1
        crowns.append((center, r0, harmonics, color))
        full_area.append(area)
        visible.append(area)

    image = np.empty((3, spec.height, spec.width), np.float32)
    image[:] = BACKGROUND_COLOR[:, None, None]
    yy, xx = np.mgrid[0:spec.height, 0:spec.width]
    for k, ((cy, cx), r0, _, color) in enumerate(crowns, start=1):
        pix = labels == k
        dist = np.sqrt((yy[pix] - cy) ** 2 + (xx[pix] - cx) ** 2)
        shade = 1.0 - 0.45 * np.clip(dist / r0, 0.0, 1.2) / 1.2
        image[:, pix] = color[:, None] * shade

    if spec.clutter:
        n_patches = max(3, spec.n_crowns // 10)
        for _ in range(n_patches):
            center, r0, harmonics, _ = _sample_crown(rng, spec)
            patch = crown_shape(center, r0, harmonics, dims) & (labels == 0)
            tint = np.array([rng.uniform(0.3, 0.6),
                             rng.uniform(0.4, 0.7),
                             rng.uniform(0.2, 0.5)], np.float32)
            texture = rng.uniform(0.6, 1.0, int(patch.sum()))
            image[:, patch] = tint[:, None] * texture

    image += rng.normal(0.0, NOISE_SIGMA, image.shape).astype(np.float32)
    np.clip(image, 0.0, 1.0, out=image)

    semantic = (labels > 0).astype(np.uint8)
    return Scene(image=image, labels=labels, semantic=semantic, spec=spec,
                 crowns=crowns)
