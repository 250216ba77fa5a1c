"""Dataset generators for the three benchmark tasks, plus the IOU metric.

Datasets are (X, Y) row matrices.  Targets always live in [0,1] so PSNR with
peak 1.0 is comparable across tasks.  When `normalized` is set, input rows
are mapped onto the unit circle (exactly unit 2-norm per row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import ImageGrid
from .rng import RngState

# Arc half-span (radians) for the normalized curve embedding.  The span must
# stay below pi: an even activation sees antipodal rows identically, which
# would make the feature matrix exactly rank-deficient.  Within that limit a
# wider arc conditions the lifted feature matrix better, so we sit close to
# the boundary with a small safety margin.
CURVE_ARC_HALF_SPAN = 1.55

SCENE_KINDS = ("sphere", "torus", "union")
SPHERE_RADIUS = 0.6
TORUS_MAJOR = 0.55
TORUS_MINOR = 0.2
SHELL_THICKNESS = 0.05


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.X.shape[0] != self.Y.shape[0]:
            raise ValueError(f"bad dataset shapes {self.X.shape}, {self.Y.shape}")

    @property
    def n(self) -> int:
        return self.X.shape[0]


def curve_signal(x: np.ndarray) -> np.ndarray:
    """The benchmark 1-D signal: three incommensurate-looking sine harmonics."""
    return np.sin(2 * np.pi * x) + np.sin(6 * np.pi * x) + np.sin(10 * np.pi * x)


def curve_target(x: np.ndarray) -> np.ndarray:
    """Signal affinely rescaled into [0,1] by the fixed map (f+3)/6.

    The map is fixed (not per-dataset min/max) so that the regression target
    at a given x never depends on how many points were sampled.
    """
    return (curve_signal(x) + 3.0) / 6.0


def lift_to_circle(x: np.ndarray) -> np.ndarray:
    """Embed scalar inputs in [-1,1] as exactly-unit-norm 2-D rows.

    x maps to angle 1.55*x + pi/2, a 3.1-radian arc centred on the top of
    the circle: injective, and containing no antipodal pair.
    """
    alpha = CURVE_ARC_HALF_SPAN * np.asarray(x, dtype=np.float64) + np.pi / 2
    return np.stack([np.cos(alpha), np.sin(alpha)], axis=1)


def make_curve_dataset(n: int, rng: RngState | None = None, normalized: bool = True) -> Dataset:
    """n uniformly spaced samples of the curve on [-1, 1].

    The grid is deterministic; rng is accepted for signature uniformity with
    the other generators but never consumed.
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    x = np.linspace(-1.0, 1.0, n)
    y = curve_target(x)[:, None]
    if normalized:
        return Dataset(X=lift_to_circle(x), Y=y, normalized=True)
    return Dataset(X=x[:, None], Y=y, normalized=False)


def _axis_coord(idx: np.ndarray, extent: int) -> np.ndarray:
    """Map pixel index 0..extent-1 to [-1,1], center of odd extents at 0."""
    if extent == 1:
        return np.zeros_like(idx, dtype=np.float64)
    return 2.0 * idx / (extent - 1) - 1.0


def make_image_dataset(img: ImageGrid, n: int, rng: RngState) -> Dataset:
    """n distinct pixels of img as ((x, y) in [-1,1]^2) -> channel values."""
    total = img.width * img.height
    if n > total:
        raise ValueError(f"requested {n} pixels from a {total}-pixel image")
    if n < 1:
        raise ValueError("need at least 1 pixel")
    perm = rng.shuffle_index(total)[:n]
    rows = perm // img.width
    cols = perm % img.width
    x = np.stack([_axis_coord(cols, img.width), _axis_coord(rows, img.height)], axis=1)
    y = img.pixels[rows, cols, :]
    return Dataset(X=x, Y=np.array(y, dtype=np.float64), normalized=False)


def grid_coords(width: int, height: int) -> np.ndarray:
    """Full pixel grid in row-major order, matching make_image_dataset's map."""
    cols, rows = np.meshgrid(np.arange(width), np.arange(height))
    return np.stack(
        [_axis_coord(cols.ravel(), width), _axis_coord(rows.ravel(), height)], axis=1
    )


# ---------------------------------------------------------------------------
# occupancy


@dataclass(frozen=True)
class OccupancyScene:
    """Analytic solid in the [-1,1]^3 box: sphere, torus, or their union."""

    shape: str = "union"

    def __post_init__(self):
        if self.shape not in SCENE_KINDS:
            raise ValueError(f"unknown scene {self.shape!r}")

    def sdf(self, p: np.ndarray) -> np.ndarray:
        """Signed distance; negative inside."""
        p = np.asarray(p, dtype=np.float64)
        sphere = np.sqrt(np.sum(p * p, axis=-1)) - SPHERE_RADIUS
        if self.shape == "sphere":
            return sphere
        ring = np.sqrt(p[..., 0] ** 2 + p[..., 1] ** 2) - TORUS_MAJOR
        torus = np.sqrt(ring * ring + p[..., 2] ** 2) - TORUS_MINOR
        if self.shape == "torus":
            return torus
        return np.minimum(sphere, torus)

    def occupancy(self, p: np.ndarray) -> np.ndarray:
        """1.0 inside the solid, 0.0 outside."""
        return (self.sdf(p) <= 0.0).astype(np.float64)


def make_occupancy_dataset(scene: OccupancyScene, n: int, rng: RngState) -> Dataset:
    """Half the points uniform in the box, half rejection-sampled into a thin
    shell around the surface; labels from the analytic inside test."""
    if n < 1:
        raise ValueError("need at least 1 point")
    n_shell = n // 2
    n_uni = n - n_shell
    pts_uni = rng.derive("uniform").uniform((n_uni, 3), -1.0, 1.0)

    shell_rng = rng.derive("shell")
    collected = []
    got = 0
    while got < n_shell:
        batch = shell_rng.uniform((max(4096, 4 * n_shell), 3), -1.0, 1.0)
        keep = batch[np.abs(scene.sdf(batch)) <= SHELL_THICKNESS]
        collected.append(keep)
        got += keep.shape[0]
    pts_shell = np.concatenate(collected, axis=0)[:n_shell]

    x = np.concatenate([pts_uni, pts_shell], axis=0)
    y = scene.occupancy(x)[:, None]
    return Dataset(X=x, Y=y, normalized=False)


def iou(pred: np.ndarray, truth: np.ndarray, threshold: float = 0.5) -> float:
    """Intersection over union of thresholded prediction vs binary truth.

    An empty union (nothing predicted, nothing true) counts as perfect
    agreement and returns 1.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ValueError("length mismatch")
    p = pred >= threshold
    t = truth >= 0.5
    union = int(np.sum(p | t))
    if union == 0:
        return 1.0
    return float(np.sum(p & t)) / union
