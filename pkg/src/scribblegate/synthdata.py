"""Synthetic desk-scale dataset: nested disk/annulus scenes on a 64x64 canvas.

Class 1 is a filled disk, class 2 an annulus strictly around it — the nested
topology that makes sparse supervision interesting. Intensities are per-class
bases plus Gaussian texture and a smooth illumination gradient, bright enough
apart that the task is learnable at desk scale.
"""
import os
from dataclasses import dataclass

import numpy as np

from . import datapipe

CANVAS = 64
NUM_CLASSES = 3
BASE_INTENSITY = {0: 0.25, 1: 0.85, 2: 0.55}   # background, disk, annulus
TEXTURE_STD = 0.05
GRADIENT_AMPLITUDE = 0.08


@dataclass
class ShapeScene:
    center: tuple          # (cy, cx)
    r_inner: float         # disk radius
    r_outer: float         # annulus outer radius
    seed: int


def _scene_mask(scene):
    yy, xx = np.mgrid[0:CANVAS, 0:CANVAS]
    dist = np.sqrt((yy - scene.center[0]) ** 2 + (xx - scene.center[1]) ** 2)
    labels = np.zeros((CANVAS, CANVAS), dtype=np.uint8)
    labels[dist <= scene.r_outer] = 2
    labels[dist <= scene.r_inner] = 1
    return labels


def _render(scene, labels, rng):
    img = np.empty((CANVAS, CANVAS), dtype=np.float64)
    for cls, base in BASE_INTENSITY.items():
        img[labels == cls] = base
    gy, gx = rng.uniform(-GRADIENT_AMPLITUDE, GRADIENT_AMPLITUDE, size=2)
    yy, xx = np.mgrid[0:CANVAS, 0:CANVAS]
    img += gy * yy / CANVAS + gx * xx / CANVAS
    img += rng.normal(0.0, TEXTURE_STD, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def sample_scene(rng, jitter_from=None):
    """Draw subject geometry, or jitter an existing subject's geometry."""
    if jitter_from is None:
        cy = rng.uniform(24, 40)
        cx = rng.uniform(24, 40)
        r1 = rng.uniform(6, 10)
        # keep the ring several pixels wide: per-pixel overlap scores on a
        # near-1px structure are dominated by discretization, not learning
        width = rng.uniform(4, 6)
        return ShapeScene((cy, cx), r1, r1 + width, 0)
    base = jitter_from
    cy = base.center[0] + rng.uniform(-2, 2)
    cx = base.center[1] + rng.uniform(-2, 2)
    r1 = max(4.0, base.r_inner + rng.uniform(-1, 1))
    width = max(3.0, (base.r_outer - base.r_inner) + rng.uniform(-1, 1))
    return ShapeScene((cy, cx), r1, r1 + width, 0)


def generate_dataset(out_root, n_subjects=20, images_per_subject=10, seed=0):
    """Write images/, masks/ and index.csv under out_root; deterministic per seed."""
    if n_subjects < 4:
        raise ValueError("need at least 4 subjects")
    rng = np.random.RandomState(seed)
    rows = []
    for s in range(n_subjects):
        subject = "subj%03d" % s
        anatomy = sample_scene(rng)
        for k in range(images_per_subject):
            scene = sample_scene(rng, jitter_from=anatomy)
            labels = _scene_mask(scene)
            image = _render(scene, labels, rng)
            img_rel = os.path.join("images", subject, "img%02d.png" % k)
            mask_rel = os.path.join("masks", subject, "img%02d.png" % k)
            datapipe.save_image_png(os.path.join(out_root, img_rel),
                                    np.round(image * 65535.0), bits=16)
            datapipe.save_labelmap_png(os.path.join(out_root, mask_rel), labels)
            rows.append(datapipe.Record(subject, "", img_rel, mask_rel, []))
    datapipe.save_index(out_root, rows)
    return rows
