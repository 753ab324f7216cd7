"""Scribble synthesis from dense masks: skeletonization and random walks.

The pixel loops live in a compiled Cython extension when available; set
SCRIBBLEGATE_PURE=1 (or ship without building) to use the pure-Python
fallback. Both produce bitwise-identical results because every random draw
is pregenerated with numpy before entering the kernel.
"""
import os
from dataclasses import dataclass

import numpy as np

from .. import UNLABELED
from ..errors import EmptyMask, EmptyScribble

if os.environ.get("SCRIBBLEGATE_PURE"):
    from . import _kernels_py as _impl
    BACKEND = "pure"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "pure"


@dataclass
class ScribbleMap:
    labels: np.ndarray      # H x W uint8, class index or UNLABELED
    num_classes: int

    def annotated_count(self):
        return int(np.count_nonzero(self.labels != UNLABELED))


# ---------------------------------------------------------------------------
# generators

def skeletonize(mask_channel):
    """Thin a binary mask to a 1-pixel-wide sketch of itself.

    Border pixels are removed in sequential north/south/east/west passes until
    nothing more can go without breaking 8-connectivity, so the result is a
    subset of the input with the same number of connected components. Empty
    input gives an empty output.
    """
    mask = (np.asarray(mask_channel) != 0).astype(np.uint8)
    return _impl.thin(mask)


def random_walk_scribble(mask_channel, n_iter=2500, rng_seed=0):
    """Mark the trace of a masked random walk as a scribble.

    Starts at a uniformly drawn foreground pixel; each iteration perturbs both
    coordinates independently by -1/0/+1 and keeps the move only if it stays
    inside the mask (and the canvas). Returns the visited-pixel binary map,
    which has between 1 and n_iter+1 pixels, all inside the mask.
    """
    mask = (np.asarray(mask_channel) != 0).astype(np.uint8)
    fg = np.argwhere(mask)
    if len(fg) == 0:
        raise EmptyMask("random walk needs at least one foreground pixel")
    rng = rng_seed if isinstance(rng_seed, np.random.RandomState) \
        else np.random.RandomState(rng_seed)
    start = fg[rng.randint(len(fg))]
    deltas = rng.randint(-1, 2, size=(int(n_iter), 2)).astype(np.int8)
    return _impl.random_walk(mask, deltas, int(start[0]), int(start[1]))


# ---------------------------------------------------------------------------
# bookkeeping

def indicator(scribble):
    """1 where a pixel carries a label, 0 where it is UNLABELED."""
    labels = scribble.labels if isinstance(scribble, ScribbleMap) else scribble
    return (np.asarray(labels) != UNLABELED).astype(np.uint8)


def coverage(scribble, class_id):
    """Fraction of image pixels annotated with class_id."""
    labels = scribble.labels if isinstance(scribble, ScribbleMap) else scribble
    labels = np.asarray(labels)
    return float(np.count_nonzero(labels == class_id)) / labels.size


# ---------------------------------------------------------------------------
# full-map synthesis

def synthesize_scribble_map(mask_labels, num_classes, method="skeleton",
                            n_iter=2500, rng_seed=0):
    """Build a scribble map for one image from its dense label map.

    method "skeleton": foreground classes are skeletonized; the background
    class gets a random-walk scribble (its skeleton would hug the border).
    method "walk": every class, background included, gets a random walk.
    Classes absent from the mask are simply left out.
    """
    mask_labels = np.asarray(mask_labels)
    rng = rng_seed if isinstance(rng_seed, np.random.RandomState) \
        else np.random.RandomState(rng_seed)
    out = np.full(mask_labels.shape, UNLABELED, dtype=np.uint8)
    for cls in range(num_classes):
        channel = mask_labels == cls
        if not channel.any():
            continue
        if method == "walk" or cls == 0:
            trace = random_walk_scribble(channel, n_iter=n_iter, rng_seed=rng)
        elif method == "skeleton":
            trace = skeletonize(channel)
        else:
            raise ValueError("unknown scribble method %r" % method)
        out[trace != 0] = cls
    if not (out != UNLABELED).any():
        raise EmptyScribble("mask produced no scribble pixels")
    return ScribbleMap(labels=out, num_classes=num_classes)
