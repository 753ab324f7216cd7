"""Skeleton/walk scribble synthesis: golden files, oracle agreement, walk laws."""
import importlib

import numpy as np
import pytest
from scipy import ndimage

from scribblegate import UNLABELED
from scribblegate.errors import EmptyMask, EmptyScribble
from scribblegate.scribblegen import (
    BACKEND,
    ScribbleMap,
    coverage,
    indicator,
    random_walk_scribble,
    skeletonize,
    synthesize_scribble_map,
)

from .oracles import random_blob_mask, thin_reference

EIGHT = np.ones((3, 3), dtype=int)  # 8-connectivity structuring element

# thin_reference(filled 5x5 square), computed once and frozen
GOLDEN_SQUARE_5 = np.array([
    [0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0],
    [0, 1, 1, 1, 0],
    [0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0],
], dtype=np.uint8)


# ---------------------------------------------------------------------------
# skeletonization

def test_skeleton_golden_filled_square():
    mask = np.ones((5, 5), dtype=np.uint8)
    np.testing.assert_array_equal(skeletonize(mask), GOLDEN_SQUARE_5)


def test_skeleton_fixed_points():
    single = np.zeros((7, 7), dtype=np.uint8)
    single[3, 3] = 1
    np.testing.assert_array_equal(skeletonize(single), single)

    hline = np.zeros((5, 12), dtype=np.uint8)
    hline[2, 1:11] = 1  # width-1 line of length 10
    np.testing.assert_array_equal(skeletonize(hline), hline)

    vline = np.zeros((12, 5), dtype=np.uint8)
    vline[1:11, 2] = 1
    np.testing.assert_array_equal(skeletonize(vline), vline)


def test_skeleton_empty_input():
    empty = np.zeros((6, 6), dtype=np.uint8)
    np.testing.assert_array_equal(skeletonize(empty), empty)


def test_skeleton_matches_reference_on_random_masks():
    rng = np.random.RandomState(11)
    for _ in range(30):
        mask = random_blob_mask(rng, size=int(rng.randint(8, 20)),
                                density=0.3 + 0.4 * rng.random_sample())
        np.testing.assert_array_equal(skeletonize(mask), thin_reference(mask))


def test_skeleton_subset_and_component_count_preserved():
    rng = np.random.RandomState(4)
    for _ in range(40):
        mask = random_blob_mask(rng, size=18, density=0.2 + 0.5 * rng.random_sample())
        skel = skeletonize(mask)
        assert not np.any(skel & ~mask.astype(bool))
        _, n_before = ndimage.label(mask, structure=EIGHT)
        _, n_after = ndimage.label(skel, structure=EIGHT)
        assert n_after == n_before


def test_skeleton_pure_backend_matches_active_backend():
    pure = importlib.import_module("scribblegate.scribblegen._kernels_py")
    rng = np.random.RandomState(21)
    for _ in range(10):
        mask = random_blob_mask(rng, size=16)
        np.testing.assert_array_equal(skeletonize(mask), pure.thin(mask))
        deltas = rng.randint(-1, 2, size=(200, 2)).astype(np.int8)
        fg = np.argwhere(mask)
        r, c = fg[rng.randint(len(fg))]
        if BACKEND == "compiled":
            compiled = importlib.import_module("scribblegate.scribblegen._kernels")
            np.testing.assert_array_equal(
                compiled.random_walk(mask, deltas, int(r), int(c)),
                pure.random_walk(mask, deltas, int(r), int(c)))


# ---------------------------------------------------------------------------
# random walks

def test_walk_single_pixel_mask_yields_that_pixel():
    mask = np.zeros((9, 9), dtype=np.uint8)
    mask[4, 5] = 1
    scr = random_walk_scribble(mask, n_iter=100, rng_seed=0)
    np.testing.assert_array_equal(scr, mask)


def test_walk_deterministic_and_inside_mask():
    rng = np.random.RandomState(9)
    for seed in range(8):
        mask = random_blob_mask(rng, size=20, density=0.4)
        a = random_walk_scribble(mask, n_iter=300, rng_seed=seed)
        b = random_walk_scribble(mask, n_iter=300, rng_seed=seed)
        np.testing.assert_array_equal(a, b)
        assert not np.any(a & ~mask.astype(bool))
        assert 1 <= int(a.sum()) <= 301  # at most n_iter + 1 pixels


def test_walk_on_disk_stays_inside():
    yy, xx = np.mgrid[0:20, 0:20]
    disk = (((yy - 10) ** 2 + (xx - 10) ** 2) <= 64).astype(np.uint8)
    scr = random_walk_scribble(disk, n_iter=2500, rng_seed=0)
    assert 1 <= int(scr.sum()) <= min(2500, int(disk.sum()))
    assert not np.any(scr & ~disk.astype(bool))


def test_walk_rejects_empty_mask():
    with pytest.raises(EmptyMask):
        random_walk_scribble(np.zeros((5, 5), dtype=np.uint8), rng_seed=0)


# ---------------------------------------------------------------------------
# scribble maps

def test_indicator_and_coverage():
    labels = np.full((10, 10), UNLABELED, dtype=np.uint8)
    empty = ScribbleMap(labels=labels.copy(), num_classes=3)
    assert indicator(empty).sum() == 0
    assert coverage(empty, 1) == 0.0

    labels[0, 0] = 1
    labels[0, 1] = 2
    labels[5, 5] = 0
    smap = ScribbleMap(labels=labels, num_classes=3)
    assert indicator(smap).sum() == 3
    assert coverage(smap, 1) == pytest.approx(0.01)

    full = ScribbleMap(labels=np.ones((4, 4), dtype=np.uint8), num_classes=2)
    np.testing.assert_array_equal(indicator(full), np.ones((4, 4)))
    assert coverage(full, 1) == 1.0


def test_synthesize_scribble_map_skeleton_mode():
    labels = np.zeros((16, 16), dtype=np.uint8)
    labels[4:9, 4:9] = 1
    labels[10:14, 2:12] = 2
    smap = synthesize_scribble_map(labels, num_classes=3, method="skeleton",
                                   n_iter=200, rng_seed=3)
    assert smap.labels.shape == labels.shape
    for cls in (0, 1, 2):
        marked = smap.labels == cls
        assert marked.any(), "class %d lost its scribble" % cls
        assert not np.any(marked & (labels != cls))
    # unlabeled majority remains
    assert (smap.labels == UNLABELED).sum() > labels.size // 2


def test_synthesize_scribble_map_walk_mode_deterministic():
    labels = np.zeros((16, 16), dtype=np.uint8)
    labels[3:13, 3:13] = 1
    a = synthesize_scribble_map(labels, 2, method="walk", n_iter=150, rng_seed=5)
    b = synthesize_scribble_map(labels, 2, method="walk", n_iter=150, rng_seed=5)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.any((a.labels == 1) & (labels != 1))
    assert not np.any((a.labels == 0) & (labels != 0))


def test_synthesize_scribble_map_skips_absent_classes():
    labels = np.zeros((12, 12), dtype=np.uint8)
    labels[2:6, 2:6] = 1  # class 2 never appears
    smap = synthesize_scribble_map(labels, num_classes=3, rng_seed=0)
    assert not np.any(smap.labels == 2)


def test_synthesize_scribble_map_requires_some_annotation():
    with pytest.raises(EmptyScribble):
        synthesize_scribble_map(np.zeros((0, 0), dtype=np.uint8), 2, rng_seed=0)
