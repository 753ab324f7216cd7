"""Data loading, normalization, subject-level splits, and batching.

On-disk layout:
    <root>/images/<subject>/<slice>.png     8/16-bit grayscale (or 8-bit RGB)
    <root>/masks/<subject>/<slice>.png      8-bit indexed, pixel value = class index
    <root>/scribbles/<subject>/<slice>.png  8-bit indexed, 255 = unlabeled
    <root>/index.csv                        subject_id, split_hint, image_path, mask_path, scribble_path
"""
import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import UNLABELED
from .errors import ShapeMismatch, TooFewSubjects, ZeroSpread


# ---------------------------------------------------------------------------
# domain types

@dataclass
class ImageSample:
    id: str
    pixels: np.ndarray            # H x W float (channels-last if RGB)
    subject_id: str
    normalized: bool = False


@dataclass
class LabelMask:
    channels: np.ndarray          # c x H x W binary, one-hot per pixel
    class_names: list = field(default_factory=list)


@dataclass
class DatasetSplit:
    seg_train: list               # scribble-supervised half of the training subjects
    disc_train: list              # masks-only half (their images are discarded)
    validation: list
    test: list
    seed: int

    def groups(self):
        return {"seg_train": self.seg_train, "disc_train": self.disc_train,
                "validation": self.validation, "test": self.test}


@dataclass
class Record:
    """One row of index.csv."""
    subject_id: str
    split_hint: str               # "" when absent
    image_path: str
    mask_path: str
    scribble_paths: list          # one path per annotator (usually one)


@dataclass
class Sample:
    """One fully loaded training/eval example."""
    id: str
    subject_id: str
    image: np.ndarray             # H x W float32, normalized
    mask: np.ndarray              # H x W uint8 label map (or None)
    scribbles: list               # list of H x W uint8 maps with 255 sentinel (or None)


# ---------------------------------------------------------------------------
# normalization

def normalize_median_iqr(stack):
    """Remove the median and divide by the interquartile range of a subject stack."""
    stack = np.asarray(stack, dtype=np.float64)
    med = np.median(stack)
    q1, q3 = np.percentile(stack, [25.0, 75.0])
    iqr = q3 - q1
    if iqr == 0:
        raise ZeroSpread("constant stack: IQR is zero")
    return (stack - med) / iqr


def normalize_minmax_symmetric(image):
    """Affine map of [min, max] onto [-1, 1]."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = image.min(), image.max()
    if hi == lo:
        raise ZeroSpread("constant image: max equals min")
    return (image - lo) / (hi - lo) * 2.0 - 1.0


def crop_or_pad(image, target_h, target_w, pad_value=0):
    """Center-crop or symmetrically pad to an exact size; ties go toward top-left.

    Works on (H, W) and (H, W, C) arrays; pads with `pad_value`.
    """
    image = np.asarray(image)
    h, w = image.shape[0], image.shape[1]
    out_shape = (target_h, target_w) + image.shape[2:]
    out = np.full(out_shape, pad_value, dtype=image.dtype)

    # source window (crop) and destination offset (pad), per axis
    def spans(size, target):
        if size >= target:
            start = (size - target) // 2
            return start, start + target, 0, target
        off = (target - size) // 2
        return 0, size, off, off + size

    sy0, sy1, dy0, dy1 = spans(h, target_h)
    sx0, sx1, dx0, dx1 = spans(w, target_w)
    out[dy0:dy1, dx0:dx1] = image[sy0:sy1, sx0:sx1]
    return out


# ---------------------------------------------------------------------------
# splits and batching

def split_dataset(subject_ids, fractions=(0.70, 0.15, 0.15), seed=0):
    """Shuffle subjects under `seed`, split 70/15/15, halve the training group.

    The training half with masks only (disc_train) never shows its images to
    the segmentor. Odd training counts give the extra subject to seg_train;
    validation/test sizes are floored.
    """
    ids = sorted(set(subject_ids))
    if len(ids) < 4:
        raise TooFewSubjects("need at least 4 subjects, got %d" % len(ids))
    rng = np.random.RandomState(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]

    n = len(order)
    n_val = int(math.floor(fractions[1] * n))
    n_test = int(math.floor(fractions[2] * n))
    n_train = n - n_val - n_test
    n_seg = (n_train + 1) // 2
    n_disc = n_train - n_seg
    if min(n_val, n_test, n_seg, n_disc) < 1:
        raise TooFewSubjects("split of %d subjects leaves an empty group" % n)

    seg = order[:n_seg]
    disc = order[n_seg:n_seg + n_disc]
    val = order[n_train:n_train + n_val]
    test = order[n_train + n_val:]
    return DatasetSplit(seg, disc, val, test, seed)


def split_from_hints(records, seed=0):
    """Honor a fully populated split_hint column; return None when unusable.

    Hint values may name the four groups directly, or use train/validation/test
    (train is then halved under `seed` like split_dataset).
    """
    hints = {}
    for r in records:
        if not r.split_hint:
            return None
        hints.setdefault(r.subject_id, r.split_hint)
    values = set(hints.values())
    if values <= {"seg_train", "disc_train", "validation", "test"}:
        groups = {g: sorted(s for s, h in hints.items() if h == g)
                  for g in ("seg_train", "disc_train", "validation", "test")}
        return DatasetSplit(groups["seg_train"], groups["disc_train"],
                            groups["validation"], groups["test"], seed)
    if values <= {"train", "validation", "val", "test"}:
        train = sorted(s for s, h in hints.items() if h == "train")
        val = sorted(s for s, h in hints.items() if h in ("validation", "val"))
        test = sorted(s for s, h in hints.items() if h == "test")
        rng = np.random.RandomState(seed)
        train = [train[i] for i in rng.permutation(len(train))]
        n_seg = (len(train) + 1) // 2
        return DatasetSplit(sorted(train[:n_seg]), sorted(train[n_seg:]), val, test, seed)
    return None


def make_batches(samples, batch_size=12, shuffle_seed=None):
    """Split a sample list into batches; short final batch kept.

    With a seed the order is a deterministic permutation, otherwise unchanged.
    """
    samples = list(samples)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if shuffle_seed is not None:
        rng = np.random.RandomState(shuffle_seed)
        samples = [samples[i] for i in rng.permutation(len(samples))]
    return [samples[i:i + batch_size] for i in range(0, len(samples), batch_size)]


def batches_from_rng(samples, batch_size, rng):
    """Like make_batches but drawing the permutation from a live RandomState."""
    samples = list(samples)
    samples = [samples[i] for i in rng.permutation(len(samples))]
    return [samples[i:i + batch_size] for i in range(0, len(samples), batch_size)]


# ---------------------------------------------------------------------------
# one-hot helpers

def mask_to_onehot(labels, num_classes):
    labels = np.asarray(labels)
    onehot = np.zeros((num_classes,) + labels.shape, dtype=np.uint8)
    for c in range(num_classes):
        onehot[c] = labels == c
    return onehot


def onehot_to_labels(channels):
    channels = np.asarray(channels)
    if channels.ndim != 3:
        raise ShapeMismatch("expected c x H x W, got %s" % (channels.shape,))
    return np.argmax(channels, axis=0).astype(np.uint8)


# ---------------------------------------------------------------------------
# on-disk I/O

def load_image(path):
    img = Image.open(path)
    arr = np.array(img)
    return arr.astype(np.float32)


def save_image_png(path, array, bits=16):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    arr = np.asarray(array)
    if bits == 16:
        Image.fromarray(arr.astype(np.uint16)).save(path)
    else:
        Image.fromarray(arr.astype(np.uint8)).save(path)


def load_labelmap(path):
    """Read an 8-bit indexed PNG as a label map (masks and scribbles alike)."""
    arr = np.array(Image.open(path))
    if arr.ndim != 2:
        raise ShapeMismatch("label PNG must be single-channel: %s" % path)
    return arr.astype(np.uint8)


def save_labelmap_png(path, labels):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(np.asarray(labels).astype(np.uint8)).save(path)


def load_index(root):
    """Parse index.csv into Records; extra scribble_path_N columns are annotators."""
    rows = []
    with open(os.path.join(root, "index.csv"), newline="") as fh:
        reader = csv.DictReader(fh)
        extra = sorted(c for c in (reader.fieldnames or [])
                       if c.startswith("scribble_path_"))
        for row in reader:
            scribbles = [row.get("scribble_path", "") or ""]
            scribbles += [row.get(c, "") or "" for c in extra]
            scribbles = [s for s in scribbles if s]
            rows.append(Record(
                subject_id=row["subject_id"],
                split_hint=(row.get("split_hint") or "").strip(),
                image_path=row["image_path"],
                mask_path=row.get("mask_path", "") or "",
                scribble_paths=scribbles,
            ))
    if not rows:
        raise TooFewSubjects("index.csv at %s is empty" % root)
    return rows


def save_index(root, rows):
    os.makedirs(root, exist_ok=True)
    with open(os.path.join(root, "index.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "split_hint", "image_path",
                         "mask_path", "scribble_path"])
        for r in rows:
            scr = r.scribble_paths[0] if r.scribble_paths else ""
            writer.writerow([r.subject_id, r.split_hint, r.image_path,
                             r.mask_path, scr])


def load_dataset(root, normalization="median_iqr", image_size=None):
    """Load every record, normalizing per subject stack.

    Returns {sample_id: Sample}; sample_id is "<subject>/<file-stem>".
    normalization: median_iqr | minmax | none.
    """
    records = load_index(root)
    by_subject = {}
    for r in records:
        by_subject.setdefault(r.subject_id, []).append(r)

    samples = {}
    for subject, recs in sorted(by_subject.items()):
        images = [load_image(os.path.join(root, r.image_path)) for r in recs]
        stack = np.stack(images)
        if normalization == "median_iqr":
            stack = normalize_median_iqr(stack)
        elif normalization == "minmax":
            stack = np.stack([normalize_minmax_symmetric(im) for im in stack])
        elif normalization != "none":
            raise ValueError("unknown normalization %r" % normalization)

        for r, image in zip(recs, stack):
            mask = scribbles = None
            if r.mask_path:
                mask = load_labelmap(os.path.join(root, r.mask_path))
            if r.scribble_paths:
                scribbles = [load_labelmap(os.path.join(root, p))
                             for p in r.scribble_paths]
            if image_size is not None:
                image = crop_or_pad(image, image_size, image_size, 0.0)
                if mask is not None:
                    mask = crop_or_pad(mask, image_size, image_size, 0)
                if scribbles is not None:
                    scribbles = [crop_or_pad(s, image_size, image_size, UNLABELED)
                                 for s in scribbles]
            stem = os.path.splitext(os.path.basename(r.image_path))[0]
            sid = "%s/%s" % (subject, stem)
            samples[sid] = Sample(sid, subject, image.astype(np.float32),
                                  mask, scribbles)
    return samples
