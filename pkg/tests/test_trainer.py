"""Training loop mechanics: LR schedule, augmentation, phases, stopping, logs."""
import csv

import numpy as np
import pytest
import torch

from scribblegate import UNLABELED
from scribblegate.checkpoint import load_checkpoint
from scribblegate.config import ExperimentConfig
from scribblegate.datapipe import DatasetSplit, Sample
from scribblegate.errors import EmptyScribble, NoUnpairedMasks
from scribblegate.trainer import (
    Trainer,
    apply_roto_translation,
    augment_roto_translate,
    cyclical_lr,
    to_model_input,
)

# ---------------------------------------------------------------------------
# schedule and input helpers

def test_cyclical_lr_anchor_points():
    assert abs(cyclical_lr(0) - 1e-4) < 1e-12
    assert abs(cyclical_lr(10) - 1e-5) < 1e-12
    assert abs(cyclical_lr(20) - 1e-4) < 1e-12
    assert abs(cyclical_lr(5) - 5.5e-5) < 1e-12
    # stays inside the band everywhere
    for e in range(0, 100):
        assert 1e-5 - 1e-15 <= cyclical_lr(e) <= 1e-4 + 1e-15


def test_to_model_input_layouts():
    gray = np.arange(12.0).reshape(3, 4)
    out = to_model_input(gray)
    assert out.shape == (1, 3, 4) and out.dtype == np.float32
    np.testing.assert_array_equal(out[0], gray)

    rgb = np.arange(24.0).reshape(2, 4, 3)
    out = to_model_input(rgb)
    assert out.shape == (3, 2, 4)
    np.testing.assert_array_equal(out[0], rgb[:, :, 0])


# ---------------------------------------------------------------------------
# augmentation

def test_rotation_convention_and_identity():
    arr = np.zeros((3, 3))
    arr[0, 1] = 1.0
    # positive angle = counterclockwise: the north pixel moves west
    out = apply_roto_translation(arr, 90.0, (0, 0), order=0, cval=0.0)
    assert out[1, 0] == 1.0 and out.sum() == 1.0
    # zero transform is exact
    np.testing.assert_array_equal(
        apply_roto_translation(arr, 0.0, (0, 0), order=0, cval=0.0), arr)
    # shift is (rows, cols)
    shifted = apply_roto_translation(arr, 0.0, (1, 0), order=0, cval=0.0)
    assert shifted[1, 1] == 1.0 and shifted.sum() == 1.0


def test_augment_keeps_label_values_closed():
    rng = np.random.RandomState(0)
    image = rng.random_sample((16, 16)).astype(np.float32)
    scribble = np.full((16, 16), UNLABELED, dtype=np.uint8)
    scribble[4:7, 4:7] = 1
    scribble[10, 10] = 2
    mask = rng.randint(0, 3, (16, 16)).astype(np.uint8)
    for _ in range(10):
        _, (scr_out, mask_out) = augment_roto_translate(
            image, [(scribble, UNLABELED), (mask, 0)], rng)
        assert set(np.unique(scr_out)) <= {1, 2, UNLABELED}
        assert set(np.unique(mask_out)) <= {0, 1, 2}
        assert scr_out.dtype == scribble.dtype


def test_augment_transforms_image_and_labels_together():
    rng = np.random.RandomState(1)
    image = np.zeros((16, 16), dtype=np.float32)
    labels = np.zeros((16, 16), dtype=np.uint8)
    image[6:10, 6:10] = 1.0
    labels[6:10, 6:10] = 1
    img_out, (lab_out,) = augment_roto_translate(image, [(labels, 0)], rng)
    # bright pixels and label-1 pixels should still coincide (up to the
    # bilinear-vs-nearest boundary band)
    strong = img_out > 0.9
    assert (lab_out[strong] == 1).mean() > 0.9


# ---------------------------------------------------------------------------
# toy dataset

def toy_samples(n_subjects=8, per_subject=2, size=16, seed=0, with_masks=True,
                with_scribbles=True, annotators=1):
    rng = np.random.RandomState(seed)
    samples = {}
    for s in range(n_subjects):
        for i in range(per_subject):
            yy, xx = np.mgrid[0:size, 0:size]
            cy, cx = rng.randint(5, size - 5, 2)
            r = rng.randint(3, 5)
            mask = np.zeros((size, size), dtype=np.uint8)
            mask[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = 1
            mask[max(cy - r - 1, 0), cx] = 2
            image = (0.3 + 0.5 * (mask == 1) + 0.2 * (mask == 2)
                     + 0.05 * rng.standard_normal((size, size))).astype(np.float32)
            scribbles = []
            for _ in range(annotators):
                scr = np.full((size, size), UNLABELED, dtype=np.uint8)
                for cls in (0, 1, 2):
                    ys, xs = np.nonzero(mask == cls)
                    take = min(3, len(ys))
                    pick = rng.choice(len(ys), take, replace=False)
                    scr[ys[pick], xs[pick]] = cls
                scribbles.append(scr)
            sid = "s%02d" % s
            sample_id = "%s/img%d" % (sid, i)
            samples[sample_id] = Sample(
                id=sample_id, subject_id=sid, image=image,
                mask=mask if with_masks else None,
                scribbles=scribbles if with_scribbles else [])
    return samples


def toy_split():
    return DatasetSplit(seg_train=["s00", "s01", "s02", "s03"],
                        disc_train=["s04", "s05"],
                        validation=["s06"], test=["s07"], seed=0)


def toy_config(**overrides):
    base = dict(run_name="toy", depths=2, encoder_filters=(4, 8, 16),
                num_classes=3, image_size=16, batch_size=4, augment=False,
                patience=50, max_epochs=4, deterministic=True,
                lr_period=20.0)
    base.update(overrides)
    return ExperimentConfig(**base)


def make_trainer(**overrides):
    return Trainer(toy_config(**overrides), samples=toy_samples(),
                   split=toy_split())


# ---------------------------------------------------------------------------
# stream construction rules

def test_streams_full_fraction_reuses_weak_images_for_gan():
    tr = make_trainer(annotation_fraction=1.0)
    assert len(tr.weak_samples) == 8            # 4 subjects x 2 images
    assert [s.id for s in tr.unlabeled_samples] == [s.id for s in tr.weak_samples]
    assert len(tr.mask_pool) == 4               # disc_train masks only
    assert len(tr.val_samples) == 2 and len(tr.test_samples) == 2


def test_streams_partial_fraction_moves_dropped_to_unlabeled():
    tr = make_trainer(annotation_fraction=0.5)
    weak_ids = {s.id for s in tr.weak_samples}
    unl_ids = {s.id for s in tr.unlabeled_samples}
    assert len(weak_ids) == 4 and len(unl_ids) == 4
    assert not weak_ids & unl_ids
    seg_subjects = set(toy_split().seg_train)
    assert {s.subject_id for s in tr.weak_samples} <= seg_subjects
    assert {s.subject_id for s in tr.unlabeled_samples} <= seg_subjects


def test_streams_mixed_mask_supervision_count():
    tr = make_trainer(mixed_mask_fraction=0.5)
    assert len(tr.mask_supervised_ids) == 4     # round(0.5 * 8)
    assert tr.mask_supervised_ids <= {s.id for s in tr.weak_samples}
    tr_none = make_trainer()
    assert tr_none.mask_supervised_ids == set()


def test_missing_inputs_raise():
    with pytest.raises(NoUnpairedMasks):
        Trainer(toy_config(), samples=toy_samples(with_masks=False),
                split=toy_split())
    with pytest.raises(EmptyScribble):
        Trainer(toy_config(use_discriminator=False, use_ads=False),
                samples=toy_samples(with_scribbles=False), split=toy_split())


# ---------------------------------------------------------------------------
# phase isolation

def clone_params(module):
    return {k: v.detach().clone() for k, v in module.named_parameters()}


def changed(before, module):
    return any(not torch.equal(before[k], v)
               for k, v in module.named_parameters())


def test_weak_step_updates_segmentor_only():
    tr = make_trainer()
    disc_before = clone_params(tr.disc)
    seg_before = clone_params(tr.seg)
    rec = tr.train_step_weak(tr.weak_samples[:4])
    assert changed(seg_before, tr.seg)
    # discriminator weights untouched (only its power-iteration buffers advance)
    assert not changed(disc_before, tr.disc)
    assert rec["phase"] == "weak"
    assert np.isfinite(rec["sup"]) and np.isfinite(rec["adv_g"])
    assert rec["a0"] >= 0.0


def test_unlabeled_step_updates_both_models():
    tr = make_trainer()
    disc_before = clone_params(tr.disc)
    seg_before = clone_params(tr.seg)
    rec = tr.train_step_unlabeled(tr.unlabeled_samples[:4], tr.mask_pool[:4])
    assert changed(seg_before, tr.seg)
    assert changed(disc_before, tr.disc)
    assert np.isfinite(rec["adv_d"]) and np.isfinite(rec["adv_g"])


def test_weak_step_without_discriminator_is_pure_supervision():
    tr = make_trainer(use_discriminator=False, use_ads=False)
    rec = tr.train_step_weak(tr.weak_samples[:4])
    assert rec["adv_g"] == 0.0 and rec["a0"] is None
    assert tr.train_step_unlabeled(tr.unlabeled_samples[:4], []) is None


def test_weak_step_with_two_annotators_and_mask_supervision():
    tr = Trainer(toy_config(annotators=2), samples=toy_samples(annotators=2),
                 split=toy_split())
    rec = tr.train_step_weak(tr.weak_samples[:4])
    assert np.isfinite(rec["sup"])

    tr2 = make_trainer(mixed_mask_fraction=1.0)
    rec2 = tr2.train_step_weak(tr2.weak_samples[:4])
    assert np.isfinite(rec2["sup"])


# ---------------------------------------------------------------------------
# full runs

@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    tr = make_trainer(max_epochs=4)
    run_dir = tmp_path_factory.mktemp("run")
    metrics_path = tr.run_training(str(run_dir))
    return tr, run_dir, metrics_path


def read_metrics(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def test_metrics_csv_layout(short_run):
    _, run_dir, metrics_path = short_run
    with open(metrics_path) as fh:
        header = fh.readline().strip()
    assert header == "epoch,lr,sup_loss,adv_loss_g,adv_loss_d,val_dice"
    rows = read_metrics(metrics_path)
    assert [int(r["epoch"]) for r in rows] == list(range(len(rows)))
    assert len(rows) == 4
    for r in rows:
        for col in ("lr", "sup_loss", "adv_loss_g", "adv_loss_d", "val_dice"):
            assert np.isfinite(float(r[col]))
    assert (run_dir / "config.resolved").exists()


def test_logged_lr_matches_schedule(short_run):
    tr, _, metrics_path = short_run
    for r in read_metrics(metrics_path):
        expected = cyclical_lr(int(r["epoch"]), tr.cfg.lr_min, tr.cfg.lr_max,
                               tr.cfg.lr_period)
        assert float(r["lr"]) == expected


def test_training_never_touches_heldout_images(short_run):
    tr, _, _ = short_run
    held_out = {s.id for s in tr.samples.values()
                if s.subject_id not in set(tr.split.seg_train)}
    assert tr.seg_image_ids_seen
    assert not tr.seg_image_ids_seen & held_out
    seg_ids = {s.id for s in tr.samples.values()
               if s.subject_id in set(tr.split.seg_train)}
    assert tr.seg_image_ids_seen <= seg_ids


def test_best_checkpoint_tracks_peak_validation(short_run):
    tr, run_dir, metrics_path = short_run
    vals = [float(r["val_dice"]) for r in read_metrics(metrics_path)]
    assert (run_dir / "checkpoint-final.zip").exists()
    best = load_checkpoint(str(run_dir / "checkpoint-best.zip"))
    assert best.counters["best_val_metric"] == max(vals)
    assert int(best.counters["epoch"]) == int(np.argmax(vals))
    assert tr.restore_best() is True
    assert tr.validate() == max(vals)


def test_patience_zero_stops_at_first_plateau(tmp_path):
    tr = make_trainer(patience=0, max_epochs=30)
    metrics_path = tr.run_training(str(tmp_path / "run"))
    vals = [float(r["val_dice"]) for r in read_metrics(metrics_path)]
    best = -np.inf
    for i, v in enumerate(vals[:-1]):
        assert v > best                      # every non-final epoch improved
        best = max(best, v)
    if len(vals) < 30:
        assert vals[-1] <= best              # stopped on the first plateau


def test_two_deterministic_runs_agree_bitwise(tmp_path):
    paths = []
    for name in ("a", "b"):
        tr = make_trainer(max_epochs=2)
        paths.append(tr.run_training(str(tmp_path / name)))
    with open(paths[0], "rb") as fh:
        first = fh.read()
    with open(paths[1], "rb") as fh:
        second = fh.read()
    assert first == second


def test_predict_hard_returns_onehot(short_run):
    tr, _, _ = short_run
    preds = tr.predict_hard(tr.val_samples)
    assert set(preds) == {s.id for s in tr.val_samples}
    for arr in preds.values():
        assert arr.shape == (3, 16, 16)
        assert arr.dtype == np.uint8
        np.testing.assert_array_equal(arr.sum(axis=0), np.ones((16, 16)))
