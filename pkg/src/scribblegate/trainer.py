"""Two-phase adversarial training loop.

Each step first optimizes the segmentor on a weakly annotated batch
(a0 * WPCE + a1 * generator loss), then plays one round of the GAN game on an
unlabeled batch against unpaired masks: the discriminator updates on
a2 * V(D), the segmentor on a3 * V(G) against the refreshed discriminator.
The streams are zipped per step and the shorter one cycles.
"""
import copy
import math
import os
import signal

import numpy as np
import scipy.ndimage as ndi
import torch

from . import UNLABELED, datapipe, evaluation, objectives
from .checkpoint import save_checkpoint
from .config import serialize_config
from .discriminator import (Discriminator, DiscriminatorConfig,
                            apply_instance_noise, apply_label_noise,
                            mask_pyramid)
from .errors import EmptyScribble, NoUnpairedMasks, TooFewSubjects
from .segmentor import Segmentor, SegmentorConfig


def cyclical_lr(epoch, lr_min=1e-5, lr_max=1e-4, period=20.0):
    """Cosine cycle peaking at epoch 0: lr(0)=lr_max, lr(period/2)=lr_min."""
    return lr_min + (lr_max - lr_min) * (1.0 + math.cos(2.0 * math.pi * epoch / period)) / 2.0


def to_model_input(image):
    """H x W (or H x W x C) numpy image -> C x H x W float32 array."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        return arr[None]
    return arr.transpose(2, 0, 1)


def predict_hard(seg, sample_list, batch_size=12):
    """Hardened one-hot predictions in eval mode: {sample_id: (c,H,W)}."""
    seg.eval()
    out = {}
    with torch.no_grad():
        for i in range(0, len(sample_list), batch_size):
            batch = sample_list[i:i + batch_size]
            x = torch.from_numpy(np.stack([to_model_input(s.image)
                                           for s in batch]))
            pred = seg(x)
            for b, s in enumerate(batch):
                out[s.id] = evaluation.harden(pred.final[b].numpy())
    return out


# ---------------------------------------------------------------------------
# augmentation

def apply_roto_translation(array, angle_deg, shift_yx, order, cval):
    """Rotate about the center (positive = counterclockwise), then translate."""
    arr = np.asarray(array)
    out = ndi.rotate(arr, angle_deg, reshape=False, order=order,
                     mode="constant", cval=cval)
    return ndi.shift(out, shift_yx, order=order, mode="constant", cval=cval)


def augment_roto_translate(image, label_maps, rng, max_rotation=15.0,
                           max_translation=0.10):
    """Same random rotation/translation for an image and its label maps.

    label_maps: list of (labels, fill_value) pairs; labels resample with
    nearest-neighbor (so scribbles keep UNLABELED where nothing lands), the
    image bilinearly.
    """
    angle = rng.uniform(-max_rotation, max_rotation)
    h, w = np.asarray(image).shape[:2]
    shift = (rng.uniform(-max_translation, max_translation) * h,
             rng.uniform(-max_translation, max_translation) * w)
    out_img = apply_roto_translation(image, angle, shift, order=1, cval=0.0)
    out_labels = [apply_roto_translation(m, angle, shift, order=0, cval=cv)
                  for m, cv in label_maps]
    return out_img, out_labels


# ---------------------------------------------------------------------------
# trainer

class Trainer:
    """Owns models, optimizers, RNG streams, and the data streams of one run."""

    def __init__(self, cfg, samples=None, split=None):
        cfg.validate()
        self.cfg = cfg
        if cfg.deterministic:
            torch.set_num_threads(1)

        # data ------------------------------------------------------------
        if samples is None:
            samples = datapipe.load_dataset(cfg.data_root, cfg.normalization,
                                            cfg.image_size)
        self.samples = samples
        if split is None:
            records = datapipe.load_index(cfg.data_root)
            split = datapipe.split_from_hints(records, cfg.split_seed)
            if split is None:
                subjects = sorted({s.subject_id for s in samples.values()})
                split = datapipe.split_dataset(
                    subjects, (cfg.train_frac, cfg.val_frac, cfg.test_frac),
                    cfg.split_seed)
        self.split = split

        self.data_rng = np.random.RandomState(cfg.seed_data)
        self.noise_rng = np.random.RandomState(cfg.seed_noise)
        self._build_streams()

        # models ----------------------------------------------------------
        torch.manual_seed(cfg.seed_init)
        self.seg = Segmentor(SegmentorConfig(
            cfg.depths, tuple(cfg.encoder_filters), cfg.num_classes,
            cfg.input_channels, cfg.use_gating, cfg.use_ads))
        self.opt_seg = torch.optim.Adam(self.seg.parameters(), lr=cfg.lr_max,
                                        betas=(0.9, 0.999), eps=1e-8)
        self.disc = self.opt_disc = None
        if cfg.use_discriminator:
            self.disc = Discriminator(DiscriminatorConfig(
                cfg.depths, tuple(cfg.encoder_filters), cfg.compress_channels,
                cfg.label_flip_prob, cfg.instance_noise_sigma),
                cfg.num_classes, cfg.image_size)
            self.opt_disc = torch.optim.Adam(self.disc.parameters(),
                                             lr=cfg.lr_max, betas=(0.9, 0.999),
                                             eps=1e-8)

        # state -----------------------------------------------------------
        self.epoch = 0
        self.step = 0
        self.best_val_metric = -float("inf")
        self.epochs_since_improvement = 0
        self.step_log = []
        self.seg_image_ids_seen = set()
        self._best_snapshot = None

    # -- streams ----------------------------------------------------------

    def _group_samples(self, subjects):
        return [self.samples[k] for k in sorted(self.samples)
                if self.samples[k].subject_id in set(subjects)]

    def _build_streams(self):
        cfg = self.cfg
        seg_train = self._group_samples(self.split.seg_train)
        scribbled = [s for s in seg_train if s.scribbles]
        if not scribbled:
            raise EmptyScribble("no scribbled images in seg_train")

        perm = self.data_rng.permutation(len(scribbled))
        n_keep = int(math.ceil(cfg.annotation_fraction * len(scribbled)))
        kept = [scribbled[i] for i in perm[:n_keep]]
        dropped = [scribbled[i] for i in perm[n_keep:]]

        n_mask = int(round(cfg.mixed_mask_fraction * len(kept)))
        self.mask_supervised_ids = {s.id for s in kept[:n_mask] if s.mask is not None}

        self.weak_samples = sorted(kept, key=lambda s: s.id)
        unscribbled = [s for s in seg_train if not s.scribbles]
        unlabeled = sorted(dropped + unscribbled, key=lambda s: s.id)
        # the adversarial phase needs images; with every scribble kept, all of
        # seg_train serves unlabeled duty (disc_train images stay unseen)
        self.unlabeled_samples = unlabeled if unlabeled else list(self.weak_samples)

        self.mask_pool = [s for s in self._group_samples(self.split.disc_train)
                          if s.mask is not None]
        if cfg.use_discriminator and not self.mask_pool:
            raise NoUnpairedMasks("disc_train provides no masks")
        self.val_samples = [s for s in self._group_samples(self.split.validation)
                            if s.mask is not None]
        self.test_samples = [s for s in self._group_samples(self.split.test)
                             if s.mask is not None]
        if not self.val_samples:
            raise TooFewSubjects("validation split has no masks")

    # -- tensor prep --------------------------------------------------------

    def _to_input(self, image):
        return to_model_input(image)

    def _prep_weak(self, batch):
        cfg = self.cfg
        images, scribble_sets, mask_labels = [], [], []
        for s in batch:
            image = s.image
            if s.id in self.mask_supervised_ids:
                labels = [(s.mask, 0)]
            else:
                labels = [(scr, UNLABELED) for scr in s.scribbles[:cfg.annotators]]
            if cfg.augment:
                image, maps = augment_roto_translate(
                    image, labels, self.data_rng,
                    cfg.aug_rotation, cfg.aug_translation)
            else:
                maps = [m for m, _ in labels]
            if s.id in self.mask_supervised_ids:
                mask_labels.append(maps[0])
                scribble_sets.append(None)
            else:
                mask_labels.append(None)
                scribble_sets.append(maps)
            images.append(self._to_input(image))
        x = torch.from_numpy(np.stack(images))
        return x, scribble_sets, mask_labels

    def _prep_unlabeled(self, batch):
        images = []
        for s in batch:
            image = s.image
            if self.cfg.augment:
                image, _ = augment_roto_translate(
                    image, [], self.data_rng,
                    self.cfg.aug_rotation, self.cfg.aug_translation)
            images.append(self._to_input(image))
        return torch.from_numpy(np.stack(images))

    def _prep_masks(self, batch):
        onehots = []
        for s in batch:
            labels = s.mask
            if self.cfg.augment:
                _, (labels,) = augment_roto_translate(
                    s.image, [(labels, 0)], self.data_rng,
                    self.cfg.aug_rotation, self.cfg.aug_translation)
            onehots.append(datapipe.mask_to_onehot(labels, self.cfg.num_classes))
        return torch.from_numpy(np.stack(onehots).astype(np.float32))

    def _fake_pyramid(self, pred):
        if self.cfg.use_ads:
            return pred.soft_segs()
        return mask_pyramid(pred.final, self.cfg.depths)

    # -- phases -------------------------------------------------------------

    def train_step_weak(self, batch):
        cfg = self.cfg
        x, scribble_sets, mask_labels = self._prep_weak(batch)
        self.seg.train()
        pred = self.seg(x)

        terms = []
        for b in range(len(batch)):
            probs = pred.final[b]
            if mask_labels[b] is not None:
                onehot = datapipe.mask_to_onehot(mask_labels[b], cfg.num_classes)
                terms.append(objectives.full_mask_wce(probs, onehot, eps=cfg.epsilon))
            else:
                terms.append(objectives.multi_annotator_loss(
                    probs, scribble_sets[b], eps=cfg.epsilon))
        sup = torch.stack(terms).mean()

        record = {"phase": "weak", "sup": float(sup.item()),
                  "adv_g": 0.0, "a0": None}
        if self.disc is not None:
            pyramid = self._fake_pyramid(pred)
            level1 = apply_instance_noise(pyramid[0], cfg.instance_noise_sigma,
                                          self.noise_rng)
            self.disc.train()
            adv = objectives.lsgan_gen_loss(self.disc([level1] + pyramid[1:]))
            a0 = objectives.dynamic_a0(sup.item(), adv.item())
            loss = a0 * sup + cfg.a1 * adv
            record.update(adv_g=float(adv.item()), a0=a0)
        else:
            loss = sup

        self.opt_seg.zero_grad()
        if self.opt_disc is not None:
            self.opt_disc.zero_grad()
        loss.backward()
        self.opt_seg.step()

        self.seg_image_ids_seen.update(s.id for s in batch)
        self.step_log.append(record)
        return record

    def train_step_unlabeled(self, image_batch, mask_batch):
        cfg = self.cfg
        if self.disc is None:
            return None
        x = self._prep_unlabeled(image_batch)
        real = self._prep_masks(mask_batch)

        self.seg.train()
        self.disc.train()
        pred = self.seg(x)
        fake_pyr = self._fake_pyramid(pred)
        real_pyr = mask_pyramid(real, cfg.depths)

        # discriminator round: noisy inputs, possibly flipped targets
        fake_detached = [lv.detach() for lv in fake_pyr]
        real1 = apply_instance_noise(real_pyr[0], cfg.instance_noise_sigma,
                                     self.noise_rng)
        fake1 = apply_instance_noise(fake_detached[0], cfg.instance_noise_sigma,
                                     self.noise_rng)
        real_scores = self.disc([real1] + real_pyr[1:])
        fake_scores = self.disc([fake1] + fake_detached[1:])
        real_t = apply_label_noise(np.ones(len(real_scores)),
                                   cfg.label_flip_prob, self.noise_rng)
        fake_t = apply_label_noise(-np.ones(len(fake_scores)),
                                   cfg.label_flip_prob, self.noise_rng)
        d_loss = objectives.lsgan_disc_loss(real_scores, fake_scores, real_t, fake_t)
        self.opt_disc.zero_grad()
        (cfg.a2 * d_loss).backward()
        self.opt_disc.step()

        # generator round against the updated discriminator
        gen1 = apply_instance_noise(fake_pyr[0], cfg.instance_noise_sigma,
                                    self.noise_rng)
        g_loss = objectives.lsgan_gen_loss(self.disc([gen1] + fake_pyr[1:]))
        self.opt_seg.zero_grad()
        self.opt_disc.zero_grad()
        (cfg.a3 * g_loss).backward()
        self.opt_seg.step()

        self.seg_image_ids_seen.update(s.id for s in image_batch)
        record = {"phase": "unlabeled", "adv_d": float(d_loss.item()),
                  "adv_g": float(g_loss.item())}
        self.step_log.append(record)
        return record

    # -- epochs ---------------------------------------------------------------

    def run_epoch(self):
        cfg = self.cfg
        lr = cyclical_lr(self.epoch, cfg.lr_min, cfg.lr_max, cfg.lr_period)
        for opt in (self.opt_seg, self.opt_disc):
            if opt is not None:
                for group in opt.param_groups:
                    group["lr"] = lr

        weak = datapipe.batches_from_rng(self.weak_samples, cfg.batch_size,
                                         self.data_rng)
        sups, advs_g, advs_d = [], [], []
        if self.disc is not None:
            unl = datapipe.batches_from_rng(self.unlabeled_samples,
                                            cfg.batch_size, self.data_rng)
            masks = datapipe.batches_from_rng(self.mask_pool, cfg.batch_size,
                                              self.data_rng)
            n_steps = max(len(weak), len(unl))
        else:
            n_steps = len(weak)

        for i in range(n_steps):
            rec = self.train_step_weak(weak[i % len(weak)])
            sups.append(rec["sup"])
            advs_g.append(rec["adv_g"])
            if self.disc is not None:
                rec = self.train_step_unlabeled(unl[i % len(unl)],
                                                masks[i % len(masks)])
                advs_g.append(rec["adv_g"])
                advs_d.append(rec["adv_d"])
            self.step += 1

        return {"lr": lr,
                "sup_loss": float(np.mean(sups)) if sups else 0.0,
                "adv_loss_g": float(np.mean(advs_g)) if advs_g else 0.0,
                "adv_loss_d": float(np.mean(advs_d)) if advs_d else 0.0}

    def predict_hard(self, sample_list, batch_size=None):
        return predict_hard(self.seg, sample_list,
                            batch_size or self.cfg.batch_size)

    def validate(self, sample_list=None):
        sample_list = sample_list if sample_list is not None else self.val_samples
        preds = self.predict_hard(sample_list)
        scores = [evaluation.dice_multiclass(
            preds[s.id], datapipe.mask_to_onehot(s.mask, self.cfg.num_classes))
            for s in sample_list]
        return float(np.mean(scores))

    # -- full run ---------------------------------------------------------------

    def _rng_streams(self):
        return {"data": self.data_rng, "noise": self.noise_rng}

    def _counters(self):
        return {"epoch": self.epoch, "step": self.step,
                "best_val_metric": self.best_val_metric,
                "epochs_since_improvement": self.epochs_since_improvement}

    def _snapshot_best(self):
        self._best_snapshot = {
            "seg": copy.deepcopy(self.seg.state_dict()),
            "disc": copy.deepcopy(self.disc.state_dict()) if self.disc else None,
            "counters": self._counters(),
        }

    def restore_best(self):
        """Load the best-validation weights back into the live models."""
        if self._best_snapshot is None:
            return False
        self.seg.load_state_dict(self._best_snapshot["seg"])
        if self.disc is not None and self._best_snapshot["disc"] is not None:
            self.disc.load_state_dict(self._best_snapshot["disc"])
        return True

    def save(self, path, best=False):
        if best and self._best_snapshot is not None:
            snap = self._best_snapshot
            save_checkpoint(path, self.cfg, snap["seg"], snap["disc"],
                            counters=snap["counters"])
        else:
            save_checkpoint(path, self.cfg, self.seg.state_dict(),
                            self.disc.state_dict() if self.disc else None,
                            self.opt_seg, self.opt_disc,
                            self._counters(), self._rng_streams())

    def run_training(self, run_dir):
        cfg = self.cfg
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "config.resolved"), "w") as fh:
            fh.write(serialize_config(cfg))

        def raise_interrupt(signum, frame):
            raise KeyboardInterrupt()

        metrics_path = os.path.join(run_dir, "metrics.csv")
        old_handlers = {}
        try:
            for sig in (signal.SIGINT, signal.SIGTERM):
                old_handlers[sig] = signal.signal(sig, raise_interrupt)
        except ValueError:  # not the main thread; run unguarded
            old_handlers = {}

        try:
            with open(metrics_path, "w", newline="") as fh:
                fh.write("epoch,lr,sup_loss,adv_loss_g,adv_loss_d,val_dice\n")
                fh.flush()
                for _ in range(cfg.max_epochs):
                    rec = self.run_epoch()
                    val = self.validate()
                    if val > self.best_val_metric:
                        self.best_val_metric = val
                        self.epochs_since_improvement = 0
                        self._snapshot_best()
                    else:
                        self.epochs_since_improvement += 1
                    fh.write("%d,%r,%r,%r,%r,%r\n" % (
                        self.epoch, rec["lr"], rec["sup_loss"],
                        rec["adv_loss_g"], rec["adv_loss_d"], val))
                    fh.flush()
                    self.epoch += 1
                    if self.epochs_since_improvement > cfg.patience:
                        break
        except KeyboardInterrupt:
            self.save(os.path.join(run_dir, "checkpoint-interrupt.zip"))
            raise
        finally:
            for sig, handler in old_handlers.items():
                signal.signal(sig, handler)

        self.save(os.path.join(run_dir, "checkpoint-final.zip"))
        self.save(os.path.join(run_dir, "checkpoint-best.zip"), best=True)
        return metrics_path
