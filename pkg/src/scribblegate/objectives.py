"""Loss functions: weighted partial cross-entropy, least-squares GAN pair,
dynamic loss balancing, multi-annotator and full-mask variants.

Partial losses touch annotated pixels only — unlabeled pixels are never
gathered into the computation, so their contribution to value and gradient is
exactly zero, not merely small.
"""
import numpy as np
import torch

from . import UNLABELED
from .errors import EmptyBatch, EmptyScribble, ShapeMismatch

EPS = 1e-12


def class_weights(scribble, num_classes):
    """w_i = 1 - n_i / n_tot, counting annotated pixels only.

    Classes absent from the scribble get weight 1.
    """
    labels = np.asarray(scribble)
    annotated = labels != UNLABELED
    n_tot = int(np.count_nonzero(annotated))
    if n_tot == 0:
        raise EmptyScribble("scribble has no annotated pixel")
    counts = np.bincount(labels[annotated].ravel().astype(np.int64),
                         minlength=num_classes)[:num_classes]
    return 1.0 - counts.astype(np.float64) / n_tot


def _gather_annotated(pred, scribble):
    labels = np.asarray(scribble)
    if pred.shape[-2:] != labels.shape:
        raise ShapeMismatch("prediction %s vs scribble %s"
                            % (tuple(pred.shape), labels.shape))
    ys, xs = np.nonzero(labels != UNLABELED)
    if len(ys) == 0:
        raise EmptyScribble("scribble has no annotated pixel")
    lab = labels[ys, xs].astype(np.int64)
    return torch.from_numpy(lab), torch.from_numpy(ys), torch.from_numpy(xs)


def wpce_loss(pred, scribble, weights=None, eps=EPS):
    """Mean over annotated pixels of -w_label * log(predicted prob of label).

    pred: (c, H, W) softmax probabilities; scribble: (H, W) labels with the
    255 sentinel; weights: per-class vector (computed from the scribble when
    omitted).
    """
    if weights is None:
        weights = class_weights(scribble, pred.shape[0])
    lab, ys, xs = _gather_annotated(pred, scribble)
    p = pred[lab, ys, xs].clamp_min(eps)
    w = torch.as_tensor(np.asarray(weights), dtype=pred.dtype)[lab]
    return (-w * torch.log(p)).mean()


def pce_loss(pred, scribble, eps=EPS):
    """Partial cross-entropy: wpce_loss without class balancing (all w_i = 1)."""
    return wpce_loss(pred, scribble, np.ones(pred.shape[0]), eps=eps)


def lsgan_disc_loss(real_scores, fake_scores, real_targets=None, fake_targets=None):
    """0.5*E[(score_real - 1)^2] + 0.5*E[(score_fake + 1)^2].

    Explicit target vectors override the +1/-1 defaults (label flips swap them
    per sample; that noise belongs to the discriminator's loss only).
    """
    if real_scores.numel() == 0 or fake_scores.numel() == 0:
        raise EmptyBatch("discriminator loss needs non-empty score batches")
    tr = torch.ones_like(real_scores) if real_targets is None \
        else torch.as_tensor(real_targets, dtype=real_scores.dtype)
    tf = -torch.ones_like(fake_scores) if fake_targets is None \
        else torch.as_tensor(fake_targets, dtype=fake_scores.dtype)
    return 0.5 * ((real_scores - tr) ** 2).mean() \
        + 0.5 * ((fake_scores - tf) ** 2).mean()


def lsgan_gen_loss(fake_scores):
    """0.5*E[(score_fake - 1)^2] — the generator wants fakes scored as real."""
    if fake_scores.numel() == 0:
        raise EmptyBatch("generator loss needs a non-empty score batch")
    return 0.5 * ((fake_scores - 1.0) ** 2).mean()


def dynamic_a0(sup_loss_value, adv_loss_value):
    """|adversarial| / |supervised| from detached scalars; 1.0 on vanishing sup."""
    sup = abs(float(sup_loss_value))
    if sup < 1e-12:
        return 1.0
    return abs(float(adv_loss_value)) / sup


def combined_weak_loss(prediction, scribble, disc, a1=0.1, eps=EPS):
    """a0 * WPCE(final prediction) + a1 * LSGAN generator loss.

    prediction: a MultiScalePrediction for one image (batch of one); the
    discriminator judges its per-depth soft segmentations.
    """
    from .discriminator import mask_pyramid  # local import, no cycle at load

    final = prediction.final
    if final.dim() == 4:
        if final.shape[0] != 1:
            raise ShapeMismatch("combined_weak_loss expects a single image")
        final = final[0]
    sup = wpce_loss(final, scribble, eps=eps)
    if disc is None:
        return sup
    pyramid = prediction.soft_segs()
    adv = lsgan_gen_loss(disc(pyramid))
    a0 = dynamic_a0(sup.item(), adv.item())
    return a0 * sup + a1 * adv


def multi_annotator_loss(pred, scribbles, eps=EPS):
    """Sum of per-annotator WPCE terms, each with its own class weights."""
    if not scribbles:
        raise EmptyScribble("need at least one scribble")
    terms = []
    for s in scribbles:
        if np.count_nonzero(np.asarray(s) != UNLABELED) == 0:
            continue
        terms.append(wpce_loss(pred, s, eps=eps))
    if not terms:
        raise EmptyScribble("all scribbles are empty")
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def full_mask_wce(pred, mask_onehot, eps=EPS):
    """Weighted cross-entropy with every pixel annotated."""
    mask_onehot = np.asarray(mask_onehot)
    if tuple(pred.shape) != mask_onehot.shape:
        raise ShapeMismatch("prediction %s vs mask %s"
                            % (tuple(pred.shape), mask_onehot.shape))
    labels = np.argmax(mask_onehot, axis=0).astype(np.uint8)
    return wpce_loss(pred, labels, eps=eps)
