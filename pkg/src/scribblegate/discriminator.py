"""Multi-scale mask discriminator with spectral normalization and input noise.

The encoder sees a real or fake segmentation at every depth: the level-d mask
pyramid entry is concatenated onto the running features (features first) before
each strided convolution, so adversarial gradients reach every decoder level of
the generator.
"""
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import IndivisibleShape, ShapeMismatch, ZeroWeight


@dataclass
class DiscriminatorConfig:
    depths: int = 4
    filters: tuple = (32, 64, 128, 256, 512)   # follows the segmentor encoder
    compress_channels: int = 12
    label_flip_prob: float = 0.10
    instance_noise_sigma: float = 0.2

    def __post_init__(self):
        if len(self.filters) != self.depths + 1:
            raise ValueError("need depths+1 filter counts")
        if not (0.0 <= self.label_flip_prob <= 1.0):
            raise ValueError("label_flip_prob must be a probability")


# ---------------------------------------------------------------------------
# spectral normalization (power iteration, persistent left singular vector)

def spectral_normalize(weight, u=None, n_iterations=1, eps=1e-12):
    """Divide a weight by its leading singular value.

    The weight is flattened to (rows, -1); `u` is the running estimate of the
    leading left singular vector, updated by `n_iterations` power steps.
    Returns (normalized weight, u, sigma).
    """
    w = weight.reshape(weight.shape[0], -1)
    if float(w.detach().abs().max()) == 0.0:
        raise ZeroWeight("cannot spectrally normalize an all-zero weight")
    if u is None:
        u = F.normalize(torch.ones(w.shape[0], dtype=w.dtype), dim=0, eps=eps)
    with torch.no_grad():
        for _ in range(n_iterations):
            v = F.normalize(torch.mv(w.t(), u), dim=0, eps=eps)
            u = F.normalize(torch.mv(w, v), dim=0, eps=eps)
        if n_iterations == 0:
            v = F.normalize(torch.mv(w.t(), u), dim=0, eps=eps)
    sigma = torch.dot(u, torch.mv(w, v))
    return weight / sigma, u, sigma


class SNConv2d(nn.Module):
    """4x4 stride-2 convolution whose weight is spectrally normalized.

    One power-iteration step per training-mode forward; the singular-vector
    estimate `u` is a buffer, so it travels with checkpoints and stays frozen
    in eval mode (two eval calls are bitwise identical).
    """

    def __init__(self, in_ch, out_ch, kernel_size=4, stride=2, padding=1):
        super().__init__()
        ref = nn.Conv2d(in_ch, out_ch, kernel_size)
        self.weight = nn.Parameter(ref.weight.detach().clone())
        self.bias = nn.Parameter(ref.bias.detach().clone())
        self.stride = stride
        self.padding = padding
        self.register_buffer("u", F.normalize(torch.randn(out_ch), dim=0))

    def normalized_weight(self):
        if float(self.weight.detach().abs().max()) == 0.0:
            return self.weight  # zero operator needs no rescaling
        w, u, _ = spectral_normalize(self.weight, self.u,
                                     n_iterations=1 if self.training else 0)
        if self.training:
            self.u.copy_(u.detach())
        return w

    def forward(self, x):
        return F.conv2d(x, self.normalized_weight(), self.bias,
                        stride=self.stride, padding=self.padding)


# ---------------------------------------------------------------------------
# pyramids and noise

def mask_pyramid(y, depths=4):
    """Background-stripped mask at D resolutions (top-left nearest-neighbor).

    y: (B, c, H, W) or (c, H, W) one-hot mask or softmax output. Level 1 is the
    input without its background channel; each further level halves the
    previous one by keeping the top-left pixel of every 2x2 block, which maps
    one-hot inputs to one-hot outputs.
    """
    t = torch.as_tensor(y)
    squeeze = t.dim() == 3
    if squeeze:
        t = t[None]
    h, w = t.shape[-2], t.shape[-1]
    div = 1 << (depths - 1)
    if h % div or w % div:
        raise IndivisibleShape("size %dx%d not divisible by %d" % (h, w, div))
    levels = [t[:, 1:]]
    for _ in range(depths - 1):
        levels.append(levels[-1][..., ::2, ::2])
    if squeeze:
        levels = [lv[0] for lv in levels]
    return levels


def apply_instance_noise(x, sigma, rng):
    """Add N(0, sigma^2) noise drawn from a numpy RandomState; no clipping."""
    if sigma == 0:
        return x
    noise = rng.normal(0.0, sigma, size=tuple(x.shape))
    return x + torch.as_tensor(noise, dtype=x.dtype)


def apply_label_noise(targets, p, rng):
    """Flip regression targets (+1 <-> -1) independently with probability p."""
    targets = np.asarray(targets, dtype=np.float64)
    flips = rng.random_sample(targets.shape) < p
    return np.where(flips, -targets, targets)


# ---------------------------------------------------------------------------
# model

class Discriminator(nn.Module):
    """Scores a mask pyramid; raw scalar output, no activation at the end."""

    def __init__(self, config, num_classes, image_size):
        super().__init__()
        self.config = config
        self.num_classes = num_classes
        self.image_size = image_size
        d = config.depths
        if image_size % (1 << d):
            raise IndivisibleShape("image size %d not divisible by %d"
                                   % (image_size, 1 << d))

        self.convs = nn.ModuleList()
        self.compress = nn.ModuleList()
        in_ch = num_classes - 1
        for depth in range(1, d + 1):
            # after its stride-2 conv the resolution matches the encoder level
            # holding filters[depth] channels
            self.convs.append(SNConv2d(in_ch, config.filters[depth]))
            self.compress.append(nn.Conv2d(config.filters[depth],
                                           config.compress_channels, 1))
            in_ch = config.compress_channels + (num_classes - 1)
        final = image_size >> d
        self.fc = nn.Linear(config.compress_channels * final * final, 1)

    def forward(self, pyramid):
        if len(pyramid) != self.config.depths:
            raise ShapeMismatch("expected %d pyramid levels, got %d"
                                % (self.config.depths, len(pyramid)))
        feat = None
        for depth in range(self.config.depths):
            level = pyramid[depth]
            inp = level if feat is None else torch.cat([feat, level], dim=1)
            feat = torch.tanh(self.convs[depth](inp))
            feat = torch.tanh(self.compress[depth](feat))
        return self.fc(feat.flatten(1)).squeeze(1)
