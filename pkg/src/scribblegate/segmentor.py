"""Attention-gated UNet segmentor emitting soft masks at every decoder depth.

Each decoder level ends in a gate block: a 1x1 classifier predicts a softmax
segmentation, the background probability is turned into a foreground-attention
map, and the features are multiplied by it before flowing upward. The per-depth
soft segmentations double as multi-scale inputs for the mask discriminator.
"""
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import IndivisibleShape, ShapeMismatch


@dataclass
class SegmentorConfig:
    depths: int = 4
    encoder_filters: tuple = (32, 64, 128, 256, 512)
    num_classes: int = 4
    input_channels: int = 1
    use_gating: bool = True
    use_ads: bool = True

    def __post_init__(self):
        if self.depths < 1:
            raise ValueError("depths must be >= 1")
        if len(self.encoder_filters) != self.depths + 1:
            raise ValueError("need depths+1 filter counts, got %d for depths=%d"
                             % (len(self.encoder_filters), self.depths))
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")


@dataclass
class AAGOutput:
    soft_seg: torch.Tensor    # B x (c-1) x h x w, background channel removed
    attention: torch.Tensor   # B x 1 x h x w, equals 1 - p(background)
    gated: torch.Tensor       # B x k x h x w
    features: torch.Tensor    # the pre-gate feature map M
    probs: torch.Tensor       # full softmax, B x c x h x w


@dataclass
class MultiScalePrediction:
    per_depth: dict = field(default_factory=dict)  # depth (1..D) -> AAGOutput
    final: torch.Tensor = None                     # B x c x H x W softmax

    def soft_segs(self):
        """Foreground soft segmentations ordered by depth 1..D."""
        return [self.per_depth[d].soft_seg for d in sorted(self.per_depth)]


def upsample_nn(x, factor=2):
    """Nearest-neighbor upsampling by integer pixel replication."""
    if factor == 1:
        return x
    return x.repeat_interleave(factor, dim=-2).repeat_interleave(factor, dim=-1)


class ConvBlock(nn.Module):
    """Two 3x3 convolutions, each followed by batch norm and ReLU."""

    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        x = F.relu(self.bn1(self.conv1(x)))
        return F.relu(self.bn2(self.conv2(x)))


class AttentionGate(nn.Module):
    """1x1 classifier head whose foreground probability gates the features."""

    def __init__(self, in_ch, num_classes, use_gating=True):
        super().__init__()
        self.classifier = nn.Conv2d(in_ch, num_classes, 1)
        self.use_gating = use_gating

    def forward(self, features):
        if features.shape[1] != self.classifier.in_channels:
            raise ShapeMismatch("gate expects %d channels, got %d"
                                % (self.classifier.in_channels, features.shape[1]))
        probs = torch.softmax(self.classifier(features), dim=1)
        soft_seg = probs[:, 1:]
        attention = soft_seg.sum(dim=1, keepdim=True)  # = 1 - p(background)
        gated = features * attention if self.use_gating else features
        return AAGOutput(soft_seg, attention, gated, features, probs)


class Segmentor(nn.Module):
    """UNet encoder-decoder; decoder depth d runs at resolution H / 2^(d-1)."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        f = list(config.encoder_filters)
        d = config.depths

        self.enc = nn.ModuleList()
        in_ch = config.input_channels
        for stage in range(d + 1):
            self.enc.append(ConvBlock(in_ch, f[stage]))
            in_ch = f[stage]
        self.pool = nn.MaxPool2d(2)

        # decoder block at depth k consumes upsampled features + skip
        self.dec = nn.ModuleDict()
        self.gates = nn.ModuleDict()
        for depth in range(d, 0, -1):
            self.dec[str(depth)] = ConvBlock(f[depth] + f[depth - 1], f[depth - 1])
            self.gates[str(depth)] = AttentionGate(f[depth - 1], config.num_classes,
                                                   config.use_gating)

    def forward(self, x):
        d = self.config.depths
        h, w = x.shape[-2], x.shape[-1]
        if h % (1 << d) or w % (1 << d):
            raise IndivisibleShape("input %dx%d not divisible by %d" % (h, w, 1 << d))

        skips = []
        feat = x
        for stage in range(d + 1):
            if stage > 0:
                feat = self.pool(feat)
            feat = self.enc[stage](feat)
            skips.append(feat)

        pred = MultiScalePrediction()
        for depth in range(d, 0, -1):
            feat = upsample_nn(feat, 2)
            feat = torch.cat([feat, skips[depth - 1]], dim=1)
            feat = self.dec[str(depth)](feat)
            out = self.gates[str(depth)](feat)
            pred.per_depth[depth] = out
            feat = out.gated
        pred.final = pred.per_depth[1].probs
        return pred
