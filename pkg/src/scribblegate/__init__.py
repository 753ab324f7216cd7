"""Scribble-supervised segmentation with adversarial attention gates.

A UNet-style segmentor whose decoder is gated by its own per-depth soft
predictions, trained against a multi-scale mask discriminator so that unpaired
masks act as a shape prior. Includes scribble synthesis, a synthetic dataset
generator, training/evaluation orchestration, and a batch CLI.
"""

__version__ = "0.1.0"

UNLABELED = 255  # sentinel value in scribble maps
