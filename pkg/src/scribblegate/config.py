"""Flat key=value experiment configuration.

One `key = value` per line, `#` starts a comment, unknown keys are rejected.
Defaults reproduce the reference training protocol (224 crop, 4 classes,
batch 12, Adam, cyclical LR 1e-5..1e-4 with period 20, patience 50).
"""
from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass
class ExperimentConfig:
    run_name: str = "run"
    data_root: str = "data"
    normalization: str = "median_iqr"     # median_iqr | minmax | none
    image_size: int = 224
    num_classes: int = 4
    input_channels: int = 1

    depths: int = 4
    encoder_filters: tuple = (32, 64, 128, 256, 512)
    compress_channels: int = 12

    use_gating: bool = True
    use_ads: bool = True
    use_discriminator: bool = True

    a1: float = 0.1
    a2: float = 0.2
    a3: float = 0.2
    epsilon: float = 1e-12
    label_flip_prob: float = 0.10
    instance_noise_sigma: float = 0.2

    lr_min: float = 1e-5
    lr_max: float = 1e-4
    lr_period: float = 20.0
    batch_size: int = 12
    patience: int = 50
    max_epochs: int = 500

    split_seed: int = 0
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15

    annotation_fraction: float = 1.0
    annotators: int = 1
    mixed_mask_fraction: float = 0.0
    scribble_method: str = "skeleton"     # used by make-scribbles

    augment: bool = True
    aug_rotation: float = 15.0
    aug_translation: float = 0.10

    seed_init: int = 0
    seed_data: int = 1
    seed_noise: int = 2
    deterministic: bool = False

    def validate(self):
        if self.use_ads and not self.use_discriminator:
            raise ConfigError("use_ads requires use_discriminator")
        if not (0.0 < self.annotation_fraction <= 1.0):
            raise ConfigError("annotation_fraction must be in (0, 1]")
        if not (0.0 <= self.mixed_mask_fraction <= 1.0):
            raise ConfigError("mixed_mask_fraction must be in [0, 1]")
        if len(self.encoder_filters) != self.depths + 1:
            raise ConfigError("encoder_filters must list depths+1 counts")
        if self.batch_size < 1 or self.num_classes < 2 or self.annotators < 1:
            raise ConfigError("batch_size/num_classes/annotators out of range")
        return self


def _parse_value(name, text, pytype):
    text = text.strip()
    try:
        if pytype is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if pytype is int:
            return int(text)
        if pytype is float:
            return float(text)
        if pytype is tuple:
            return tuple(int(p) for p in text.split(",") if p.strip())
        return text
    except ValueError:
        raise ConfigError("bad value for %s: %r" % (name, text))


def parse_config(text, base=None):
    """Parse flat key=value text into an ExperimentConfig."""
    cfg = base if base is not None else ExperimentConfig()
    types = {f.name: type(getattr(cfg, f.name)) for f in fields(cfg)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key = value, got %r" % (lineno, raw))
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in types:
            raise ConfigError("line %d: unknown key %r" % (lineno, key))
        setattr(cfg, key, _parse_value(key, value, types[key]))
    return cfg.validate()


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def serialize_config(cfg):
    """Resolved config as diffable key = value text (sorted keys)."""
    lines = []
    for f in sorted(fields(cfg), key=lambda f: f.name):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append("%s = %s" % (f.name, value))
    return "\n".join(lines) + "\n"
