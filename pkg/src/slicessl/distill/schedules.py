"""Learning-rate / temperature schedules, layer-wise decay, and the
stage-2 multi-resolution crop specification."""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


def lr_schedule(step, total, warmup, peak, floor=1e-6):
    """Linear warmup from 0 to peak, then cosine decay to floor."""
    if step < 0:
        raise ConfigError("lr_schedule: negative step")
    if warmup > 0 and step < warmup:
        return peak * step / warmup
    if total <= warmup:
        return peak
    t = min(step - warmup, total - warmup) / (total - warmup)
    return floor + 0.5 * (peak - floor) * (1.0 + math.cos(math.pi * t))


def teacher_temp_schedule(step, total, start=0.04, end=0.07, warmup_frac=0.2):
    """Linear ramp of the teacher temperature over the first warmup_frac."""
    ramp = max(1, int(round(warmup_frac * total)))
    if step >= ramp:
        return end
    return start + (end - start) * step / ramp


def layer_lr_scales(param_names, depth, decay=0.9):
    """Per-parameter lr multipliers: decay^(L - layer), heads at the top.

    Layers: patch embed / input tokens = 0, block i = i + 1, final norm and
    projection heads = depth + 1 (scale 1.0).
    """
    top = depth + 1
    scales = {}
    for name in param_names:
        if name.startswith("blocks."):
            layer = int(name.split(".")[1]) + 1
        elif name.startswith(("patch_embed", "cls_token", "storage_tokens", "mask_token")):
            layer = 0
        else:
            layer = top
        scales[name] = decay ** (top - layer)
    return scales


@dataclass
class CropPairSpec:
    """Categorical distribution over (global, local) crop-size pairs."""

    pairs: list = field(default_factory=lambda: [(512, 112), (768, 112), (768, 168),
                                                 (768, 224), (768, 336)])
    ratios: list = field(default_factory=lambda: [0.30, 0.30, 0.30, 0.05, 0.05])
    upsample: int = 4  # slice side multiplier applied before cropping

    def __post_init__(self):
        if len(self.pairs) != len(self.ratios):
            raise ConfigError("stage2: pairs and ratios length mismatch")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"stage2: ratios sum to {sum(self.ratios)}, not 1")

    def sample(self, rng):
        i = int(rng.choice(len(self.pairs), p=np.asarray(self.ratios)))
        return tuple(self.pairs[i])

    def scaled(self, factor, patch_size):
        """Desk scaling: globals divided exactly; locals snapped to the
        patch grid (round-half-even, minimum two patches)."""
        pairs = []
        for g, l in self.pairs:
            if g % factor:
                raise ConfigError(f"stage2: global size {g} not divisible by {factor}")
            g2 = g // factor
            mult = max(2, round(l / factor / patch_size))
            pairs.append((g2, patch_size * mult))
        return CropPairSpec(pairs=pairs, ratios=list(self.ratios), upsample=self.upsample)

    def to_dict(self):
        return {"pairs": [list(p) for p in self.pairs], "ratios": list(self.ratios),
                "upsample": self.upsample}

    @classmethod
    def from_dict(cls, d):
        return cls(pairs=[tuple(p) for p in d["pairs"]], ratios=list(d["ratios"]),
                   upsample=d.get("upsample", 4))


def stage2_config(factor=1, patch_size=16):
    """The published multi-resolution pairing, optionally desk-scaled."""
    spec = CropPairSpec()
    if factor != 1:
        spec = spec.scaled(factor, patch_size)
    return spec
