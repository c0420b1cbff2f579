"""Multi-crop view generation for self-distillation training.

A ViewSet is a pure function of (slice, seed, config): two large "global"
crops, several small "local" crops, per-global-view patch mask layouts, and
full provenance for each view.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import ShapeError

GLOBAL = "global"
LOCAL = "local"


@dataclass
class AugmentConfig:
    global_size: int = 64
    local_size: int = 32
    n_global: int = 2
    n_local: int = 8
    global_scale: tuple = (0.32, 1.0)
    local_scale: tuple = (0.05, 0.32)
    flip_p: float = 0.5
    blur_p: float = 0.5
    blur_sigma: tuple = (0.1, 2.0)
    mask_p: float = 0.5
    mask_ratio: tuple = (0.1, 0.5)
    patch_size: int = 8

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v
                for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d):
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


@dataclass
class MaskLayout:
    mask: np.ndarray          # bool over patch positions
    applied: bool
    ratio: float

    @property
    def n_masked(self):
        return int(self.mask.sum())


@dataclass
class Provenance:
    kind: str                 # "global" | "local"
    box: tuple                # (row0, col0, side) in source pixels
    flipped: bool
    blur_sigma: float | None

    def to_dict(self):
        return {"kind": self.kind, "box": list(self.box),
                "flipped": self.flipped, "blur_sigma": self.blur_sigma}


@dataclass
class ViewSet:
    globals_: list
    locals_: list
    masks: list               # MaskLayout per global view
    provenance: list = field(default_factory=list)


def hflip(image, p=0.5, seed=0):
    """Mirror columns with probability p."""
    if p > 0 and np.random.default_rng(seed).random() < p:
        return image[:, ::-1].copy()
    return image


def gaussian_kernel(sigma):
    r = max(1, int(round(3.0 * sigma)))
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return (k / k.sum()).astype(np.float32)


def gaussian_blur(image, sigma, p=1.0, seed=0):
    """Separable Gaussian blur with mirror padding; preserves the mean."""
    if p < 1.0 and np.random.default_rng(seed).random() >= p:
        return image
    if sigma <= 0:
        raise ValueError("gaussian_blur: sigma must be positive when applied")
    k = gaussian_kernel(sigma).astype(image.dtype)
    out = K.conv1d_mirror(np.ascontiguousarray(image), k, 1)
    return K.conv1d_mirror(np.ascontiguousarray(out), k, 0)


def make_masks(n_patches, rng, apply_p=0.5, ratio_range=(0.1, 0.5)):
    """Uniform random patch mask: exactly round(r * N) positions when applied."""
    mask = np.zeros(n_patches, dtype=bool)
    if rng.random() < apply_p:
        ratio = float(rng.uniform(*ratio_range))
        n = int(round(ratio * n_patches))
        if n > 0:
            mask[rng.choice(n_patches, size=n, replace=False)] = True
        return MaskLayout(mask=mask, applied=True, ratio=ratio)
    return MaskLayout(mask=mask, applied=False, ratio=0.0)


def _random_crop(img, scale_range, target, rng):
    h, w = img.shape
    frac = float(rng.uniform(*scale_range))
    # clamp so the realized area stays inside the scale range after rounding
    lo = max(1, int(np.ceil(np.sqrt(scale_range[0] * h * w))))
    hi = min(h, w, int(np.floor(np.sqrt(scale_range[1] * h * w))))
    side = int(np.clip(round(np.sqrt(frac * h * w)), lo, max(lo, hi)))
    side = min(side, h, w)
    r0 = int(rng.integers(0, h - side + 1))
    c0 = int(rng.integers(0, w - side + 1))
    crop = np.ascontiguousarray(img[r0:r0 + side, c0:c0 + side])
    out = K.resize_bilinear(crop, (target, target))
    return out, (r0, c0, side)


def _photometric(img, cfg, rng):
    flipped = bool(rng.random() < cfg.flip_p)
    if flipped:
        img = img[:, ::-1].copy()
    sigma = None
    if rng.random() < cfg.blur_p:
        sigma = float(rng.uniform(*cfg.blur_sigma))
        img = gaussian_blur(img, sigma)
    return img, flipped, sigma


def multicrop(slice2d, seed, cfg=None):
    """Build one sample's ViewSet from a 2-D slice, deterministically."""
    cfg = cfg or AugmentConfig()
    img = np.ascontiguousarray(slice2d, dtype=np.float32)
    h, w = img.shape
    if h * w * cfg.local_scale[0] < 1.0:
        raise ShapeError("multicrop: slice below minimum croppable area", img.shape)
    rng = np.random.default_rng(seed)
    globals_, locals_, masks, prov = [], [], [], []
    n_patches = (cfg.global_size // cfg.patch_size) ** 2
    for _ in range(cfg.n_global):
        view, box = _random_crop(img, cfg.global_scale, cfg.global_size, rng)
        view, flipped, sigma = _photometric(view, cfg, rng)
        globals_.append(view)
        prov.append(Provenance(GLOBAL, box, flipped, sigma))
        masks.append(make_masks(n_patches, rng, cfg.mask_p, cfg.mask_ratio))
    for _ in range(cfg.n_local):
        view, box = _random_crop(img, cfg.local_scale, cfg.local_size, rng)
        view, flipped, sigma = _photometric(view, cfg, rng)
        locals_.append(view)
        prov.append(Provenance(LOCAL, box, flipped, sigma))
    return ViewSet(globals_=globals_, locals_=locals_, masks=masks, provenance=prov)


def replicate_channels(images):
    """(B, H, W) -> (B, 3, H, W); grayscale slices enter the encoder as RGB."""
    return np.repeat(images[:, None, :, :], 3, axis=1)
