"""Volume -> normalized axial-slice corpus.

Pretraining route: tight foreground crop, trilinear resize to a cube,
percentile clip + z-score over non-zero voxels, then Gaussian-weighted
sampling of axial indices without replacement. Downstream route: same
normalization, fixed grid of every axial slice, no randomness.

Inputs are expected pre-skull-stripped (background exactly zero); an Otsu
threshold fallback is provided for volumes that are not.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import ConfigError
from .mriio import Volume


@dataclass
class SliceRecord:
    pixels: np.ndarray        # (H, W) float32
    source_id: str
    z: int
    stage: str                # "pretrain" | "downstream"


@dataclass
class SamplerSpec:
    n_target: int = 128
    n_available: int = 256
    mu: float = 128.0
    sigma: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.n_target > self.n_available:
            raise ConfigError(
                f"sampler: n_target {self.n_target} > n_available {self.n_available}")
        if self.sigma <= 0:
            raise ConfigError("sampler: sigma must be positive")

    @classmethod
    def for_axis(cls, n_available, seed=0, target_frac=0.5,
                 mu_frac=0.5, sigma_frac=50.0 / 256.0):
        """Published constants rescaled to an arbitrary axis length."""
        return cls(n_target=int(round(target_frac * n_available)),
                   n_available=n_available, mu=mu_frac * n_available,
                   sigma=sigma_frac * n_available, seed=seed)


def foreground_crop(volume):
    """Tight bounding box of the non-zero voxels."""
    nz = np.nonzero(volume.data)
    if nz[0].size == 0:
        raise ValueError("foreground_crop: all-zero volume")
    lo = [int(i.min()) for i in nz]
    hi = [int(i.max()) + 1 for i in nz]
    data = volume.data[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]].copy()
    return Volume(data=data, spacing=volume.spacing, source_id=volume.source_id)


def resize_volume(volume, target):
    """Trilinear resample onto `target` (x, y, z) grid, align-corners."""
    target = tuple(int(t) for t in target)
    data = K.resize_trilinear(np.ascontiguousarray(volume.data), target)
    spacing = tuple(s * max(d - 1, 1) / max(t - 1, 1)
                    for s, d, t in zip(volume.spacing, volume.data.shape, target))
    return Volume(data=data, spacing=spacing, source_id=volume.source_id)


def nonzero_percentiles(volume, lo=0.5, hi=99.5):
    """Linear-interpolated order statistics over the non-zero voxels."""
    vals = np.sort(volume.data[volume.data != 0].astype(np.float64))
    if vals.size == 0:
        raise ValueError("percentiles: all-zero volume")

    def pick(p):
        h = (vals.size - 1) * p / 100.0
        i = int(np.floor(h))
        j = min(i + 1, vals.size - 1)
        return vals[i] + (h - i) * (vals[j] - vals[i])

    return float(pick(lo)), float(pick(hi))


def normalize(volume, p_lo=0.5, p_hi=99.5, sigma_floor=1e-8):
    """Percentile clip then z-score, both over non-zero voxels only.

    Zero (background) voxels stay exactly zero. A constant foreground maps
    to zeros (degenerate-sigma guard).
    """
    data = volume.data
    mask = data != 0
    if not mask.any():
        raise ValueError("normalize: all-zero volume")
    lo, hi = nonzero_percentiles(volume, p_lo, p_hi)
    vals = np.clip(data[mask].astype(np.float64), lo, hi)
    mu = vals.mean()
    sd = vals.std()
    out = np.zeros_like(data, dtype=np.float32)
    if sd >= sigma_floor:
        out[mask] = ((vals - mu) / sd).astype(np.float32)
    return Volume(data=out, spacing=volume.spacing, source_id=volume.source_id)


def otsu_foreground(volume, bins=256):
    """Zero out the background below an Otsu threshold (fallback for
    volumes that were not skull-stripped / masked upstream)."""
    data = volume.data
    lo, hi = float(data.min()), float(data.max())
    if hi <= lo:
        return volume
    hist, edges = np.histogram(data, bins=bins, range=(lo, hi))
    p = hist.astype(np.float64) / hist.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(p)
    m = np.cumsum(p * centers)
    m_tot = m[-1]
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (m_tot * w0 - m) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1
    thr = centers[int(np.argmax(between))]
    out = np.where(data > thr, data, 0.0).astype(np.float32)
    return Volume(data=out, spacing=volume.spacing, source_id=volume.source_id)


def sample_slices(volume_or_n, spec):
    """Gaussian-weighted axial indices without replacement (Gumbel top-k).

    Weights follow N(z; mu, sigma^2); the draw is deterministic under the
    spec seed and returns n_target distinct indices.
    """
    n = volume_or_n if isinstance(volume_or_n, int) else volume_or_n.data.shape[2]
    if n != spec.n_available:
        raise ConfigError(f"sampler: axis length {n} != n_available {spec.n_available}")
    z = np.arange(n, dtype=np.float64)
    log_w = -0.5 * ((z - spec.mu) / spec.sigma) ** 2
    rng = np.random.default_rng(spec.seed)
    keys = log_w + rng.gumbel(size=n)
    order = np.argsort(-keys, kind="stable")
    return [int(i) for i in order[:spec.n_target]]


def pretrain_slices(volume, spec, stage_tag="pretrain"):
    """SliceRecords for the sampled axial indices of a prepared volume."""
    idx = sample_slices(volume, spec)
    return [SliceRecord(pixels=np.ascontiguousarray(volume.data[:, :, z]),
                        source_id=volume.source_id, z=z, stage=stage_tag)
            for z in idx]


def downstream_slices(volume):
    """One SliceRecord per axial index, in order, no randomness."""
    nz = volume.data.shape[2]
    return [SliceRecord(pixels=np.ascontiguousarray(volume.data[:, :, z]),
                        source_id=volume.source_id, z=z, stage="downstream")
            for z in range(nz)]


def prepare_volume(volume, target, use_otsu=False):
    """crop -> resize -> normalize; shared by both stages."""
    if use_otsu:
        volume = otsu_foreground(volume)
    return normalize(resize_volume(foreground_crop(volume), target))


def pretrain_pipeline(volume, target_size=64, seed=0, use_otsu=False):
    """Full pretraining route; a pure function of (volume, seed)."""
    vol = prepare_volume(volume, (target_size,) * 3, use_otsu)
    spec = SamplerSpec.for_axis(target_size, seed=seed)
    return pretrain_slices(vol, spec)


def downstream_pipeline(volume, in_plane=64, n_slices=32, use_otsu=False):
    """Fixed-grid downstream route: resample to (in_plane, in_plane,
    n_slices) and emit every axial slice."""
    vol = prepare_volume(volume, (in_plane, in_plane, n_slices), use_otsu)
    return downstream_slices(vol)
