"""Frozen-backbone feature extraction: subject features are the mean of
slice-wise CLS tokens over a fixed axial grid."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import tensorcore as tc
from ..augment import replicate_channels
from ..errors import ShapeError
from ..mriio import FeatureBank
from ..slicepipe import downstream_pipeline
from ..vit import forward


def extract_volume_features(volume, encoder_params, vit_cfg, in_plane=64,
                            n_slices=32, batch=64, retain_blocks=None,
                            use_otsu=False):
    """One volume -> CLS-mean feature vector (and per-block means).

    Returns (feature (d,), {block: feature}) computed from `n_slices`
    uniformly spaced normalized axial slices.
    """
    recs = downstream_pipeline(volume, in_plane=in_plane, n_slices=n_slices,
                               use_otsu=use_otsu)
    pixels = np.stack([r.pixels for r in recs])
    cls_chunks = []
    inter_chunks = {b: [] for b in (retain_blocks or ())}
    with tc.no_grad():
        for i in range(0, len(pixels), batch):
            imgs = replicate_channels(pixels[i:i + batch])
            out = forward(encoder_params, imgs, vit_cfg, retain_blocks=retain_blocks)
            if out.cls.shape[-1] != vit_cfg.embed_dim:
                raise ShapeError("extract: encoder/config dim",
                                 out.cls.shape, (vit_cfg.embed_dim,))
            cls_chunks.append(out.cls.data)
            for b in inter_chunks:
                inter_chunks[b].append(out.intermediates[b].data[:, 0, :])
    cls = np.concatenate(cls_chunks).mean(axis=0)
    per_block = {b: np.concatenate(v).mean(axis=0) for b, v in inter_chunks.items()}
    return cls.astype(np.float32), per_block


def extract_features(volumes, encoder_params, vit_cfg, subject_ids=None,
                     label_kind="none", labels=None, modality="", in_plane=64,
                     n_slices=32, batch=64, retain_blocks=None, use_otsu=False,
                     workers=1):
    """Many volumes -> FeatureBank (plus per-block banks when requested)."""
    ids = subject_ids or [v.source_id or f"subject_{i}" for i, v in enumerate(volumes)]

    def one(v):
        return extract_volume_features(v, encoder_params, vit_cfg, in_plane,
                                       n_slices, batch, retain_blocks, use_otsu)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, volumes))
    else:
        results = [one(v) for v in volumes]

    feats = np.stack([r[0] for r in results])
    bank = FeatureBank(features=feats, subject_ids=ids, label_kind=label_kind,
                       labels=labels, modality=modality)
    block_banks = {}
    for b in (retain_blocks or ()):
        bf = np.stack([r[1][b] for r in results])
        block_banks[b] = FeatureBank(features=bf, subject_ids=ids,
                                     label_kind=label_kind, labels=labels,
                                     modality=modality, meta={"block": b})
    return (bank, block_banks) if retain_blocks else bank


def fuse_modalities(banks):
    """Average per-modality features over banks sharing subject ids."""
    if not banks:
        raise ValueError("fuse_modalities: no banks")
    base = banks[0]
    for b in banks[1:]:
        if b.subject_ids != base.subject_ids:
            raise ShapeError("fuse_modalities: subject sets differ",
                             (len(b.subject_ids),), (len(base.subject_ids),))
        if b.dim != base.dim:
            raise ShapeError("fuse_modalities: feature dims differ",
                             (b.dim,), (base.dim,))
    fused = np.mean([b.features for b in banks], axis=0).astype(np.float32)
    return FeatureBank(features=fused, subject_ids=list(base.subject_ids),
                       label_kind=base.label_kind, labels=base.labels,
                       modality="+".join(b.modality for b in banks if b.modality))
