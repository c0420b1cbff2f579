"""Representation-level analyses on frozen features: cosine kNN probing,
reference-patch similarity maps, and linear centered kernel alignment."""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from . import tensorcore as tc
from .augment import replicate_channels
from .errors import ShapeError
from .vit import forward


def _l2_rows(x):
    x = np.asarray(x, dtype=np.float64)
    return x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)


def knn_predict(train_features, train_labels, test_features, k):
    """Cosine-similarity kNN with majority voting.

    Vote ties break on the summed cosine similarity within the tied
    classes; an exact similarity tie falls to the smallest class index.
    No PCA or whitening -- raw L2-normalized features.
    """
    if k > len(train_features):
        raise ValueError(f"knn: k={k} exceeds bank size {len(train_features)}")
    train = _l2_rows(train_features)
    test = _l2_rows(test_features)
    labels = np.asarray(train_labels, dtype=np.intp)
    sims = test @ train.T
    out = np.empty(len(test), dtype=np.intp)
    for i in range(len(test)):
        order = np.argsort(-sims[i], kind="stable")[:k]
        votes = {}
        for j in order:
            c = int(labels[j])
            cnt, s = votes.get(c, (0, 0.0))
            votes[c] = (cnt + 1, s + float(sims[i, j]))
        best = max(votes.items(), key=lambda kv: (kv[1][0], kv[1][1], -kv[0]))
        out[i] = best[0]
    return out


def knn_probe(train_bank, test_bank, k):
    """Accuracy of the kNN rule with the training bank as memory."""
    pred = knn_predict(train_bank.features, train_bank.labels,
                       test_bank.features, k)
    return float((pred == np.asarray(test_bank.labels, dtype=np.intp)).mean())


def knn_sweep(train_bank, test_bank, ks=(1, 3, 5, 10, 20, 50)):
    return {k: knn_probe(train_bank, test_bank, k) for k in ks}


# ----------------------------------------------------------- similarity maps

@dataclass
class SimilarityMap:
    grid: np.ndarray          # (gh, gw) cosines in [-1, 1]
    ref_pixel: tuple
    ref_patch: tuple
    upsampled: np.ndarray     # (H, W) bilinear upsample of grid


def similarity_map(slice2d, encoder_params, vit_cfg, ref_pixel):
    """Cosine of the reference patch token against every patch token.

    ref_pixel is (row, col) in slice coordinates; the map is bilinearly
    upsampled to slice resolution. Values use a fixed [-1, 1] scale.
    """
    img = np.ascontiguousarray(slice2d, dtype=np.float32)
    h, w = img.shape
    r, c = int(ref_pixel[0]), int(ref_pixel[1])
    if not (0 <= r < h and 0 <= c < w):
        raise ValueError(f"similarity_map: ref {ref_pixel} outside {img.shape}")
    with tc.no_grad():
        out = forward(encoder_params, replicate_channels(img[None]), vit_cfg)
    gh, gw = out.grid
    tokens = _l2_rows(out.patches.data[0])
    pr, pc = r // (h // gh), c // (w // gw)
    ref = tokens[pr * gw + pc]
    grid = (tokens @ ref).reshape(gh, gw)
    up = K.resize_bilinear(np.ascontiguousarray(grid.astype(np.float32)), (h, w))
    return SimilarityMap(grid=grid, ref_pixel=(r, c), ref_patch=(pr, pc),
                         upsampled=up)


# -------------------------------------------------------------------- CKA

def linear_cka(x, y):
    """Linear centered kernel alignment between (n, d1) and (n, d2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] < 2:
        raise ShapeError("linear_cka", x.shape, y.shape)
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    nx = np.linalg.norm(xc.T @ xc)
    ny = np.linalg.norm(yc.T @ yc)
    if nx == 0 or ny == 0:
        raise ValueError("linear_cka: zero-variance input")
    hsic = np.linalg.norm(yc.T @ xc) ** 2
    return float(hsic / (nx * ny))


@dataclass
class CkaReport:
    encoders: list
    blocks: list
    matrices: dict            # block -> (E, E) array of CKA values
    cohort: str = ""
    meta: dict = field(default_factory=dict)


def cka_protocol(block_banks, blocks, cohort="", max_subjects=1000):
    """Pairwise CKA between encoders at each block.

    block_banks: {encoder_name: {block: FeatureBank}}. Subject order must
    be identical across encoders (fixed subset, no shuffling); the first
    `max_subjects` rows are used.
    """
    encoders = list(block_banks)
    base_ids = None
    for enc in encoders:
        for b in blocks:
            bank = block_banks[enc][b]
            ids = list(bank.subject_ids)[:max_subjects]
            if base_ids is None:
                base_ids = ids
            elif ids != base_ids:
                raise ShapeError("cka_protocol: subject sets differ",
                                 (len(ids),), (len(base_ids),))
    matrices = {}
    for b in blocks:
        e = len(encoders)
        m = np.zeros((e, e))
        for i in range(e):
            for j in range(e):
                m[i, j] = linear_cka(
                    block_banks[encoders[i]][b].features[:max_subjects],
                    block_banks[encoders[j]][b].features[:max_subjects])
        matrices[b] = m
    return CkaReport(encoders=encoders, blocks=list(blocks), matrices=matrices,
                     cohort=cohort, meta={"n": len(base_ids)})
