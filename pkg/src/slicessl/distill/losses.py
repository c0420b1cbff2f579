"""Distillation objectives: CLS cross-entropy, masked patch prediction,
nearest-neighbor diversity, and their weighted combination."""

import numpy as np

from .. import tensorcore as tc
from ..errors import NumericError, ShapeError


def sharpen_targets(teacher_logits, center, temp):
    """Teacher distribution: softmax((logits - center) / temp), detached."""
    t = np.asarray(teacher_logits.data if isinstance(teacher_logits, tc.Tensor)
                   else teacher_logits, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise NumericError("sharpen_targets: non-finite teacher logits")
    z = (t - np.asarray(center)) / temp
    z -= z.max(axis=-1, keepdims=True)
    q = np.exp(z)
    q /= q.sum(axis=-1, keepdims=True)
    return q


def _student_log_probs(student_logits, temp):
    s = student_logits if isinstance(student_logits, tc.Tensor) else tc.tensor(student_logits)
    return tc.log_softmax(tc.mul(s, 1.0 / temp), axis=-1)


def cross_entropy_rows(q, logp):
    """-mean over rows of sum_k q_k log p_k; q is a detached array."""
    q32 = q.astype(logp.data.dtype)
    if logp.ndim == 1:
        return tc.mul(tc.sum_(tc.mul(logp, tc.tensor(q32))), -1.0)
    per_row = tc.sum_(tc.mul(logp, tc.tensor(q32)), axis=-1)
    return tc.mul(tc.mean(per_row), -1.0)


def dino_loss(teacher_logits, student_logits, t_temp, s_temp, center):
    """CLS-token distillation loss; gradient flows into the student only."""
    q = sharpen_targets(teacher_logits, center, t_temp)
    logp = _student_log_probs(student_logits, s_temp)
    if q.shape != logp.shape:
        raise ShapeError("dino_loss", q.shape, logp.shape)
    return cross_entropy_rows(q, logp)


def ibot_loss(teacher_patch_logits, student_patch_logits, mask, t_temp, s_temp, center):
    """Masked patch prediction: mean cross-entropy at masked positions only.

    Logits are (N, K) for one view or (V, N, K) for stacked views; `mask`
    is a bool array over the same patch layout (MaskLayouts accepted).
    Returns 0 when nothing is masked.
    """
    if hasattr(mask, "mask"):
        mask = mask.mask
    elif isinstance(mask, (list, tuple)) and mask and hasattr(mask[0], "mask"):
        mask = np.stack([m.mask for m in mask])
    mask = np.asarray(mask, dtype=bool)
    s = (student_patch_logits if isinstance(student_patch_logits, tc.Tensor)
         else tc.tensor(student_patch_logits))
    t = np.asarray(teacher_patch_logits.data if isinstance(teacher_patch_logits, tc.Tensor)
                   else teacher_patch_logits)
    if s.shape[:-1] != mask.shape or t.shape != s.shape:
        raise ShapeError("ibot_loss: mask/logit layout", mask.shape, s.shape[:-1])
    k = s.shape[-1]
    flat_mask = mask.reshape(-1)
    rows = np.flatnonzero(flat_mask)
    if rows.size == 0:
        return tc.tensor(np.zeros((), dtype=s.data.dtype))
    q = sharpen_targets(t.reshape(-1, k)[rows], center, t_temp)
    s_rows = tc.take(tc.reshape(s, (-1, k)), rows)
    logp = _student_log_probs(s_rows, s_temp)
    return cross_entropy_rows(q, logp)


def masked_distill_ce(q_rows, student_row_logits, s_temp):
    """Cross-entropy on pre-gathered masked rows (trainer fast path)."""
    logp = _student_log_probs(student_row_logits, s_temp)
    return cross_entropy_rows(q_rows, logp)


def koleo_loss(cls_features, eps=1e-8):
    """Nearest-neighbor log-distance diversity penalty.

    -(1/n) sum_i log(min_{j != i} ||x_i - x_j|| + eps) on L2-normalized rows.
    """
    x = cls_features if isinstance(cls_features, tc.Tensor) else tc.tensor(cls_features)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ShapeError("koleo_loss: need at least 2 feature rows", x.shape)
    y = tc.l2_normalize(x, axis=-1)
    sims = y.data @ y.data.T
    np.fill_diagonal(sims, -np.inf)
    nn_idx = sims.argmax(axis=1)
    nn = tc.take(y, nn_idx)
    diff = tc.sub(y, nn)
    # smoothing keeps the gradient finite at coincident points while staying
    # far below eps, so the collapse penalty still reads -log(eps)
    dist = tc.pow_(tc.add(tc.sum_(tc.mul(diff, diff), axis=1), 1e-20), 0.5)
    return tc.mul(tc.mean(tc.log(tc.add(dist, eps))), -1.0)


def combined_loss(l_dino, l_ibot, l_koleo, lam=1.0, koleo_weight=0.1):
    """Total objective plus the per-term breakdown for logging."""
    total = tc.add(l_dino, tc.mul(l_ibot, lam))
    if koleo_weight:
        total = tc.add(total, tc.mul(l_koleo, koleo_weight))
    parts = {
        "loss_dino": float(l_dino.item() if isinstance(l_dino, tc.Tensor) else l_dino),
        "loss_ibot": float(l_ibot.item() if isinstance(l_ibot, tc.Tensor) else l_ibot),
        "loss_koleo": float(l_koleo.item() if isinstance(l_koleo, tc.Tensor) else l_koleo),
    }
    return total, parts


def ema_update(teacher, student, m=0.994):
    """theta_t <- m * theta_t + (1 - m) * theta_s, elementwise, no tape."""
    if set(teacher) != set(student):
        raise ShapeError("ema_update: parameter trees differ",
                         (len(teacher),), (len(student),))
    for name in teacher:
        t, s = teacher[name], student[name]
        if t.shape != s.shape:
            raise ShapeError(f"ema_update: {name}", t.shape, s.shape)
        t.data *= m
        t.data += (1.0 - m) * s.data


def update_center(center, teacher_logits_batch, momentum=0.9):
    """EMA of the teacher logit batch mean; returns the new center."""
    t = np.asarray(teacher_logits_batch.data
                   if isinstance(teacher_logits_batch, tc.Tensor)
                   else teacher_logits_batch)
    batch_mean = t.reshape(-1, t.shape[-1]).mean(axis=0)
    return momentum * np.asarray(center) + (1.0 - momentum) * batch_mean


def teacher_entropy(q_rows):
    """Entropy of the mean teacher distribution (collapse monitor)."""
    p = np.asarray(q_rows, dtype=np.float64).reshape(-1, q_rows.shape[-1]).mean(axis=0)
    return float(-(p * np.log(p + 1e-12)).sum())
