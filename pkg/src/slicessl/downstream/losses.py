"""Task losses for head training (autodiff path) and their scalar twins."""

import numpy as np

from .. import tensorcore as tc
from ..errors import ShapeError


def ce_loss(logits, y):
    """Cross-entropy -log softmax(z)[y]; mean over a batch."""
    z = logits if isinstance(logits, tc.Tensor) else tc.tensor(logits)
    if z.ndim == 1:
        z = tc.reshape(z, (1, z.shape[0]))
        y = np.asarray([y])
    y = np.asarray(y, dtype=np.intp)
    k = z.shape[-1]
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"ce_loss: label out of range [0, {k})")
    logp = tc.log_softmax(z, axis=-1)
    onehot = np.zeros(z.shape, dtype=z.data.dtype)
    onehot[np.arange(len(y)), y] = 1.0
    picked = tc.sum_(tc.mul(logp, tc.tensor(onehot)), axis=-1)
    return tc.mul(tc.mean(picked), -1.0)


def mse_loss(pred, target):
    """Mean squared error; `target` is a constant."""
    p = pred if isinstance(pred, tc.Tensor) else tc.tensor(pred)
    t = np.asarray(target, dtype=p.data.dtype).reshape(p.shape)
    r = tc.sub(p, tc.tensor(t))
    return tc.mean(tc.mul(r, r))


def atlas_transform(y):
    """log(1 + y) target compression; y must be non-negative."""
    y = np.asarray(y, dtype=np.float64)
    if (y < 0).any():
        raise ValueError("atlas_transform: negative target")
    return np.log1p(y)


def atlas_inverse(y_log):
    """exp(y_log) - 1, undoing atlas_transform."""
    return np.expm1(np.asarray(y_log, dtype=np.float64))


def _abs_exact(t):
    # |r| as r * sign(r); the subgradient at 0 is 0
    return tc.mul(t, tc.tensor(np.sign(t.data)))


def atlas_loss(pred_log, target_log, alpha=0.2, delta=1.0):
    """Mixed regression objective on log-scale residuals r:

    alpha * r^2 + (1 - alpha) * (0.5 |r| + 0.5 * Huber_delta(r)), batch mean.
    """
    p = pred_log if isinstance(pred_log, tc.Tensor) else tc.tensor(pred_log)
    t = np.asarray(target_log, dtype=p.data.dtype).reshape(p.shape)
    r = tc.sub(p, tc.tensor(t))
    sq = tc.mul(r, r)
    absr = _abs_exact(r)
    quad = (np.abs(r.data) <= delta).astype(p.data.dtype)
    huber = tc.add(tc.mul(tc.mul(sq, 0.5), tc.tensor(quad)),
                   tc.mul(tc.mul(tc.sub(absr, 0.5 * delta), delta),
                          tc.tensor(1.0 - quad)))
    inner = tc.add(tc.mul(absr, 0.5), tc.mul(huber, 0.5))
    return tc.mean(tc.add(tc.mul(sq, alpha), tc.mul(inner, 1.0 - alpha)))


def cox_loss(times, events, risks):
    """Negative Cox partial log-likelihood, averaged over events.

    Risk sets include ties (T_j >= T_i). At least one event required.
    """
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.intp)
    h = risks if isinstance(risks, tc.Tensor) else tc.tensor(risks)
    if h.ndim == 2 and h.shape[1] == 1:
        h = tc.reshape(h, (h.shape[0],))
    if h.shape != t.shape:
        raise ShapeError("cox_loss", h.shape, t.shape)
    event_idx = np.flatnonzero(e == 1)
    if event_idx.size == 0:
        raise ValueError("cox_loss: no events")
    at_risk = (t[None, :] >= t[event_idx, None]).astype(h.data.dtype)
    m = float(h.data.max())
    eh = tc.exp(tc.sub(h, m))
    denom = tc.add(tc.log(tc.matmul(tc.tensor(at_risk),
                                    tc.reshape(eh, (h.shape[0], 1)))), m)
    h_events = tc.take(h, event_idx)
    terms = tc.sub(h_events, tc.reshape(denom, (event_idx.size,)))
    return tc.mul(tc.mean(terms), -1.0)
