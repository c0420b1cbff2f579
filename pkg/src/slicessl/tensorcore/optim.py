"""Adam/AdamW parameter updates and global-norm gradient clipping."""

import numpy as np

from ..errors import ShapeError


def clip_by_global_norm(grads, max_norm):
    """Scale a list of gradient arrays so their joint L2 norm is <= max_norm.

    Returns (grads, norm). The input arrays are returned untouched when the
    norm is already within the threshold.
    """
    sq = 0.0
    for g in grads:
        sq += float(np.dot(g.reshape(-1).astype(np.float64), g.reshape(-1).astype(np.float64)))
    norm = float(np.sqrt(sq))
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return [g * np.asarray(scale, dtype=g.dtype) for g in grads], norm


def adamw_update(p, g, m, v, t, lr, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.0, decoupled=True):
    """One Adam step with bias correction, applied in place to `p`.

    decoupled=True gives AdamW (weight decay added to the update);
    decoupled=False folds L2 decay into the gradient (classic Adam + L2).
    """
    if g.shape != p.shape or m.shape != p.shape or v.shape != p.shape:
        raise ShapeError("adamw_update", p.shape, g.shape)
    b1, b2 = betas
    if not decoupled and weight_decay:
        g = g + weight_decay * p
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    mhat = m / (1.0 - b1 ** t)
    vhat = v / (1.0 - b2 ** t)
    step = mhat / (np.sqrt(vhat) + eps)
    if decoupled and weight_decay:
        step = step + weight_decay * p
    p -= np.asarray(lr, dtype=p.dtype) * step.astype(p.dtype, copy=False)


class AdamW:
    """Adam(W) over a named parameter dict of Tensors.

    lr_scales maps parameter names to multiplicative learning-rate factors
    (used for layer-wise decay); wd_exempt is a predicate on names for
    parameters that skip weight decay (biases, norm gains, tokens).
    """

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0,
                 decoupled=True, lr_scales=None, wd_exempt=None):
        self.params = params
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decoupled = decoupled
        self.lr_scales = lr_scales or {}
        self.wd_exempt = wd_exempt or (lambda name: False)
        self.t = 0
        self.state = {
            name: (np.zeros_like(p.data), np.zeros_like(p.data))
            for name, p in params.items()
        }

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def grads(self):
        return [(name, p.grad) for name, p in self.params.items() if p.grad is not None]

    def step(self, lr):
        self.t += 1
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.state[name]
            wd = 0.0 if self.wd_exempt(name) else self.weight_decay
            adamw_update(p.data, g, m, v, self.t,
                         lr * self.lr_scales.get(name, 1.0),
                         self.betas, self.eps, wd, self.decoupled)
