"""Lightweight task heads trained on frozen subject-level features:
LayerNorm -> linear -> GELU -> (dropout) -> linear."""

from dataclasses import dataclass

import numpy as np

from .. import tensorcore as tc
from ..errors import ConfigError
from ..vit import trunc_normal


@dataclass
class TaskHeadConfig:
    in_dim: int
    n_out: int
    hidden: int | None = None   # defaults to in_dim
    dropout: float = 0.0
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.hidden is None:
            self.hidden = self.in_dim
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")


def head_init(cfg, rng):
    return {
        "ln.gamma": tc.Tensor(np.ones(cfg.in_dim, np.float32), requires_grad=True),
        "ln.beta": tc.Tensor(np.zeros(cfg.in_dim, np.float32), requires_grad=True),
        "fc1.weight": tc.Tensor(trunc_normal((cfg.in_dim, cfg.hidden), 0.02, rng),
                                requires_grad=True),
        "fc1.bias": tc.Tensor(np.zeros(cfg.hidden, np.float32), requires_grad=True),
        "fc2.weight": tc.Tensor(trunc_normal((cfg.hidden, cfg.n_out), 0.02, rng),
                                requires_grad=True),
        "fc2.bias": tc.Tensor(np.zeros(cfg.n_out, np.float32), requires_grad=True),
    }


def head_forward(params, x, cfg, dropout_rng=None):
    """x: Tensor (n, in_dim) -> (n, n_out). Dropout only when a rng is given
    (training); evaluation runs the identity path."""
    h = tc.layer_norm(x, params["ln.gamma"], params["ln.beta"], cfg.ln_eps)
    h = tc.gelu(tc.add(tc.matmul(h, params["fc1.weight"]), params["fc1.bias"]))
    if cfg.dropout and dropout_rng is not None:
        keep = (dropout_rng.random(h.shape) >= cfg.dropout).astype(h.data.dtype)
        h = tc.mul(h, tc.tensor(keep / (1.0 - cfg.dropout)))
    return tc.add(tc.matmul(h, params["fc2.weight"]), params["fc2.bias"])


def n_params(params):
    return sum(int(np.prod(p.shape)) for p in params.values())


def head_param_fraction(cfg, backbone_n_params):
    """Trainable-head share of the total parameter count."""
    head = (2 * cfg.in_dim + cfg.in_dim * cfg.hidden + cfg.hidden
            + cfg.hidden * cfg.n_out + cfg.n_out)
    return head / (head + backbone_n_params)


def assert_head_budget(cfg, backbone_n_params, limit=0.01, enforce=None):
    """At full model scale the head must stay under `limit` of parameters.

    Desk-scale backbones are tiny, so the check is enforced only above ten
    million backbone parameters unless `enforce` overrides.
    """
    frac = head_param_fraction(cfg, backbone_n_params)
    if enforce is None:
        enforce = backbone_n_params > 10_000_000
    if enforce and frac >= limit:
        raise ConfigError(
            f"task head uses {frac:.2%} of parameters (limit {limit:.0%})")
    return frac
