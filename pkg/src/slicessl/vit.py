"""Small vision transformer with 2-D rotary attention and storage tokens.

Sequence layout is [CLS, storage_0..storage_{S-1}, patch_0..patch_{N-1}].
Only patch tokens receive rotary rotation; rotary angles use crop-relative
grid coordinates in [0, 1], so the same weights run at any input resolution
whose sides divide by the patch size.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensorcore as tc
from .errors import ConfigError, ShapeError


@dataclass
class ViTConfig:
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    n_storage_tokens: int = 4
    in_channels: int = 3
    rope_base: float = 100.0
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.depth > 0 and (self.embed_dim // self.heads) % 4:
            raise ConfigError(
                f"head_dim {self.embed_dim // self.heads} not divisible by 4 (2-D rotary)")
        if self.n_storage_tokens < 0:
            raise ConfigError("n_storage_tokens must be >= 0")

    @property
    def head_dim(self):
        return self.embed_dim // self.heads

    @property
    def grid(self):
        g = self.image_size // self.patch_size
        return (g, g)

    @property
    def n_patches(self):
        g = self.image_size // self.patch_size
        return g * g

    @property
    def n_tokens(self):
        return 1 + self.n_storage_tokens + self.n_patches

    @property
    def mlp_dim(self):
        return int(self.embed_dim * self.mlp_ratio)

    def to_dict(self):
        return {
            "image_size": self.image_size, "patch_size": self.patch_size,
            "embed_dim": self.embed_dim, "depth": self.depth, "heads": self.heads,
            "mlp_ratio": self.mlp_ratio, "n_storage_tokens": self.n_storage_tokens,
            "in_channels": self.in_channels, "rope_base": self.rope_base,
            "ln_eps": self.ln_eps,
        }


@dataclass
class TokenOutput:
    cls: tc.Tensor
    storage: tc.Tensor
    patches: tc.Tensor
    grid: tuple
    intermediates: dict = field(default_factory=dict)


def trunc_normal(shape, std, rng):
    """Normal(0, std) resampled until every draw lies within +/- 2 std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(np.float32)


def param_spec(cfg):
    """Expected parameter names and shapes for a config."""
    d, m = cfg.embed_dim, cfg.mlp_dim
    spec = {
        "cls_token": (1, 1, d),
        "patch_embed.weight": (cfg.in_channels * cfg.patch_size ** 2, d),
        "patch_embed.bias": (d,),
        "norm.gamma": (d,),
        "norm.beta": (d,),
    }
    if cfg.n_storage_tokens:
        spec["storage_tokens"] = (1, cfg.n_storage_tokens, d)
    for i in range(cfg.depth):
        p = f"blocks.{i}."
        spec[p + "norm1.gamma"] = (d,)
        spec[p + "norm1.beta"] = (d,)
        spec[p + "attn.qkv.weight"] = (d, 3 * d)
        spec[p + "attn.qkv.bias"] = (3 * d,)
        spec[p + "attn.proj.weight"] = (d, d)
        spec[p + "attn.proj.bias"] = (d,)
        spec[p + "norm2.gamma"] = (d,)
        spec[p + "norm2.beta"] = (d,)
        spec[p + "mlp.fc1.weight"] = (d, m)
        spec[p + "mlp.fc1.bias"] = (m,)
        spec[p + "mlp.fc2.weight"] = (m, d)
        spec[p + "mlp.fc2.bias"] = (d,)
    return spec


def init_params(cfg, rng, requires_grad=True):
    params = {}
    for name, shape in param_spec(cfg).items():
        if name.endswith(("bias", "norm.beta")) or ".beta" in name:
            data = np.zeros(shape, np.float32)
        elif ".gamma" in name:
            data = np.ones(shape, np.float32)
        else:
            data = trunc_normal(shape, 0.02, rng)
        params[name] = tc.Tensor(data, requires_grad=requires_grad)
    return params


def validate_params(params, cfg):
    spec = param_spec(cfg)
    for name, shape in spec.items():
        if name not in params:
            raise ConfigError(f"missing parameter {name}")
        if tuple(params[name].shape) != shape:
            raise ConfigError(
                f"parameter {name} has shape {tuple(params[name].shape)}, expected {shape}")
    for name in params:
        if name not in spec:
            raise ConfigError(f"unexpected parameter {name}")


# ------------------------------------------------------------------- rotary

def rope_angles(grid, head_dim, base, dtype=np.float32):
    """cos/sin tables of shape (n_patches, head_dim // 2).

    Pair k rotates dims (k, k + head_dim/2). The first quarter of the pairs
    follows the row coordinate, the second quarter the column coordinate;
    coordinates are normalized to [0, 1] within the crop.
    """
    gh, gw = grid
    dq = head_dim // 4
    freqs = base ** (np.arange(dq) / max(dq - 1, 1))
    rows = np.arange(gh) / max(gh - 1, 1)
    cols = np.arange(gw) / max(gw - 1, 1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    ang_r = rr.reshape(-1, 1) * freqs  # (N, dq)
    ang_c = cc.reshape(-1, 1) * freqs
    ang = np.concatenate([ang_r, ang_c], axis=1)  # (N, head_dim/2)
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


def rope_apply(x, positions, base=100.0):
    """Rotate token features by their 2-D positions.

    x: Tensor (..., tokens, head_dim); positions: array (tokens, 2) of
    normalized (row, col) coordinates. Rotations preserve per-token norms.
    """
    x = x if isinstance(x, tc.Tensor) else tc.tensor(x)
    hd = x.shape[-1]
    if hd % 4:
        raise ShapeError("rope_apply: head_dim must divide by 4", x.shape)
    dq = hd // 4
    freqs = base ** (np.arange(dq) / max(dq - 1, 1))
    pos = np.asarray(positions, dtype=np.float64)
    ang = np.concatenate([pos[:, 0:1] * freqs, pos[:, 1:2] * freqs], axis=1)
    cos, sin = np.cos(ang).astype(x.dtype), np.sin(ang).astype(x.dtype)
    return _rotate_half(x, cos, sin)


def _rotate_half(x, cos, sin):
    hd = x.shape[-1]
    h = hd // 2
    x1 = tc.slice_(x, (Ellipsis, slice(0, h)))
    x2 = tc.slice_(x, (Ellipsis, slice(h, hd)))
    c = tc.tensor(cos)
    s = tc.tensor(sin)
    out1 = tc.sub(tc.mul(x1, c), tc.mul(x2, s))
    out2 = tc.add(tc.mul(x1, s), tc.mul(x2, c))
    return tc.concat([out1, out2], axis=x.ndim - 1)


# ------------------------------------------------------------------ forward

def patch_embed(params, images, cfg):
    """(B, C, H, W) -> (B, N, D) patch tokens; H and W must divide by patch."""
    images = images if isinstance(images, tc.Tensor) else tc.tensor(images)
    b, c, h, w = images.shape
    p = cfg.patch_size
    if c != cfg.in_channels:
        raise ShapeError("patch_embed: channel mismatch", images.shape,
                         (b, cfg.in_channels, h, w))
    if h % p or w % p:
        raise ShapeError("patch_embed: spatial dims not divisible by patch", images.shape)
    gh, gw = h // p, w // p
    x = tc.reshape(images, (b, c, gh, p, gw, p))
    x = tc.transpose(x, (0, 2, 4, 1, 3, 5))
    x = tc.reshape(x, (b, gh * gw, c * p * p))
    x = tc.add(tc.matmul(x, params["patch_embed.weight"]), params["patch_embed.bias"])
    return x, (gh, gw)


def _attention(params, prefix, x, cfg, grid):
    b, t, d = x.shape
    nh, hd = cfg.heads, cfg.head_dim
    qkv = tc.add(tc.matmul(x, params[prefix + "attn.qkv.weight"]),
                 params[prefix + "attn.qkv.bias"])
    qkv = tc.reshape(qkv, (b, t, 3, nh, hd))
    qkv = tc.transpose(qkv, (2, 0, 3, 1, 4))  # (3, B, heads, T, hd)
    q = tc.slice_(qkv, 0)
    k = tc.slice_(qkv, 1)
    v = tc.slice_(qkv, 2)
    n_prefix = 1 + cfg.n_storage_tokens
    cos, sin = rope_angles(grid, hd, cfg.rope_base, dtype=x.data.dtype)
    q = _rope_tokens(q, cos, sin, n_prefix)
    k = _rope_tokens(k, cos, sin, n_prefix)
    scores = tc.mul(tc.matmul(q, tc.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(hd))
    attn = tc.softmax(scores, axis=-1)
    out = tc.matmul(attn, v)  # (B, heads, T, hd)
    out = tc.reshape(tc.transpose(out, (0, 2, 1, 3)), (b, t, d))
    return tc.add(tc.matmul(out, params[prefix + "attn.proj.weight"]),
                  params[prefix + "attn.proj.bias"])


def _rope_tokens(x, cos, sin, n_prefix):
    # CLS and storage tokens bypass rotation
    pre = tc.slice_(x, (slice(None), slice(None), slice(0, n_prefix)))
    pat = tc.slice_(x, (slice(None), slice(None), slice(n_prefix, x.shape[2])))
    pat = _rotate_half(pat, cos, sin)
    return tc.concat([pre, pat], axis=2)


def _block(params, i, x, cfg, grid):
    prefix = f"blocks.{i}."
    h = tc.layer_norm(x, params[prefix + "norm1.gamma"], params[prefix + "norm1.beta"],
                      cfg.ln_eps)
    x = tc.add(x, _attention(params, prefix, h, cfg, grid))
    h = tc.layer_norm(x, params[prefix + "norm2.gamma"], params[prefix + "norm2.beta"],
                      cfg.ln_eps)
    h = tc.add(tc.matmul(h, params[prefix + "mlp.fc1.weight"]), params[prefix + "mlp.fc1.bias"])
    h = tc.gelu(h)
    h = tc.add(tc.matmul(h, params[prefix + "mlp.fc2.weight"]), params[prefix + "mlp.fc2.bias"])
    return tc.add(x, h)


def forward(params, images, cfg, retain_blocks=None, mask=None, mask_token=None):
    """Run the encoder. Returns a TokenOutput.

    mask: optional bool array (B, N); masked patch embeddings are replaced
    by `mask_token` (Tensor (1, 1, D)) before the first block.
    retain_blocks: block indices whose full token outputs are kept.
    """
    retain = set(retain_blocks or ())
    bad = [i for i in retain if not (0 <= i < cfg.depth)]
    if bad:
        raise ConfigError(f"retain_blocks {bad} outside depth {cfg.depth}")
    x, grid = patch_embed(params, images, cfg)
    b, n, d = x.shape
    if mask is not None:
        if mask.shape != (b, n):
            raise ShapeError("forward: mask shape", mask.shape, (b, n))
        if mask_token is None:
            raise ConfigError("forward: mask given without mask_token")
        m = tc.tensor(mask.astype(x.dtype).reshape(b, n, 1))
        x = tc.add(tc.mul(x, tc.sub(1.0, m)), tc.mul(mask_token, m))
    ones = tc.tensor(np.ones((b, 1, 1), dtype=x.data.dtype))
    toks = [tc.mul(params["cls_token"], ones)]
    if cfg.n_storage_tokens:
        toks.append(tc.mul(params["storage_tokens"], ones))
    toks.append(x)
    x = tc.concat(toks, axis=1)
    inter = {}
    for i in range(cfg.depth):
        x = _block(params, i, x, cfg, grid)
        if i in retain:
            inter[i] = x
    x = tc.layer_norm(x, params["norm.gamma"], params["norm.beta"], cfg.ln_eps)
    s = cfg.n_storage_tokens
    cls = tc.slice_(x, (slice(None), 0))
    storage = tc.slice_(x, (slice(None), slice(1, 1 + s)))
    patches = tc.slice_(x, (slice(None), slice(1 + s, x.shape[1])))
    return TokenOutput(cls=cls, storage=storage, patches=patches, grid=grid,
                       intermediates=inter)


class ViT:
    """Encoder bundling a config with its parameter dict."""

    def __init__(self, cfg, params=None, rng=None, requires_grad=True):
        self.cfg = cfg
        if params is None:
            params = init_params(cfg, rng or np.random.default_rng(0), requires_grad)
        else:
            validate_params(params, cfg)
        self.params = params

    def forward(self, images, **kw):
        return forward(self.params, images, self.cfg, **kw)

    def frozen_copy(self):
        params = {k: tc.Tensor(v.data.copy()) for k, v in self.params.items()}
        return ViT(self.cfg, params=params)
