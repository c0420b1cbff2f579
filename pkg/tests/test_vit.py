import numpy as np
import pytest

import slicessl.tensorcore as tc
from slicessl import vit
from slicessl.errors import ConfigError, ShapeError

from oracles import fd_gradient_sample, rel_err


def small_cfg(**kw):
    base = dict(image_size=16, patch_size=8, embed_dim=16, depth=2, heads=2,
                mlp_ratio=2.0, n_storage_tokens=2)
    base.update(kw)
    return vit.ViTConfig(**base)


def test_token_counts_paper_scale():
    cfg = vit.ViTConfig(image_size=256, patch_size=16, embed_dim=64, depth=1,
                        heads=4, n_storage_tokens=4)
    assert cfg.n_patches == 256
    assert cfg.n_tokens == 261
    cfg_local = vit.ViTConfig(image_size=112, patch_size=16, embed_dim=64,
                              depth=1, heads=4)
    assert cfg_local.n_patches == 49


def test_token_count_formula_random_configs(rng):
    for _ in range(25):
        p = int(rng.choice([4, 8, 16]))
        g = int(rng.integers(1, 6))
        s = int(rng.integers(0, 5))
        heads = int(rng.choice([1, 2, 4]))
        cfg = vit.ViTConfig(image_size=p * g, patch_size=p, embed_dim=8 * heads,
                            depth=1, heads=heads, n_storage_tokens=s)
        assert cfg.n_tokens == 1 + s + g * g
        m = vit.ViT(cfg, rng=rng)
        out = m.forward(np.zeros((1, 3, p * g, p * g), np.float32))
        total = 1 + out.storage.shape[1] + out.patches.shape[1]
        assert total == cfg.n_tokens


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        vit.ViTConfig(image_size=60, patch_size=8)
    with pytest.raises(ConfigError):
        vit.ViTConfig(embed_dim=60, heads=8)
    with pytest.raises(ConfigError):
        vit.ViTConfig(embed_dim=16, heads=8)  # head_dim 2, not divisible by 4


def test_patch_embed_zero_image_is_bias(rng):
    cfg = small_cfg()
    m = vit.ViT(cfg, rng=rng)
    x, grid = vit.patch_embed(m.params, np.zeros((1, 3, 16, 16), np.float32), cfg)
    assert grid == (2, 2)
    np.testing.assert_allclose(
        x.data, np.broadcast_to(m.params["patch_embed.bias"].data, x.shape), atol=0)


def test_patch_embed_rejects_indivisible(rng):
    cfg = small_cfg()
    m = vit.ViT(cfg, rng=rng)
    with pytest.raises(ShapeError):
        vit.patch_embed(m.params, np.zeros((1, 3, 12, 16), np.float32), cfg)


# --------------------------------------------------------------------- rope

def test_rope_zero_position_identity(rng):
    x = rng.normal(size=(3, 5, 8)).astype(np.float32)
    pos = np.zeros((5, 2))
    out = vit.rope_apply(tc.tensor(x), pos)
    np.testing.assert_allclose(out.data, x, atol=1e-6)


def test_rope_preserves_norms(rng):
    x = rng.normal(size=(2, 6, 16)).astype(np.float32)
    pos = rng.random((6, 2))
    out = vit.rope_apply(tc.tensor(x), pos)
    np.testing.assert_allclose(np.linalg.norm(out.data, axis=-1),
                               np.linalg.norm(x, axis=-1), atol=1e-5)


def test_rope_rejects_bad_head_dim(rng):
    with pytest.raises(ShapeError):
        vit.rope_apply(tc.tensor(rng.normal(size=(1, 2, 6)).astype(np.float32)),
                       np.zeros((2, 2)))


def test_rope_relative_position_property(rng):
    # <rope(q,p1), rope(k,p2)> must match whenever p1-p2 matches
    q = rng.normal(size=(1, 1, 8)).astype(np.float64)
    k = rng.normal(size=(1, 1, 8)).astype(np.float64)
    for _ in range(3):
        delta = rng.random(2) * 0.3
        base_pts = [rng.random(2) * 0.5 for _ in range(2)]
        dots = []
        for p2 in base_pts:
            p1 = p2 + delta
            rq = vit.rope_apply(tc.tensor(q), p1[None]).data
            rk = vit.rope_apply(tc.tensor(k), p2[None]).data
            dots.append(float((rq * rk).sum()))
        assert abs(dots[0] - dots[1]) < 1e-10


# ------------------------------------------------------------------ forward

def test_forward_deterministic(rng):
    cfg = small_cfg()
    m = vit.ViT(cfg, rng=rng)
    img = rng.normal(size=(2, 3, 16, 16)).astype(np.float32)
    with tc.no_grad():
        a = m.forward(img)
        b = m.forward(img)
    assert np.array_equal(a.cls.data, b.cls.data)
    assert np.array_equal(a.patches.data, b.patches.data)


def test_forward_shapes_and_intermediates(rng):
    cfg = vit.ViTConfig(image_size=64, patch_size=8, embed_dim=64, depth=4, heads=4)
    m = vit.ViT(cfg, rng=rng)
    img = rng.normal(size=(2, 3, 64, 64)).astype(np.float32)
    with tc.no_grad():
        out = m.forward(img, retain_blocks=[1, 3])
    assert out.cls.shape == (2, 64)
    assert out.storage.shape == (2, 4, 64)
    assert out.patches.shape == (2, 64, 64)
    assert set(out.intermediates) == {1, 3}
    assert out.intermediates[1].shape == (2, cfg.n_tokens, 64)


def test_forward_any_resolution_same_weights(rng):
    # rotary positions are crop-relative, so other resolutions just work
    cfg = small_cfg()
    m = vit.ViT(cfg, rng=rng)
    with tc.no_grad():
        out = m.forward(np.zeros((1, 3, 32, 32), np.float32))
    assert out.patches.shape == (1, 16, cfg.embed_dim)


def test_forward_retain_out_of_range(rng):
    cfg = small_cfg()
    m = vit.ViT(cfg, rng=rng)
    with pytest.raises(ConfigError):
        m.forward(np.zeros((1, 3, 16, 16), np.float32), retain_blocks=[7])


def test_validate_params_names_offender(rng):
    cfg = small_cfg()
    params = vit.init_params(cfg, rng)
    params["blocks.0.attn.qkv.weight"] = tc.tensor(np.zeros((3, 3), np.float32))
    with pytest.raises(ConfigError) as exc:
        vit.validate_params(params, cfg)
    assert "blocks.0.attn.qkv.weight" in str(exc.value)
    del params["cls_token"]
    with pytest.raises(ConfigError):
        vit.validate_params(params, cfg)


def test_hflip_permutes_patchwise_constant_tokens(rng):
    # depth-0 encoder on an image that is constant within each patch:
    # flipping the image permutes patch tokens, leaving the norm multiset
    cfg = vit.ViTConfig(image_size=16, patch_size=4, embed_dim=8, depth=0,
                        heads=2, n_storage_tokens=0)
    m = vit.ViT(cfg, rng=rng)
    vals = rng.normal(size=(4, 4)).astype(np.float32)
    img = np.kron(vals, np.ones((4, 4), np.float32))[None]
    img = np.repeat(img, 3, axis=0)[None]
    with tc.no_grad():
        a = m.forward(img)
        b = m.forward(img[:, :, :, ::-1].copy())
    norms_a = np.sort(np.linalg.norm(a.patches.data[0], axis=-1))
    norms_b = np.sort(np.linalg.norm(b.patches.data[0], axis=-1))
    np.testing.assert_allclose(norms_a, norms_b, rtol=1e-6)
    perm = a.patches.data[0].reshape(4, 4, -1)[:, ::-1]
    np.testing.assert_allclose(perm.reshape(16, -1), b.patches.data[0], rtol=1e-6)


def test_forward_input_gradient_vs_fd(rng):
    # input-pixel gradients sit below float32 finite-difference noise, so
    # this path runs in the 64-bit gradient-check mode
    cfg = small_cfg()
    m = vit.ViT(cfg, rng=rng)
    params = {k: tc.Tensor(p.data.astype(np.float64), requires_grad=True)
              for k, p in m.params.items()}
    img = rng.normal(size=(1, 3, 16, 16))
    proj = rng.normal(size=(1, cfg.embed_dim))

    def loss_of(images_t):
        out = vit.forward(params, images_t, cfg)
        return tc.sum_(tc.mul(out.cls, tc.tensor(proj)))

    x = tc.tensor(img.copy(), requires_grad=True, dtype=np.float64)
    tc.backward(loss_of(x))
    analytic = x.grad.reshape(-1)

    def f(a):
        with tc.no_grad():
            return loss_of(tc.tensor(a, dtype=np.float64)).item()

    idx, fd = fd_gradient_sample(f, img.copy(), 1e-6, 60, rng)
    assert rel_err(analytic[idx], fd) < 1e-3


@pytest.mark.parametrize("pname", ["blocks.0.attn.qkv.weight", "norm.gamma",
                                   "blocks.1.mlp.fc2.weight"])
def test_forward_param_gradient_vs_fd_f32(rng, pname):
    cfg = small_cfg()
    m = vit.ViT(cfg, rng=rng)
    img = rng.normal(size=(1, 3, 16, 16)).astype(np.float32)
    proj = rng.normal(size=(1, cfg.embed_dim)).astype(np.float32)

    def loss_of():
        out = m.forward(img)
        return tc.sum_(tc.mul(out.cls, tc.tensor(proj)))

    p = m.params[pname]
    p.requires_grad = True
    tc.backward(loss_of())
    analytic = p.grad.reshape(-1).copy()
    base = p.data.copy()

    def f(a):
        p.data[...] = a
        with tc.no_grad():
            v = loss_of().item()
        p.data[...] = base
        return v

    idx, fd = fd_gradient_sample(f, base.copy(), 1e-3, 40, rng)
    assert rel_err(analytic[idx], fd) < 1e-3


def test_mask_replacement_uses_mask_token(rng):
    cfg = small_cfg()
    m = vit.ViT(cfg, rng=rng)
    img = rng.normal(size=(1, 3, 16, 16)).astype(np.float32)
    token = tc.tensor(np.full((1, 1, cfg.embed_dim), 0.5, np.float32))
    mask = np.zeros((1, cfg.n_patches), bool)
    mask[0, 1] = True
    with tc.no_grad():
        x, _ = vit.patch_embed(m.params, img, cfg)
        masked = m.forward(img, mask=mask, mask_token=token)
        clean = m.forward(img)
    assert not np.allclose(masked.patches.data, clean.patches.data)
    # an all-False mask must be a no-op
    with tc.no_grad():
        none = m.forward(img, mask=np.zeros((1, cfg.n_patches), bool), mask_token=token)
    np.testing.assert_allclose(none.patches.data, clean.patches.data, atol=1e-6)
    assert x.shape == (1, cfg.n_patches, cfg.embed_dim)
