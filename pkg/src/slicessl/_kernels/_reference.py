"""Pure-NumPy implementations of the hot kernels.

Mirrors the contracts of the compiled module ``_core``; used when the
extension is unavailable or when ``SLICESSL_PURE`` is set. Semantics (not
bitwise output) are identical between the two backends; see
tests/test_kernels.py for the parity tolerances.
"""

import numpy as np

BACKEND = "python"


# ---------------------------------------------------------------- layer norm

def layer_norm_fwd(x, gamma, beta, eps):
    """Normalize each row of a 2-D array. Returns (y, mean, rstd)."""
    mean = x.mean(axis=1)
    var = np.square(x - mean[:, None]).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean[:, None]) * rstd[:, None] * gamma + beta
    return y, mean, rstd


def layer_norm_bwd(g, x, gamma, mean, rstd):
    """Gradients of layer_norm_fwd. Returns (gx, ggamma, gbeta)."""
    xhat = (x - mean[:, None]) * rstd[:, None]
    gxhat = g * gamma
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    ggamma = (g * xhat).sum(axis=0)
    gbeta = g.sum(axis=0)
    return gx, ggamma, gbeta


# ------------------------------------------------------------------- softmax

def softmax_fwd(x):
    """Row-wise softmax of a 2-D array."""
    z = x - x.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


# ---------------------------------------------------------------------- gelu

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu_fwd(x):
    """Tanh-form GELU, elementwise."""
    u = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    return 0.5 * x * (1.0 + u)


def gelu_bwd(g, x):
    """Gradient of gelu_fwd w.r.t. x."""
    u = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    du = (1.0 - u * u) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return g * (0.5 * (1.0 + u) + 0.5 * x * du)


# ----------------------------------------------------------------------- fft

def fft_pow2(a):
    """Forward DFT along the last axis of a 2-D complex128 array.

    Iterative radix-2; the length must be a power of two. Non-power-of-two
    lengths are handled one level up (Bluestein, see _kernels.fft).
    """
    batch, n = a.shape
    if n & (n - 1):
        raise ValueError(f"fft_pow2: length {n} is not a power of two")
    out = a.copy()
    if n == 1:
        return out
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    out = out[:, rev]
    half = 1
    while half < n:
        w = np.exp((-1j * np.pi / half) * np.arange(half))
        blk = out.reshape(batch, -1, 2 * half)
        even = blk[:, :, :half]
        odd = blk[:, :, half:] * w
        out = np.concatenate([even + odd, even - odd], axis=2).reshape(batch, n)
        half *= 2
    return out


# ------------------------------------------------------------------ resample

def _axis_coords(src, dst):
    # align-corners sampling: exact identity when src == dst
    if dst == 1:
        return np.zeros(1)
    return np.arange(dst) * ((src - 1) / (dst - 1))


def resize_trilinear(vol, shape_out):
    """Trilinear resample of a 3-D array onto shape_out (align-corners)."""
    sx, sy, sz = vol.shape
    tx, ty, tz = shape_out
    cx, cy, cz = _axis_coords(sx, tx), _axis_coords(sy, ty), _axis_coords(sz, tz)
    x0 = np.minimum(cx.astype(np.intp), sx - 1)
    y0 = np.minimum(cy.astype(np.intp), sy - 1)
    z0 = np.minimum(cz.astype(np.intp), sz - 1)
    x1, y1, z1 = np.minimum(x0 + 1, sx - 1), np.minimum(y0 + 1, sy - 1), np.minimum(z0 + 1, sz - 1)
    fx = (cx - x0).astype(vol.dtype)[:, None, None]
    fy = (cy - y0).astype(vol.dtype)[None, :, None]
    fz = (cz - z0).astype(vol.dtype)[None, None, :]
    c000 = vol[np.ix_(x0, y0, z0)]
    c100 = vol[np.ix_(x1, y0, z0)]
    c010 = vol[np.ix_(x0, y1, z0)]
    c110 = vol[np.ix_(x1, y1, z0)]
    c001 = vol[np.ix_(x0, y0, z1)]
    c101 = vol[np.ix_(x1, y0, z1)]
    c011 = vol[np.ix_(x0, y1, z1)]
    c111 = vol[np.ix_(x1, y1, z1)]
    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return (c0 * (1 - fz) + c1 * fz).astype(vol.dtype, copy=False)


def resize_bilinear(img, shape_out):
    """Bilinear resample of a 2-D array onto shape_out (align-corners)."""
    sh, sw = img.shape
    th, tw = shape_out
    ch, cw = _axis_coords(sh, th), _axis_coords(sw, tw)
    h0 = np.minimum(ch.astype(np.intp), sh - 1)
    w0 = np.minimum(cw.astype(np.intp), sw - 1)
    h1, w1 = np.minimum(h0 + 1, sh - 1), np.minimum(w0 + 1, sw - 1)
    fh = (ch - h0).astype(img.dtype)[:, None]
    fw = (cw - w0).astype(img.dtype)[None, :]
    c00 = img[np.ix_(h0, w0)]
    c10 = img[np.ix_(h1, w0)]
    c01 = img[np.ix_(h0, w1)]
    c11 = img[np.ix_(h1, w1)]
    top = c00 * (1 - fh) + c10 * fh
    bot = c01 * (1 - fh) + c11 * fh
    return (top * (1 - fw) + bot * fw).astype(img.dtype, copy=False)


# --------------------------------------------------------------- convolution

def conv1d_mirror(x, kernel, axis):
    """Correlate a 2-D array with a 1-D kernel along `axis`.

    Mirror padding includes the edge sample, so a normalized symmetric
    kernel preserves the array sum exactly.
    """
    if axis == 0:
        return conv1d_mirror(x.T, kernel, 1).T
    r = len(kernel) // 2
    pad = np.pad(x, ((0, 0), (r, r)), mode="symmetric")
    win = np.lib.stride_tricks.sliding_window_view(pad, len(kernel), axis=1)
    return win @ kernel.astype(x.dtype)
