# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the hot kernels.

Same contracts as the NumPy fallback in _reference.py. Loops are serial so
results are deterministic; matrix products stay in BLAS via NumPy and are
deliberately not reimplemented here.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport sqrt, tanh, exp, cos, sin, M_PI

cnp.import_array()

BACKEND = "cython"

ctypedef fused real:
    float
    double

cdef double _GELU_C = 0.7978845608028654
cdef double _GELU_A = 0.044715


# ---------------------------------------------------------------- layer norm

def layer_norm_fwd(real[:, ::1] x, real[::1] gamma, real[::1] beta, double eps):
    cdef Py_ssize_t rows = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, m, v, r
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    y_arr = np.empty((rows, d), dtype=dt)
    mean_arr = np.empty(rows, dtype=dt)
    rstd_arr = np.empty(rows, dtype=dt)
    cdef real[:, ::1] y = y_arr
    cdef real[::1] mean = mean_arr
    cdef real[::1] rstd = rstd_arr
    for i in range(rows):
        acc = 0.0
        for j in range(d):
            acc += x[i, j]
        m = acc / d
        acc = 0.0
        for j in range(d):
            acc += (x[i, j] - m) * (x[i, j] - m)
        v = acc / d
        r = 1.0 / sqrt(v + eps)
        mean[i] = <real> m
        rstd[i] = <real> r
        for j in range(d):
            y[i, j] = <real> (((x[i, j] - m) * r) * gamma[j] + beta[j])
    return y_arr, mean_arr, rstd_arr


def layer_norm_bwd(real[:, ::1] g, real[:, ::1] x, real[::1] gamma,
                   real[::1] mean, real[::1] rstd):
    cdef Py_ssize_t rows = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double m1, m2, xh, gx_h
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    gx_arr = np.empty((rows, d), dtype=dt)
    ggamma_arr = np.zeros(d, dtype=dt)
    gbeta_arr = np.zeros(d, dtype=dt)
    cdef real[:, ::1] gx = gx_arr
    cdef real[::1] ggamma = ggamma_arr
    cdef real[::1] gbeta = gbeta_arr
    for i in range(rows):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            xh = (x[i, j] - mean[i]) * rstd[i]
            gx_h = g[i, j] * gamma[j]
            m1 += gx_h
            m2 += gx_h * xh
            ggamma[j] += <real> (g[i, j] * xh)
            gbeta[j] += g[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            xh = (x[i, j] - mean[i]) * rstd[i]
            gx[i, j] = <real> (rstd[i] * (g[i, j] * gamma[j] - m1 - xh * m2))
    return gx_arr, ggamma_arr, gbeta_arr


# ------------------------------------------------------------------- softmax

def softmax_fwd(real[:, ::1] x):
    cdef Py_ssize_t rows = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, s
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    y_arr = np.empty((rows, d), dtype=dt)
    cdef real[:, ::1] y = y_arr
    for i in range(rows):
        mx = x[i, 0]
        for j in range(1, d):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(d):
            y[i, j] = <real> exp(x[i, j] - mx)
            s += y[i, j]
        for j in range(d):
            y[i, j] = <real> (y[i, j] / s)
    return y_arr


# ---------------------------------------------------------------------- gelu

def gelu_fwd(real[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double u, v
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    y_arr = np.empty(n, dtype=dt)
    cdef real[::1] y = y_arr
    for i in range(n):
        v = x[i]
        u = tanh(_GELU_C * (v + _GELU_A * v * v * v))
        y[i] = <real> (0.5 * v * (1.0 + u))
    return y_arr


def gelu_bwd(real[::1] g, real[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double u, du, v
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    gx_arr = np.empty(n, dtype=dt)
    cdef real[::1] gx = gx_arr
    for i in range(n):
        v = x[i]
        u = tanh(_GELU_C * (v + _GELU_A * v * v * v))
        du = (1.0 - u * u) * _GELU_C * (1.0 + 3.0 * _GELU_A * v * v)
        gx[i] = <real> (g[i] * (0.5 * (1.0 + u) + 0.5 * v * du))
    return gx_arr


# ----------------------------------------------------------------------- fft

def fft_pow2(cnp.complex128_t[:, ::1] a):
    """Forward radix-2 DFT along the last axis; length must be a power of 2."""
    cdef Py_ssize_t batch = a.shape[0], n = a.shape[1]
    if n & (n - 1):
        raise ValueError(f"fft_pow2: length {n} is not a power of two")
    out_arr = np.empty((batch, n), dtype=np.complex128)
    cdef cnp.complex128_t[:, ::1] out = out_arr
    cdef Py_ssize_t bits = 0, t = n
    while t > 1:
        bits += 1
        t >>= 1
    cdef Py_ssize_t b, i, j, k, half, step, rev
    cdef double ang
    cdef double complex w, wk, u, v
    for b in range(batch):
        for i in range(n):
            rev = 0
            for k in range(bits):
                rev |= ((i >> k) & 1) << (bits - 1 - k)
            out[b, rev] = a[b, i]
        half = 1
        while half < n:
            step = half * 2
            ang = -M_PI / half
            w = cos(ang) + 1j * sin(ang)
            for i in range(0, n, step):
                wk = 1.0 + 0.0j
                for j in range(half):
                    u = out[b, i + j]
                    v = out[b, i + j + half] * wk
                    out[b, i + j] = u + v
                    out[b, i + j + half] = u - v
                    wk = wk * w
            half = step
    return out_arr


# ------------------------------------------------------------------ resample

cdef inline void _coords(Py_ssize_t src, Py_ssize_t dst, Py_ssize_t[::1] lo,
                         double[::1] frac):
    cdef Py_ssize_t i
    cdef double c, scale
    scale = 0.0 if dst == 1 else (src - 1) / <double> (dst - 1)
    for i in range(dst):
        c = i * scale
        lo[i] = <Py_ssize_t> c
        if lo[i] > src - 1:
            lo[i] = src - 1
        frac[i] = c - lo[i]


def resize_trilinear(real[:, :, ::1] vol, shape_out):
    cdef Py_ssize_t sx = vol.shape[0], sy = vol.shape[1], sz = vol.shape[2]
    cdef Py_ssize_t tx = shape_out[0], ty = shape_out[1], tz = shape_out[2]
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    out_arr = np.empty((tx, ty, tz), dtype=dt)
    cdef real[:, :, ::1] out = out_arr
    x0_arr = np.empty(tx, dtype=np.intp); fx_arr = np.empty(tx, dtype=np.float64)
    y0_arr = np.empty(ty, dtype=np.intp); fy_arr = np.empty(ty, dtype=np.float64)
    z0_arr = np.empty(tz, dtype=np.intp); fz_arr = np.empty(tz, dtype=np.float64)
    cdef Py_ssize_t[::1] x0 = x0_arr, y0 = y0_arr, z0 = z0_arr
    cdef double[::1] fx = fx_arr, fy = fy_arr, fz = fz_arr
    _coords(sx, tx, x0, fx)
    _coords(sy, ty, y0, fy)
    _coords(sz, tz, z0, fz)
    cdef Py_ssize_t i, j, k, a0, a1, b0, b1, c0, c1
    cdef double wa, wb, wc, v00, v01, v10, v11, v0, v1
    for i in range(tx):
        a0 = x0[i]
        a1 = a0 + 1 if a0 + 1 < sx else sx - 1
        wa = fx[i]
        for j in range(ty):
            b0 = y0[j]
            b1 = b0 + 1 if b0 + 1 < sy else sy - 1
            wb = fy[j]
            for k in range(tz):
                c0 = z0[k]
                c1 = c0 + 1 if c0 + 1 < sz else sz - 1
                wc = fz[k]
                v00 = vol[a0, b0, c0] * (1 - wa) + vol[a1, b0, c0] * wa
                v10 = vol[a0, b1, c0] * (1 - wa) + vol[a1, b1, c0] * wa
                v01 = vol[a0, b0, c1] * (1 - wa) + vol[a1, b0, c1] * wa
                v11 = vol[a0, b1, c1] * (1 - wa) + vol[a1, b1, c1] * wa
                v0 = v00 * (1 - wb) + v10 * wb
                v1 = v01 * (1 - wb) + v11 * wb
                out[i, j, k] = <real> (v0 * (1 - wc) + v1 * wc)
    return out_arr


def resize_bilinear(real[:, ::1] img, shape_out):
    cdef Py_ssize_t sh = img.shape[0], sw = img.shape[1]
    cdef Py_ssize_t th = shape_out[0], tw = shape_out[1]
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    out_arr = np.empty((th, tw), dtype=dt)
    cdef real[:, ::1] out = out_arr
    h0_arr = np.empty(th, dtype=np.intp); fh_arr = np.empty(th, dtype=np.float64)
    w0_arr = np.empty(tw, dtype=np.intp); fw_arr = np.empty(tw, dtype=np.float64)
    cdef Py_ssize_t[::1] h0 = h0_arr, w0 = w0_arr
    cdef double[::1] fh = fh_arr, fw = fw_arr
    _coords(sh, th, h0, fh)
    _coords(sw, tw, w0, fw)
    cdef Py_ssize_t i, j, a0, a1, b0, b1
    cdef double wa, wb, top, bot
    for i in range(th):
        a0 = h0[i]
        a1 = a0 + 1 if a0 + 1 < sh else sh - 1
        wa = fh[i]
        for j in range(tw):
            b0 = w0[j]
            b1 = b0 + 1 if b0 + 1 < sw else sw - 1
            wb = fw[j]
            top = img[a0, b0] * (1 - wa) + img[a1, b0] * wa
            bot = img[a0, b1] * (1 - wa) + img[a1, b1] * wa
            out[i, j] = <real> (top * (1 - wb) + bot * wb)
    return out_arr


# --------------------------------------------------------------- convolution

def conv1d_mirror(real[:, ::1] x, real[::1] kernel, int axis):
    """Correlate along `axis` with mirror padding that includes the edge."""
    if axis == 0:
        return np.ascontiguousarray(
            conv1d_mirror(np.ascontiguousarray(np.asarray(x).T), kernel, 1).T)
    cdef Py_ssize_t rows = x.shape[0], n = x.shape[1], m = kernel.shape[0]
    cdef Py_ssize_t r = m // 2
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    out_arr = np.empty((rows, n), dtype=dt)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, p
    cdef double acc
    for i in range(rows):
        for j in range(n):
            acc = 0.0
            for k in range(m):
                p = j + k - r
                if p < 0:
                    p = -p - 1
                elif p >= n:
                    p = 2 * n - 1 - p
                acc += kernel[k] * x[i, p]
            out[i, j] = <real> acc
    return out_arr
