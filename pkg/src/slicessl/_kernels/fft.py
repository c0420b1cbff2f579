"""DFT wrappers over the backend radix-2 primitive.

Arbitrary lengths go through Bluestein's chirp-z transform, which reduces
any DFT to a circular convolution of power-of-two length; only the
power-of-two butterflies live in the backend.
"""

import numpy as np

from . import fft_pow2


def _next_pow2(n):
    m = 1
    while m < n:
        m <<= 1
    return m


def _fft_any(a):
    # a: (batch, n) complex128, forward transform
    n = a.shape[1]
    if n & (n - 1) == 0:
        return fft_pow2(np.ascontiguousarray(a))
    # Bluestein: x_k * w_k convolved with the conjugate chirp
    k = np.arange(n)
    w = np.exp(-1j * np.pi * (k * k % (2 * n)) / n)
    m = _next_pow2(2 * n - 1)
    fa = np.zeros((a.shape[0], m), dtype=np.complex128)
    fa[:, :n] = a * w
    fb = np.zeros(m, dtype=np.complex128)
    fb[:n] = np.conj(w)
    fb[m - n + 1:] = np.conj(w[1:][::-1])
    Fa = fft_pow2(fa)
    Fb = fft_pow2(fb[None, :])
    conv = _ifft_pow2(Fa * Fb)
    return conv[:, :n] * w


def _ifft_pow2(a):
    return np.conj(fft_pow2(np.ascontiguousarray(np.conj(a)))) / a.shape[1]


def fft(a, axis=-1):
    """Forward DFT of a complex array along `axis`."""
    a = np.asarray(a, dtype=np.complex128)
    moved = np.moveaxis(a, axis, -1)
    flat = moved.reshape(-1, moved.shape[-1])
    out = _fft_any(flat).reshape(moved.shape)
    return np.moveaxis(out, -1, axis)


def ifft(a, axis=-1):
    """Inverse DFT of a complex array along `axis`."""
    a = np.asarray(a, dtype=np.complex128)
    return np.conj(fft(np.conj(a), axis=axis)) / a.shape[axis]


def fft2(a):
    """2-D forward DFT over the last two axes."""
    return fft(fft(a, axis=-1), axis=-2)


def ifft2(a):
    """2-D inverse DFT over the last two axes."""
    return ifft(ifft(a, axis=-1), axis=-2)


def fftshift(a, axes=(-2, -1)):
    """Move the zero-frequency bin to the center of the given axes."""
    for ax in axes:
        a = np.roll(a, a.shape[ax] // 2, axis=ax)
    return a


def ifftshift(a, axes=(-2, -1)):
    """Inverse of fftshift (differs for odd lengths)."""
    for ax in axes:
        a = np.roll(a, -(a.shape[ax] // 2), axis=ax)
    return a
