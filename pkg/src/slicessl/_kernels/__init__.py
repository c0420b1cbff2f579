"""Kernel backend selection.

The compiled extension is preferred; the NumPy fallback is used when the
extension is missing or when the environment variable SLICESSL_PURE is set
to a non-empty value. Both backends expose the same functions.
"""

import os

from . import _reference

if os.environ.get("SLICESSL_PURE"):
    impl = _reference
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
    except ImportError:
        impl = _reference

BACKEND = impl.BACKEND

layer_norm_fwd = impl.layer_norm_fwd
layer_norm_bwd = impl.layer_norm_bwd
softmax_fwd = impl.softmax_fwd
gelu_fwd = impl.gelu_fwd
gelu_bwd = impl.gelu_bwd
fft_pow2 = impl.fft_pow2
resize_trilinear = impl.resize_trilinear
resize_bilinear = impl.resize_bilinear
conv1d_mirror = impl.conv1d_mirror
