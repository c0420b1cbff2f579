"""Projection heads mapping backbone tokens to prototype logits.

Three-layer MLP (GELU) into an L2-normalized bottleneck, then a linear
prototype layer whose weight rows are kept at unit L2 norm after every
optimizer step (weight-norm parameterization). Separate instances serve the
CLS-token and patch-token objectives.
"""

import numpy as np

from .. import tensorcore as tc
from ..vit import trunc_normal


def head_param_spec(in_dim, hidden, bottleneck, n_prototypes):
    return {
        "fc1.weight": (in_dim, hidden),
        "fc1.bias": (hidden,),
        "fc2.weight": (hidden, hidden),
        "fc2.bias": (hidden,),
        "fc3.weight": (hidden, bottleneck),
        "fc3.bias": (bottleneck,),
        "prototypes": (n_prototypes, bottleneck),
    }


def head_init(prefix, in_dim, hidden, bottleneck, n_prototypes, rng,
              requires_grad=True):
    params = {}
    for name, shape in head_param_spec(in_dim, hidden, bottleneck, n_prototypes).items():
        if name.endswith("bias"):
            data = np.zeros(shape, np.float32)
        else:
            data = trunc_normal(shape, 0.02, rng)
        if name == "prototypes":
            data /= np.maximum(np.linalg.norm(data, axis=1, keepdims=True), 1e-30)
        params[prefix + name] = tc.Tensor(data, requires_grad=requires_grad)
    return params


def head_forward(params, prefix, x):
    """x: Tensor (n, in_dim) -> prototype logits (n, K)."""
    h = tc.gelu(tc.add(tc.matmul(x, params[prefix + "fc1.weight"]),
                       params[prefix + "fc1.bias"]))
    h = tc.gelu(tc.add(tc.matmul(h, params[prefix + "fc2.weight"]),
                       params[prefix + "fc2.bias"]))
    z = tc.add(tc.matmul(h, params[prefix + "fc3.weight"]), params[prefix + "fc3.bias"])
    z = tc.l2_normalize(z, axis=-1)
    return tc.matmul(z, tc.transpose(params[prefix + "prototypes"], (1, 0)))


def renorm_prototypes(params, prefix):
    w = params[prefix + "prototypes"].data
    w /= np.maximum(np.linalg.norm(w, axis=1, keepdims=True), 1e-30)
