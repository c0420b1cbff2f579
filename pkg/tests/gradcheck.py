"""Shared finite-difference gradient-check harness.

Each scenario pairs input arrays with a scalar-valued function built from
package ops; the check compares tape gradients against the central-difference
oracle for every input slot.
"""

import numpy as np

import slicessl.tensorcore as tc
from oracles import fd_gradient, rel_err

STEP = {np.float32: 1e-3, np.float64: 1e-6}
TOL = {np.float32: 1e-3, np.float64: 1e-6}


def scenarios(dtype, seed):
    rng = np.random.default_rng(seed)

    def arr(*shape, lo=-1.0, hi=1.0):
        return (lo + (hi - lo) * rng.random(shape)).astype(dtype)

    r34 = arr(3, 4)
    r36 = arr(3, 6)
    r236 = arr(2, 3, 6)
    r24 = arr(2, 4)
    r3 = arr(3)
    r48 = arr(4, 8)
    r26 = arr(2, 6)
    r423 = arr(4, 2, 3)
    r54 = arr(5, 4)
    r23 = arr(2, 3)
    r43 = arr(4, 3)
    rk = arr(4, 6)
    rl = arr(3, 4)

    out = []

    def proj(t, r):
        return tc.sum_(tc.mul(t, tc.tensor(r)))

    out.append(("matmul_a", [arr(3, 4)], lambda a: proj(tc.matmul(a, tc.tensor(rk)), r36)))
    out.append(("matmul_b", [arr(4, 6)], lambda b: proj(tc.matmul(tc.tensor(rl), b), r36)))
    out.append(("matmul_batched", [arr(2, 3, 4)],
                lambda a: proj(tc.matmul(a, tc.tensor(rk)), r236)))
    out.append(("add", [arr(3, 4), arr(3, 4)], lambda a, b: proj(tc.add(a, b), r34)))
    out.append(("add_broadcast", [arr(3, 4), arr(4)], lambda a, b: proj(tc.add(a, b), r34)))
    out.append(("sub", [arr(3, 4), arr(3, 4)], lambda a, b: proj(tc.sub(a, b), r34)))
    out.append(("mul", [arr(3, 4), arr(3, 4)], lambda a, b: proj(tc.mul(a, b), r34)))
    out.append(("div", [arr(3, 4), arr(3, 4, lo=0.5, hi=1.5)],
                lambda a, b: proj(tc.div(a, b), r34)))
    out.append(("exp", [arr(3, 4)], lambda a: proj(tc.exp(a), r34)))
    out.append(("log", [arr(3, 4, lo=0.5, hi=2.0)], lambda a: proj(tc.log(a), r34)))
    out.append(("pow", [arr(3, 4, lo=0.5, hi=2.0)], lambda a: proj(tc.pow_(a, 1.7), r34)))
    out.append(("sum_all", [arr(3, 4)], lambda a: tc.sum_(a)))
    out.append(("sum_axis", [arr(2, 3, 4)], lambda a: proj(tc.sum_(a, axis=1), r24)))
    out.append(("mean_axis", [arr(2, 3, 4)],
                lambda a: proj(tc.mean(a, axis=(0, 2)), r3)))
    out.append(("softmax", [arr(3, 4)], lambda a: proj(tc.softmax(a, axis=-1), r34)))
    out.append(("softmax_axis0", [arr(3, 4)], lambda a: proj(tc.softmax(a, axis=0), r34)))
    out.append(("log_softmax", [arr(3, 4)], lambda a: proj(tc.log_softmax(a, axis=-1), r34)))
    ln_x, ln_g, ln_b = arr(4, 8), arr(8, lo=0.5, hi=1.5), arr(8)
    out.append(("layer_norm_x", [ln_x.copy()],
                lambda x: proj(tc.layer_norm(x, tc.tensor(ln_g), tc.tensor(ln_b)), r48)))
    out.append(("layer_norm_gamma", [ln_g.copy()],
                lambda g: proj(tc.layer_norm(tc.tensor(ln_x), g, tc.tensor(ln_b)), r48)))
    out.append(("layer_norm_beta", [ln_b.copy()],
                lambda b: proj(tc.layer_norm(tc.tensor(ln_x), tc.tensor(ln_g), b), r48)))
    out.append(("gelu", [arr(3, 4, lo=-2.0, hi=2.0)], lambda a: proj(tc.gelu(a), r34)))
    out.append(("reshape", [arr(3, 4)], lambda a: proj(tc.reshape(a, (2, 6)), r26)))
    out.append(("transpose", [arr(2, 3, 4)],
                lambda a: proj(tc.transpose(a, (2, 0, 1)), r423)))
    out.append(("concat", [arr(2, 4), arr(3, 4)],
                lambda a, b: proj(tc.concat([a, b], axis=0), r54)))
    out.append(("slice", [arr(4, 6)],
                lambda a: proj(tc.slice_(a, (slice(1, 3), slice(None, None, 2))), r23)))
    out.append(("take", [arr(4, 3)],
                lambda a: proj(tc.take(a, np.array([2, 0, 1, 1])), r43)))
    out.append(("l2_normalize", [arr(3, 4, lo=0.3, hi=1.0)],
                lambda a: proj(tc.l2_normalize(a, axis=-1), r34)))
    out.append(("mixed_chain", [arr(3, 4)],
                lambda a: tc.mean(tc.mul(tc.gelu(tc.matmul(a, tc.tensor(rk))),
                                         tc.softmax(tc.matmul(a, tc.tensor(rk)), axis=-1)))))
    return out


def check_scenario(inputs, fn, dtype):
    """Returns max relative error across the scenario's input slots."""
    worst = 0.0
    for slot in range(len(inputs)):
        tensors = [tc.tensor(x.copy(), requires_grad=(i == slot))
                   for i, x in enumerate(inputs)]
        loss = fn(*tensors)
        tc.backward(loss)
        analytic = tensors[slot].grad.copy()

        def f(x, _slot=slot):
            with tc.no_grad():
                args = [tc.tensor(x if i == _slot else inputs[i])
                        for i in range(len(inputs))]
                return fn(*args).item()

        fd = fd_gradient(f, inputs[slot].copy(), STEP[dtype])
        worst = max(worst, rel_err(analytic, fd))
        tc.reset_tape()
    return worst


def run_all(dtype, seeds):
    """Gradient-check every scenario over the given seeds; returns failures."""
    failures = []
    for seed in seeds:
        for name, inputs, fn in scenarios(dtype, seed):
            err = check_scenario(inputs, fn, dtype)
            if err >= TOL[dtype]:
                failures.append((name, seed, err))
    return failures
