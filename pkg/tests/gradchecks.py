"""Finite-difference gradient oracle shared by the unit and acceptance suites.

Each case builds a scalar loss from parameter tensors through engine ops only;
gradcheck compares reverse-mode gradients against central differences. Inputs
are sampled with margins (or fixed seeds verified once) keeping them away from
ReLU/abs/min/max kinks, where finite differences are invalid.
"""
import numpy as np

from crossup.nn import tensor as T
from crossup.nn.layers import NetArchitecture, NetworkWeights, forward_chart, forward_extractor, forward_mapper

H = 1e-4
TOL = 1e-4


def gradcheck(build_loss, params_np, h=H):
    """Max relative error |ad - fd| / max(1, |fd|) over every parameter element."""
    params = [T.parameter(np.array(p, dtype=np.float64)) for p in params_np]
    with T.record() as tape:
        loss = build_loss(params)
    T.backward(tape, loss)
    worst = 0.0
    for p in params:
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp = build_loss(params).item()
            flat[j] = orig - h
            lm = build_loss(params).item()
            flat[j] = orig
            fd = (lp - lm) / (2.0 * h)
            err = abs(gflat[j] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    return worst


def _margin_noise(rng, shape, margin=0.1):
    """Values with |x| >= margin (keeps kinks out of the FD stencil)."""
    u = rng.standard_normal(shape)
    return np.sign(u + (u == 0)) * (margin + np.abs(u))


def _wsum(out, w):
    return T.tsum(out * T.constant(w))


# Each factory: seed -> (build_loss, [param arrays]).

def case_add(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    return lambda ps: _wsum(ps[0] + ps[1], w), [rng.standard_normal((3, 4)) for _ in range(2)]


def case_add_broadcast(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    return lambda ps: _wsum(ps[0] + ps[1], w), [rng.standard_normal((3, 4)), rng.standard_normal(4)]


def case_sub(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((2, 5))
    return lambda ps: _wsum(ps[0] - ps[1], w), [rng.standard_normal((2, 5)) for _ in range(2)]


def case_mul(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    return lambda ps: _wsum(ps[0] * ps[1], w), [rng.standard_normal((3, 4)) for _ in range(2)]


def case_mul_broadcast(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    return lambda ps: _wsum(ps[0] * ps[1], w), [rng.standard_normal((3, 1)), rng.standard_normal((3, 4))]


def case_div(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    denom = _margin_noise(rng, (3, 4), margin=0.5)
    return lambda ps: _wsum(ps[0] / ps[1], w), [rng.standard_normal((3, 4)), denom]


def case_neg(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((4,))
    return lambda ps: _wsum(-ps[0], w), [rng.standard_normal(4)]


def case_matmul(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 2))
    return lambda ps: _wsum(ps[0] @ ps[1], w), [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))]


def case_relu(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    return lambda ps: _wsum(T.relu(ps[0]), w), [_margin_noise(rng, (3, 4))]


def case_abs(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    return lambda ps: _wsum(T.tabs(ps[0]), w), [_margin_noise(rng, (3, 4))]


def case_sqrt(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    return lambda ps: _wsum(T.tsqrt(ps[0]), w), [rng.uniform(0.5, 2.0, (3, 4))]


def case_minimum(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    a = rng.standard_normal((3, 4))
    return lambda ps: _wsum(T.minimum(ps[0], ps[1]), w), [a, a + _margin_noise(rng, (3, 4))]


def case_maximum(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 4))
    a = rng.standard_normal((3, 4))
    return lambda ps: _wsum(T.maximum(ps[0], ps[1]), w), [a, a + _margin_noise(rng, (3, 4))]


def case_cross(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((5, 3))
    return lambda ps: _wsum(T.cross(ps[0], ps[1]), w), [rng.standard_normal((5, 3)) for _ in range(2)]


def case_sum_all(seed):
    rng = np.random.default_rng(seed)
    return lambda ps: T.tsum(ps[0]), [rng.standard_normal((3, 4))]


def case_sum_axis_keepdims(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 1))
    return lambda ps: _wsum(T.tsum(ps[0], axis=1, keepdims=True), w), [rng.standard_normal((3, 4))]


def case_mean_axis(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((4,))
    return lambda ps: _wsum(T.tmean(ps[0], axis=0), w), [rng.standard_normal((3, 4))]


def _distinct_grid(rng, shape, step=0.37):
    """All-distinct values with pairwise gaps >= step (safe min/max stencils)."""
    n = int(np.prod(shape))
    vals = step * rng.permutation(n).astype(np.float64)
    return vals.reshape(shape) + rng.uniform(-0.01, 0.01, shape)


def case_min_reduce(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((4,))
    return lambda ps: _wsum(T.tmin(ps[0], axis=1), w), [_distinct_grid(rng, (4, 5))]


def case_max_reduce(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((4,))
    return lambda ps: _wsum(T.tmax(ps[0], axis=1), w), [_distinct_grid(rng, (4, 5))]


def case_min_global(seed):
    rng = np.random.default_rng(seed)
    return lambda ps: T.tmin(ps[0]), [_distinct_grid(rng, (3, 4))]


def case_max_global(seed):
    rng = np.random.default_rng(seed)
    return lambda ps: T.tmax(ps[0]), [_distinct_grid(rng, (3, 4))]


def case_reshape(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((2, 6))
    return lambda ps: _wsum(T.reshape(ps[0], (2, 6)), w), [rng.standard_normal((3, 4))]


def case_transpose(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 2, 4))
    return lambda ps: _wsum(T.transpose(ps[0], (1, 0, 2)), w), [rng.standard_normal((2, 3, 4))]


def case_concat(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((5, 3))
    return (
        lambda ps: _wsum(T.concat([ps[0], ps[1]], axis=0), w),
        [rng.standard_normal((2, 3)), rng.standard_normal((3, 3))],
    )


def case_concat_axis1(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 5))
    return (
        lambda ps: _wsum(T.concat([ps[0], ps[1]], axis=1), w),
        [rng.standard_normal((3, 2)), rng.standard_normal((3, 3))],
    )


def case_gather_rows(seed):
    rng = np.random.default_rng(seed)
    idx = np.array([0, 2, 2, 5, 1])  # repeats exercise gradient accumulation
    w = rng.standard_normal((5, 3))
    return lambda ps: _wsum(T.gather_rows(ps[0], idx), w), [rng.standard_normal((6, 3))]


def case_conv3d(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((1, 2, 3, 3, 3))
    return (
        lambda ps: _wsum(T.conv3d(ps[0], ps[1], ps[2]), w),
        [
            rng.standard_normal((1, 2, 3, 3, 3)),
            rng.standard_normal((2, 2, 3, 3, 3)) * 0.5,
            rng.standard_normal(2),
        ],
    )


def case_conv2d(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((1, 3, 4, 4))
    return (
        lambda ps: _wsum(T.conv2d(ps[0], ps[1], ps[2]), w),
        [
            rng.standard_normal((1, 2, 4, 4)),
            rng.standard_normal((3, 2, 3, 3)) * 0.5,
            rng.standard_normal(3),
        ],
    )


def case_relu_linear(seed):
    rng = np.random.default_rng(seed)
    wmat = rng.standard_normal((4, 5))
    x = rng.standard_normal((5, 2))
    # keep preactivations away from the ReLU kink for valid differences
    while np.abs(wmat @ x).min() < 0.02:
        wmat = rng.standard_normal((4, 5))
        x = rng.standard_normal((5, 2))
    return lambda ps: T.tsum(T.relu(ps[0] @ ps[1])), [wmat, x]


OP_CASES = {
    "add": case_add,
    "add_broadcast": case_add_broadcast,
    "sub": case_sub,
    "mul": case_mul,
    "mul_broadcast": case_mul_broadcast,
    "div": case_div,
    "neg": case_neg,
    "matmul": case_matmul,
    "relu": case_relu,
    "abs": case_abs,
    "sqrt": case_sqrt,
    "minimum": case_minimum,
    "maximum": case_maximum,
    "cross": case_cross,
    "sum_all": case_sum_all,
    "sum_axis_keepdims": case_sum_axis_keepdims,
    "mean_axis": case_mean_axis,
    "min_reduce": case_min_reduce,
    "max_reduce": case_max_reduce,
    "min_global": case_min_global,
    "max_global": case_max_global,
    "reshape": case_reshape,
    "transpose": case_transpose,
    "concat": case_concat,
    "concat_axis1": case_concat_axis1,
    "gather_rows": case_gather_rows,
    "conv3d": case_conv3d,
    "conv2d": case_conv2d,
    "relu_linear": case_relu_linear,
}

TINY_ARCH = NetArchitecture(
    d=3, c=2, c_f=2, edge_hidden=4, trunk_hidden=4, mapper_hidden=5, graph_k=3
)


def _relu_margin_ok(values, margin=5e-3):
    return all(np.abs(v).min() > margin for v in values if v.size)


def case_chart_network(seed):
    """Composed inpaintor + compressor + mapper, gradchecked end to end."""
    arch = TINY_ARCH
    shapes = arch.parameter_shapes()
    names = [n for n in shapes if n.split(".")[0] in ("inpaint", "compress", "mapper")]
    for attempt in range(64):
        rng = np.random.default_rng(seed + 104729 * attempt)
        inits = [rng.uniform(-0.5, 0.5, shapes[n]) for n in names]
        vox = rng.standard_normal((arch.c_f, arch.d, arch.d, arch.d))
        pos = rng.uniform(-0.5, 0.5, (4, 2))
        cell_idx = rng.integers(0, arch.d * arch.d, 4)
        wsum = rng.standard_normal((4, 3))

        def build(ps):
            w = NetworkWeights(arch=arch, params={n: p for n, p in zip(names, ps)})
            feats = forward_chart(vox, w)
            flat = T.reshape(feats, (arch.d * arch.d, arch.cell_width))
            rows = T.gather_rows(flat, cell_idx)
            return _wsum(forward_mapper(pos, rows, w), wsum)

        # reject draws whose ReLU preactivations sit inside the FD stencil
        pre = _collect_relu_preactivations(build, inits)
        if _relu_margin_ok(pre):
            return build, inits
    raise AssertionError("no kink-free draw found for the chart network case")


def case_extractor(seed):
    """Composed edge conv + max pool + trunk + heads."""
    arch = TINY_ARCH
    shapes = arch.parameter_shapes()
    names = [n for n in shapes if n.startswith("extractor.")]
    for attempt in range(64):
        rng = np.random.default_rng(seed + 7 + 104729 * attempt)
        inits = [rng.uniform(-0.6, 0.6, shapes[n]) for n in names]
        pts = rng.standard_normal((6, 3))
        idx = np.array([[1, 2, 3], [0, 2, 4], [0, 1, 5], [4, 5, 0], [3, 5, 1], [3, 4, 2]])
        wsum = [rng.standard_normal((6, 3)), rng.standard_normal((6, 3)), rng.standard_normal((6, arch.c_f))]

        def build(ps):
            w = NetworkWeights(arch=arch, params={n: p for n, p in zip(names, ps)})
            out = forward_extractor(pts, idx, w)
            return (
                _wsum(out.normals, wsum[0])
                + _wsum(out.thetas, wsum[1])
                + _wsum(out.features, wsum[2])
            )

        pre = _collect_relu_preactivations(build, inits)
        if _relu_margin_ok(pre) and _maxpool_margin_ok(build, inits):
            return build, inits
    raise AssertionError("no kink-free draw found for the extractor case")


def _collect_relu_preactivations(build, inits):
    """Record every ReLU input during one forward pass (kink-margin probe)."""
    pre = []
    original = T.relu

    def spy(a):
        t = T.as_tensor(a)
        pre.append(np.array(t.data))
        return original(a)

    T.relu = spy
    try:
        build([T.constant(p) for p in inits])
    finally:
        T.relu = original
    return pre


def _maxpool_margin_ok(build, inits, margin=5e-3):
    """Every max reduction must be locally smooth for the FD stencil: either a
    clear top-two gap, or an exact all-zero pool (ReLU clamped everything and
    the relu margin already guarantees it stays clamped under perturbation)."""
    ok = [True]
    original = T.tmax

    def spy(a, axis=None):
        t = T.as_tensor(a)
        arr = np.sort(t.data, axis=axis if axis is not None else None)
        if axis is None:
            flat = arr.reshape(-1)
            if flat.size > 1 and flat[-1] != 0.0 and flat[-1] - flat[-2] <= margin:
                ok[0] = False
        elif arr.shape[axis] > 1:
            top = np.take(arr, -1, axis=axis)
            second = np.take(arr, -2, axis=axis)
            if not np.all((top == 0.0) | (top - second > margin)):
                ok[0] = False
        return original(a, axis=axis)

    T.tmax = spy
    try:
        build([T.constant(p) for p in inits])
    finally:
        T.tmax = original
    return ok[0]


COMPOSED_CASES = {
    "chart_network": case_chart_network,
    "extractor_network": case_extractor,
}
