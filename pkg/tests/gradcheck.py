"""Central finite-difference oracle shared by the gradient tests."""
import numpy as np

from ctxinflect.numeric import Tape, Tensor, backward, ops


def analytic(fn, arrays):
    ts = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    with Tape():
        loss = fn(*ts)
    backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]


def numeric(fn, arrays, eps=1e-5, max_entries=None, rng=None):
    """Central differences; optionally only on a random subset of entries.

    Returns (gradients, list of checked flat indices per array).
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads, picked = [], []
    for a in arrays:
        g = np.zeros_like(a)
        idx = np.arange(a.size)
        if max_entries is not None and a.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(a.size, max_entries, replace=False)
        for k in idx:
            orig = a.flat[k]
            a.flat[k] = orig + eps
            hi = fn(*[Tensor(x) for x in arrays]).item()
            a.flat[k] = orig - eps
            lo = fn(*[Tensor(x) for x in arrays]).item()
            a.flat[k] = orig
            g.flat[k] = (hi - lo) / (2 * eps)
        grads.append(g)
        picked.append(idx)
    return grads, picked


def rel_error(a, n):
    a, n = np.ravel(a), np.ravel(n)
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-8)
    return float(np.linalg.norm(a - n) / denom)


def max_rel_error(fn, arrays, eps=1e-5, max_entries=None, rng=None):
    ana = analytic(fn, arrays)
    num, picked = numeric(fn, arrays, eps, max_entries, rng)
    return max(rel_error(a.flat[i], n.flat[i]) for a, n, i in zip(ana, num, picked))


def store_rel_errors(store, loss_fn, names, per_array=6, eps=1e-5, rng=None):
    """Compare tape gradients of ``loss_fn()`` with central differences on
    parameters held in ``store``, perturbing a few entries per array in place.

    Entries with a non-zero analytic gradient are preferred so that sparse
    tables (embeddings) are checked where the loss actually touches them.
    Returns {name: (relative error, max absolute error)} over the checked entries.
    """
    rng = rng or np.random.default_rng(0)
    for name in names:
        store[name].grad = None
    with Tape():
        loss = loss_fn()
    backward(loss)
    out = {}
    for name in names:
        t = store[name]
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        live = np.flatnonzero(grad)
        idx = live if live.size <= per_array else rng.choice(live, per_array, replace=False)
        if idx.size == 0:
            idx = rng.choice(t.data.size, min(2, t.data.size), replace=False)
        num = np.zeros(idx.size)
        for j, k in enumerate(idx):
            orig = t.data.flat[k]
            t.data.flat[k] = orig + eps
            hi = loss_fn().item()
            t.data.flat[k] = orig - eps
            lo = loss_fn().item()
            t.data.flat[k] = orig
            num[j] = (hi - lo) / (2 * eps)
        out[name] = (rel_error(grad.flat[idx], num), float(np.abs(grad.flat[idx] - num).max()))
    for name in names:
        store[name].grad = None
    return out


# --- one small loss per differentiable op --------------------------------------------

RNG = np.random.default_rng(42)
A = RNG.normal(size=(3, 4))
B = RNG.normal(size=(3, 4))
W = RNG.normal(size=(4, 2))
V = RNG.normal(size=5)
COEF34 = RNG.normal(size=(3, 4))

OP_CASES = {
    "add": (lambda a, b: ops.sum(ops.mul(ops.add(a, b), Tensor(COEF34))), [A, B]),
    "add_broadcast": (lambda a, b: ops.sum(ops.tanh(ops.add(a, b))), [A, B[0]]),
    "sub": (lambda a, b: ops.sum(ops.tanh(ops.sub(a, b))), [A, B]),
    "mul": (lambda a, b: ops.sum(ops.mul(a, b)), [A, B]),
    "mul_broadcast": (lambda a, b: ops.sum(ops.tanh(ops.mul(a, b))), [A, B[:, :1]]),
    "neg_scale": (lambda a: ops.sum(ops.tanh(ops.scale(ops.neg(a), 0.7))), [A]),
    "matmul": (lambda a, w: ops.sum(ops.tanh(ops.matmul(a, w))), [A, W]),
    "matmul_vec": (lambda v, w: ops.sum(ops.tanh(ops.matmul(v, w))), [A[0], W]),
    "transpose": (lambda a: ops.sum(ops.mul(ops.transpose(a), Tensor(COEF34.T))), [A]),
    "reshape": (lambda a: ops.sum(ops.tanh(ops.reshape(a, (2, 6)))), [A]),
    "concat": (lambda a, b: ops.sum(ops.tanh(ops.concat([a, b], axis=0))), [A, B]),
    "stack": (lambda a, b: ops.sum(ops.tanh(ops.stack([a, b], axis=1))), [A, B]),
    "index_basic": (lambda a: ops.sum(ops.tanh(ops.index(a, (1, slice(0, 3))))), [A]),
    "index_repeat": (lambda a: ops.sum(ops.tanh(ops.index(a, ([0, 2, 0], [1, 1, 1])))), [A]),
    "slice": (lambda a: ops.sum(ops.tanh(ops.slice(a, 1, 3, axis=1))), [A]),
    "embedding_lookup": (lambda a: ops.sum(ops.tanh(ops.embedding_lookup(a, [[0, 2], [2, 2]]))), [A]),
    "tanh": (lambda v: ops.sum(ops.tanh(v)), [V]),
    "sigmoid": (lambda v: ops.sum(ops.mul(ops.sigmoid(v), Tensor(V))), [V]),
    "exp": (lambda v: ops.sum(ops.exp(v)), [V]),
    "softmax": (lambda a: ops.sum(ops.mul(ops.softmax(a), Tensor(COEF34))), [A]),
    "log_softmax": (lambda a: ops.sum(ops.mul(ops.log_softmax(a), Tensor(COEF34))), [A]),
    "logsumexp": (lambda a: ops.sum(ops.tanh(ops.logsumexp(a, axis=0))), [A]),
    "sum_axis": (lambda a: ops.sum(ops.tanh(ops.sum(a, axis=1))), [A]),
    "mean": (lambda a: ops.sum(ops.tanh(ops.mean(a, axis=0))), [A]),
}


def lstm_case(mask=None, stacked=False):
    rng = np.random.default_rng(7)
    hidden, batch = 3, 2
    lead = (2,) if stacked else ()
    coef = rng.normal(size=lead + (batch, hidden))

    def fn(gx, h, c, w):
        h2, c2 = ops.lstm_cell(gx, h, c, w, mask)
        return ops.sum(ops.mul(h2, Tensor(coef))) + ops.sum(ops.tanh(c2))

    arrays = [rng.normal(size=lead + (batch, 4 * hidden)), rng.normal(size=lead + (batch, hidden)),
              rng.normal(size=lead + (batch, hidden)), rng.normal(size=lead + (hidden, 4 * hidden))]
    return fn, arrays



LSTM_VARIANTS = [(None, False), (np.array([1.0, 0.0]), False),
                 (None, True), (np.array([[1.0, 0.0], [0.0, 1.0]]), True)]
