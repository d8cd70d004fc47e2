"""Minimal dense-tensor reverse-mode autodiff on numpy, plus Adam.

Everything is float64. The tape is define-by-run: each op wires a backward
closure into the output tensor, and ``backward(loss)`` replays the graph in
reverse topological order. Tensors and the graphs they form are meant to be
confined to a single thread; parameter values may be shared read-only.
"""

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self.grad = None
        self._backward = None
        self._prev = ()

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; the real work is in the module-level ops
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    """Wrap an op result; record the backward closure only when needed."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward_fn
    return out


# ---------------------------------------------------------------- core ops

def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _make(out_data, (a, b), _bwd)


def add(a, b):
    """Elementwise add; also supports a row-broadcast bias (1,d) or (d,)."""
    bias_like = b.data.shape != a.data.shape
    if bias_like and b.data.reshape(-1).shape[0] != a.data.shape[-1]:
        raise ValueError(f"add shape mismatch: {a.data.shape} + {b.data.shape}")
    out_data = a.data + b.data

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            gb = g.sum(axis=0).reshape(b.data.shape) if bias_like else g
            b.accumulate_grad(gb)

    return _make(out_data, (a, b), _bwd)


def sub(a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch: {a.data.shape} - {b.data.shape}")
    out_data = a.data - b.data

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    return _make(out_data, (a, b), _bwd)


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch: {a.data.shape} * {b.data.shape}")
    out_data = a.data * b.data

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return _make(out_data, (a, b), _bwd)


def scale(a, c):
    c = float(c)
    out_data = a.data * c

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * c)

    return _make(out_data, (a,), _bwd)


def tanh(a):
    out_data = np.tanh(a.data)

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), _bwd)


def relu(a):
    out_data = np.maximum(a.data, 0.0)

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0.0))

    return _make(out_data, (a,), _bwd)


def identity(a):
    return a


ACTIVATIONS = {"tanh": tanh, "relu": relu, "identity": identity}


def elementwise(a, f):
    """Apply a named activation in {tanh, relu, identity}."""
    try:
        return ACTIVATIONS[f](a)
    except KeyError:
        raise ValueError(f"unknown activation {f!r}") from None


def concat_cols(a, b):
    if a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"concat_cols row mismatch: {a.data.shape} | {b.data.shape}")
    out_data = np.hstack([a.data, b.data])
    split = a.data.shape[1]

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g[:, :split])
        if b.requires_grad:
            b.accumulate_grad(g[:, split:])

    return _make(out_data, (a, b), _bwd)


def slice_rows(a, idx):
    idx = np.asarray(idx)
    out_data = a.data[idx]

    def _bwd(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            np.add.at(ga, idx, g)
            a.accumulate_grad(ga)

    return _make(out_data, (a,), _bwd)


def dropout(a, p, training, rng):
    """Inverted dropout: scales survivors at train time, identity at eval."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0,1), got {p}")
    if not training or p == 0.0:
        return a
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    out_data = a.data * mask

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * mask)

    return _make(out_data, (a,), _bwd)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(a):
    s = _softmax(a.data)

    def _bwd(g):
        if a.requires_grad:
            inner = (g * s).sum(axis=1, keepdims=True)
            a.accumulate_grad(s * (g - inner))

    return _make(s, (a,), _bwd)


def log_softmax_rows(a):
    z = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out_data = z - lse

    def _bwd(g):
        if a.requires_grad:
            s = np.exp(out_data)
            a.accumulate_grad(g - s * g.sum(axis=1, keepdims=True))

    return _make(out_data, (a,), _bwd)


def masked_cross_entropy(logits, labels, mask):
    """Mean negative log-likelihood over the rows selected by `mask`."""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    rows = np.nonzero(mask)[0]
    if rows.size == 0:
        raise ValueError("masked_cross_entropy: mask selects no rows")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    nll = -logp[rows, labels[rows]].mean()

    def _bwd(g):
        if logits.requires_grad:
            gl = np.zeros_like(logits.data)
            s = np.exp(logp[rows])
            s[np.arange(rows.size), labels[rows]] -= 1.0
            gl[rows] = s / rows.size
            logits.accumulate_grad(float(g) * gl)

    return _make(nll, (logits,), _bwd)


def tensor_sum(a):
    out_data = a.data.sum()

    def _bwd(g):
        if a.requires_grad:
            a.accumulate_grad(np.full_like(a.data, float(g)))

    return _make(out_data, (a,), _bwd)


def backward(loss):
    """Reverse pass from a scalar loss; accumulates into leaf .grad fields."""
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in seen:
                stack.append((p, False))
    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------- sparse matrix

class SparseMatrix:
    """Constant (never trained) sparse matrix in CSR form.

    Backed by scipy.sparse; duplicate (row, col) entries are rejected because
    a silent sum would hide loader bugs.
    """

    def __init__(self, rows, cols, vals, shape):
        from scipy import sparse

        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("rows, cols, vals must have identical lengths")
        if rows.size:
            if rows.min() < 0 or rows.max() >= shape[0] or cols.min() < 0 or cols.max() >= shape[1]:
                raise ValueError("sparse index out of range")
            keys = rows * shape[1] + cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (row, col) entries in sparse matrix")
        self.shape = (int(shape[0]), int(shape[1]))
        self._csr = sparse.csr_matrix((vals, (rows, cols)), shape=self.shape)
        self._csr_t = self._csr.T.tocsr()

    @property
    def nnz(self):
        return int(self._csr.nnz)

    def to_dense(self):
        return np.asarray(self._csr.todense())

    def matmul(self, h):
        """A @ h for a Tensor or plain ndarray (possibly batched ...xNxD)."""
        if isinstance(h, Tensor):
            return spmm(self, h)
        h = np.asarray(h, dtype=np.float64)
        if h.shape[-2] != self.shape[1]:
            raise ValueError(f"spmm shape mismatch: {self.shape} x {h.shape}")
        if h.ndim == 2:
            return self._csr @ h
        flat = np.swapaxes(h, 0, -2).reshape(self.shape[1], -1)
        out = self._csr @ flat
        return np.swapaxes(out.reshape((self.shape[0],) + h.shape[:-2] + (h.shape[-1],)), 0, -2)


def spmm(adj, h):
    """Sparse-dense product A @ H; gradient flows through H only."""
    if h.data.ndim != 2 or h.data.shape[0] != adj.shape[1]:
        raise ValueError(f"spmm shape mismatch: {adj.shape} x {h.data.shape}")
    out_data = adj._csr @ h.data

    def _bwd(g):
        if h.requires_grad:
            h.accumulate_grad(adj._csr_t @ g)

    return _make(out_data, (h,), _bwd)


# ------------------------------------------------------------------- adam

class Adam:
    """Adam with bias correction over a fixed list of parameter tensors."""

    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise RuntimeError("adam step with a missing gradient")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
