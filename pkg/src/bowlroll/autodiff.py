"""Reverse-mode automatic differentiation over dense float64 tensors.

A Tensor wraps a numpy array and records, for every op that produced it,
a closure that pushes gradients back to its parents. Calling backward()
on a scalar tensor topologically sorts the recorded graph and runs the
closures in reverse. The op set is deliberately small: 2D convolution,
affine maps, a few activations, elementwise arithmetic, reductions,
reshapes and basic indexing. Everything is double precision.
"""

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True
_FINITE_CHECKS = False


@contextmanager
def no_grad():
    """Disable graph recording inside the block (cheap inference passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def set_finite_checks(enabled):
    """Validate that every forward op produces only finite values."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


class Tensor:
    """Node in the computation graph: float64 data plus backward plumbing."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse pass from this scalar through every recorded parent."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.data.shape}")
        # Iterative post-order walk; rollout graphs are deeper than the
        # interpreter's recursion limit.
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- elementwise arithmetic ------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        out = _make(self.data + other.data, (self, other))
        if out._parents:
            def back(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g, other.data.shape))
            out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _make(-self.data, (self,))
        if out._parents:
            def back(g):
                self._accumulate(-g)
            out._backward = back
        return out

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        out = _make(self.data * other.data, (self, other))
        if out._parents:
            def back(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g * self.data, other.data.shape))
            out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        out = _make(self.data / other.data, (self, other))
        if out._parents:
            def back(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g / other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data),
                                                   other.data.shape))
            out._backward = back
        return out

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    # -- activations and pointwise transcendentals -----------------------

    def relu(self):
        out = _make(np.maximum(self.data, 0.0), (self,))
        if out._parents:
            mask = self.data > 0
            def back(g):
                self._accumulate(g * mask)
            out._backward = back
        return out

    def sigmoid(self):
        s = _stable_sigmoid(self.data)
        out = _make(s, (self,))
        if out._parents:
            def back(g):
                self._accumulate(g * s * (1.0 - s))
            out._backward = back
        return out

    def scaled_sigmoid(self, lam, alpha):
        """lam / (1 + exp(-z)) + alpha, range (alpha, lam + alpha).

        Strictness of the bounds holds up to float64 saturation of the
        inner sigmoid (|z| beyond roughly 36).
        """
        if lam <= 0:
            raise ValueError("scaled_sigmoid requires lam > 0")
        s = _stable_sigmoid(self.data)
        out = _make(lam * s + alpha, (self,))
        if out._parents:
            def back(g):
                self._accumulate(g * lam * s * (1.0 - s))
            out._backward = back
        return out

    def exp(self):
        e = np.exp(self.data)
        out = _make(e, (self,))
        if out._parents:
            def back(g):
                self._accumulate(g * e)
            out._backward = back
        return out

    def log(self):
        out = _make(np.log(self.data), (self,))
        if out._parents:
            def back(g):
                self._accumulate(g / self.data)
            out._backward = back
        return out

    def sin(self):
        out = _make(np.sin(self.data), (self,))
        if out._parents:
            c = np.cos(self.data)
            def back(g):
                self._accumulate(g * c)
            out._backward = back
        return out

    def cos(self):
        out = _make(np.cos(self.data), (self,))
        if out._parents:
            s = np.sin(self.data)
            def back(g):
                self._accumulate(-g * s)
            out._backward = back
        return out

    # -- shape ops and reductions ----------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.data.shape
        out = _make(self.data.reshape(shape), (self,))
        if out._parents:
            def back(g):
                self._accumulate(g.reshape(src))
            out._backward = back
        return out

    def flatten_batch(self):
        """Collapse all but the leading axis; 1D/2D input passes through flat."""
        if self.data.ndim <= 1:
            return self.reshape(self.data.size)
        return self.reshape(self.data.shape[0], -1)

    def sum(self, axis=None):
        out = _make(self.data.sum(axis=axis), (self,))
        if out._parents:
            src = self.data.shape
            def back(g):
                if axis is None:
                    self._accumulate(np.broadcast_to(g, src).astype(np.float64))
                else:
                    self._accumulate(np.broadcast_to(np.expand_dims(g, axis), src))
            out._backward = back
        return out

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def __getitem__(self, idx):
        out = _make(self.data[idx], (self,))
        if out._parents:
            src = self.data.shape
            def back(g):
                full = np.zeros(src, dtype=np.float64)
                np.add.at(full, idx, g)
                self._accumulate(full)
            out._backward = back
        return out

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents):
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by a forward op")
    out = Tensor(data)
    if _GRAD_ENABLED:
        tracked = tuple(p for p in parents if p.requires_grad or p._parents)
        if tracked:
            out._parents = tracked
            out.requires_grad = True
    return out


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to the parent's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def matmul(a, b):
    """a @ b for 2D weights; the left side may be a single flat vector."""
    a, b = _as_tensor(a), _as_tensor(b)
    if b.data.ndim != 2:
        raise ValueError(f"matmul expects a 2D right operand, got {b.data.shape}")
    if a.data.ndim not in (1, 2) or a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = _make(a.data @ b.data, (a, b))
    if out._parents:
        def back(g):
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                if a.data.ndim == 1:
                    b._accumulate(np.outer(a.data, g))
                else:
                    b._accumulate(a.data.T @ g)
        out._backward = back
    return out


def affine(x, weight, bias):
    """x @ weight + bias for a flat input (n,) or a batch (N, n)."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if weight.data.ndim != 2 or bias.data.shape != (weight.data.shape[1],):
        raise ValueError(f"affine expects weight (n, m) and bias (m,), got "
                         f"{weight.data.shape} and {bias.data.shape}")
    return matmul(x, weight) + bias


def conv2d(x, kernels, stride=1, padding=0):
    """Channels-last 2D convolution (really cross-correlation, as usual).

    x is (H, W, Cin) or batched (N, H, W, Cin); kernels are
    (k, k, Cin, Cout) with k odd. Output spatial size is
    (H + 2*padding - k) // stride + 1 per axis.
    """
    x, kernels = _as_tensor(x), _as_tensor(kernels)
    batched = x.data.ndim == 4
    if x.data.ndim not in (3, 4):
        raise ValueError(f"conv2d input must be (H, W, Cin) or (N, H, W, Cin), got {x.data.shape}")
    kh, kw, cin_k, cout = kernels.data.shape
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"conv2d kernels must be square with odd size, got {kernels.data.shape}")
    cin = x.data.shape[-1]
    if cin != cin_k:
        raise ValueError(f"conv2d channel mismatch: input has {cin} channels, "
                         f"kernels expect {cin_k}")
    xd = x.data if batched else x.data[None]
    n, h, w, _ = xd.shape
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError("conv2d input smaller than kernel after padding")

    xp = np.pad(xd, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]                       # (N, Ho, Wo, Cin, kh, kw)
    ho, wo = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
    cols = cols.reshape(n, ho, wo, kh * kw * cin)
    kflat = kernels.data.reshape(kh * kw * cin, cout)
    res = cols @ kflat
    if not batched:
        res = res[0]
    out = _make(res, (x, kernels))
    if out._parents:
        def back(g):
            g4 = g if batched else g[None]
            if kernels.requires_grad:
                gk = cols.reshape(-1, kh * kw * cin).T @ g4.reshape(-1, cout)
                kernels._accumulate(gk.reshape(kh, kw, cin, cout))
            if x.requires_grad:
                gcols = (g4 @ kflat.T).reshape(n, ho, wo, kh, kw, cin)
                gxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += \
                            gcols[:, :, :, i, j, :]
                gx = gxp[:, padding:padding + h, padding:padding + w, :]
                x._accumulate(gx if batched else gx[0])
        out._backward = back
    return out


class ParameterSet:
    """Named trainable tensors with deterministic iteration order."""

    def __init__(self):
        self._params = {}

    def add(self, name, data):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def zero_grads(self):
        for p in self._params.values():
            p.zero_grad()

    def copy_data(self):
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_data(self, blobs):
        for name, p in self._params.items():
            src = blobs[name]
            if src.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name!r}: "
                                 f"{src.shape} vs {p.data.shape}")
            p.data = src.astype(np.float64).copy()


def backward_pass(loss, params):
    """Gradients of a scalar loss for every tensor in a ParameterSet."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("backward_pass requires a scalar Tensor loss")
    params.zero_grads()
    loss.backward()
    return {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
            for name, p in params.items()}


def finite_difference_check(f, params, h=1e-5):
    """Max relative error between autodiff and central differences.

    f is a callable of no arguments that evaluates the scalar loss from the
    current parameter values and returns a Tensor. The probe point should be
    away from relu kinks; the caller nudges if needed. Error per coordinate
    is |g_ad - g_fd| / max(1, |g_fd|).
    """
    if h <= 0:
        raise ValueError("finite_difference_check requires h > 0")
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise FloatingPointError("loss is not finite at the probe point")
    grads = backward_pass(loss, params)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        g_ad = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(f().data)
            flat[i] = orig - h
            lo = float(f().data)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise FloatingPointError("loss is not finite at a perturbed point")
            g_fd = (hi - lo) / (2.0 * h)
            err = abs(g_ad[i] - g_fd) / max(1.0, abs(g_fd))
            worst = max(worst, err)
    return worst
