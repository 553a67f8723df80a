"""Dense float64 tensors with reverse-mode automatic differentiation.

The operation set is deliberately small: affine, the pointwise family
(sigmoid/tanh/add/sub/mul), row softmax (optionally masked), column concat,
embedding row lookup, full sum, scale-by-constant, log, a row-wise element
pick and a row-wise scatter-add. GRUs, attention, the feed-forward
classifiers and the softmax losses all compose from these, and every rule is
individually checkable with `finite_diff_check`.

Ops executed while a `Tape` is active are recorded in execution order (which
is a topological order by construction); `Tape.backward` replays the records
exactly once, in reverse, accumulating gradients additively. With no active
tape the same functions run forward-only, which is what inference uses.
"""

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class NumericError(RuntimeError):
    """An operation produced a non-finite value."""


class Tensor:
    """A dense float64 array plus an optional same-shape gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, grad={self.requires_grad})"


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def constant(data, name=None):
    return Tensor(data, requires_grad=False, name=name)


class TapeEntry:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of executed operations (the autodiff graph)."""

    def __init__(self):
        self.entries = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss):
        """Accumulate d(loss)/d(param) into every recorded tensor's grad."""
        if loss.data.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
        if not loss.requires_grad:
            raise ValueError("loss does not depend on any tracked parameter")
        loss.grad = np.ones_like(loss.data)
        for entry in reversed(self.entries):
            if entry.output.grad is not None:
                entry.backward(entry.output.grad)


_ACTIVE_TAPE = None


def active_tape():
    return _ACTIVE_TAPE


def _finish(out_data, inputs, backward_fn, name=None):
    """Wrap an op result; record on the active tape when grads are needed."""
    if not np.all(np.isfinite(out_data)):
        raise NumericError(f"non-finite value in op {name or backward_fn.__name__}")
    needs = _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs, name=name)
    if needs:
        _ACTIVE_TAPE.entries.append(TapeEntry(inputs, out, backward_fn))
    return out


def _check2d(t, label):
    if t.data.ndim != 2:
        raise ShapeError(f"{label} must be 2-d, got shape {t.data.shape}")


def affine(x, w, b):
    """out[i,j] = sum_k x[i,k] w[k,j] + b[j]."""
    _check2d(x, "x")
    _check2d(w, "w")
    if x.data.shape[1] != w.data.shape[0] or b.data.shape != (w.data.shape[1],):
        raise ShapeError(
            f"affine shapes do not conform: x{x.data.shape} w{w.data.shape} b{b.data.shape}"
        )
    out_data = x.data @ w.data + b.data

    def backward(g):
        if x.grad is not None:
            x.grad += g @ w.data.T
        if w.grad is not None:
            w.grad += x.data.T @ g
        if b.grad is not None:
            b.grad += g.sum(axis=0)

    return _finish(out_data, (x, w, b), backward, "affine")


def matmul(x, w):
    _check2d(x, "x")
    _check2d(w, "w")
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"matmul shapes do not conform: {x.data.shape} @ {w.data.shape}")
    out_data = x.data @ w.data

    def backward(g):
        if x.grad is not None:
            x.grad += g @ w.data.T
        if w.grad is not None:
            w.grad += x.data.T @ g

    return _finish(out_data, (x, w), backward, "matmul")


def sigmoid(x):
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        if x.grad is not None:
            x.grad += g * out_data * (1.0 - out_data)

    return _finish(out_data, (x,), backward, "sigmoid")


def tanh(x):
    out_data = np.tanh(x.data)

    def backward(g):
        if x.grad is not None:
            x.grad += g * (1.0 - out_data * out_data)

    return _finish(out_data, (x,), backward, "tanh")


def _binary_shapes(x, y, op):
    xs, ys = x.data.shape, y.data.shape
    if xs == ys:
        return None  # no broadcast
    # column broadcast: (n,1) against (n,k), either side
    if len(xs) == 2 and len(ys) == 2 and xs[0] == ys[0]:
        if xs[1] == 1 or ys[1] == 1:
            return "col"
    raise ShapeError(f"{op} shapes do not conform: {xs} vs {ys}")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return g.sum(axis=1, keepdims=True)


def add(x, y):
    mode = _binary_shapes(x, y, "add")
    out_data = x.data + y.data

    def backward(g):
        if x.grad is not None:
            x.grad += _unbroadcast(g, x.data.shape) if mode else g
        if y.grad is not None:
            y.grad += _unbroadcast(g, y.data.shape) if mode else g

    return _finish(out_data, (x, y), backward, "add")


def sub(x, y):
    mode = _binary_shapes(x, y, "sub")
    out_data = x.data - y.data

    def backward(g):
        if x.grad is not None:
            x.grad += _unbroadcast(g, x.data.shape) if mode else g
        if y.grad is not None:
            y.grad -= _unbroadcast(g, y.data.shape) if mode else g

    return _finish(out_data, (x, y), backward, "sub")


def mul(x, y):
    mode = _binary_shapes(x, y, "mul")
    out_data = x.data * y.data

    def backward(g):
        if x.grad is not None:
            gx = g * y.data
            x.grad += _unbroadcast(gx, x.data.shape) if mode else gx
        if y.grad is not None:
            gy = g * x.data
            y.grad += _unbroadcast(gy, y.data.shape) if mode else gy

    return _finish(out_data, (x, y), backward, "mul")


_POINTWISE = {"sigmoid": sigmoid, "tanh": tanh, "add": add, "sub": sub, "mul": mul}


def pointwise(kind, *args):
    """Dispatch to the named elementwise op: sigmoid|tanh|mul|add|sub."""
    try:
        fn = _POINTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown pointwise kind {kind!r}") from None
    return fn(*args)


def scale(x, c):
    """Multiply by a python constant (not differentiated w.r.t. c)."""
    c = float(c)
    out_data = x.data * c

    def backward(g):
        if x.grad is not None:
            x.grad += g * c

    return _finish(out_data, (x,), backward, "scale")


def log(x):
    if np.any(x.data <= 0.0):
        raise NumericError("log of non-positive value")
    out_data = np.log(x.data)

    def backward(g):
        if x.grad is not None:
            x.grad += g / x.data

    return _finish(out_data, (x,), backward, "log")


def softmax_rows(x, mask=None):
    """Row-wise softmax with max subtraction.

    `mask` is an optional constant 0/1 array of x's shape; masked entries get
    probability exactly 0 (and zero gradient). Fully masked rows come out as
    all zeros rather than NaN, so callers can treat them as "no distribution".
    """
    _check2d(x, "x")
    if mask is None:
        shifted = x.data - x.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        denom = e.sum(axis=1, keepdims=True)
        out_data = e / denom
    else:
        m = np.asarray(mask, dtype=np.float64)
        if m.shape != x.data.shape:
            raise ShapeError(f"mask shape {m.shape} != input shape {x.data.shape}")
        neg = np.where(m > 0, x.data, -np.inf)
        rowmax = neg.max(axis=1, keepdims=True)
        rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)  # fully masked rows
        e = np.exp(x.data - rowmax) * m
        denom = e.sum(axis=1, keepdims=True)
        denom = np.where(denom > 0, denom, 1.0)
        out_data = e / denom

    def backward(g):
        if x.grad is not None:
            inner = (g * out_data).sum(axis=1, keepdims=True)
            x.grad += out_data * (g - inner)

    return _finish(out_data, (x,), backward, "softmax_rows")


def concat_cols(parts):
    """Concatenate 2-d tensors along columns."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat of zero tensors")
    n = parts[0].data.shape[0]
    for p in parts:
        _check2d(p, "part")
        if p.data.shape[0] != n:
            raise ShapeError("concat parts disagree on row count")
    widths = [p.data.shape[1] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.grad is not None:
                p.grad += g[:, lo:hi]

    return _finish(out_data, tuple(parts), backward, "concat_cols")


def lookup_rows(table, ids):
    """Select rows of `table` by integer index (embedding lookup)."""
    _check2d(table, "table")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("ids must be 1-d")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeError(f"id out of range [0, {table.data.shape[0]})")
    out_data = table.data[idx]

    def backward(g):
        if table.grad is not None:
            np.add.at(table.grad, idx, g)

    return _finish(out_data, (table,), backward, "lookup_rows")


def sum_all(x):
    """Sum every element into a scalar."""
    out_data = np.asarray(x.data.sum())

    def backward(g):
        if x.grad is not None:
            x.grad += g  # scalar broadcast

    return _finish(out_data, (x,), backward, "sum_all")


def pick_cols(x, ids):
    """out[i, 0] = x[i, ids[i]]."""
    _check2d(x, "x")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.shape != (x.data.shape[0],):
        raise ShapeError("ids must have one entry per row")
    rows = np.arange(x.data.shape[0])
    out_data = x.data[rows, idx][:, None]

    def backward(g):
        if x.grad is not None:
            np.add.at(x.grad, (rows, idx), g[:, 0])

    return _finish(out_data, (x,), backward, "pick_cols")


def scatter_cols(vals, ids, width):
    """out[i, ids[i,k]] += vals[i,k]; colliding ids accumulate."""
    _check2d(vals, "vals")
    idx = np.asarray(ids, dtype=np.int64)
    if idx.shape != vals.data.shape:
        raise ShapeError("ids shape must match vals shape")
    if idx.size and (idx.min() < 0 or idx.max() >= width):
        raise ShapeError(f"scatter id out of range [0, {width})")
    n = vals.data.shape[0]
    rows = np.repeat(np.arange(n), idx.shape[1]).reshape(idx.shape)
    out_data = np.zeros((n, width), dtype=np.float64)
    np.add.at(out_data, (rows, idx), vals.data)

    def backward(g):
        if vals.grad is not None:
            vals.grad += g[rows, idx]

    return _finish(out_data, (vals,), backward, "scatter_cols")


class GradCheckReport:
    """Outcome of a finite-difference comparison against the tape gradients."""

    def __init__(self, tol):
        self.tol = tol
        self.max_rel_err = 0.0
        self.worst = None  # (param name, flat index, g_ad, g_fd)
        self.n_checked = 0

    @property
    def passed(self):
        return self.max_rel_err <= self.tol

    def record(self, name, index, g_ad, g_fd):
        rel = abs(g_ad - g_fd) / max(abs(g_ad), abs(g_fd), 1e-8)
        self.n_checked += 1
        if rel >= self.max_rel_err:
            self.max_rel_err = rel
            self.worst = (name, index, g_ad, g_fd)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        msg = (
            f"gradcheck {status}: {self.n_checked} coords, "
            f"max rel err {self.max_rel_err:.3e} (tol {self.tol:.1e})"
        )
        if self.worst is not None:
            name, idx, g_ad, g_fd = self.worst
            msg += f", worst {name}[{idx}] ad={g_ad:.6e} fd={g_fd:.6e}"
        return msg


def finite_diff_check(f, params, h=1e-5, tol=1e-4, max_coords=None, rng=None):
    """Compare tape gradients of the scalar `f()` against central differences.

    `f` must rebuild its computation from the current `.data` of `params`
    (a dict name -> Tensor) on every call. With `max_coords` set, at most that
    many coordinates per parameter are probed, drawn by `rng.randint`.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}

    report = GradCheckReport(tol)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords is None or n <= max_coords:
            coords = range(n)
        else:
            coords = sorted({rng.randint(n) for _ in range(max_coords)})
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            hi = float(f().data)
            flat[i] = orig - h
            lo = float(f().data)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError(f"non-finite evaluation while probing {name}[{i}]")
            g_fd = (hi - lo) / (2.0 * h)
            report.record(name, i, analytic[name].reshape(-1)[i], g_fd)
    return report
