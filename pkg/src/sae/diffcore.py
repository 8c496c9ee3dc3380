"""Reverse-mode automatic differentiation on numpy arrays.

Covers exactly the primitives the model heads need: matrix multiply, affine
layers, elementwise activations, stable softmax / log-softmax, cross-entropy
and binary cross-entropy (logit-space), bilinear forms, slicing, concat, and
masked reductions.  Single precision is the training default; tests run the
same graph in double precision for finite-difference verification.

A graph is built per example and discarded after ``backward``; ``Parameter``
objects persist across graphs and accumulate gradients until the optimizer
consumes them.
"""

from __future__ import annotations

import hashlib
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised at graph construction time when operand shapes are incompatible."""


class GradientError(RuntimeError):
    """Raised when a non-finite gradient reaches the optimizer."""


def seeded_rng(root_seed: int, name: str) -> np.random.Generator:
    """Deterministic named sub-stream of a root seed (stable across processes)."""
    digest = hashlib.sha256(f"{root_seed}:{name}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _name_of(t: "Tensor") -> str:
    return t.name if t.name is not None else f"tensor{t.values.shape}"


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "name", "_parents")

    def __init__(
        self,
        values: np.ndarray,
        parents: Sequence[tuple["Tensor", Callable[[np.ndarray], np.ndarray]]] = (),
        requires_grad: bool = False,
        name: str | None = None,
    ):
        self.values = np.asarray(values)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p, _ in parents)
        self.name = name
        self._parents = tuple(parents) if self.requires_grad else ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(()))

    def backward(self, seed: float = 1.0) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``requires_grad`` leaf.

        ``seed`` scales the output adjoint; passing 1/batch_size averages
        per-example losses without rescaling the graph.
        """
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                stack.append((parent, False))

        grads: dict[int, np.ndarray] = {
            id(self): np.full(self.values.shape, seed, dtype=self.values.dtype)
        }
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:  # leaf
                if node.grad is None:
                    node.grad = np.zeros_like(node.values)
                node.grad += g
                continue
            for parent, fn in node._parents:
                if not parent.requires_grad:
                    continue
                contrib = fn(g)
                acc = grads.get(id(parent))
                if acc is None:
                    grads[id(parent)] = contrib.astype(parent.values.dtype, copy=True)
                else:
                    acc += contrib

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other, like=self), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(as_tensor(other, like=self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.values.shape}, grad={self.requires_grad})"


class Parameter(Tensor):
    """A named trainable leaf; gradients accumulate until the optimizer steps."""

    def __init__(self, values: np.ndarray, name: str):
        super().__init__(np.array(values), requires_grad=True, name=name)

    def zero_grad(self) -> None:
        self.grad = None


def constant(values, dtype=None, name: str | None = None) -> Tensor:
    arr = np.asarray(values, dtype=dtype)
    return Tensor(arr, name=name)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.values.dtype if like is not None else None
    return constant(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- arithmetic ----------------------------------------------------------
def add(a: Tensor, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b, like=a)
    try:
        out = a.values + b.values
    except ValueError as e:
        raise ShapeError(f"add: {_name_of(a)}{a.shape} vs {_name_of(b)}{b.shape}") from e
    return Tensor(
        out,
        parents=[
            (a, lambda g: _unbroadcast(g, a.values.shape)),
            (b, lambda g: _unbroadcast(g, b.values.shape)),
        ],
    )


def sub(a: Tensor, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b, like=a)
    try:
        out = a.values - b.values
    except ValueError as e:
        raise ShapeError(f"sub: {_name_of(a)}{a.shape} vs {_name_of(b)}{b.shape}") from e
    return Tensor(
        out,
        parents=[
            (a, lambda g: _unbroadcast(g, a.values.shape)),
            (b, lambda g: _unbroadcast(-g, b.values.shape)),
        ],
    )


def mul(a: Tensor, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b, like=a)
    try:
        out = a.values * b.values
    except ValueError as e:
        raise ShapeError(f"mul: {_name_of(a)}{a.shape} vs {_name_of(b)}{b.shape}") from e
    return Tensor(
        out,
        parents=[
            (a, lambda g: _unbroadcast(g * b.values, a.values.shape)),
            (b, lambda g: _unbroadcast(g * a.values, b.values.shape)),
        ],
    )


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.values, parents=[(a, lambda g: -g)])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {_name_of(a)}{a.shape} @ {_name_of(b)}{b.shape}")
    return Tensor(
        a.values @ b.values,
        parents=[
            (a, lambda g: g @ b.values.T),
            (b, lambda g: a.values.T @ g),
        ],
    )


def transpose(a: Tensor) -> Tensor:
    return Tensor(a.values.T, parents=[(a, lambda g: g.T)])


def getitem(a: Tensor, key) -> Tensor:
    out = a.values[key]

    def back(g: np.ndarray) -> np.ndarray:
        full = np.zeros_like(a.values)
        full[key] += g
        return full

    return Tensor(out, parents=[(a, back)])


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.values for t in tensors], axis=axis)
    parents = []
    offset = 0
    for t in tensors:
        n = t.values.shape[axis]
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(offset, offset + n)
        parents.append((t, lambda g, sl=tuple(sl): g[sl]))
        offset += n
    return Tensor(out, parents=parents)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.values.shape
    return Tensor(a.values.reshape(shape), parents=[(a, lambda g: g.reshape(old))])


# -- elementwise nonlinearities ------------------------------------------
def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)
    return Tensor(out, parents=[(a, lambda g: g * (1.0 - out * out))])


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0
    return Tensor(a.values * mask, parents=[(a, lambda g: g * mask)])


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.values)
    return Tensor(out, parents=[(a, lambda g: g * out * (1.0 - out))])


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)
    return Tensor(out, parents=[(a, lambda g: g * out)])


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.values), parents=[(a, lambda g: g / a.values)])


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0.0, a.values)
    return Tensor(out, parents=[(a, lambda g: g * _sigmoid(a.values))])


# -- reductions and normalizers ------------------------------------------
def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def back(g: np.ndarray) -> np.ndarray:
        if axis is None:
            return np.broadcast_to(g, a.values.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.values.shape).copy()

    return Tensor(out, parents=[(a, back)])


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.values.size if axis is None else a.values.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g: np.ndarray) -> np.ndarray:
        return (g - (g * out).sum(axis=axis, keepdims=True)) * out

    return Tensor(out, parents=[(a, back)])


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    m = a.values.max(axis=axis, keepdims=True)
    shifted = a.values - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)

    def back(g: np.ndarray) -> np.ndarray:
        return g - sm * g.sum(axis=axis, keepdims=True)

    return Tensor(out, parents=[(a, back)])


# -- loss helpers ---------------------------------------------------------
def cross_entropy_with_logits(logits: Tensor, target: int) -> Tensor:
    """CE of a single target index against 1-D logits."""
    if logits.values.ndim != 1:
        raise ShapeError(f"cross_entropy expects 1-D logits, got {logits.shape}")
    if not 0 <= target < logits.values.shape[0]:
        raise ValueError(f"target {target} out of range [0, {logits.values.shape[0]})")
    return neg(getitem(log_softmax(logits, axis=0), target))


def bce_with_logits(logits: Tensor, targets, mask=None) -> Tensor:
    """Mean binary cross-entropy in logit space: softplus(z) - t*z.

    ``targets`` (and the optional ``mask``) are constants with the same shape
    as ``logits``; with a mask the mean runs over the unmasked entries only.
    """
    t = np.asarray(targets, dtype=logits.values.dtype)
    terms = sub(softplus(logits), mul(logits, constant(t)))
    if mask is None:
        return tmean(terms)
    m = np.asarray(mask, dtype=logits.values.dtype)
    total = float(m.sum())
    if total == 0:
        raise ValueError("bce_with_logits: empty mask")
    return tsum(mul(terms, constant(m))) * (1.0 / total)


def bce_terms_from_probs(probs: np.ndarray, targets: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Reference numpy BCE terms -t*ln(p) - (1-t)*ln(1-p), with clipping."""
    p = np.clip(np.asarray(probs, dtype=np.float64), eps, 1.0 - eps)
    t = np.asarray(targets, dtype=np.float64)
    return -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))


# -- layers ---------------------------------------------------------------
def glorot(rng: np.random.Generator, shape: tuple[int, int], dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Linear:
    def __init__(self, d_in: int, d_out: int, name: str, rng: np.random.Generator, dtype=np.float32):
        self.W = Parameter(glorot(rng, (d_in, d_out), dtype), name=f"{name}.W")
        self.b = Parameter(np.zeros((1, d_out), dtype=dtype), name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.W), self.b)

    def parameters(self) -> list[Parameter]:
        return [self.W, self.b]


_ACTIVATIONS = {"tanh": tanh, "relu": relu}


class MLP2:
    """Two-layer perceptron: linear, activation, linear."""

    def __init__(
        self,
        d_in: int,
        d_hidden: int,
        d_out: int,
        name: str,
        rng: np.random.Generator,
        act: str = "tanh",
        dtype=np.float32,
    ):
        self.l1 = Linear(d_in, d_hidden, f"{name}.l1", rng, dtype)
        self.l2 = Linear(d_hidden, d_out, f"{name}.l2", rng, dtype)
        self.act = _ACTIVATIONS[act]

    def __call__(self, x: Tensor) -> Tensor:
        return self.l2(self.act(self.l1(x)))

    def parameters(self) -> list[Parameter]:
        return self.l1.parameters() + self.l2.parameters()


# -- optimizer ------------------------------------------------------------
class Adam:
    """Adaptive-moment optimizer with bias correction.

    Defaults: lr 1e-3, betas (0.9, 0.999), eps 1e-8.  Gradients are zeroed
    after a step; parameters without accumulated gradients are skipped.
    """

    def __init__(
        self,
        params: Iterable[Parameter],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m = {p.name: np.zeros_like(p.values) for p in self.params}
        self._v = {p.name: np.zeros_like(p.values) for p in self.params}

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise GradientError(f"non-finite gradient for parameter {p.name!r}")
            m = self._m[p.name]
            v = self._v[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.values -= self.lr * update
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# -- gradient verification -------------------------------------------------
def finite_difference_check(
    build: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    eps: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-7,
) -> float:
    """Compare analytic gradients of a scalar ``build()`` against central
    finite differences over every coordinate of every leaf.

    Returns the worst violation ratio |analytic - numeric| / (atol + rtol *
    max(|analytic|, |numeric|)); values <= 1 pass.
    """
    for leaf in leaves:
        leaf.grad = None
    out = build()
    if out.values.size != 1:
        raise ShapeError(f"finite_difference_check needs a scalar output, got {out.shape}")
    out.backward()
    analytic = [np.zeros_like(l.values) if l.grad is None else l.grad.copy() for l in leaves]

    worst = 0.0
    for leaf, a_grad in zip(leaves, analytic):
        flat = leaf.values.reshape(-1)
        a_flat = a_grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(build().values)
            flat[i] = orig - eps
            f_minus = float(build().values)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = atol + rtol * max(abs(a_flat[i]), abs(numeric))
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    for leaf in leaves:
        leaf.grad = None
    return worst


def _leaf(rng: np.random.Generator, shape, name: str, scale: float = 1.0) -> Parameter:
    return Parameter((rng.standard_normal(shape) * scale).astype(np.float64), name=name)


def gradcheck_suite(seed: int = 0, n_seeds: int = 20) -> list[tuple[str, float, bool]]:
    """Finite-difference check of every primitive at randomized points.

    Runs each case under ``n_seeds`` independent seeds in double precision
    and reports (name, worst violation ratio, passed).
    """
    results: list[tuple[str, float, bool]] = []

    def run(name: str, factory):
        worst = 0.0
        for s in range(n_seeds):
            rng = seeded_rng(seed, f"gradcheck:{name}:{s}")
            build, leaves = factory(rng)
            worst = max(worst, finite_difference_check(build, leaves))
        results.append((name, worst, worst <= 1.0))

    def f_add(rng):
        a = _leaf(rng, (3, 1), "a")
        b = _leaf(rng, (1, 4), "b")
        return (lambda: tsum(mul(add(a, b), add(a, b)))), [a, b]

    def f_sub_mul(rng):
        a = _leaf(rng, (3, 4), "a")
        b = _leaf(rng, (3, 4), "b")
        return (lambda: tsum(mul(sub(a, b), a))), [a, b]

    def f_neg(rng):
        a = _leaf(rng, (5,), "a")
        return (lambda: tsum(mul(neg(a), a))), [a]

    def f_matmul(rng):
        a = _leaf(rng, (3, 4), "a")
        b = _leaf(rng, (4, 2), "b")
        return (lambda: tsum(matmul(a, b))), [a, b]

    def f_transpose(rng):
        a = _leaf(rng, (3, 4), "a")
        return (lambda: tsum(mul(transpose(a), constant(np.arange(12.0).reshape(4, 3))))), [a]

    def f_getitem(rng):
        a = _leaf(rng, (6, 3), "a")
        return (lambda: tsum(mul(a[1:4], a[2:5]))), [a]

    def f_concat(rng):
        a = _leaf(rng, (2, 3), "a")
        b = _leaf(rng, (4, 3), "b")
        return (lambda: tsum(mul(concat([a, b], axis=0), concat([b[:2], a, b[2:]], axis=0)))), [a, b]

    def f_tanh(rng):
        a = _leaf(rng, (4, 3), "a")
        return (lambda: tsum(tanh(a))), [a]

    def f_relu(rng):
        vals = rng.standard_normal((4, 3))
        vals += np.sign(vals) * 0.1  # keep points away from the kink
        a = Parameter(vals.astype(np.float64), "a")
        return (lambda: tsum(relu(a))), [a]

    def f_sigmoid(rng):
        a = _leaf(rng, (4, 3), "a")
        return (lambda: tsum(sigmoid(a))), [a]

    def f_exp(rng):
        a = _leaf(rng, (4, 3), "a", scale=0.5)
        return (lambda: tsum(exp(a))), [a]

    def f_log(rng):
        a = Parameter(rng.uniform(0.5, 2.0, (4, 3)), "a")
        return (lambda: tsum(log(a))), [a]

    def f_softplus(rng):
        a = _leaf(rng, (4, 3), "a")
        return (lambda: tsum(softplus(a))), [a]

    def f_softmax(rng):
        a = _leaf(rng, (4, 5), "a")
        w = constant(rng.standard_normal((4, 5)))
        return (lambda: tsum(mul(softmax(a, axis=1), w))), [a]

    def f_log_softmax(rng):
        a = _leaf(rng, (4, 5), "a")
        w = constant(rng.standard_normal((4, 5)))
        return (lambda: tsum(mul(log_softmax(a, axis=1), w))), [a]

    def f_mean(rng):
        a = _leaf(rng, (4, 5), "a")
        return (lambda: tsum(mul(tmean(a, axis=0, keepdims=True), tmean(a, axis=1, keepdims=True)))), [a]

    def f_cross_entropy(rng):
        a = _leaf(rng, (7,), "a")
        return (lambda: cross_entropy_with_logits(a, 3)), [a]

    def f_bce(rng):
        a = _leaf(rng, (4, 4), "a")
        t = (rng.random((4, 4)) > 0.5).astype(np.float64)
        m = np.ones((4, 4))
        np.fill_diagonal(m, 0.0)
        return (lambda: bce_with_logits(a, t, mask=m)), [a]

    def f_linear(rng):
        lin = Linear(4, 3, "lin", rng, dtype=np.float64)
        x = _leaf(rng, (5, 4), "x")
        return (lambda: tsum(tanh(lin(x)))), [x] + lin.parameters()

    def f_mlp2(rng):
        mlp = MLP2(4, 6, 2, "mlp", rng, dtype=np.float64)
        x = _leaf(rng, (3, 4), "x")
        return (lambda: tsum(mlp(x))), [x] + mlp.parameters()

    def f_bilinear(rng):
        W = _leaf(rng, (4, 4), "W")
        u = _leaf(rng, (4, 1), "u")
        v = _leaf(rng, (4, 1), "v")
        x = _leaf(rng, (3, 4), "x")
        def build():
            z = add(add(matmul(matmul(x, W), x.T), matmul(x, u)), transpose(matmul(x, v)))
            return tsum(sigmoid(z))
        return build, [W, u, v, x]

    def f_composite3(rng):
        l1 = Linear(5, 6, "c1", rng, dtype=np.float64)
        l2 = Linear(6, 6, "c2", rng, dtype=np.float64)
        l3 = Linear(6, 3, "c3", rng, dtype=np.float64)
        x = _leaf(rng, (4, 5), "x")
        def build():
            h = tanh(l1(x))
            h = relu(add(l2(h), constant(0.05 * np.ones((1, 6)))))
            return cross_entropy_with_logits(tmean(l3(h), axis=0), 1)
        return build, [x] + l1.parameters() + l2.parameters() + l3.parameters()

    for name, factory in [
        ("add_broadcast", f_add),
        ("sub_mul", f_sub_mul),
        ("neg", f_neg),
        ("matmul", f_matmul),
        ("transpose", f_transpose),
        ("getitem_slice", f_getitem),
        ("concat", f_concat),
        ("tanh", f_tanh),
        ("relu", f_relu),
        ("sigmoid", f_sigmoid),
        ("exp", f_exp),
        ("log", f_log),
        ("softplus", f_softplus),
        ("softmax", f_softmax),
        ("log_softmax", f_log_softmax),
        ("mean", f_mean),
        ("cross_entropy", f_cross_entropy),
        ("bce_masked", f_bce),
        ("linear", f_linear),
        ("mlp2", f_mlp2),
        ("bilinear_form", f_bilinear),
        ("composite_3layer", f_composite3),
    ]:
        run(name, factory)
    return results
