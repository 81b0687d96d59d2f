"""Dense float tensors with reverse-mode automatic differentiation.

A deliberately small engine: 2-D (and scalar/1-D) row-major arrays, a handful
of primitives with hand-written backward rules, and a topological-sort
backward pass in the micrograd style. Every forward result is checked for
NaN/Inf and raises NumericError on the first non-finite value, so divergence
surfaces at the op that produced it.

Default storage is float32. Ops inherit the dtype of their inputs, which lets
the gradient checker run the same code paths in float64 where the
finite-difference oracle is not limited by f32 rounding.

Tensors are treated as immutable values during forward passes; gradient
accumulation is single-threaded per graph. Nothing in here is shared mutable
state, so independent training jobs can run in parallel threads.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError, ParameterError, ShapeError

DTYPE = np.float32


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by {op}")


class Tensor:
    """A dense float array plus an optional gradient buffer.

    `grad` is lazily allocated during backward and always matches `data`'s
    shape. Results of ops on tensors with requires_grad=True carry closures
    that accumulate gradients into their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, dtype=DTYPE):
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._backward: Callable[[], None] | None = None
        self._parents: tuple[Tensor, ...] = ()

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...], op: str) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._backward = None
        out._parents = parents if out.requires_grad else ()
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, contribution: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(contribution, dtype=self.data.dtype)
        else:
            self.grad += contribution

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Reverse-mode pass from this node; self must be scalar unless a
        seed gradient of matching shape is given."""
        if seed is None:
            if self.data.size != 1:
                raise ShapeError("backward() without seed requires a scalar tensor")
            seed = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # Convenience arithmetic; the real work lives in the module functions.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    """Wrap x as a constant tensor, matching the dtype of `like` if given."""
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else DTYPE
    return Tensor(np.asarray(x, dtype=dtype), requires_grad=False, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over axes that numpy broadcasting expanded to reach `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out = Tensor._from_op(a.data + b.data, (a, b), "add")
    if out.requires_grad:

        def _backward():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(out.grad, b.data.shape))

        out._backward = _backward
    return out


def sub(a, b) -> Tensor:
    return add(a, mul(b, -1.0))


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out = Tensor._from_op(a.data * b.data, (a, b), "mul")
    if out.requires_grad:

        def _backward():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(out.grad * a.data, b.data.shape))

        out._backward = _backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard 2-D matrix product with gradient accumulation to both sides."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    out = Tensor._from_op(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:

        def _backward():
            if a.requires_grad:
                a._accumulate(out.grad @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ out.grad)

        out._backward = _backward
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {a.data.shape}")
    out = Tensor._from_op(np.ascontiguousarray(a.data.T), (a,), "transpose")
    if out.requires_grad:

        def _backward():
            a._accumulate(out.grad.T)

        out._backward = _backward
    return out


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = Tensor._from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum")
    if out.requires_grad:

        def _backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.data.shape))

        out._backward = _backward
    return out


def log(a: Tensor) -> Tensor:
    """Natural log; callers clamp away from zero first (see clamp_min)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = Tensor._from_op(np.log(a.data), (a,), "log")
    if out.requires_grad:

        def _backward():
            a._accumulate(out.grad / a.data)

        out._backward = _backward
    return out


def clamp_min(a: Tensor, lo: float) -> Tensor:
    """Elementwise max(a, lo); gradient flows where the input was not clamped."""
    out = Tensor._from_op(np.maximum(a.data, lo), (a,), "clamp_min")
    if out.requires_grad:
        mask = (a.data >= lo).astype(a.data.dtype)

        def _backward():
            a._accumulate(out.grad * mask)

        out._backward = _backward
    return out


def square(a: Tensor) -> Tensor:
    return mul(a, a)


def gelu(a: Tensor) -> Tensor:
    """GELU with the tanh approximation; smooth everywhere."""
    x = a.data
    c = np.asarray(np.sqrt(2.0 / np.pi), dtype=x.dtype)
    k = np.asarray(0.044715, dtype=x.dtype)
    inner = c * (x + k * x**3)
    t = np.tanh(inner)
    out = Tensor._from_op(0.5 * x * (1.0 + t), (a,), "gelu")
    if out.requires_grad:

        def _backward():
            sech2 = 1.0 - t**2
            d_inner = c * (1.0 + 3.0 * k * x**2)
            da = 0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner
            a._accumulate(out.grad * da)

        out._backward = _backward
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by per-row max subtraction.

    Each output row is nonnegative and sums to 1 to within float tolerance.
    NaN input surfaces as NumericError.
    """
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a 2-D tensor, got {a.data.shape}")
    _check_finite(a.data, "softmax_rows input")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor._from_op(s, (a,), "softmax_rows")
    if out.requires_grad:

        def _backward():
            g = out.grad
            dot = (g * s).sum(axis=1, keepdims=True)
            a._accumulate(s * (g - dot))

        out._backward = _backward
    return out


def gumbel_noise(shape: tuple[int, ...], rng: np.random.Generator, dtype=DTYPE) -> np.ndarray:
    """Standard Gumbel(0,1) samples, -log(-log(u)), u clipped away from {0,1}."""
    u = np.clip(rng.random(shape), 1e-12, 1.0 - 1e-12)
    return (-np.log(-np.log(u))).astype(dtype)


def gumbel_softmax_rows(
    a: Tensor,
    tau: float,
    hard: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    """Gumbel-Softmax relaxation of row-wise argmax.

    Adds Gumbel(0,1) noise per element (rng=None disables the noise), applies
    a temperature-tau softmax per row, and in hard mode emits the one-hot row
    argmax while routing gradients through the soft values (straight-through).
    """
    if tau <= 0:
        raise ParameterError(f"gumbel temperature must be positive, got {tau}")
    if rng is not None:
        noisy = add(a, Tensor(gumbel_noise(a.data.shape, rng, a.data.dtype), dtype=a.data.dtype))
    else:
        noisy = a
    soft = softmax_rows(mul(noisy, 1.0 / tau))
    if not hard:
        return soft
    idx = soft.data.argmax(axis=1)
    one_hot = np.zeros_like(soft.data)
    one_hot[np.arange(soft.data.shape[0]), idx] = 1.0
    out = Tensor._from_op(one_hot, (soft,), "gumbel_hard")
    if out.requires_grad:

        def _backward():
            soft._accumulate(out.grad)

        out._backward = _backward
    return out


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row zero-mean unit-variance normalization, then affine scale/shift."""
    if a.data.ndim != 2 or a.data.shape[1] < 2:
        raise ShapeError(f"layer_norm expects an r x c tensor with c >= 2, got {a.data.shape}")
    gamma, beta = as_tensor(gamma, a), as_tensor(beta, a)
    x = a.data
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = xc * inv_std
    out = Tensor._from_op(gamma.data * xhat + beta.data, (a, gamma, beta), "layer_norm")
    if out.requires_grad:

        def _backward():
            g = out.grad
            if beta.requires_grad:
                beta._accumulate(_unbroadcast(g, beta.data.shape))
            if gamma.requires_grad:
                gamma._accumulate(_unbroadcast(g * xhat, gamma.data.shape))
            if a.requires_grad:
                dxhat = g * gamma.data
                m1 = dxhat.mean(axis=1, keepdims=True)
                m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
                a._accumulate(inv_std * (dxhat - m1 - xhat * m2))

        out._backward = _backward
    return out
