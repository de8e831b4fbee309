"""Differentiable primitives.

Each primitive is a ``Function`` subclass with a thin functional wrapper.
Everything works on float64 arrays; images and feature maps use the
channels-last layout ``H x W x C`` and token sequences are ``N x C``.
"""
from __future__ import annotations

from typing import Any

import numpy as np
from scipy.special import erf

from cea_kit.autograd.flops import record_macs
from cea_kit.autograd.tensor import Function, Tensor, as_tensor
from cea_kit.core.errors import DimensionError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from e


# ============================================================================
# Elementwise arithmetic
# ============================================================================


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, "add")
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, "sub")
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, "mul")
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None]:
        ga = self.unbroadcast(grad * self.b, self.a.shape) if self.inputs[0].requires_grad else None
        gb = self.unbroadcast(grad * self.a, self.b.shape) if self.inputs[1].requires_grad else None
        return ga, gb


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, "div")
        self.a, self.b = a, b
        return a / b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None]:
        ga = self.unbroadcast(grad / self.b, self.a.shape) if self.inputs[0].requires_grad else None
        gb = (
            self.unbroadcast(-grad * self.a / (self.b * self.b), self.b.shape)
            if self.inputs[1].requires_grad
            else None
        )
        return ga, gb


class Neg(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        return -a

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (-grad,)


class Abs(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        self.sign = np.sign(a)
        return np.abs(a)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        # Subgradient 0 at 0.
        return (grad * self.sign,)


class Gelu(Function):
    """Exact (erf-based) GELU."""

    def forward(self, a: np.ndarray) -> np.ndarray:
        self.a = a
        self.cdf = 0.5 * (1.0 + erf(a * _INV_SQRT2))
        return a * self.cdf

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        pdf = _INV_SQRT2PI * np.exp(-0.5 * self.a * self.a)
        return (grad * (self.cdf + self.a * pdf),)


def add(a: Any, b: Any) -> Tensor:
    return Add.apply(as_tensor(a), as_tensor(b))


def sub(a: Any, b: Any) -> Tensor:
    return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a: Any, b: Any) -> Tensor:
    return Mul.apply(as_tensor(a), as_tensor(b))


def div(a: Any, b: Any) -> Tensor:
    return Div.apply(as_tensor(a), as_tensor(b))


def neg(a: Tensor) -> Tensor:
    return Neg.apply(as_tensor(a))


def absolute(a: Tensor) -> Tensor:
    return Abs.apply(as_tensor(a))


def gelu(a: Tensor) -> Tensor:
    return Gelu.apply(as_tensor(a))


# ============================================================================
# Linear algebra and shape manipulation
# ============================================================================


class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim != 2 or b.ndim != 2:
            raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
        self.a, self.b = a, b
        record_macs("matmul", a.shape[0] * a.shape[1] * b.shape[1])
        return a @ b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None]:
        ga = grad @ self.b.T if self.inputs[0].requires_grad else None
        gb = self.a.T @ grad if self.inputs[1].requires_grad else None
        return ga, gb


class Transpose(Function):
    def forward(self, a: np.ndarray, axes: tuple[int, ...] | None = None) -> np.ndarray:
        self.axes = axes
        return np.transpose(a, axes)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        if self.axes is None:
            return (np.transpose(grad),)
        return (np.transpose(grad, np.argsort(self.axes)),)


class Reshape(Function):
    def forward(self, a: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        self.in_shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError as e:
            raise DimensionError(f"cannot reshape {a.shape} into {shape}") from e

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad.reshape(self.in_shape),)


class GetItem(Function):
    def forward(self, a: np.ndarray, index: Any) -> np.ndarray:
        self.in_shape = a.shape
        self.index = index
        return a[index]

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros(self.in_shape)
        np.add.at(full, self.index, grad)
        return (full,)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        self.axis = axis
        self.sizes = [arr.shape[axis] for arr in arrays]
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError as e:
            raise DimensionError(f"concat: {[arr.shape for arr in arrays]} along axis {axis}") from e

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, ...]:
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(as_tensor(a), as_tensor(b))


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    return Transpose.apply(as_tensor(a), axes=axes)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return Reshape.apply(as_tensor(a), shape=tuple(shape))


def getitem(a: Tensor, index: Any) -> Tensor:
    return GetItem.apply(as_tensor(a), index=index)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*(as_tensor(t) for t in tensors), axis=axis)


# ============================================================================
# Reductions and normalizations
# ============================================================================


class Sum(Function):
    def forward(self, a: np.ndarray, axis: Any = None, keepdims: bool = False) -> np.ndarray:
        self.in_shape = a.shape
        self.axis = axis
        self.keepdims = keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class Mean(Function):
    def forward(self, a: np.ndarray, axis: Any = None, keepdims: bool = False) -> np.ndarray:
        self.in_shape = a.shape
        self.axis = axis
        self.keepdims = keepdims
        self.count = a.size // max(np.asarray(a.sum(axis=axis, keepdims=True)).size, 1)
        return np.asarray(a.mean(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, self.in_shape).copy(),)


class GlobalAvgPool(Function):
    """Mean over token rows of an ``N x C`` array.

    Each column is summed in sorted order, which makes the result bit-identical
    under any permutation of the rows.
    """

    def forward(self, a: np.ndarray) -> np.ndarray:
        if a.ndim != 2:
            raise DimensionError(f"global_avg_pool expects N x C tokens, got {a.shape}")
        self.in_shape = a.shape
        return (np.sort(a, axis=0).sum(axis=0) / a.shape[0]).reshape(1, -1)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (np.broadcast_to(grad / self.in_shape[0], self.in_shape).copy(),)


class L2Norm(Function):
    def forward(self, a: np.ndarray, axis: int = -1, keepdims: bool = True) -> np.ndarray:
        self.a = a
        self.axis = axis
        self.keepdims = keepdims
        self.norm = np.sqrt((a * a).sum(axis=axis, keepdims=True))
        return self.norm if keepdims else np.squeeze(self.norm, axis=axis)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        safe = np.where(self.norm > 0.0, self.norm, 1.0)
        direction = np.where(self.norm > 0.0, self.a / safe, 0.0)
        return (grad * direction,)


class Softmax(Function):
    def forward(self, a: np.ndarray, axis: int = -1) -> np.ndarray:
        self.axis = axis
        shifted = a - a.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        y = self.out
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class LayerNorm(Function):
    """Normalization over the last axis, without affine parameters."""

    def forward(self, a: np.ndarray, eps: float = 1e-5) -> np.ndarray:
        mu = a.mean(axis=-1, keepdims=True)
        var = a.var(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = (a - mu) * self.inv_std
        return self.xhat

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        xhat = self.xhat
        g_mean = grad.mean(axis=-1, keepdims=True)
        gx_mean = (grad * xhat).mean(axis=-1, keepdims=True)
        return (self.inv_std * (grad - g_mean - xhat * gx_mean),)


def sum(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(as_tensor(a), axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis: Any = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(as_tensor(a), axis=axis, keepdims=keepdims)


def global_avg_pool(tokens: Tensor) -> Tensor:
    return GlobalAvgPool.apply(as_tensor(tokens))


def l2_norm(a: Tensor, axis: int = -1, keepdims: bool = True) -> Tensor:
    """Euclidean norm along ``axis``; its gradient at a zero vector is 0."""
    return L2Norm.apply(as_tensor(a), axis=axis, keepdims=keepdims)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax with max-subtraction, so large logits do not overflow."""
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {a.shape}")
    return Softmax.apply(a, axis=axis)


def layer_norm(a: Tensor, weight: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Bias-free layer normalization over the channel (last) axis."""
    out = LayerNorm.apply(as_tensor(a), eps=eps)
    return out if weight is None else out * weight


# ============================================================================
# Spatial operators (channels-last H x W x C)
# ============================================================================


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


class DepthwiseConv2d(Function):
    """Per-channel 2-D correlation with zero padding."""

    def forward(self, x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 1) -> np.ndarray:
        if x.ndim != 3 or w.ndim != 3 or w.shape[2] != x.shape[2] or w.shape[0] != w.shape[1]:
            raise DimensionError(f"depthwise_conv2d: input {x.shape} incompatible with kernel {w.shape}")
        if stride < 1:
            raise DimensionError(f"depthwise_conv2d: stride must be >= 1, got {stride}")
        k = w.shape[0]
        h, wd, c = x.shape
        h_out = conv_output_size(h, k, stride, padding)
        w_out = conv_output_size(wd, k, stride, padding)
        xp = np.pad(x, ((padding, padding), (padding, padding), (0, 0)))
        self.xp, self.w = xp, w
        self.geometry = (h, wd, h_out, w_out, k, stride, padding)
        out = np.zeros((h_out, w_out, c))
        for i in range(k):
            for j in range(k):
                window = xp[i : i + stride * (h_out - 1) + 1 : stride, j : j + stride * (w_out - 1) + 1 : stride]
                out += window * w[i, j]
        record_macs("depthwise_conv2d", h_out * w_out * c * k * k)
        return out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h, wd, h_out, w_out, k, stride, padding = self.geometry
        gxp = np.zeros_like(self.xp)
        gw = np.zeros_like(self.w)
        for i in range(k):
            for j in range(k):
                rows = slice(i, i + stride * (h_out - 1) + 1, stride)
                cols = slice(j, j + stride * (w_out - 1) + 1, stride)
                gxp[rows, cols] += grad * self.w[i, j]
                gw[i, j] = (grad * self.xp[rows, cols]).sum(axis=(0, 1))
        return gxp[padding : padding + h, padding : padding + wd], gw


class UpsampleNearest(Function):
    def forward(self, x: np.ndarray, factor: int = 2) -> np.ndarray:
        self.factor = factor
        self.in_shape = x.shape
        return np.repeat(np.repeat(x, factor, axis=0), factor, axis=1)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        h, w, c = self.in_shape
        f = self.factor
        return (grad.reshape(h, f, w, f, c).sum(axis=(1, 3)),)


class FFTMagnitude2d(Function):
    """Magnitude of the unnormalized 2-D DFT of every channel."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3:
            raise DimensionError(f"fft_magnitude expects H x W x C, got {x.shape}")
        self.spectrum = np.fft.fft2(x, axes=(0, 1))
        self.magnitude = np.abs(self.spectrum)
        return self.magnitude

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        # d|X_k|/dx = Re(conj(X_k) e^{-i w k n}) / |X_k|, defined as 0 where |X_k| = 0.
        nonzero = self.magnitude > 0.0
        safe = np.where(nonzero, self.magnitude, 1.0)
        weights = np.where(nonzero, grad * np.conj(self.spectrum) / safe, 0.0)
        return (np.real(np.fft.fft2(weights, axes=(0, 1))),)


def depthwise_conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 1) -> Tensor:
    """Depthwise convolution; with kernel 3 and padding 1 the output is ceil(H/stride) x ceil(W/stride)."""
    return DepthwiseConv2d.apply(as_tensor(x), as_tensor(weight), stride=stride, padding=padding)


def pointwise_conv2d(x: Tensor, weight: Tensor, stride: int = 1) -> Tensor:
    """1x1 convolution ``H x W x Cin -> ceil(H/s) x ceil(W/s) x Cout`` (subsample, then mix channels)."""
    x = as_tensor(x)
    weight = as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 2 or weight.shape[0] != x.shape[2]:
        raise DimensionError(f"pointwise_conv2d: input {x.shape} incompatible with weight {weight.shape}")
    if stride > 1:
        x = x[::stride, ::stride, :]
    h, w, c = x.shape
    tokens = matmul(x.reshape(h * w, c), weight)
    return tokens.reshape(h, w, weight.shape[1])


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    return UpsampleNearest.apply(as_tensor(x), factor=factor)


def fft_magnitude(x: Tensor) -> Tensor:
    """``|FFT2(x)|`` per channel. Forward uses numpy's FFT; the backward pass is the subgradient of ``|.|``."""
    return FFTMagnitude2d.apply(as_tensor(x))
