"""Input-adaptive ("explainable") convolution.

Each sample gets its own kernel: the input is thresholded into a binary mask,
the mask is pooled down to the kernel footprint, a softmax over that footprint
gives an attention map, and the shared kernel is modulated by it.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import (adaptive_avg_pool, as_tensor, conv2d_per_sample, conv2d_per_sample_backward,
                     softmax_lastaxes)

ATTENTION_TOL = 1e-12


@dataclass
class ExplainableConvParams:
    W: np.ndarray
    bias: np.ndarray
    tau: float = 0.0
    stride: int = 1
    padding: int = 1
    groups: int = 1

    def __post_init__(self):
        kh, kw = self.W.shape[-2:]
        if kh % 2 == 0 or kw % 2 == 0:
            raise DimensionError(f"kernel extents must be odd, got {kh}x{kw}", axis="kernel")
        if not np.isfinite(self.tau):
            raise ValueError("tau must be finite")


class AttentionMonitor:
    """Running record of how far attention slabs stray from summing to one."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.forwards = 0
        self.slabs = 0
        self.max_deviation = 0.0

    def observe(self, attn):
        dev = float(np.max(np.abs(attn.sum(axis=(-2, -1)) - 1.0)))
        self.forwards += 1
        self.slabs += attn.shape[0] * attn.shape[1]
        self.max_deviation = max(self.max_deviation, dev)
        return dev


attention_monitor = AttentionMonitor()


@dataclass
class XConvCache:
    x_shape: tuple
    cols: np.ndarray
    attention: np.ndarray
    kernels: np.ndarray
    weight: np.ndarray


def _attention(x, tau, kh, kw):
    mask = (x >= tau).astype(np.float64)
    return softmax_lastaxes(adaptive_avg_pool(mask, kh, kw))


def _expand_attention(attn, cout, groups):
    # attn [B, Cin, Kh, Kw] -> [B, Cout, Cin/g, Kh, Kw]; output channel o of group g
    # sees the attention of input channels g*Cin_g ... (g+1)*Cin_g - 1
    b, cin, kh, kw = attn.shape
    cin_g = cin // groups
    per_group = attn.reshape(b, groups, 1, cin_g, kh, kw)
    return np.broadcast_to(per_group, (b, groups, cout // groups, cin_g, kh, kw)).reshape(b, cout, cin_g, kh, kw)


def explainable_conv_forward(x, p):
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"expected [B,C,H,W], got {x.shape}", axis="rank")
    cout, _, kh, kw = p.W.shape
    attn = _attention(x, p.tau, kh, kw)
    dev = attention_monitor.observe(attn)
    if dev > ATTENTION_TOL:
        raise ContractError(f"attention slab sums deviate from 1 by {dev:.3e}")
    kernels = p.W[None] * _expand_attention(attn, cout, p.groups)
    y, cols = conv2d_per_sample(x, kernels, p.bias, p.stride, p.padding, p.groups)
    return y, XConvCache(x.shape, cols, attn, kernels, p.W)


def explainable_conv_backward(grad_y, cache, p):
    """Gradients w.r.t. input, kernel and bias.

    The mask is a hard threshold, so the attention path carries no gradient;
    the gradient w.r.t. tau is identically zero and is not returned.
    """
    grad_y = as_tensor(grad_y)
    if cache.weight is not p.W or cache.kernels.shape[1:] != p.W.shape:
        raise ContractError("cache does not belong to these parameters")
    expected = (cache.x_shape[0], p.W.shape[0]) + grad_y.shape[2:]
    if grad_y.shape != expected or cache.cols.shape[2] != grad_y.shape[2] * grad_y.shape[3]:
        raise ContractError(f"gradient shape {grad_y.shape} does not match the cached forward")
    grad_x, grad_kernels = conv2d_per_sample_backward(
        grad_y, cache.x_shape, cache.cols, cache.kernels, p.stride, p.padding, p.groups)
    modulation = _expand_attention(cache.attention, p.W.shape[0], p.groups)
    grad_w = np.sum(grad_kernels * modulation, axis=0)
    grad_bias = grad_y.sum(axis=(0, 2, 3))
    return grad_x, grad_w, grad_bias
