"""Dense float64 kernels used by every other module.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Image-like data
uses the ``[batch, channel, height, width]`` layout; per-channel matrices use
``[channel, rows, cols]``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError


def as_tensor(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _check_rank(x, rank, name):
    if x.ndim != rank:
        raise DimensionError(f"{name} must have rank {rank}, got shape {x.shape}", axis="rank")


def _conv_geometry(x, weight, stride, padding, groups):
    _check_rank(x, 4, "input")
    if weight.ndim not in (4, 5):
        raise DimensionError(f"kernel must have rank 4, got shape {weight.shape}", axis="rank")
    batch, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape[-4:]
    if groups < 1 or cin % groups:
        raise DimensionError(f"{cin} input channels not divisible by groups={groups}", axis="channel")
    if cout % groups:
        raise DimensionError(f"{cout} output channels not divisible by groups={groups}", axis="channel")
    if cin_g != cin // groups:
        raise DimensionError(
            f"kernel expects {cin_g} channels per group, input provides {cin // groups}", axis="channel")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"kernel extents must be odd, got {kh}x{kw}", axis="kernel")
    if stride < 1 or padding < 0:
        raise DimensionError(f"invalid stride={stride} / padding={padding}", axis="stride")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1:
        raise DimensionError(f"kernel height {kh} exceeds padded input height", axis="height")
    if wo < 1:
        raise DimensionError(f"kernel width {kw} exceeds padded input width", axis="width")
    return batch, cin, cout, kh, kw, ho, wo


def _im2col(x, kh, kw, stride, padding, groups):
    # -> [B, groups, Ho*Wo, Cg*kh*kw]
    batch, cin = x.shape[:2]
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2:4]
    win = win.reshape(batch, groups, cin // groups, ho, wo, kh, kw)
    return win.transpose(0, 1, 3, 4, 2, 5, 6).reshape(batch, groups, ho * wo, -1)


def _col2im(cols, x_shape, kh, kw, ho, wo, stride, padding, groups):
    batch, cin, h, w = x_shape
    cg = cin // groups
    cols = cols.reshape(batch, groups, ho, wo, cg, kh, kw).transpose(0, 1, 4, 5, 6, 2, 3)
    cols = cols.reshape(batch, cin, kh, kw, ho, wo)
    out = np.zeros((batch, cin, h + 2 * padding, w + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return out[:, :, padding:padding + h, padding:padding + w]


def conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """2-D cross-correlation of ``x`` [B,Cin,H,W] with ``weight`` [Cout,Cin/g,Kh,Kw]."""
    x = as_tensor(x)
    weight = as_tensor(weight)
    if weight.ndim != 4:
        raise DimensionError(f"kernel must have rank 4, got shape {weight.shape}", axis="rank")
    batch, _, cout, kh, kw, ho, wo = _conv_geometry(x, weight, stride, padding, groups)
    cols = _im2col(x, kh, kw, stride, padding, groups)
    og = cout // groups
    wmat = weight.reshape(groups, og, -1).transpose(0, 2, 1)  # [g, K, Og]
    out = cols @ wmat  # [B, g, N, Og]
    out = out.transpose(0, 1, 3, 2).reshape(batch, cout, ho, wo)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise DimensionError(f"bias must have shape ({cout},), got {bias.shape}", axis="channel")
        out = out + bias[None, :, None, None]
    return out


def conv2d_per_sample(x, weights, bias=None, stride=1, padding=0, groups=1):
    """Convolve sample ``b`` of ``x`` with its own kernel ``weights[b]``.

    ``weights`` has shape [B, Cout, Cin/g, Kh, Kw]. Returns the output and the
    im2col buffer, which the backward pass reuses.
    """
    x = as_tensor(x)
    weights = as_tensor(weights)
    if weights.ndim != 5 or weights.shape[0] != x.shape[0]:
        raise DimensionError(
            f"per-sample kernels must have shape [B,Cout,Cin/g,Kh,Kw] with B={x.shape[0]}, "
            f"got {weights.shape}", axis="batch")
    batch, _, cout, kh, kw, ho, wo = _conv_geometry(x, weights, stride, padding, groups)
    cols = _im2col(x, kh, kw, stride, padding, groups)
    og = cout // groups
    wmat = weights.reshape(batch, groups, og, -1).transpose(0, 1, 3, 2)  # [B, g, K, Og]
    out = (cols @ wmat).transpose(0, 1, 3, 2).reshape(batch, cout, ho, wo)
    if bias is not None:
        out = out + as_tensor(bias)[None, :, None, None]
    return out, cols


def conv2d_per_sample_backward(grad_y, x_shape, cols, weights, stride=1, padding=0, groups=1):
    """Gradients of :func:`conv2d_per_sample` w.r.t. its input and per-sample kernels."""
    batch, cout, ho, wo = grad_y.shape
    kh, kw = weights.shape[-2:]
    og = cout // groups
    gy = grad_y.reshape(batch, groups, og, ho * wo)
    grad_w = (gy @ cols).reshape(weights.shape)
    wmat = weights.reshape(batch, groups, og, -1)
    grad_cols = gy.transpose(0, 1, 3, 2) @ wmat  # [B, g, N, K]
    grad_x = _col2im(grad_cols, x_shape, kh, kw, ho, wo, stride, padding, groups)
    return grad_x, grad_w


def channel_matmul(lhs, rhs):
    """Independent matrix product per leading channel slice: [C,M,K] @ [C,K,N]."""
    lhs = as_tensor(lhs)
    rhs = as_tensor(rhs)
    _check_rank(lhs, 3, "lhs")
    _check_rank(rhs, 3, "rhs")
    if lhs.shape[0] != rhs.shape[0]:
        raise DimensionError(f"channel counts differ: {lhs.shape[0]} vs {rhs.shape[0]}", axis="channel")
    if lhs.shape[2] != rhs.shape[1]:
        raise DimensionError(f"inner dimensions differ: {lhs.shape[2]} vs {rhs.shape[1]}", axis="inner")
    return lhs @ rhs


def channel_transpose(m):
    return np.ascontiguousarray(np.swapaxes(m, -1, -2))


def softmax_lastaxes(x):
    """Softmax over each trailing 2-D slab."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError("softmax_lastaxes needs at least two axes", axis="rank")
    shifted = x - x.max(axis=(-2, -1), keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=(-2, -1), keepdims=True)


def _pool_bounds(size, out):
    starts = [(i * size) // out for i in range(out)]
    ends = [-((-(i + 1) * size) // out) for i in range(out)]
    return list(zip(starts, ends))


def adaptive_avg_pool(x, out_h, out_w):
    """Mean over the floor/ceil adaptive partition of the spatial axes."""
    x = as_tensor(x)
    _check_rank(x, 4, "input")
    h, w = x.shape[2:]
    if not 1 <= out_h <= h:
        raise DimensionError(f"output height {out_h} not in [1, {h}]", axis="height")
    if not 1 <= out_w <= w:
        raise DimensionError(f"output width {out_w} not in [1, {w}]", axis="width")
    out = np.empty(x.shape[:2] + (out_h, out_w))
    for i, (h0, h1) in enumerate(_pool_bounds(h, out_h)):
        for j, (w0, w1) in enumerate(_pool_bounds(w, out_w)):
            out[:, :, i, j] = x[:, :, h0:h1, w0:w1].mean(axis=(2, 3))
    return out


def dft2d(x):
    """Unnormalized forward 2-D DFT over the last two axes -> (real, imag)."""
    spec = np.fft.fft2(as_tensor(x), axes=(-2, -1))
    return np.ascontiguousarray(spec.real), np.ascontiguousarray(spec.imag)


def pixel_unshuffle(x, r):
    """Space-to-depth: [B,C,H,W] -> [B,C*r*r,H/r,W/r]."""
    x = as_tensor(x)
    _check_rank(x, 4, "input")
    b, c, h, w = x.shape
    if r < 1:
        raise DimensionError(f"factor must be positive, got {r}", axis="factor")
    if h % r:
        raise DimensionError(f"height {h} not divisible by {r}", axis="height")
    if w % r:
        raise DimensionError(f"width {w} not divisible by {r}", axis="width")
    y = x.reshape(b, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(y.reshape(b, c * r * r, h // r, w // r))


def pixel_shuffle(x, r):
    """Depth-to-space, the exact inverse of :func:`pixel_unshuffle`."""
    x = as_tensor(x)
    _check_rank(x, 4, "input")
    b, c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise DimensionError(f"{c} channels not divisible by {r * r}", axis="channel")
    y = x.reshape(b, c // (r * r), r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(b, c // (r * r), h * r, w * r))
