"""Slow, independent reference implementations.

Nothing here calls into the fast kernels it is used to check; each routine is
written from the defining formula with explicit loops or dense matrices.
"""

import math

import numpy as np


def naive_conv2d(x, weight, bias=None, stride=1, padding=0, groups=1):
    b_, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    og = cout // groups
    xp = np.zeros((b_, cin, h + 2 * padding, w + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + w] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((b_, cout, ho, wo))
    for b in range(b_):
        for o in range(cout):
            g = o // og
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if bias is None else float(bias[o])
                    for c in range(cin_g):
                        for u in range(kh):
                            for v in range(kw):
                                acc += weight[o, c, u, v] * xp[b, g * cin_g + c, i * stride + u, j * stride + v]
                    out[b, o, i, j] = acc
    return out


def naive_matmul(lhs, rhs):
    c_, m, k = lhs.shape
    n = rhs.shape[2]
    out = np.zeros((c_, m, n))
    for c in range(c_):
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for t in range(k):
                    acc += lhs[c, i, t] * rhs[c, t, j]
                out[c, i, j] = acc
    return out


def naive_dft2d(x):
    h, w = x.shape[-2:]
    lead = x.shape[:-2]
    flat = x.reshape(-1, h, w)
    re = np.zeros_like(flat)
    im = np.zeros_like(flat)
    for s in range(flat.shape[0]):
        for u in range(h):
            for v in range(w):
                acc_re = acc_im = 0.0
                for p in range(h):
                    for q in range(w):
                        ang = -2.0 * math.pi * (u * p / h + v * q / w)
                        acc_re += flat[s, p, q] * math.cos(ang)
                        acc_im += flat[s, p, q] * math.sin(ang)
                re[s, u, v] = acc_re
                im[s, u, v] = acc_im
    return re.reshape(lead + (h, w)), im.reshape(lead + (h, w))


def kron_degrade(image, a, b):
    """A @ I @ B per channel via the unfactored operator (B^T kron A) vec(I)."""
    c_, h, w = image.shape
    out = np.empty((c_, h, w))
    for c in range(c_):
        big = np.kron(b[c].T, a[c])
        vec = image[c].reshape(-1, order="F")
        out[c] = (big @ vec).reshape(h, w, order="F")
    return out


def grid_prox_l1(x, t, lo=-3.0, hi=3.0, step=1e-4):
    """argmin_c t|c| + (c - x)^2 / 2 by exhaustive grid search."""
    grid = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    return float(grid[np.argmin(t * np.abs(grid) + 0.5 * (grid - x) ** 2)])


def gradient_matrix(h, w):
    """Dense forward-difference operator, rows ordered [horizontal; vertical]."""
    n = h * w
    mat = np.zeros((2 * n, n))
    for r in range(h):
        for c in range(w):
            k = r * w + c
            if c + 1 < w:
                mat[k, k] = -1.0
                mat[k, k + 1] = 1.0
            if r + 1 < h:
                mat[n + k, k] = -1.0
                mat[n + k, k + w] = 1.0
    return mat


def transcribe_F_H(image, degraded, a, b, lam, alpha, sigma, epsilon):
    """Residual F and its subderivative H for a single-channel state.

    Uses vectorized images, the Kronecker data operator and an explicit
    difference matrix in place of the structured kernels.
    """
    h, w = image.shape
    g = gradient_matrix(h, w)
    kop = np.kron(a, b.T)  # row-major vec(A X B) = (A kron B^T) vec(X)
    x = image.reshape(-1)
    d = degraded.reshape(-1)
    lam_v = lam.reshape(-1)
    t = alpha / sigma

    def shrink(z):
        return np.array([math.copysign(max(abs(v) - t, 0.0), v) for v in z])

    arg = lam_v / sigma + g @ x
    f = kop.T @ (kop @ x - d) + g.T @ (lam_v + epsilon * (g @ x - shrink(arg)))
    keep = np.array([0.0 if abs(v) > t else 1.0 for v in arg])
    hval = kop.T @ (kop @ f) + sigma * (g.T @ ((g @ f) * keep))
    return f.reshape(h, w), hval.reshape(h, w)


def xconv_pipeline(x, weight, bias, tau, padding=1, groups=1):
    """Explainable convolution with every intermediate materialized by loops."""
    b_, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    og = cout // groups
    mask = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        mask[idx] = 1.0 if x[idx] >= tau else 0.0
    pooled = np.zeros((b_, cin, kh, kw))
    for b in range(b_):
        for c in range(cin):
            for i in range(kh):
                h0, h1 = (i * h) // kh, math.ceil((i + 1) * h / kh)
                for j in range(kw):
                    w0, w1 = (j * w) // kw, math.ceil((j + 1) * w / kw)
                    total = 0.0
                    for p in range(h0, h1):
                        for q in range(w0, w1):
                            total += mask[b, c, p, q]
                    pooled[b, c, i, j] = total / ((h1 - h0) * (w1 - w0))
    attn = np.zeros_like(pooled)
    for b in range(b_):
        for c in range(cin):
            denom = sum(math.exp(pooled[b, c, i, j]) for i in range(kh) for j in range(kw))
            for i in range(kh):
                for j in range(kw):
                    attn[b, c, i, j] = math.exp(pooled[b, c, i, j]) / denom
    out = []
    for b in range(b_):
        wb = np.zeros_like(weight)
        for o in range(cout):
            g = o // og
            for c in range(cin_g):
                wb[o, c] = weight[o, c] * attn[b, g * cin_g + c]
        out.append(naive_conv2d(x[b:b + 1], wb, bias, 1, padding, groups))
    return np.concatenate(out, axis=0), attn


def central_difference(fn, x, h=1e-5):
    """Gradient of scalar ``fn`` at array ``x`` by central differences."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = fn(x)
        x[idx] = orig - h
        down = fn(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad
