"""Unfolded restoration network built from explainable blocks.

Parameters live in one flat ``name -> ndarray`` mapping so the model can be
serialized without any framework. Layout:

    init.ep.*                       block producing the initial multiplier
    blocks.{k}.resm.{ep_feat,ep_f,ep_mask,ep_grad}.*, .convs.*, .wk
    blocks.{k}.dmum.{ep_a,ep_b}.*   explainable blocks on 2C channels
    blocks.{k}.mum.ep.*, .convs.*
    final.resm.*
    out_proj.weight / out_proj.bias
    eta
"""

import logging
import re
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, MissingParameterError, SizeError
from .imaging import Image
from .solver import normalized_gram
from .tensor import as_tensor, channel_matmul, channel_transpose, conv2d, pixel_shuffle, pixel_unshuffle
from .xconv import ExplainableConvParams, explainable_conv_forward

log = logging.getLogger(__name__)

SCALE = 4
DEFAULT_BLOCKS = 16
DEFAULT_ETA = 0.01
DEFAULT_WK = 0.1
LN_EPS = 1e-6
MIN_SIDE = 3 * SCALE  # feature maps must cover the 3x3 attention footprint

InitState = namedtuple("InitState", "I Lambda A B D_feat pad")


def _ep_shapes(c):
    return {
        "norm1.weight": (c,), "norm1.bias": (c,),
        "conv1.weight": (2 * c, c, 1, 1), "conv1.bias": (2 * c,),
        "xconv.weight": (2 * c, 1, 3, 3), "xconv.bias": (2 * c,), "xconv.tau": (),
        "sca.weight": (c, c, 1, 1), "sca.bias": (c,),
        "conv3.weight": (c, c, 1, 1), "conv3.bias": (c,),
        "beta": (),
        "norm2.weight": (c,), "norm2.bias": (c,),
        "conv4.weight": (2 * c, c, 1, 1), "conv4.bias": (2 * c,),
        "conv5.weight": (c, c, 1, 1), "conv5.bias": (c,),
        "gamma": (),
    }


def _convs_shapes(c):
    return {f"{i}.{kind}": ((c, c, 3, 3) if kind == "weight" else (c,))
            for i in range(2) for kind in ("weight", "bias")}


def _prefixed(prefix, shapes):
    return {f"{prefix}.{k}": v for k, v in shapes.items()}


def _resm_shapes(prefix, c):
    shapes = {}
    for name in ("ep_feat", "ep_f", "ep_mask", "ep_grad"):
        shapes.update(_prefixed(f"{prefix}.{name}", _ep_shapes(c)))
    shapes.update(_prefixed(f"{prefix}.convs", _convs_shapes(c)))
    shapes[f"{prefix}.wk"] = ()
    return shapes


def parameter_shapes(n, channels):
    """Ordered mapping of every parameter name to its shape."""
    c = channels
    shapes = _prefixed("init.ep", _ep_shapes(c))
    for k in range(n):
        shapes.update(_resm_shapes(f"blocks.{k}.resm", c))
        shapes.update(_prefixed(f"blocks.{k}.dmum.ep_a", _ep_shapes(2 * c)))
        shapes.update(_prefixed(f"blocks.{k}.dmum.ep_b", _ep_shapes(2 * c)))
        shapes.update(_prefixed(f"blocks.{k}.mum.ep", _ep_shapes(c)))
        shapes.update(_prefixed(f"blocks.{k}.mum.convs", _convs_shapes(c)))
    shapes.update(_resm_shapes("final.resm", c))
    shapes["out_proj.weight"] = (c, c, 1, 1)
    shapes["out_proj.bias"] = (c,)
    shapes["eta"] = ()
    return shapes


@dataclass
class UnfoldedModel:
    params: dict
    h_variant: str = "main"  # "main" or "supplement" form of the mask term in RESM

    def __post_init__(self):
        if self.h_variant not in ("main", "supplement"):
            raise ValueError(f"unknown h_variant {self.h_variant!r}")
        validate_parameters(self.params)

    @property
    def n(self):
        return _block_count(self.params)

    @property
    def channels(self):
        return self.params["init.ep.norm1.weight"].shape[0]

    @property
    def eta(self):
        return float(self.params["eta"])

    def parameter_count(self):
        return int(sum(np.size(v) for v in self.params.values()))


def _block_count(params):
    idx = [int(m.group(1)) for m in (re.match(r"blocks\.(\d+)\.", k) for k in params) if m]
    return max(idx) + 1 if idx else 0


def validate_parameters(params):
    if "init.ep.norm1.weight" not in params:
        raise MissingParameterError(parameter_shapes(1, 1).keys() & {"init.ep.norm1.weight"})
    n = _block_count(params)
    if n < 1:
        raise MissingParameterError([k for k in parameter_shapes(1, 1) if k.startswith("blocks.0.")])
    expected = parameter_shapes(n, params["init.ep.norm1.weight"].shape[0])
    if expected.keys() != params.keys():
        raise MissingParameterError(expected.keys() - params.keys(), params.keys() - expected.keys())
    for name, shape in expected.items():
        if np.shape(params[name]) != shape:
            raise DimensionError(f"parameter {name} has shape {np.shape(params[name])}, expected {shape}",
                                 axis=name)
        if not np.all(np.isfinite(params[name])):
            raise ValueError(f"parameter {name} is not finite")


def seed_model(n=DEFAULT_BLOCKS, channels=3 * SCALE * SCALE, seed=0, h_variant="main"):
    """Deterministic untrained model: fan-in scaled normal kernels, identity blocks."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for name, shape in parameter_shapes(n, channels).items():
        leaf = name.rsplit(".", 1)[-1]
        if len(shape) == 4 and leaf == "weight":
            fan_in = shape[1] * shape[2] * shape[3]
            params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif leaf == "weight":
            params[name] = np.ones(shape)
        elif leaf == "wk":
            params[name] = np.array(DEFAULT_WK)
        elif name == "eta":
            params[name] = np.array(DEFAULT_ETA)
        else:  # biases, residual scales beta/gamma, thresholds tau
            params[name] = np.zeros(shape)
    return UnfoldedModel(params, h_variant)


def random_model(n=1, channels=8, seed=0, scale=0.3, h_variant="main"):
    """Every parameter drawn at random, residual scales and thresholds included.

    Seeded models start with identity blocks; this fixture exercises every path.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for name, shape in parameter_shapes(n, channels).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "weight" and len(shape) == 1:
            params[name] = 1.0 + scale * rng.standard_normal(shape)
        elif name == "eta":
            params[name] = np.array(DEFAULT_ETA)
        else:
            params[name] = scale * rng.standard_normal(shape)
    return UnfoldedModel(params, h_variant)


def sub(params, prefix):
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + ".")}


def layer_norm(x, weight, bias):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * weight[None, :, None, None] + bias[None, :, None, None]


def simple_gate(x):
    if x.shape[1] % 2:
        raise DimensionError(f"gate needs an even channel count, got {x.shape[1]}", axis="channel")
    half = x.shape[1] // 2
    return x[:, :half] * x[:, half:]


def ep_block(x, p):
    """Explainable block: two gated residual sub-blocks, the first with an adaptive depthwise conv."""
    x = as_tensor(x)
    c = p["norm1.weight"].shape[0]
    if x.ndim != 4 or x.shape[1] != c:
        raise DimensionError(f"block expects {c} channels, got shape {x.shape}", axis="channel")
    y = layer_norm(x, p["norm1.weight"], p["norm1.bias"])
    y = conv2d(y, p["conv1.weight"], p["conv1.bias"])
    xp = ExplainableConvParams(p["xconv.weight"], p["xconv.bias"], float(p["xconv.tau"]),
                               padding=1, groups=2 * c)
    y, _ = explainable_conv_forward(y, xp)
    y = simple_gate(y)
    y = y * conv2d(y.mean(axis=(2, 3), keepdims=True), p["sca.weight"], p["sca.bias"])
    y = conv2d(y, p["conv3.weight"], p["conv3.bias"])
    x = x + float(p["beta"]) * y
    y = layer_norm(x, p["norm2.weight"], p["norm2.bias"])
    y = simple_gate(conv2d(y, p["conv4.weight"], p["conv4.bias"]))
    y = conv2d(y, p["conv5.weight"], p["conv5.bias"])
    return x + float(p["gamma"]) * y


def convs(x, p):
    """Two channel-preserving 3x3 convolutions, each followed by ReLU."""
    for i in range(2):
        x = np.maximum(conv2d(x, p[f"{i}.weight"], p[f"{i}.bias"], padding=1), 0.0)
    return x


def _ep(x3, p):
    return ep_block(x3[None], p)[0]


def _convs(x3, p):
    return convs(x3[None], p)[0]


def _normalize(m):
    norms = np.sqrt(np.sum(m * m, axis=(1, 2)))
    zero = norms == 0
    out = m / np.where(zero, 1.0, norms)[:, None, None]
    if zero.any():
        out[zero] = np.eye(m.shape[1])
    return out


def _pad_to_multiple(pixels):
    h, w = pixels.shape[2:]
    ph, pw = (-h) % SCALE, (-w) % SCALE
    if ph or pw:
        pixels = np.pad(pixels, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    return pixels, (ph, pw)


def init_unfolded(degraded, model):
    """Downsample, then build I0, Lambda0 = EP(I0) + I0 and normalized Gram matrices."""
    pixels = degraded.pixels if isinstance(degraded, Image) else as_tensor(degraded)
    if pixels.ndim == 3:
        pixels = pixels[None]
    if min(pixels.shape[2:]) < MIN_SIDE:
        raise SizeError(f"input {pixels.shape[2:]} too small: the adaptive convs need at least {MIN_SIDE}x{MIN_SIDE}")
    padded, pad = _pad_to_multiple(pixels)
    d_feat = pixel_unshuffle(padded, SCALE)[0]
    if d_feat.shape[0] != model.channels:
        raise DimensionError(f"model expects {model.channels} feature channels, input gives {d_feat.shape[0]}",
                             axis="channel")
    i0 = d_feat.copy()
    lam0 = _ep(i0, sub(model.params, "init.ep")) + i0
    a0, _ = normalized_gram(i0)
    b0, _ = normalized_gram(i0, transpose=True)
    return InitState(i0, lam0, a0, b0, d_feat, pad)


def resm(i_prev, a, b, lam, d_feat, p, eta, variant="main"):
    """One image update: learned residual F, its curvature-weighted direction H, then I - eta*H."""
    at, bt = channel_transpose(a), channel_transpose(b)
    e_i = _ep(i_prev, sub(p, "ep_feat"))
    s = _convs(lam + e_i, sub(p, "convs"))
    resid = d_feat - channel_matmul(channel_matmul(a, i_prev), b)
    f = channel_matmul(channel_matmul(at, resid), bt) + _ep(e_i + lam + float(p["wk"]) * s, sub(p, "ep_f"))
    e_f = _ep(f, sub(p, "ep_grad"))
    if variant == "main":
        mask_term = _ep(1.0 - s, sub(p, "ep_mask")) * e_f
    else:
        s_f = _convs(lam + e_f, sub(p, "convs"))
        mask_term = _ep((1.0 - s_f) * e_f, sub(p, "ep_mask"))
    h = channel_matmul(channel_matmul(channel_matmul(at, a), f), channel_matmul(b, bt)) + mask_term
    return i_prev - eta * h


def dmum(i_new, a_prev, b_prev, d_feat, p):
    c = i_new.shape[0]
    t = _ep(np.concatenate([channel_matmul(i_new, b_prev), d_feat]), sub(p, "ep_a"))
    a_new = _normalize(channel_matmul(t[:c], channel_transpose(t[c:])))
    u = _ep(np.concatenate([channel_matmul(a_new, i_new), d_feat]), sub(p, "ep_b"))
    b_new = _normalize(channel_matmul(channel_transpose(u[:c]), u[c:]))
    return a_new, b_new


def mum(lam_prev, i_new, p):
    e = _ep(i_new, sub(p, "ep"))
    return lam_prev + e - _convs(lam_prev + e, sub(p, "convs"))


def restore_residual(model, pixels):
    """Full-resolution residual for a single [1,C,H,W] image (before adding the input)."""
    state = init_unfolded(pixels, model)
    i, lam, a, b = state.I, state.Lambda, state.A, state.B
    eta = model.eta
    for k in range(model.n):
        blk = sub(model.params, f"blocks.{k}")
        i = resm(i, a, b, lam, state.D_feat, sub(blk, "resm"), eta, model.h_variant)
        a, b = dmum(i, a, b, state.D_feat, sub(blk, "dmum"))
        lam = mum(lam, i, sub(blk, "mum"))
    i = resm(i, a, b, lam, state.D_feat, sub(model.params, "final.resm"), eta, model.h_variant)
    residual = conv2d(i[None], model.params["out_proj.weight"], model.params["out_proj.bias"])
    residual = pixel_shuffle(residual, SCALE)
    h, w = pixels.shape[2:]
    return residual[:, :, :h, :w]


def forward(model, degraded):
    """Restore an image (or a [B,3,H,W] batch, sample by sample); output clamped to [0,1]."""
    pixels = degraded.pixels if isinstance(degraded, Image) else as_tensor(degraded)
    if pixels.ndim == 3:
        pixels = pixels[None]
    out = np.concatenate([pixels[k:k + 1] + restore_residual(model, pixels[k:k + 1])
                          for k in range(pixels.shape[0])])
    out = np.clip(out, 0.0, 1.0)
    return Image(out) if isinstance(degraded, Image) else out


def zero_residual(model):
    """Copy of ``model`` whose output head is zero, making ``forward`` the identity."""
    params = dict(model.params)
    params["out_proj.weight"] = np.zeros_like(params["out_proj.weight"])
    params["out_proj.bias"] = np.zeros_like(params["out_proj.bias"])
    return UnfoldedModel(params, model.h_variant)
