"""Synthetic haze / rain / noise generators and the factored degradation model."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidSpecError
from .imaging import Image
from .tensor import as_tensor, channel_matmul

HAZE_MAX = 150.0
RAIN_MAX = 300.0
NOISE_MAX = 50.0

ATMOSPHERIC_LIGHT = 0.9
HAZE_DENSITY = 2.0  # optical depth at the maximum haze level

STREAK_LENGTH = (8.0, 24.0)
STREAK_ANGLE_DEG = (60.0, 120.0)
STREAK_INTENSITY = (0.15, 0.4)


def _check_level(name, value, hi):
    if not (0.0 <= value <= hi) or math.isnan(value):
        raise InvalidSpecError(f"{name} level {value} outside [0, {hi:g}]")


@dataclass(frozen=True)
class DegradationSpec:
    haze_level: float = 0.0
    rain_level: float = 0.0
    noise_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        _check_level("haze", self.haze_level, HAZE_MAX)
        _check_level("rain", self.rain_level, RAIN_MAX)
        _check_level("noise", self.noise_level, NOISE_MAX)
        if not 0 <= self.seed < 2**64:
            raise InvalidSpecError(f"seed {self.seed} is not a 64-bit unsigned integer")

    def stage_seeds(self):
        """Independent 64-bit seeds for the haze, rain and noise stages."""
        state = np.random.SeedSequence(self.seed).generate_state(3, dtype=np.uint64)
        return tuple(int(s) for s in state)


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def apply_noise(image, sigma_8bit, seed):
    _check_level("noise", sigma_8bit, NOISE_MAX)
    if sigma_8bit == 0:
        return image.copy()
    noise = _rng(seed).standard_normal(image.pixels.shape) * (sigma_8bit / 255.0)
    return Image(np.clip(image.pixels + noise, 0.0, 1.0))


def _streak_layer(h, w, rng, count):
    layer = np.zeros((h, w))
    for _ in range(count):
        length = rng.uniform(*STREAK_LENGTH)
        angle = math.radians(rng.uniform(*STREAK_ANGLE_DEG))
        intensity = rng.uniform(*STREAK_INTENSITY)
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        dy, dx = math.sin(angle) * length / 2, math.cos(angle) * length / 2
        y0, x0, y1, x1 = cy - dy, cx - dx, cy + dy, cx + dx
        top, bottom = max(int(math.floor(min(y0, y1))) - 1, 0), min(int(math.ceil(max(y0, y1))) + 2, h)
        left, right = max(int(math.floor(min(x0, x1))) - 1, 0), min(int(math.ceil(max(x0, x1))) + 2, w)
        if top >= bottom or left >= right:
            continue
        py, px = np.mgrid[top:bottom, left:right].astype(np.float64)
        # distance from each pixel centre to the segment, coverage falls off over one pixel
        vy, vx = y1 - y0, x1 - x0
        s = np.clip(((py - y0) * vy + (px - x0) * vx) / (vy * vy + vx * vx), 0.0, 1.0)
        dist = np.hypot(py - (y0 + s * vy), px - (x0 + s * vx))
        layer[top:bottom, left:right] += intensity * np.clip(1.0 - dist, 0.0, 1.0)
    return layer


def apply_rain(image, level, seed):
    """Superimpose ``round(level)`` anti-aliased bright streaks."""
    _check_level("rain", level, RAIN_MAX)
    count = int(math.floor(level + 0.5))
    if count == 0:
        return image.copy()
    h, w = image.shape
    layer = _streak_layer(h, w, _rng(seed), count)
    return Image(np.clip(image.pixels + layer[None, None], 0.0, 1.0))


def haze_transmission(level):
    return math.exp(-level / HAZE_MAX * HAZE_DENSITY)


def apply_haze(image, level, seed=None):
    """Uniform-transmission atmospheric scattering; ``seed`` is unused for now."""
    _check_level("haze", level, HAZE_MAX)
    if level == 0:
        return image.copy()
    t = haze_transmission(level)
    return Image(image.pixels * t + ATMOSPHERIC_LIGHT * (1.0 - t))


def apply_factored_degradation(image_chan, a, b, noise):
    """Per-channel ``A @ I @ B + N``."""
    image_chan, a, b, noise = (as_tensor(t) for t in (image_chan, a, b, noise))
    if image_chan.ndim != 3:
        raise DimensionError(f"image must be [C,H,W], got {image_chan.shape}", axis="rank")
    c, h, w = image_chan.shape
    if a.shape != (c, h, h):
        raise DimensionError(f"A must be {(c, h, h)}, got {a.shape}", axis="height")
    if b.shape != (c, w, w):
        raise DimensionError(f"B must be {(c, w, w)}, got {b.shape}", axis="width")
    if noise.shape != image_chan.shape:
        raise DimensionError(f"noise must be {image_chan.shape}, got {noise.shape}", axis="shape")
    return channel_matmul(channel_matmul(a, image_chan), b) + noise


def make_test_case(clean, spec):
    """Apply haze, then rain, then noise; zero levels skip their stage."""
    haze_seed, rain_seed, noise_seed = spec.stage_seeds()
    out = clean
    if spec.haze_level > 0:
        out = apply_haze(out, spec.haze_level, haze_seed)
    if spec.rain_level > 0:
        out = apply_rain(out, spec.rain_level, rain_seed)
    if spec.noise_level > 0:
        out = apply_noise(out, spec.noise_level, noise_seed)
    return out.copy() if out is clean else out


def format_manifest_line(clean_path, degraded_path, spec):
    return "\t".join([str(clean_path), str(degraded_path), f"{spec.haze_level:g}",
                      f"{spec.rain_level:g}", f"{spec.noise_level:g}", str(spec.seed)])


def parse_manifest(text):
    """Rows of (clean_path, degraded_path, DegradationSpec or None)."""
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        cols = line.split("\t")
        spec = None
        if len(cols) >= 6:
            spec = DegradationSpec(float(cols[2]), float(cols[3]), float(cols[4]), int(cols[5]))
        rows.append((cols[0], cols[1] if len(cols) > 1 else "", spec))
    return rows


def synthetic_scene(h, w, seed=0, channels=3):
    """Piecewise-smooth test image: colour ramps, a rectangle and a disc, on the 8-bit grid."""
    rng = _rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / np.array([max(h - 1, 1), max(w - 1, 1)])[:, None, None]
    planes = []
    for _ in range(channels):
        a, b, c = rng.uniform(0.1, 0.4, size=3)
        planes.append(a + b * xx + c * yy)
    img = np.stack(planes)
    r0, c0 = int(h * rng.uniform(0.1, 0.3)), int(w * rng.uniform(0.1, 0.3))
    img[:, r0:r0 + h // 3, c0:c0 + w // 3] += rng.uniform(0.2, 0.4, size=(channels, 1, 1))
    cy, cx, rad = rng.uniform(0.4, 0.7), rng.uniform(0.4, 0.7), rng.uniform(0.15, 0.25)
    disc = (yy - cy) ** 2 + (xx - cx) ** 2 < rad ** 2
    img[:, disc] = rng.uniform(0.0, 1.0, size=(channels, 1))
    return Image(np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5)[None] / 255.0)
