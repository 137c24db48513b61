"""8-bit binary netpbm (P5/P6) I/O and luma conversion."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidChannelError, ParseError, UnsupportedFormatError

_WHITESPACE = b" \t\n\r\x0b\x0c"


@dataclass
class Image:
    """Pixels in [0, 1], shape [1, C, H, W] with C in {1, 3}."""

    pixels: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim == 3:
            self.pixels = self.pixels[None]
        if self.pixels.ndim != 4 or self.pixels.shape[0] != 1 or self.pixels.shape[1] not in (1, 3):
            raise InvalidChannelError(f"image tensor must be [1,1|3,H,W], got {self.pixels.shape}")

    @property
    def channels(self):
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape[2:]

    def copy(self):
        return Image(self.pixels.copy())


def _read_token(data, pos):
    # skip whitespace and comments, then read one header token
    n = len(data)
    while pos < n:
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of header", start)
    return data[start:pos], start, pos


def decode_netpbm(data):
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise ParseError("bad magic, expected P5 or P6", 0)
    channels = 3 if data[:2] == b"P6" else 1
    pos = 2
    values = []
    for label in ("width", "height", "maxval"):
        if pos >= len(data) or data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            raise ParseError(f"expected whitespace before {label}", pos)
        token, start, pos = _read_token(data, pos)
        if not token.isdigit():
            raise ParseError(f"invalid {label} {token!r}", start)
        values.append(int(token))
    width, height, maxval = values
    if width < 1 or height < 1:
        raise ParseError("image extents must be positive", 2)
    if maxval != 255:
        raise UnsupportedFormatError(f"maxval {maxval} unsupported, only 255")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise ParseError("expected single whitespace after maxval", pos)
    pos += 1
    expected = width * height * channels
    if len(data) - pos < expected:
        raise ParseError(f"truncated raster: need {expected} bytes, have {len(data) - pos}", len(data))
    raster = np.frombuffer(data, dtype=np.uint8, count=expected, offset=pos)
    pixels = raster.reshape(height, width, channels).transpose(2, 0, 1)[None] / 255.0
    return Image(pixels)


def quantize(pixels):
    """Clamp to [0,1] and round half away from zero onto the 8-bit grid."""
    scaled = np.clip(pixels, 0.0, 1.0) * 255.0
    return np.floor(scaled + 0.5).astype(np.uint8)


def encode_netpbm(image):
    c = image.channels
    h, w = image.shape
    magic = b"P6" if c == 3 else b"P5"
    raster = quantize(image.pixels[0]).transpose(1, 2, 0)
    return magic + b"\n%d %d\n255\n" % (w, h) + raster.tobytes()


def load_ppm(path):
    return decode_netpbm(Path(path).read_bytes())


def save_ppm(image, path):
    Path(path).write_bytes(encode_netpbm(image))


def rgb_to_y(image):
    """BT.601 studio-range luma on [0,1] inputs, shape [1,1,H,W]."""
    px = image.pixels if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    if px.ndim == 3:
        px = px[None]
    if px.shape[1] != 3:
        raise InvalidChannelError(f"luma conversion needs 3 channels, got {px.shape[1]}")
    r, g, b = px[:, 0:1], px[:, 1:2], px[:, 2:3]
    return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0
