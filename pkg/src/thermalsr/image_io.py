"""Canonical image representation and lossless I/O.

Images are carried as integer sample grids with an explicit bit depth so
quantization stays exact; metric code converts to real values at its own
boundary.  Supported on disk: 8/16-bit grayscale or RGB PNG and binary
(P5) PGM.  Lossy formats are deliberately unsupported: re-encoding would
contaminate degradation studies.

The PNG codec here is intentionally minimal (non-interlaced, color types
0 and 2, bit depths 8 and 16).  Pillow cannot round-trip 48-bit RGB PNG
without silently truncating to 8 bits, which is exactly the failure mode
this toolkit cannot afford, so we read and write the subset ourselves.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class FormatError(ValueError):
    """Raised for unsupported or corrupt image files."""


@dataclass(frozen=True)
class ImageBuffer:
    """Immutable H x W x C integer sample grid with explicit bit depth.

    samples is a read-only numpy array of shape (height, width, channels),
    dtype uint8 or uint16.  Every sample must lie in [0, 2**bit_depth - 1].
    """

    width: int
    height: int
    channels: int
    bit_depth: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"empty image: {self.width}x{self.height}")
        arr = np.asarray(self.samples)
        expected = (self.height, self.width, self.channels)
        if arr.shape != expected:
            raise ValueError(f"samples shape {arr.shape} != {expected}")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        if arr.dtype != dtype:
            if arr.min(initial=0) < 0 or arr.max(initial=0) > self.max_value:
                raise ValueError("sample out of range for declared bit depth")
            arr = arr.astype(dtype)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def value_range(self) -> tuple[int, int]:
        return (0, self.max_value)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    @classmethod
    def from_array(cls, arr: np.ndarray, bit_depth: int) -> "ImageBuffer":
        """Build a buffer from an (H, W) or (H, W, C) integer array."""
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected 2-D or 3-D array, got shape {arr.shape}")
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, bit_depth=bit_depth, samples=arr)

    def to_float(self) -> np.ndarray:
        """Samples as float64, still on the integer scale [0, max_value]."""
        return self.samples.astype(np.float64)

    def to_unit(self) -> np.ndarray:
        """Samples as float64 scaled to the unit interval [0, 1]."""
        return self.samples.astype(np.float64) / self.max_value

    def with_samples(self, arr: np.ndarray) -> "ImageBuffer":
        """Same geometry and depth, new sample values."""
        return ImageBuffer.from_array(arr, self.bit_depth)


@dataclass(frozen=True)
class PixelStats:
    """Per-channel extrema (v_min, v_max)."""

    channel_index: int
    min_value: int
    max_value: int

    def __post_init__(self):
        if self.min_value > self.max_value:
            raise ValueError(f"min {self.min_value} > max {self.max_value}")


def channel_stats(img: ImageBuffer) -> list[PixelStats]:
    """Exact per-channel minimum and maximum sample values."""
    out = []
    for c in range(img.channels):
        ch = img.samples[:, :, c]
        out.append(PixelStats(channel_index=c, min_value=int(ch.min()), max_value=int(ch.max())))
    return out


def crop_to_multiple(img: ImageBuffer, factor: int) -> ImageBuffer:
    """Top-left crop to the largest width/height multiples of factor.

    Top-left (not center) keeps the crop deterministic with no extra
    parameters, so LR/HR pairs built from the same source stay aligned.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    w = (img.width // factor) * factor
    h = (img.height // factor) * factor
    if w == 0 or h == 0:
        raise ValueError(f"image {img.width}x{img.height} smaller than factor {factor}")
    if w == img.width and h == img.height:
        return img
    return ImageBuffer.from_array(img.samples[:h, :w, :], img.bit_depth)


# ---------------------------------------------------------------------------
# PNG

def _png_chunks(data: bytes):
    pos = len(_PNG_SIGNATURE)
    while pos < len(data):
        if pos + 8 > len(data):
            raise FormatError("truncated PNG chunk header")
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        ctype = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        if len(body) != length:
            raise FormatError("truncated PNG chunk body")
        (crc,) = struct.unpack(">I", data[pos + 8 + length:pos + 12 + length])
        if zlib.crc32(ctype + body) & 0xFFFFFFFF != crc:
            raise FormatError(f"bad CRC in {ctype!r} chunk")
        yield ctype, body
        pos += 12 + length
        if ctype == b"IEND":
            return
    raise FormatError("missing IEND chunk")


def _unfilter_scanlines(raw: bytes, width: int, height: int, channels: int, bit_depth: int) -> np.ndarray:
    bpp = channels * bit_depth // 8
    stride = width * bpp
    if len(raw) != height * (stride + 1):
        raise FormatError("decompressed PNG data has wrong length")
    out = np.empty(height * stride, dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    pos = 0
    for y in range(height):
        ftype = raw[pos]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).copy()
        pos += stride + 1
        if ftype == 0:
            pass
        elif ftype == 1:  # Sub: prefix sum per byte lane
            line = line.reshape(-1, bpp).cumsum(axis=0, dtype=np.uint64).astype(np.uint8).reshape(-1)
        elif ftype == 2:  # Up
            line += prev
        elif ftype == 3:  # Average
            for i in range(stride):
                left = int(line[i - bpp]) if i >= bpp else 0
                line[i] = (int(line[i]) + (left + int(prev[i])) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            for i in range(stride):
                a = int(line[i - bpp]) if i >= bpp else 0
                b = int(prev[i])
                c = int(prev[i - bpp]) if i >= bpp else 0
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                if pa <= pb and pa <= pc:
                    pred = a
                elif pb <= pc:
                    pred = b
                else:
                    pred = c
                line[i] = (int(line[i]) + pred) & 0xFF
        else:
            raise FormatError(f"unknown PNG filter type {ftype}")
        out[y * stride:(y + 1) * stride] = line
        prev = line
    if bit_depth == 16:
        arr = out.reshape(height, width, channels, 2)
        return (arr[..., 0].astype(np.uint16) << 8) | arr[..., 1]
    return out.reshape(height, width, channels)


def _load_png(data: bytes) -> ImageBuffer:
    header = None
    idat = bytearray()
    for ctype, body in _png_chunks(data):
        if ctype == b"IHDR":
            if len(body) != 13:
                raise FormatError("corrupt IHDR")
            header = struct.unpack(">IIBBBBB", body)
        elif ctype == b"IDAT":
            idat.extend(body)
        elif ctype == b"PLTE":
            raise FormatError("palette PNG not supported")
    if header is None:
        raise FormatError("missing IHDR")
    width, height, depth, color, comp, filt, interlace = header
    if comp != 0 or filt != 0:
        raise FormatError("corrupt header: bad compression/filter method")
    if interlace != 0:
        raise FormatError("interlaced PNG not supported")
    if color not in (0, 2) or depth not in (8, 16):
        raise FormatError(f"unsupported PNG: color type {color}, bit depth {depth}")
    if width == 0 or height == 0:
        raise FormatError("corrupt header: zero dimension")
    channels = 1 if color == 0 else 3
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise FormatError(f"corrupt PNG image data: {exc}") from exc
    arr = _unfilter_scanlines(raw, width, height, channels, depth)
    return ImageBuffer(width=width, height=height, channels=channels, bit_depth=depth, samples=arr)


def _png_header(path_data: bytes) -> tuple[int, int, int, int]:
    """(width, height, channels, bit_depth) from the IHDR without decoding."""
    if len(path_data) < 33 or path_data[12:16] != b"IHDR":
        raise FormatError("corrupt PNG header")
    width, height, depth, color = struct.unpack(">IIBB", path_data[16:26])
    if color not in (0, 2) or depth not in (8, 16):
        raise FormatError(f"unsupported PNG: color type {color}, bit depth {depth}")
    return width, height, 1 if color == 0 else 3, depth


def _save_png(img: ImageBuffer) -> bytes:
    arr = img.samples
    if img.bit_depth == 16:
        raw_rows = np.empty((img.height, img.width * img.channels * 2), dtype=np.uint8)
        flat = arr.reshape(img.height, -1)
        raw_rows[:, 0::2] = (flat >> 8).astype(np.uint8)
        raw_rows[:, 1::2] = (flat & 0xFF).astype(np.uint8)
    else:
        raw_rows = arr.reshape(img.height, -1)
    stride = raw_rows.shape[1]
    filtered = np.zeros((img.height, stride + 1), dtype=np.uint8)
    filtered[:, 1:] = raw_rows
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, img.bit_depth,
                       0 if img.channels == 1 else 2, 0, 0, 0)

    def chunk(ctype: bytes, body: bytes) -> bytes:
        return (struct.pack(">I", len(body)) + ctype + body
                + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF))

    return (_PNG_SIGNATURE
            + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(filtered.tobytes(), 6))
            + chunk(b"IEND", b""))


# ---------------------------------------------------------------------------
# PGM (binary P5)

def _parse_pgm_header(data: bytes) -> tuple[int, int, int, int]:
    """Returns (width, height, maxval, data offset)."""
    if not data.startswith(b"P5"):
        raise FormatError("not a binary PGM file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError("truncated PGM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise FormatError("truncated PGM comment")
            pos = nl + 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            end = pos
            while end < len(data) and data[end:end + 1].isdigit():
                end += 1
            fields.append(int(data[pos:end]))
            pos = end
        else:
            raise FormatError("corrupt PGM header")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("corrupt PGM header")
    pos += 1  # single whitespace separates header from raster
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError("corrupt PGM header")
    return width, height, maxval, pos


def _load_pgm(data: bytes) -> ImageBuffer:
    width, height, maxval, pos = _parse_pgm_header(data)
    depth = 8 if maxval < 256 else 16
    dtype = np.dtype(">u2") if depth == 16 else np.uint8
    count = width * height
    raster = data[pos:pos + count * dtype.itemsize]
    if len(raster) != count * dtype.itemsize:
        raise FormatError("truncated PGM raster")
    arr = np.frombuffer(raster, dtype=dtype).astype(np.uint16 if depth == 16 else np.uint8)
    if int(arr.max(initial=0)) > maxval:
        raise FormatError(f"sample exceeds declared maxval {maxval}")
    return ImageBuffer(width=width, height=height, channels=1, bit_depth=depth,
                       samples=arr.reshape(height, width, 1))


def _save_pgm(img: ImageBuffer) -> bytes:
    if img.channels != 1:
        raise FormatError("PGM supports only single-channel images")
    header = f"P5\n{img.width} {img.height}\n{img.max_value}\n".encode()
    arr = img.samples[:, :, 0]
    if img.bit_depth == 16:
        return header + arr.astype(">u2").tobytes()
    return header + arr.tobytes()


# ---------------------------------------------------------------------------
# Public I/O

def load_image(path: str | os.PathLike) -> ImageBuffer:
    """Load an 8/16-bit PNG or binary PGM file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data.startswith(_PNG_SIGNATURE):
        return _load_png(data)
    if data.startswith(b"P5"):
        return _load_pgm(data)
    raise FormatError(f"unsupported image format: {os.fspath(path)}")


def save_image(img: ImageBuffer, path: str | os.PathLike) -> None:
    """Write PNG or PGM, chosen by file extension (.png / .pgm).

    The file is written to a temporary sibling and renamed into place, so a
    failed save never leaves a partial file at the target path.
    """
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        payload = _save_png(img)
    elif ext == ".pgm":
        payload = _save_pgm(img)
    else:
        raise FormatError(f"unsupported output extension: {ext!r} (use .png or .pgm)")
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_header(path: str | os.PathLike) -> tuple[int, int, int, int]:
    """(width, height, channels, bit_depth) without decoding the raster."""
    with open(path, "rb") as fh:
        head = fh.read(4096)
    if head.startswith(_PNG_SIGNATURE):
        return _png_header(head)
    if head.startswith(b"P5"):
        width, height, maxval, _ = _parse_pgm_header(head)
        return width, height, 1, (8 if maxval < 256 else 16)
    raise FormatError(f"unsupported image format: {os.fspath(path)}")
