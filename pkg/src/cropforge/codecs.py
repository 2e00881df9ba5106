"""Image codecs: PNG/JPEG decoding and deterministic PNG encoding.

Decoding maps 8-bit samples to [0, 1] by v/255 and 16-bit by v/65535;
grayscale sources are replicated to three channels; alpha channels are
dropped (no compositing). PNG streams are structurally validated chunk by
chunk before pixel decoding so malformed files fail with the byte offset and
reason. Encoding always produces PNG (color type 2, filter 0, fixed zlib
level), so identical buffers encode to identical bytes.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import cv2
import numpy as np
from PIL import Image, ImageFile
from io import BytesIO

from .buffer import ImageBuffer
from .errors import DecodeError, UnsupportedFormatError

__all__ = ["decode_image", "encode_image", "decode_file", "write_image"]

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_JPEG_SIG = b"\xff\xd8"

# color type -> set of legal bit depths (PNG 1.2, section 4.1.1)
_PNG_DEPTHS = {
    0: {1, 2, 4, 8, 16},
    2: {8, 16},
    3: {1, 2, 4, 8},
    4: {8, 16},
    6: {8, 16},
}


def _validate_png(data: bytes) -> None:
    """Walk the chunk stream; raise DecodeError naming offset and reason."""
    n = len(data)
    pos = 8
    first = True
    seen_idat = False
    seen_iend = False
    while pos < n:
        if n - pos < 8:
            raise DecodeError(
                f"PNG chunk header truncated at offset {pos} "
                f"(need 8 bytes, have {n - pos})"
            )
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        ctype = data[pos + 4 : pos + 8]
        if length > 0x7FFFFFFF:
            raise DecodeError(f"PNG chunk at offset {pos} has invalid length {length}")
        if not all(65 <= b <= 90 or 97 <= b <= 122 for b in ctype):
            raise DecodeError(
                f"PNG chunk at offset {pos} has invalid type bytes {ctype!r}"
            )
        end = pos + 8 + length + 4
        if end > n:
            raise DecodeError(
                f"PNG chunk {ctype.decode('ascii')!r} at offset {pos} truncated "
                f"(needs {end - pos} bytes, stream has {n - pos})"
            )
        body = data[pos + 8 : pos + 8 + length]
        (crc_stored,) = struct.unpack(">I", data[pos + 8 + length : end])
        crc_actual = zlib.crc32(ctype + body) & 0xFFFFFFFF
        if crc_stored != crc_actual:
            raise DecodeError(
                f"PNG chunk {ctype.decode('ascii')!r} at offset {pos} fails CRC "
                f"check (stored {crc_stored:#010x}, computed {crc_actual:#010x})"
            )
        if first:
            if ctype != b"IHDR" or length != 13:
                raise DecodeError(
                    f"PNG first chunk at offset {pos} must be IHDR of length 13, "
                    f"got {ctype.decode('ascii', 'replace')!r} of length {length}"
                )
            width, height, depth, color, comp, filt, interlace = struct.unpack(
                ">IIBBBBB", body
            )
            if width == 0 or height == 0:
                raise DecodeError(
                    f"PNG IHDR declares empty image {width}x{height} (offset {pos})"
                )
            if color not in _PNG_DEPTHS or depth not in _PNG_DEPTHS[color]:
                raise DecodeError(
                    f"PNG IHDR has illegal depth/color combination "
                    f"{depth}/{color} (offset {pos})"
                )
            if comp != 0 or filt != 0 or interlace > 1:
                raise DecodeError(
                    f"PNG IHDR has unknown compression/filter/interlace "
                    f"{comp}/{filt}/{interlace} (offset {pos})"
                )
            first = False
        elif ctype == b"IDAT":
            seen_idat = True
        elif ctype == b"IEND":
            seen_iend = True
            break
        pos = end
    if first:
        raise DecodeError("PNG stream ends before any chunk (offset 8)")
    if not seen_idat:
        raise DecodeError("PNG stream has no IDAT chunk")
    if not seen_iend:
        raise DecodeError(f"PNG stream ends at offset {n} without IEND")


def _to_unit_planes(pixels: np.ndarray) -> np.ndarray:
    """uint8/uint16 (H,W[,C]) channels-last RGB(A)/gray -> float32 (3,H,W)."""
    if pixels.dtype == np.uint8:
        scale = np.float32(1.0 / 255.0)
    elif pixels.dtype == np.uint16:
        scale = np.float32(1.0 / 65535.0)
    else:
        raise DecodeError(f"unsupported decoded sample type {pixels.dtype}")
    if pixels.ndim == 2:
        plane = pixels.astype(np.float32) * scale
        return np.stack([plane, plane, plane])
    rgb = pixels[:, :, :3].astype(np.float32) * scale
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def _decode_png(data: bytes) -> ImageBuffer:
    _validate_png(data)
    raw = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DecodeError("PNG pixel data is undecodable despite valid chunk layout")
    if raw.ndim == 3:
        # BGR(A) -> RGB(A) channel order
        if raw.shape[2] >= 3:
            raw = raw[:, :, [2, 1, 0] + ([3] if raw.shape[2] == 4 else [])]
    return ImageBuffer(_to_unit_planes(raw))


def _decode_jpeg(data: bytes) -> ImageBuffer:
    prior = ImageFile.LOAD_TRUNCATED_IMAGES
    ImageFile.LOAD_TRUNCATED_IMAGES = False
    try:
        with Image.open(BytesIO(data)) as im:
            im.load()
            rgb = np.asarray(im.convert("RGB"))
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"JPEG stream is malformed: {exc}") from exc
    finally:
        ImageFile.LOAD_TRUNCATED_IMAGES = prior
    return ImageBuffer(_to_unit_planes(rgb))


def decode_image(data: bytes) -> ImageBuffer:
    """Decode a PNG or JPEG byte stream to a unit-range RGB buffer."""
    if data.startswith(_PNG_SIG):
        return _decode_png(data)
    if data.startswith(_JPEG_SIG):
        return _decode_jpeg(data)
    head = data[:8]
    raise UnsupportedFormatError(
        f"unsupported image format (leading bytes {head!r}); expected PNG or JPEG"
    )


def decode_file(path: str | Path) -> ImageBuffer:
    """Read and decode one file, adding the path to any decode error."""
    path = Path(path)
    data = path.read_bytes()
    try:
        return decode_image(data)
    except DecodeError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def _chunk(tag: bytes, body: bytes) -> bytes:
    return (
        struct.pack(">I", len(body))
        + tag
        + body
        + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)
    )


def encode_image(img: ImageBuffer, bit_depth: int = 8) -> bytes:
    """Encode to PNG (color type 2). Quantization is floor(v*(2^d - 1) + 0.5)."""
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    peak = (1 << bit_depth) - 1
    quant = np.floor(img.planes.astype(np.float64) * peak + 0.5)
    hwc = quant.transpose(1, 2, 0)
    if bit_depth == 8:
        rows = hwc.astype(np.uint8)
    else:
        rows = hwc.astype(np.uint16).astype(">u2")
    h, w = img.height, img.width
    raw = np.zeros((h, w * 3 * (bit_depth // 8) + 1), dtype=np.uint8)
    raw[:, 1:] = rows.reshape(h, -1).view(np.uint8)
    ihdr = struct.pack(">IIBBBBB", w, h, bit_depth, 2, 0, 0, 0)
    idat = zlib.compress(raw.tobytes(), 6)
    return _PNG_SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat) + _chunk(b"IEND", b"")


def write_image(path: str | Path, img: ImageBuffer, bit_depth: int = 8) -> None:
    """Encode and write atomically (write to temp name, then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_image(img, bit_depth))
    tmp.replace(path)
