"""Minimal baseline TIFF reader.

Handles the subset the scene loader needs: classic (non-Big) TIFF, either
byte order, strip- or tile-organized, uncompressed or deflate-compressed,
1 to 16 unsigned samples per pixel at 8 or 16 bits, chunky or planar layout.
Anything else raises :class:`UnsupportedFormat`; structural damage raises
:class:`CorruptRaster`. Only the first image directory is read.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CorruptRaster, UnsupportedFormat

# IFD tag ids
_WIDTH = 256
_HEIGHT = 257
_BITS_PER_SAMPLE = 258
_COMPRESSION = 259
_STRIP_OFFSETS = 273
_SAMPLES_PER_PIXEL = 277
_ROWS_PER_STRIP = 278
_STRIP_BYTE_COUNTS = 279
_PLANAR_CONFIG = 284
_PREDICTOR = 317
_TILE_WIDTH = 322
_TILE_LENGTH = 323
_TILE_OFFSETS = 324
_TILE_BYTE_COUNTS = 325
_SAMPLE_FORMAT = 339

_TYPE_SIZES = {1: 1, 3: 2, 4: 4}  # BYTE, SHORT, LONG
_TYPE_CODES = {1: "B", 3: "H", 4: "I"}

_NO_COMPRESSION = 1
_DEFLATE_ADOBE = 8
_DEFLATE_OLD = 32946


def _read_exact(data: bytes, offset: int, size: int) -> bytes:
    if offset < 0 or offset + size > len(data):
        raise CorruptRaster(f"read of {size} bytes at offset {offset} passes end of file")
    return data[offset : offset + size]


def _read_entry_values(data, order, vtype, count, raw):
    """Decode one IFD entry's value array (inline when it fits in 4 bytes)."""
    if vtype not in _TYPE_SIZES:
        raise UnsupportedFormat(f"unsupported IFD value type {vtype}")
    size = _TYPE_SIZES[vtype] * count
    if size <= 4:
        payload = raw[:size]
    else:
        (offset,) = struct.unpack(order + "I", raw)
        payload = _read_exact(data, offset, size)
    return struct.unpack(f"{order}{count}{_TYPE_CODES[vtype]}", payload)


def _parse_ifd(data: bytes, order: str, ifd_offset: int) -> dict[int, tuple[int, ...]]:
    (n_entries,) = struct.unpack(order + "H", _read_exact(data, ifd_offset, 2))
    tags: dict[int, tuple[int, ...]] = {}
    for i in range(n_entries):
        raw = _read_exact(data, ifd_offset + 2 + 12 * i, 12)
        tag, vtype, count = struct.unpack(order + "HHI", raw[:8])
        tags[tag] = _read_entry_values(data, order, vtype, count, raw[8:])
    return tags


def _single(tags, tag, default=None):
    if tag not in tags:
        if default is None:
            raise CorruptRaster(f"required TIFF tag {tag} missing")
        return default
    return tags[tag][0]


def _decompress(chunk: bytes, compression: int) -> bytes:
    if compression == _NO_COMPRESSION:
        return chunk
    try:
        return zlib.decompress(chunk)
    except zlib.error as exc:
        raise CorruptRaster(f"bad deflate stream: {exc}") from None


def read_tiff(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a baseline TIFF into a (bands, height, width) uint16 array.

    Returns the array and the file's bits-per-sample (8 or 16).
    """
    if len(data) < 8:
        raise CorruptRaster("file shorter than a TIFF header")
    if data[:2] == b"II":
        order = "<"
    elif data[:2] == b"MM":
        order = ">"
    else:
        raise UnsupportedFormat("not a TIFF file (bad byte-order mark)")
    (magic,) = struct.unpack(order + "H", data[2:4])
    if magic == 43:
        raise UnsupportedFormat("BigTIFF is not supported")
    if magic != 42:
        raise UnsupportedFormat(f"bad TIFF magic number {magic}")
    (ifd_offset,) = struct.unpack(order + "I", data[4:8])
    tags = _parse_ifd(data, order, ifd_offset)

    width = _single(tags, _WIDTH)
    height = _single(tags, _HEIGHT)
    if width < 1 or height < 1:
        raise CorruptRaster(f"bad image dimensions {width}x{height}")
    spp = _single(tags, _SAMPLES_PER_PIXEL, default=1)
    if not 1 <= spp <= 16:
        raise UnsupportedFormat(f"{spp} samples per pixel outside supported 1..16")

    bits_values = tags.get(_BITS_PER_SAMPLE, (8,) * spp)
    if len(set(bits_values)) != 1:
        raise UnsupportedFormat("mixed per-band bit depths are not supported")
    bits = bits_values[0]
    if bits not in (8, 16):
        raise UnsupportedFormat(f"{bits} bits per sample (only 8 and 16 supported)")

    for fmt in tags.get(_SAMPLE_FORMAT, (1,)):
        if fmt != 1:
            raise UnsupportedFormat("only unsigned integer samples are supported")
    compression = _single(tags, _COMPRESSION, default=1)
    if compression not in (_NO_COMPRESSION, _DEFLATE_ADOBE, _DEFLATE_OLD):
        raise UnsupportedFormat(f"compression scheme {compression} not supported")
    if _single(tags, _PREDICTOR, default=1) != 1:
        raise UnsupportedFormat("TIFF predictors are not supported")
    planar = _single(tags, _PLANAR_CONFIG, default=1)
    if planar not in (1, 2):
        raise UnsupportedFormat(f"planar configuration {planar} not supported")

    sample_dtype = np.dtype(order + ("u1" if bits == 8 else "u2"))

    if _TILE_OFFSETS in tags:
        arr = _read_tiled(data, tags, order, width, height, spp, planar, compression, sample_dtype)
    elif _STRIP_OFFSETS in tags:
        arr = _read_striped(data, tags, order, width, height, spp, planar, compression, sample_dtype)
    else:
        raise CorruptRaster("no strip or tile offsets present")
    return arr.astype(np.uint16), bits


def _chunks(data, offsets, byte_counts, compression, expected_n):
    if len(offsets) != expected_n or len(byte_counts) != expected_n:
        raise CorruptRaster(
            f"expected {expected_n} data chunks, found {len(offsets)} offsets "
            f"and {len(byte_counts)} byte counts"
        )
    for off, cnt in zip(offsets, byte_counts):
        yield _decompress(_read_exact(data, off, cnt), compression)


def _samples(chunk: bytes, n: int, dtype) -> np.ndarray:
    need = n * dtype.itemsize
    if len(chunk) < need:
        raise CorruptRaster(f"data chunk holds {len(chunk)} bytes, {need} needed")
    return np.frombuffer(chunk[:need], dtype=dtype)


def _read_striped(data, tags, order, width, height, spp, planar, compression, dtype):
    rps = min(_single(tags, _ROWS_PER_STRIP, default=height), height)
    strips_per_plane = -(-height // rps)
    n_planes = spp if planar == 2 else 1
    row_samples = width * (1 if planar == 2 else spp)

    out = np.empty((spp, height, width), dtype=dtype)
    chunks = _chunks(
        data, tags[_STRIP_OFFSETS], _single_or_tuple(tags, _STRIP_BYTE_COUNTS),
        compression, strips_per_plane * n_planes,
    )
    for plane in range(n_planes):
        for s in range(strips_per_plane):
            y0 = s * rps
            rows = min(rps, height - y0)
            flat = _samples(next(chunks), rows * row_samples, dtype)
            if planar == 2:
                out[plane, y0 : y0 + rows] = flat.reshape(rows, width)
            else:
                block = flat.reshape(rows, width, spp)
                out[:, y0 : y0 + rows] = np.moveaxis(block, 2, 0)
    return out


def _read_tiled(data, tags, order, width, height, spp, planar, compression, dtype):
    tw = _single(tags, _TILE_WIDTH)
    th = _single(tags, _TILE_LENGTH)
    if tw < 1 or th < 1:
        raise CorruptRaster(f"bad tile dimensions {tw}x{th}")
    across = -(-width // tw)
    down = -(-height // th)
    n_planes = spp if planar == 2 else 1
    tile_samples = tw * th * (1 if planar == 2 else spp)

    out = np.empty((spp, height, width), dtype=dtype)
    chunks = _chunks(
        data, tags[_TILE_OFFSETS], _single_or_tuple(tags, _TILE_BYTE_COUNTS),
        compression, across * down * n_planes,
    )
    for plane in range(n_planes):
        for ty in range(down):
            for tx in range(across):
                flat = _samples(next(chunks), tile_samples, dtype)
                y0, x0 = ty * th, tx * tw
                h = min(th, height - y0)
                w = min(tw, width - x0)
                if planar == 2:
                    tile = flat.reshape(th, tw)
                    out[plane, y0 : y0 + h, x0 : x0 + w] = tile[:h, :w]
                else:
                    tile = flat.reshape(th, tw, spp)
                    out[:, y0 : y0 + h, x0 : x0 + w] = np.moveaxis(tile[:h, :w], 2, 0)
    return out


def _single_or_tuple(tags, tag):
    if tag not in tags:
        raise CorruptRaster(f"required TIFF tag {tag} missing")
    return tags[tag]
