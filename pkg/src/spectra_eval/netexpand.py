"""First-convolution weight expansion from 3 RGB input channels to N
multispectral channels, plus a portable binary tensor container.

A pretrained network's first convolution only accepts 3-channel input; to
feed it N-band imagery the kernel's input-channel axis must grow. The three
output channels whose wavelengths match the source RGB keep the learned RGB
weights bit-for-bit; the remaining channels are filled by one of three
strategies: a bitwise copy of the spectrally nearest source channel, a
cyclic copy by channel index, or seeded Gaussian noise scaled to the source
weights' spread.

Container layout (little-endian, no padding): magic "WTNS", u32 version=1,
u32 ndim=4, 4x u32 dims, u32 dtype tag (1 = f32), u32 wavelength count W,
W x f32 wavelengths in nm, then the row-major f32 data.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptTensorFile, InvalidTarget, MissingWavelengths
from .raster import BandInfo

_MAGIC = b"WTNS"
_VERSION = 1
_DTYPE_F32 = 1

STRATEGIES = ("random", "replicate_cyclic", "replicate_nearest_wavelength")
SCALE_MODES = ("none", "divide_by_multiplicity")


@dataclass(frozen=True)
class WeightTensor:
    """A 4-D convolution kernel (out, in, kh, kw) of float32 values with
    optional per-input-channel center wavelengths."""

    values: np.ndarray
    in_channel_wavelengths: tuple[float, ...] | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32)
        if arr.ndim != 4:
            raise ValueError(f"weight tensor must be 4-D, got shape {arr.shape}")
        if any(s < 1 for s in arr.shape):
            raise ValueError(f"all dimensions must be positive, got {arr.shape}")
        object.__setattr__(self, "values", arr)
        if self.in_channel_wavelengths is not None:
            wl = tuple(float(w) for w in self.in_channel_wavelengths)
            if len(wl) != arr.shape[1]:
                raise ValueError(
                    f"{len(wl)} wavelengths for {arr.shape[1]} input channels"
                )
            object.__setattr__(self, "in_channel_wavelengths", wl)
        arr.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(self.values.shape)

    @property
    def in_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ExpansionSpec:
    """How to grow a 3-channel kernel to cover ``target_bands``."""

    strategy: str
    target_bands: tuple[BandInfo, ...]
    seed: int | None = None
    scale_mode: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "target_bands", tuple(self.target_bands))
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {SCALE_MODES}, got {self.scale_mode!r}")
        if self.strategy == "random" and self.seed is None:
            raise ValueError("random strategy needs a seed")


def _channel_map(source_wl: tuple[float, ...], spec: ExpansionSpec) -> list[int | None]:
    """Source channel index each target channel copies, None for random fill.

    Target channels whose wavelength exactly equals a source wavelength are
    pinned to that source channel for every strategy.
    """
    mapping: list[int | None] = []
    for i, band in enumerate(spec.target_bands):
        if band.center_wavelength is None:
            raise MissingWavelengths(f"target band {band.name!r} has no wavelength")
        if band.center_wavelength in source_wl:
            mapping.append(source_wl.index(band.center_wavelength))
        elif spec.strategy == "replicate_nearest_wavelength":
            # Minimal |delta lambda|; ties resolved toward the longer wavelength.
            best = min(
                range(len(source_wl)),
                key=lambda j: (abs(source_wl[j] - band.center_wavelength), -source_wl[j]),
            )
            mapping.append(best)
        elif spec.strategy == "replicate_cyclic":
            mapping.append(i % len(source_wl))
        else:
            mapping.append(None)
    return mapping


def expand(w: WeightTensor, spec: ExpansionSpec) -> WeightTensor:
    """Grow a 3-input-channel kernel to one channel per target band.

    With ``scale_mode="divide_by_multiplicity"`` every group of channels
    copied from one source channel is divided by the group size, preserving
    the per-position sum over input channels; note this scales the pinned
    RGB channels too whenever their source channel was copied more than
    once.
    """
    if w.in_channels != 3:
        raise InvalidTarget(f"source must have 3 input channels, got {w.in_channels}")
    if w.in_channel_wavelengths is None:
        raise MissingWavelengths("source tensor has no input-channel wavelengths")
    if len(spec.target_bands) < 3:
        raise InvalidTarget(f"need at least 3 target bands, got {len(spec.target_bands)}")

    mapping = _channel_map(w.in_channel_wavelengths, spec)
    out_ch, _, kh, kw = w.shape
    out = np.empty((out_ch, len(mapping), kh, kw), dtype=np.float32)

    rng = np.random.default_rng(spec.seed) if spec.strategy == "random" else None
    if rng is not None:
        # One spread for all new channels: the mean per-channel sample std.
        sigma = float(np.mean([w.values[:, j].std(ddof=1) for j in range(3)]))
    for i, src in enumerate(mapping):
        if src is None:
            out[:, i] = (rng.standard_normal((out_ch, kh, kw)) * sigma).astype(np.float32)
        else:
            out[:, i] = w.values[:, src]

    if spec.scale_mode == "divide_by_multiplicity":
        copies = [m for m in mapping if m is not None]
        for i, src in enumerate(mapping):
            if src is not None:
                out[:, i] /= np.float32(copies.count(src))

    wavelengths = tuple(b.center_wavelength for b in spec.target_bands)
    return WeightTensor(out, wavelengths)


def write_tensor(w: WeightTensor, path: str | Path) -> None:
    """Serialize to the WTNS container; the round-trip is bit-exact."""
    wavelengths = w.in_channel_wavelengths or ()
    parts = [
        _MAGIC,
        struct.pack("<II", _VERSION, 4),
        struct.pack("<4I", *w.shape),
        struct.pack("<II", _DTYPE_F32, len(wavelengths)),
        struct.pack(f"<{len(wavelengths)}f", *wavelengths),
        np.ascontiguousarray(w.values, dtype="<f4").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_tensor(path: str | Path) -> WeightTensor:
    data = Path(path).read_bytes()
    if len(data) < 36:
        raise CorruptTensorFile("file shorter than a WTNS header")
    if data[:4] != _MAGIC:
        raise CorruptTensorFile(f"bad magic {data[:4]!r}")
    version, ndim = struct.unpack("<II", data[4:12])
    if version != _VERSION:
        raise CorruptTensorFile(f"unsupported version {version}")
    if ndim != 4:
        raise CorruptTensorFile(f"expected 4 dimensions, got {ndim}")
    dims = struct.unpack("<4I", data[12:28])
    dtype_tag, n_wl = struct.unpack("<II", data[28:36])
    if dtype_tag != _DTYPE_F32:
        raise CorruptTensorFile(f"unsupported dtype tag {dtype_tag}")
    data_offset = 36 + 4 * n_wl
    n_values = int(np.prod(dims))
    expected = data_offset + 4 * n_values
    if len(data) != expected:
        raise CorruptTensorFile(f"file is {len(data)} bytes, layout requires {expected}")
    wavelengths = struct.unpack(f"<{n_wl}f", data[36:data_offset]) if n_wl else None
    values = np.frombuffer(data[data_offset:], dtype="<f4").reshape(dims)
    return WeightTensor(values, wavelengths)
