"""Multi-band high-bit-depth raster scenes: loading, requantization,
rescaling, and band composition.

Satellite products often ship 11- or 13-bit data inside 16-bit TIFF
containers, so the declared bit depth of a loaded scene is inferred from the
largest sample unless the caller overrides it. All operations are pure:
images are immutable after construction and every function returns a new
image, so scenes can be processed in parallel without shared state.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._tiff import read_tiff
from .errors import BandNotFound, InvalidTarget
from .errors import CorruptRaster, UnsupportedFormat  # re-exported for callers  # noqa: F401

VALID_BIT_DEPTHS = (8, 11, 13, 16)

# WorldView-2 center wavelengths (nm) for the bands used in this study.
RGB_WAVELENGTHS = (659.0, 546.0, 478.0)
FALSE_COLOR_WAVELENGTHS = (427.0, 608.0, 724.0)
WV2_BANDS = (
    ("coastal", 427.0),
    ("blue", 478.0),
    ("green", 546.0),
    ("yellow", 608.0),
    ("red", 659.0),
    ("red_edge", 724.0),
    ("nir1", 883.0),
    ("nir2", 949.0),
)


@dataclass(frozen=True)
class BandInfo:
    """One spectral band: a name and its center wavelength in nanometers.

    The wavelength may be None when a scene is loaded without metadata;
    such bands cannot be selected by wavelength.
    """

    name: str
    center_wavelength: float | None = None

    def __post_init__(self):
        if self.center_wavelength is not None and self.center_wavelength <= 0:
            raise ValueError(f"center wavelength must be positive, got {self.center_wavelength}")


@dataclass(frozen=True)
class MultibandImage:
    """An N-band raster with per-band wavelengths, bit depth, and GSD.

    Pixels are stored band-planar as a read-only (bands, height, width)
    uint16 array. Every sample must fit in ``bit_depth`` bits.
    """

    pixels: np.ndarray
    bands: tuple[BandInfo, ...]
    bit_depth: int
    gsd_x: float = 1.0
    gsd_y: float = 1.0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.pixels, dtype=np.uint16)
        if arr.ndim != 3:
            raise ValueError(f"pixels must be (bands, height, width), got shape {arr.shape}")
        object.__setattr__(self, "pixels", arr)
        object.__setattr__(self, "bands", tuple(self.bands))
        if len(self.bands) < 1:
            raise ValueError("an image needs at least one band")
        if arr.shape[0] != len(self.bands):
            raise ValueError(f"{arr.shape[0]} pixel planes but {len(self.bands)} band entries")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"image dimensions must be positive, got {arr.shape[1:]}")
        if self.bit_depth not in VALID_BIT_DEPTHS:
            raise ValueError(f"bit depth must be one of {VALID_BIT_DEPTHS}, got {self.bit_depth}")
        if arr.size and int(arr.max()) >= (1 << self.bit_depth):
            raise ValueError(
                f"sample {int(arr.max())} does not fit in {self.bit_depth} bits"
            )
        if self.gsd_x <= 0 or self.gsd_y <= 0:
            raise ValueError("ground sample distance must be positive")
        names = [b.name for b in self.bands]
        if len(set(names)) != len(names):
            raise ValueError("band names must be unique within an image")
        arr.setflags(write=False)

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def wavelengths(self) -> tuple[float | None, ...]:
        return tuple(b.center_wavelength for b in self.bands)


def infer_bit_depth(pixels: np.ndarray) -> int:
    """Smallest declared depth in {8, 11, 13, 16} that holds every sample."""
    top = int(pixels.max()) if pixels.size else 0
    for bits in VALID_BIT_DEPTHS:
        if top < (1 << bits):
            return bits
    raise ValueError(f"sample {top} exceeds 16 bits")  # unreachable for uint16


def load_scene(
    path: str | Path,
    band_metadata: list[BandInfo] | None = None,
    *,
    bit_depth: int | None = None,
    gsd: float | tuple[float, float] = 1.0,
) -> MultibandImage:
    """Load a baseline TIFF scene, attaching band metadata in file order.

    Band metadata comes from (in priority order) the ``band_metadata``
    argument, a ``<scene>.bands.json`` sidecar next to the file, or
    placeholder names with unknown wavelengths. The declared bit depth is
    inferred from the largest sample unless ``bit_depth`` overrides it.
    """
    path = Path(path)
    pixels, container_bits = read_tiff(path.read_bytes())

    if band_metadata is None:
        band_metadata = _sidecar_bands(path)
    if band_metadata is None:
        band_metadata = [BandInfo(f"band_{i}") for i in range(pixels.shape[0])]
    if len(band_metadata) != pixels.shape[0]:
        raise UnsupportedFormat(
            f"band metadata lists {len(band_metadata)} bands, file has {pixels.shape[0]}"
        )

    if bit_depth is None:
        bit_depth = infer_bit_depth(pixels) if container_bits == 16 else 8
    gx, gy = gsd if isinstance(gsd, tuple) else (gsd, gsd)
    return MultibandImage(pixels, tuple(band_metadata), bit_depth, gx, gy)


def _sidecar_bands(path: Path) -> list[BandInfo] | None:
    sidecar = path.with_suffix(".bands.json")
    if not sidecar.exists():
        return None
    return read_band_metadata(sidecar)


def read_band_metadata(path: str | Path) -> list[BandInfo]:
    """Read a band metadata JSON file: an array of {name, wavelength_nm}."""
    entries = json.loads(Path(path).read_text())
    return [BandInfo(e["name"], e["wavelength_nm"]) for e in entries]


def requantize(
    img: MultibandImage,
    target_bits: int,
    *,
    method: str = "linear",
    percentiles: tuple[float, float] = (2.0, 98.0),
) -> MultibandImage:
    """Reduce an image to ``target_bits`` of dynamic range.

    The default mapping is the parameter-free linear one,
    v -> round(v * (2^t - 1) / (2^s - 1)), which is monotone and maps zero
    and full scale exactly. ``method="percentile"`` instead stretches each
    band between its low/high percentiles before scaling, for
    experimentation; it is not idempotent.
    """
    if target_bits not in VALID_BIT_DEPTHS:
        raise InvalidTarget(f"target bit depth must be one of {VALID_BIT_DEPTHS}")
    if target_bits > img.bit_depth:
        raise InvalidTarget(
            f"cannot requantize {img.bit_depth}-bit data up to {target_bits} bits"
        )
    target_max = (1 << target_bits) - 1
    if method == "linear":
        source_max = (1 << img.bit_depth) - 1
        scaled = np.rint(img.pixels.astype(np.float64) * (target_max / source_max))
    elif method == "percentile":
        planes = img.pixels.astype(np.float64)
        lo = np.percentile(planes, percentiles[0], axis=(1, 2), keepdims=True)
        hi = np.percentile(planes, percentiles[1], axis=(1, 2), keepdims=True)
        span = np.where(hi > lo, hi - lo, 1.0)
        scaled = np.rint(np.clip((planes - lo) / span, 0.0, 1.0) * target_max)
    else:
        raise ValueError(f"unknown requantization method {method!r}")
    out = scaled.astype(np.uint16)
    return MultibandImage(out, img.bands, target_bits, img.gsd_x, img.gsd_y)


def rescale(img: MultibandImage, factor: int, method: str = "bilinear") -> MultibandImage:
    """Upscale by an integer factor, dividing the GSD accordingly.

    Bilinear interpolation uses pixel-center alignment with edge clamping,
    which preserves constant bands exactly and the mean of linear gradients.
    ``nearest`` replicates pixels and suits label-like rasters.
    """
    if factor < 1:
        raise ValueError(f"rescale factor must be >= 1, got {factor}")
    if factor == 1:
        return img
    if method == "nearest":
        out = img.pixels.repeat(factor, axis=1).repeat(factor, axis=2)
    elif method == "bilinear":
        out = _bilinear_upscale(img.pixels, factor)
    else:
        raise ValueError(f"unknown rescale method {method!r}")
    return MultibandImage(
        out, img.bands, img.bit_depth, img.gsd_x / factor, img.gsd_y / factor
    )


def _axis_coords(n: int, factor: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Pixel-center source coordinate of each output pixel, clamped neighbors.
    sx = (np.arange(n * factor, dtype=np.float64) + 0.5) / factor - 0.5
    lo = np.clip(np.floor(sx).astype(np.int64), 0, n - 1)
    hi = np.clip(lo + 1, 0, n - 1)
    frac = np.clip(sx - np.floor(sx), 0.0, 1.0)
    frac[sx < 0] = 0.0
    frac[sx > n - 1] = 0.0
    return lo, hi, frac


def _bilinear_upscale(planes: np.ndarray, factor: int) -> np.ndarray:
    _, h, w = planes.shape
    x0, x1, fx = _axis_coords(w, factor)
    y0, y1, fy = _axis_coords(h, factor)
    data = planes.astype(np.float64)
    # Separable: interpolate along x, then along y.
    along_x = data[:, :, x0] * (1.0 - fx) + data[:, :, x1] * fx
    out = (
        along_x[:, y0, :] * (1.0 - fy)[None, :, None]
        + along_x[:, y1, :] * fy[None, :, None]
    )
    return np.rint(out).astype(np.uint16)


def compose_bands(img: MultibandImage, selection: list[float]) -> MultibandImage:
    """Project an image onto the bands matching the requested wavelengths.

    Each requested wavelength must match a band center within 1 nm; the
    output carries the selected bands in the requested order.
    """
    indices = []
    for wanted in selection:
        best = None
        for i, band in enumerate(img.bands):
            if band.center_wavelength is None:
                continue
            delta = abs(band.center_wavelength - wanted)
            if delta <= 1.0 and (best is None or delta < best[0]):
                best = (delta, i)
        if best is None:
            raise BandNotFound(f"no band within 1 nm of {wanted} nm")
        indices.append(best[1])
    out = img.pixels[indices].copy()
    bands = tuple(img.bands[i] for i in indices)
    return MultibandImage(out, bands, img.bit_depth, img.gsd_x, img.gsd_y)
