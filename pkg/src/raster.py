"""Multi-band raster type, GIHS intensity handling and resampling."""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.config import BandWeights, worker_count
from src.errors import DimensionError, NumericError, ParameterError

log = logging.getLogger(__name__)

CATMULL_ROM_A = -0.5


@dataclass(frozen=True, eq=False)
class Raster:
    """Immutable W x H x B grid of samples, stored band-sequential as (bands, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3:
            raise DimensionError(f"raster data must be 2D or 3D, got {data.ndim}D")
        if min(data.shape) < 1:
            raise DimensionError(f"raster dimensions must be >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NumericError("raster contains non-finite samples")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    @property
    def samples(self) -> np.ndarray:
        """Flat band-sequential, row-major view of all samples."""
        return self.data.reshape(-1)

    def band(self, b: int) -> np.ndarray:
        return self.data[b]

    def to_f32(self) -> "Raster":
        """Snap samples onto the 32-bit float lattice used by the file format."""
        return Raster(self.data.astype(np.float32))

    def same_shape(self, other: "Raster") -> bool:
        return self.data.shape == other.data.shape

    def __repr__(self) -> str:
        return f"Raster(width={self.width}, height={self.height}, bands={self.bands})"

    @classmethod
    def from_bands(cls, bands: list[np.ndarray]) -> "Raster":
        return cls(np.stack([np.asarray(b, dtype=np.float64) for b in bands]))

    @classmethod
    def constant(cls, width: int, height: int, bands: int, value: float) -> "Raster":
        return cls(np.full((bands, height, width), float(value)))


def require_same_shape(a: Raster, b: Raster, what: str = "rasters"):
    if not a.same_shape(b):
        raise DimensionError(
            f"{what} differ in shape: {a.data.shape} vs {b.data.shape} (bands, height, width)"
        )


def require_single_band(r: Raster, what: str = "raster"):
    if r.bands != 1:
        raise DimensionError(f"{what} must have 1 band, got {r.bands}")


def scale_ratio(lr: Raster, hr: Raster) -> int:
    """Integer factor between a low and a high resolution raster."""
    if hr.width % lr.width or hr.height % lr.height:
        raise DimensionError(
            f"{hr.width}x{hr.height} is not an integer multiple of {lr.width}x{lr.height}"
        )
    sx, sy = hr.width // lr.width, hr.height // lr.height
    if sx != sy:
        raise DimensionError(f"anisotropic scale ratio {sx}x{sy}")
    return sx


_band_pool: ThreadPoolExecutor | None = None
_band_pool_workers = 0
_band_pool_lock = threading.Lock()


def band_pool(workers: int) -> ThreadPoolExecutor:
    """Process-wide pool for per-band work, rebuilt only when the worker count changes."""
    global _band_pool, _band_pool_workers
    with _band_pool_lock:
        if _band_pool is None or _band_pool_workers != workers:
            if _band_pool is not None:
                _band_pool.shutdown(wait=False)
            log.debug(f"Starting band pool with {workers} workers")
            _band_pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="bands")
            _band_pool_workers = workers
        return _band_pool


def map_bands(fn: Callable[[np.ndarray], np.ndarray], data: np.ndarray) -> np.ndarray:
    """Apply ``fn`` to every band; bands run on the shared pool when allowed."""
    workers = worker_count()
    if workers <= 1 or data.shape[0] <= 1:
        return np.stack([fn(band) for band in data])
    return np.stack(list(band_pool(workers).map(fn, data)))


def intensity(ms: Raster, w: BandWeights) -> Raster:
    """Weighted band sum forming the GIHS intensity component."""
    if ms.bands != len(w):
        raise DimensionError(f"{ms.bands} bands but {len(w)} intensity weights")
    return Raster(np.tensordot(w.as_array(), ms.data, axes=1))


def replace_intensity(ms: Raster, old_i: Raster, new_i: Raster) -> Raster:
    """Additive intensity substitution: every band receives new_I - old_I."""
    for name, comp in (("old intensity", old_i), ("new intensity", new_i)):
        require_single_band(comp, name)
        if comp.size != ms.size:
            raise DimensionError(f"{name} is {comp.size}, raster is {ms.size}")
    return Raster(ms.data + (new_i.data - old_i.data))


def _keys_kernel(x: np.ndarray) -> np.ndarray:
    a = CATMULL_ROM_A
    x = np.abs(x)
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _reflect_index(idx: np.ndarray, n: int) -> np.ndarray:
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


def interpolation_matrix(n_in: int, factor: int) -> np.ndarray:
    """Bicubic (Catmull-Rom) resampling matrix of shape (factor*n_in, n_in)."""
    n_out = n_in * factor
    centers = (np.arange(n_out) + 0.5) / factor - 0.5
    base = np.floor(centers).astype(int)
    matrix = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for offset in range(-1, 3):
        taps = base + offset
        weights = _keys_kernel(centers - taps)
        np.add.at(matrix, (rows, _reflect_index(taps, n_in)), weights)
    return matrix


def upsample(r: Raster, factor: int) -> Raster:
    """Bicubic upsampling by an integer factor with reflect boundary."""
    if factor < 1:
        raise ParameterError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return Raster(r.data)
    rows = interpolation_matrix(r.height, factor)
    cols = interpolation_matrix(r.width, factor)
    return Raster(map_bands(lambda band: rows @ band @ cols.T, r.data))


def downsample(r: Raster, factor: int) -> Raster:
    """Decimate by keeping every factor-th sample starting at phase 0."""
    if factor < 1:
        raise ParameterError(f"downsample factor must be >= 1, got {factor}")
    if r.width % factor or r.height % factor:
        raise DimensionError(
            f"{r.width}x{r.height} raster is not divisible by factor {factor}"
        )
    return Raster(r.data[:, ::factor, ::factor])


def clamp(r: Raster, lo: float = 0.0, hi: float = 1.0) -> Raster:
    """Clip samples to [lo, hi]; applied at export time only."""
    return Raster(np.clip(r.data, lo, hi))
