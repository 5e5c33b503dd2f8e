"""Gaussian kernels, the multi-scale Gaussian filter bank and its contraction verifier.

The bank y = sum_k gamma_k * (g(sigma_k) * x) over kernel sizes 1, 3, ..., M is used
both as the MS degradation f and the PAN degradation g of the reverse filtering
engine. A normalized bank whose frequency response stays inside (0, 1] makes the
reverse step x -> x + y - F(x) a contraction with constant max |1 - g_hat|.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from src.config import FilterBankConfig
from src.errors import ParameterError
from src.raster import Raster, map_bands

log = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """Normalized 2D Gaussian with its separable 1D profile."""

    size: int
    sigma: float
    weights: np.ndarray  # size x size, sums to 1
    profile: np.ndarray  # length size, sums to 1; weights ~ outer(profile, profile)

    @property
    def radius(self) -> int:
        return (self.size - 1) // 2

    @property
    def is_dirac(self) -> bool:
        return self.size == 1 or self.sigma == 0


def make_gaussian(size: int, sigma: float) -> GaussianKernel:
    """Normalized size x size Gaussian; size 1 or sigma 0 gives the Dirac delta."""
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and >= 1, got {size}")
    if sigma < 0 or not np.isfinite(sigma):
        raise ParameterError(f"sigma must be finite and >= 0, got {sigma}")

    r = (size - 1) // 2
    if size == 1 or sigma == 0:
        profile = np.zeros(size)
        profile[r] = 1.0
        weights = np.zeros((size, size))
        weights[r, r] = 1.0
    else:
        offsets = np.arange(size) - r
        profile = np.exp(-(offsets**2) / (2.0 * sigma**2))
        profile /= profile.sum()
        y, x = np.ogrid[-r : r + 1, -r : r + 1]
        weights = np.exp(-(x * x + y * y) / (2.0 * sigma**2))
        weights /= weights.sum()

    profile.flags.writeable = False
    weights.flags.writeable = False
    return GaussianKernel(size=size, sigma=float(sigma), weights=weights, profile=profile)


def _correlate_band(band: np.ndarray, profile: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(band, profile, axis=0, mode="reflect")
    return ndimage.correlate1d(out, profile, axis=1, mode="reflect")


def convolve_array(data: np.ndarray, k: GaussianKernel) -> np.ndarray:
    """Per-band separable correlation of a (bands, height, width) array."""
    if k.is_dirac:
        return data.copy()
    return map_bands(lambda band: _correlate_band(band, k.profile), data)


def convolve(r: Raster, k: GaussianKernel) -> Raster:
    """Correlate every band with the kernel using reflect (mirror) padding."""
    return Raster(convolve_array(r.data, k))


@dataclass(frozen=True, eq=False)
class MultiScaleFilter:
    """Convex mixture of Gaussian kernels of increasing odd size starting at 1."""

    kernels: tuple[GaussianKernel, ...]
    gammas: tuple[float, ...]

    def __post_init__(self):
        kernels = tuple(self.kernels)
        gammas = np.asarray(self.gammas, dtype=np.float64)
        if not kernels or len(kernels) != len(gammas):
            raise ParameterError(
                f"filter bank needs one gamma per kernel, got {len(kernels)} kernels "
                f"and {len(gammas)} gammas"
            )
        sizes = [k.size for k in kernels]
        if sizes[0] != 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ParameterError(
                f"kernel sizes must be strictly increasing from 1, got {sizes}"
            )
        if np.any(~np.isfinite(gammas)) or np.any(gammas < 0):
            raise ParameterError(f"gammas must be non-negative, got {gammas.tolist()}")
        total = gammas.sum()
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise ParameterError(f"gammas must sum to 1, got {total}")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "gammas", tuple(float(g) for g in gammas / total))

    @property
    def sizes(self) -> list[int]:
        return [k.size for k in self.kernels]

    @property
    def max_size(self) -> int:
        return self.kernels[-1].size

    def gamma_array(self) -> np.ndarray:
        return np.asarray(self.gammas)

    def with_gammas(self, gammas) -> "MultiScaleFilter":
        return MultiScaleFilter(self.kernels, tuple(gammas))

    def with_dirac_share(self, share: float) -> "MultiScaleFilter":
        """Blend the bank with the identity: gamma' = share * delta + (1 - share) * gamma."""
        if not 0.0 <= share <= 1.0:
            raise ParameterError(f"dirac share must be in [0, 1], got {share}")
        gammas = (1.0 - share) * self.gamma_array()
        gammas[0] += share
        return self.with_gammas(gammas)

    def to_config(self) -> FilterBankConfig:
        sizes = self.sizes
        return FilterBankConfig(
            max_kernel=self.max_size,
            sigma_rule="quarter",
            sigmas={k.size: k.sigma for k in self.kernels if k.size > 1},
            gammas=dict(zip(sizes, self.gammas)),
        )

    @classmethod
    def dirac(cls) -> "MultiScaleFilter":
        return cls((make_gaussian(1, 0.0),), (1.0,))

    def __repr__(self) -> str:
        return f"MultiScaleFilter(sizes={self.sizes}, gammas={np.round(self.gammas, 4).tolist()})"


def build_filter(cfg: FilterBankConfig) -> MultiScaleFilter:
    """Build the bank described by a filter bank configuration."""
    kernels = tuple(make_gaussian(s, cfg.sigma_for(s)) for s in cfg.sizes())
    return MultiScaleFilter(kernels, tuple(cfg.gamma_vector()))


def apply_multiscale_array(data: np.ndarray, f: MultiScaleFilter) -> np.ndarray:
    acc = None
    for kernel, gamma in zip(f.kernels, f.gammas):
        if gamma == 0.0:
            continue
        term = gamma * convolve_array(data, kernel)
        acc = term if acc is None else acc + term
    return acc


def apply_multiscale(r: Raster, f: MultiScaleFilter) -> Raster:
    """Weighted sum over scales of the Gaussian-filtered raster."""
    return Raster(apply_multiscale_array(r.data, f))


def mixture_kernel(f: MultiScaleFilter) -> np.ndarray:
    """Effective M x M kernel sum_k gamma_k g_k, centered."""
    m = f.max_size
    out = np.zeros((m, m))
    for kernel, gamma in zip(f.kernels, f.gammas):
        pad = (m - kernel.size) // 2
        out[pad : pad + kernel.size, pad : pad + kernel.size] += gamma * kernel.weights
    return out


def frequency_response(f: MultiScaleFilter, grid_w: int, grid_h: int) -> np.ndarray:
    """Real DFT of the mixture kernel zero-padded on a grid_h x grid_w torus."""
    m = f.max_size
    if grid_w < m or grid_h < m:
        raise ParameterError(f"grid {grid_w}x{grid_h} is smaller than the {m}x{m} kernel")
    grid = np.zeros((grid_h, grid_w))
    grid[:m, :m] = mixture_kernel(f)
    r = (m - 1) // 2
    grid = np.roll(grid, (-r, -r), axis=(0, 1))
    return np.fft.fft2(grid).real


@dataclass(frozen=True)
class ContractionReport:
    """Contraction constant of the reverse step x -> x + y - F(x)."""

    c: float
    grid: tuple[int, int]  # (width, height)
    location: tuple[int, int]  # (fx, fy) DFT index of the largest |1 - g_hat|
    min_response: float

    @property
    def certified(self) -> bool:
        return self.c < 1.0


def contraction_constant(f: MultiScaleFilter, grid_w: int, grid_h: int) -> ContractionReport:
    """c = max over DFT frequencies of |1 - g_hat|; c < 1 certifies geometric convergence."""
    response = frequency_response(f, grid_w, grid_h)
    deviation = np.abs(1.0 - response)
    fy, fx = np.unravel_index(int(np.argmax(deviation)), deviation.shape)
    report = ContractionReport(
        c=float(deviation[fy, fx]),
        grid=(grid_w, grid_h),
        location=(int(fx), int(fy)),
        min_response=float(response.min()),
    )
    log.debug(f"{f!r} on {grid_w}x{grid_h}: c={report.c:.9g} at {report.location}")
    return report
