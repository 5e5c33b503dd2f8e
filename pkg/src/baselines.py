"""Classical component substitution and modulation fusers used for comparison."""

import logging
from typing import Callable

import numpy as np
from scipy import ndimage

from src.config import BandWeights
from src.raster import (
    Raster,
    intensity,
    replace_intensity,
    require_single_band,
    scale_ratio,
    upsample,
)

log = logging.getLogger(__name__)

EPSILON = 1e-6
VARIANCE_FLOOR = 1e-12

Fuser = Callable[[Raster, Raster, BandWeights], Raster]


def _prepare(lr: Raster, pan: Raster) -> tuple[Raster, int]:
    require_single_band(pan, "PAN")
    s = scale_ratio(lr, pan)
    return upsample(lr, s), s


def fuse_upsample(lr: Raster, pan: Raster, w: BandWeights) -> Raster:
    """Plain bicubic upsampling; PAN only fixes the output grid."""
    up, _ = _prepare(lr, pan)
    return up


def fuse_ihs(lr: Raster, pan: Raster, w: BandWeights) -> Raster:
    """Generalized IHS: every band receives P - I."""
    up, _ = _prepare(lr, pan)
    return replace_intensity(up, intensity(up, w), pan)


def fuse_brovey(lr: Raster, pan: Raster, w: BandWeights) -> Raster:
    """Brovey transform: out_b = H_b * P / I, pixels with I <= eps pass through."""
    up, _ = _prepare(lr, pan)
    i = intensity(up, w).band(0)
    p = pan.band(0)
    valid = i > EPSILON
    ratio = np.divide(p, i, out=np.ones_like(i), where=valid)
    return Raster(up.data * ratio)


def gs_gains(up: Raster, i: Raster) -> np.ndarray:
    """Per-band injection gains cov(H_b, I) / var(I), or 1 for a flat intensity."""
    ic = i.band(0) - i.band(0).mean()
    var = float(np.mean(ic * ic))
    if var <= VARIANCE_FLOOR:
        log.warning(f"GS: intensity variance {var:.3g} too small, falling back to IHS gains")
        return np.ones(up.bands)
    centered = up.data - up.data.mean(axis=(1, 2), keepdims=True)
    return np.mean(centered * ic, axis=(1, 2)) / var


def fuse_gs(lr: Raster, pan: Raster, w: BandWeights) -> Raster:
    """Gram-Schmidt (mode 1, low resolution PAN simulated by the intensity)."""
    up, _ = _prepare(lr, pan)
    i = intensity(up, w)
    gains = gs_gains(up, i)
    detail = pan.band(0) - i.band(0)
    return Raster(up.data + gains[:, None, None] * detail)


def smooth_pan(pan: Raster, s: int) -> np.ndarray:
    """Box filter of width 2s + 1 with reflect boundary."""
    return ndimage.uniform_filter(pan.band(0), size=2 * s + 1, mode="reflect")


def fuse_sfim(lr: Raster, pan: Raster, w: BandWeights) -> Raster:
    """Smoothing filter-based intensity modulation: out_b = H_b * P / box(P)."""
    up, s = _prepare(lr, pan)
    smooth = smooth_pan(pan, s)
    valid = smooth > EPSILON
    ratio = np.divide(pan.band(0), smooth, out=np.ones_like(smooth), where=valid)
    return Raster(up.data * ratio)


METHODS: dict[str, Fuser] = {
    "upsample": fuse_upsample,
    "ihs": fuse_ihs,
    "brovey": fuse_brovey,
    "gs": fuse_gs,
    "sfim": fuse_sfim,
}


def get_fuser(method: str) -> Fuser:
    try:
        return METHODS[method]
    except KeyError:
        raise ValueError(f"unknown baseline method {method!r}") from None
