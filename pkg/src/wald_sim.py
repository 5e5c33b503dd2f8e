"""Wald protocol scene simulation and procedural test scenes."""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.config import BandWeights, WaldConfig
from src.errors import DimensionError, ParameterError
from src.gauss_filter import MultiScaleFilter, apply_multiscale, convolve, make_gaussian
from src.raster import Raster, downsample, intensity

log = logging.getLogger(__name__)

MIN_SCENE_SIZE = 32


class SceneKind(str, Enum):
    gradient = "gradient"
    checker = "checker"
    blobs = "blobs"
    text_like = "text-like"


@dataclass(frozen=True, eq=False)
class SceneTriple:
    """Reference HR MS, simulated LR MS and simulated PAN."""

    gt: Raster
    lr: Raster
    pan: Raster


def rng_for(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; every random draw in the toolkit goes through here."""
    return np.random.Generator(np.random.PCG64(seed))


def blur_kernel(cfg: WaldConfig):
    sigma = cfg.sigma()
    return make_gaussian(2 * math.ceil(3 * sigma) + 1, sigma)


def degrade(h: Raster, cfg: WaldConfig) -> Raster:
    """L = (H * k) decimated by the ratio, plus optional seeded Gaussian noise."""
    s = cfg.ratio
    if h.width % s or h.height % s:
        raise DimensionError(f"{h.width}x{h.height} raster is not divisible by ratio {s}")
    lr = downsample(convolve(h, blur_kernel(cfg)), s)
    if cfg.noise_sigma > 0:
        noise = rng_for(cfg.seed).normal(0.0, cfg.noise_sigma, lr.data.shape)
        lr = Raster(lr.data + noise)
    return lr


def synth_pan(h: Raster, cfg: WaldConfig) -> Raster:
    """PAN as the weighted band sum of the HR MS raster."""
    return intensity(h, cfg.band_weights(h.bands))


def simulate(h: Raster, cfg: WaldConfig) -> SceneTriple:
    """Build the (GT, LR MS, PAN) triple of the Wald protocol."""
    return SceneTriple(gt=h, lr=degrade(h, cfg), pan=synth_pan(h, cfg))


def model_consistent_pair(
    h: Raster, f_bank: MultiScaleFilter, w: BandWeights
) -> tuple[Raster, Raster]:
    """Ratio-1 observations that satisfy L = f(H) and P = H_I exactly."""
    return apply_multiscale(h, f_bank), intensity(h, w)


def _gradient(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi)
    threshold = rng.uniform(0.3, 0.7)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    t = x * np.cos(theta) + y * np.sin(theta)
    ramp = (t - t.min()) / (t.max() - t.min())
    return 0.7 * ramp + 0.3 * (ramp >= threshold)


def _checker(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    cell = int(rng.integers(6, 17))
    px, py = (int(v) for v in rng.integers(0, cell, 2))
    y, x = np.mgrid[0:height, 0:width]
    parity = ((x + px) // cell + (y + py) // cell) % 2
    return np.where(parity == 1, 0.8, 0.2)


def _blobs(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    count = int(rng.integers(6, 12))
    centers_x = rng.uniform(0, width, count)
    centers_y = rng.uniform(0, height, count)
    sigmas = rng.uniform(0.03, 0.08, count) * min(width, height)
    amps = rng.uniform(0.3, 1.0, count)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    field = np.full((height, width), 0.1)
    for cx, cy, sigma, amp in zip(centers_x, centers_y, sigmas, amps):
        field += amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2))
    return np.clip(field, 0.0, 1.0)


def _text_like(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    field = np.full((height, width), 0.85)
    row_height = int(rng.integers(8, 13))
    for top in range(3, height - row_height, row_height + 2):
        cursor = 3
        while cursor < width - 8:
            glyph_w = int(rng.integers(3, 7))
            thick = int(rng.integers(1, 3))
            strokes = rng.integers(0, 2, 5)
            if not strokes.any():
                strokes[0] = 1
            bottom, right = top + row_height - 2, cursor + glyph_w
            mid = (top + bottom) // 2
            if strokes[0]:
                field[top:bottom, cursor : cursor + thick] = 0.15
            if strokes[1]:
                field[top:bottom, right - thick : right] = 0.15
            if strokes[2]:
                field[top : top + thick, cursor:right] = 0.15
            if strokes[3]:
                field[mid : mid + thick, cursor:right] = 0.15
            if strokes[4]:
                field[bottom - thick : bottom, cursor:right] = 0.15
            cursor = right + int(rng.integers(2, 5))
    return field


_STRUCTURES = {
    SceneKind.gradient: _gradient,
    SceneKind.checker: _checker,
    SceneKind.blobs: _blobs,
    SceneKind.text_like: _text_like,
}


def make_scene(
    kind: SceneKind | str,
    width: int,
    height: int,
    bands: int,
    seed: int = 0,
    gains: list[float] | None = None,
    offsets: list[float] | None = None,
) -> Raster:
    """Procedural HR MS scene: shared structure S, band b = clip(gain_b * S + offset_b)."""
    kind = SceneKind(kind)
    if width < MIN_SCENE_SIZE or height < MIN_SCENE_SIZE:
        raise ParameterError(f"scenes must be at least {MIN_SCENE_SIZE}x{MIN_SCENE_SIZE}")
    if bands < 1:
        raise ParameterError(f"bands must be >= 1, got {bands}")

    rng = rng_for(seed)
    structure = _STRUCTURES[kind](rng, width, height)
    if gains is None:
        gains = rng.uniform(0.5, 0.9, bands)
        if offsets is None:
            offsets = rng.uniform(0.0, 0.1, bands)
    if offsets is None:
        offsets = np.zeros(bands)
    if len(gains) != bands or len(offsets) != bands:
        raise ParameterError(f"need {bands} gains and offsets")

    data = np.stack([g * structure + o for g, o in zip(gains, offsets)])
    log.debug(f"Scene {kind.value} {width}x{height}x{bands} seed={seed}")
    return Raster(np.clip(data, 0.0, 1.0))
