"""Reference and no-reference quality metrics plus the fusion loss values."""

import json
import logging
import math
from itertools import combinations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel
from scipy import ndimage
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from src.config import BandWeights, MetricsConfig, WaldConfig
from src.errors import DimensionError, NumericError, ParameterError
from src.raster import Raster, intensity, require_same_shape, require_single_band, scale_ratio
from src.wald_sim import degrade

log = logging.getLogger(__name__)

PSNR_PEAK = 1.0
PSNR_TEXT_CAP = 99.0
LAPLACIAN = np.array([[-1.0, -1.0, -1.0], [-1.0, 8.0, -1.0], [-1.0, -1.0, -1.0]])
REPORT_COLUMNS = [
    "PSNR", "SSIM", "SAM", "ERGAS", "SCC", "Q",
    "D_lambda", "D_s", "QNR", "L_r", "L_s", "L_sum",
]  # fmt: skip


def psnr(x: Raster, ref: Raster) -> float:
    """10 log10(peak^2 / MSE) with peak 1; identical inputs give +inf."""
    require_same_shape(x, ref, "PSNR operands")
    if np.array_equal(x.data, ref.data):
        return math.inf
    return float(peak_signal_noise_ratio(ref.data, x.data, data_range=PSNR_PEAK))


def _windows(band: np.ndarray, size: int) -> np.ndarray:
    if min(band.shape) < size:
        raise DimensionError(f"image {band.shape} is smaller than the {size}x{size} window")
    return sliding_window_view(band, (size, size))


def ssim(x: Raster, ref: Raster, window: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over all valid Gaussian windows, averaged over bands."""
    require_same_shape(x, ref, "SSIM operands")
    if min(x.height, x.width) < window:
        raise DimensionError(
            f"image {x.width}x{x.height} is smaller than the {window}x{window} window"
        )
    return float(
        structural_similarity(
            x.data,
            ref.data,
            win_size=window,
            channel_axis=0,
            data_range=1.0,
            gaussian_weights=True,
            sigma=sigma,
            use_sample_covariance=False,
        )
    )


def spectral_angles(x: Raster, ref: Raster) -> np.ndarray:
    """Per-pixel angle between spectral vectors; zero-norm pixels give 0."""
    nx = np.sqrt(np.sum(x.data * x.data, axis=0))
    ny = np.sqrt(np.sum(ref.data * ref.data, axis=0))
    valid = (nx > 0) & (ny > 0)
    ux = np.divide(x.data, nx, out=np.zeros_like(x.data), where=valid)
    uy = np.divide(ref.data, ny, out=np.zeros_like(ref.data), where=valid)
    # 2 atan2(|ux - uy|, |ux + uy|) stays accurate for nearly parallel vectors
    diff = np.sqrt(np.sum(np.square(ux - uy), axis=0))
    summ = np.sqrt(np.sum(np.square(ux + uy), axis=0))
    return np.where(valid, 2.0 * np.arctan2(diff, summ), 0.0)


def sam(x: Raster, ref: Raster) -> float:
    """Mean spectral angle in radians."""
    require_same_shape(x, ref, "SAM operands")
    if x.bands < 2:
        raise DimensionError(f"SAM needs at least 2 bands, got {x.bands}")
    return float(np.mean(spectral_angles(x, ref)))


def ergas(x: Raster, ref: Raster, ratio: int = 4) -> float:
    """100 / ratio * sqrt(mean_b (RMSE_b / mean_b)^2)."""
    require_same_shape(x, ref, "ERGAS operands")
    rmse = np.sqrt(np.mean(np.square(x.data - ref.data), axis=(1, 2)))
    means = np.mean(ref.data, axis=(1, 2))
    for b, mu in enumerate(means):
        if abs(mu) <= 1e-12:
            raise NumericError(f"ERGAS undefined: reference band {b} has zero mean", step="ergas")
    return float(100.0 / ratio * np.sqrt(np.mean(np.square(rmse / means))))


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    ac, bc = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.sum(ac * ac)) * float(np.sum(bc * bc)))
    if denom == 0.0:
        return None
    return float(np.sum(ac * bc)) / denom


def scc_bands(x: Raster, ref: Raster) -> tuple[list[float], list[int]]:
    """Per-band Laplacian correlations and the bands with constant response."""
    require_same_shape(x, ref, "SCC operands")
    values, degenerate = [], []
    for b, (xb, rb) in enumerate(zip(x.data, ref.data)):
        hx = ndimage.correlate(xb, LAPLACIAN, mode="reflect")
        hr = ndimage.correlate(rb, LAPLACIAN, mode="reflect")
        r = _pearson(hx, hr)
        if r is None:
            degenerate.append(b)
            r = 0.0
        values.append(r)
    return values, degenerate


def scc(x: Raster, ref: Raster) -> float:
    """Spatial correlation coefficient of Laplacian high-pass detail, band averaged."""
    values, degenerate = scc_bands(x, ref)
    if degenerate:
        log.warning(f"SCC: constant high-pass response in bands {degenerate}, counted as 0")
    return float(np.mean(values))


def uiqi(a: np.ndarray, b: np.ndarray, block: int = 8) -> float:
    """Wang-Bovik universal image quality index over sliding block x block windows."""
    if a.shape != b.shape:
        raise DimensionError(f"UIQI operands differ in shape: {a.shape} vs {b.shape}")
    wa = _windows(a, block).reshape(-1, block * block)
    wb = _windows(b, block).reshape(-1, block * block)
    ma, mb = wa.mean(axis=1), wb.mean(axis=1)
    ca, cb = wa - ma[:, None], wb - mb[:, None]
    sa2 = np.mean(ca * ca, axis=1)
    sb2 = np.mean(cb * cb, axis=1)
    sab = np.mean(ca * cb, axis=1)
    num = 4.0 * sab * (ma * mb)
    den = (sa2 + sb2) * (ma * ma + mb * mb)
    valid = den > 0
    if not np.any(valid):
        log.warning("UIQI: every window is degenerate")
        return math.nan
    return float(np.mean(num[valid] / den[valid]))


def q_index(x: Raster, ref: Raster, block: int = 8) -> float:
    """Per-band UIQI averaged over bands."""
    require_same_shape(x, ref, "Q operands")
    return float(np.mean([uiqi(a, b, block) for a, b in zip(x.data, ref.data)]))


def qnr_suite(
    fused: Raster,
    lr: Raster,
    pan: Raster,
    block: int = 8,
    blur_sigma: float | None = None,
) -> tuple[float | None, float, float | None]:
    """(D_lambda, D_s, QNR) with alpha = beta = p = q = 1."""
    require_single_band(pan, "PAN")
    s = scale_ratio(lr, fused)
    if s != scale_ratio(lr, pan):
        raise DimensionError("fused raster and PAN must share the high resolution grid")
    if fused.bands != lr.bands:
        raise DimensionError(f"fused has {fused.bands} bands, LR MS has {lr.bands}")

    d_lambda = None
    if fused.bands >= 2:
        diffs = [
            abs(uiqi(fused.band(i), fused.band(j), block) - uiqi(lr.band(i), lr.band(j), block))
            for i, j in combinations(range(fused.bands), 2)
        ]
        d_lambda = float(np.clip(np.mean(diffs), 0.0, 1.0))

    if s > 1:
        pan_lr = degrade(pan, WaldConfig(ratio=s, blur_sigma=blur_sigma)).band(0)
    else:
        pan_lr = pan.band(0)
    d_s = float(
        np.clip(
            np.mean(
                [
                    abs(uiqi(fused.band(b), pan.band(0), block) - uiqi(lr.band(b), pan_lr, block))
                    for b in range(fused.bands)
                ]
            ),
            0.0,
            1.0,
        )
    )

    qnr = None if d_lambda is None else (1.0 - d_lambda) * (1.0 - d_s)
    return d_lambda, d_s, qnr


def loss_values(
    fused: Raster,
    fused_i: Raster,
    gt: Raster,
    gt_i: Raster,
    lam: float = 0.1,
    window: int = 11,
    sigma: float = 1.5,
) -> tuple[float, float, float]:
    """(L_r, L_s, L_sum): RMS reconstruction error, 1 - SSIM of intensities, weighted sum."""
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    require_same_shape(fused, gt, "loss operands")
    require_same_shape(fused_i, gt_i, "intensity loss operands")
    l_r = float(np.sqrt(np.mean(np.square(fused.data - gt.data))))
    l_s = 1.0 - ssim(fused_i, gt_i, window, sigma)
    return l_r, l_s, l_r + lam * l_s


def _sig9(value: float | None) -> float | None:
    if value is None or math.isnan(value):
        return None
    if math.isinf(value):
        return PSNR_TEXT_CAP if value > 0 else -PSNR_TEXT_CAP
    return float(f"{value:.9g}")


class MetricReport(BaseModel):
    """Quality metrics for one fused raster; None marks a metric that was not computed."""

    psnr: float | None = None
    ssim: float | None = None
    sam: float | None = None
    ergas: float | None = None
    scc: float | None = None
    q: float | None = None
    d_lambda: float | None = None
    d_s: float | None = None
    qnr: float | None = None
    l_r: float | None = None
    l_s: float | None = None
    l_sum: float | None = None
    meta: dict = {}

    def to_row(self) -> dict[str, float | None]:
        """Values keyed in table column order, PSNR capped, 9 significant digits."""
        values = [
            self.psnr, self.ssim, self.sam, self.ergas, self.scc, self.q,
            self.d_lambda, self.d_s, self.qnr, self.l_r, self.l_s, self.l_sum,
        ]  # fmt: skip
        return {name: _sig9(v) for name, v in zip(REPORT_COLUMNS, values)}

    def to_json(self) -> str:
        body = {name.lower(): value for name, value in self.to_row().items()}
        body["meta"] = self.meta
        return json.dumps(body, indent=2)


def evaluate(
    fused: Raster,
    gt: Raster | None = None,
    lr: Raster | None = None,
    pan: Raster | None = None,
    cfg: MetricsConfig = MetricsConfig(),
    weights: BandWeights | None = None,
    fused_intensity: Raster | None = None,
) -> MetricReport:
    """Compute every metric the supplied inputs allow."""
    report = MetricReport(
        meta={
            "lambda": cfg.lambda_,
            "ratio": cfg.ratio,
            "ssim_window": cfg.ssim_window,
            "ssim_sigma": cfg.ssim_sigma,
            "q_block": cfg.q_block,
            "sam_unit": "radians",
            "q_variant": "per-band UIQI averaged over bands and windows",
            "qnr_exponents": {"alpha": 1, "beta": 1, "p": 1, "q": 1},
        }
    )

    if gt is not None:
        report.psnr = psnr(fused, gt)
        report.ssim = ssim(fused, gt, cfg.ssim_window, cfg.ssim_sigma)
        report.sam = sam(fused, gt) if fused.bands >= 2 else None
        report.ergas = ergas(fused, gt, cfg.ratio)
        values, degenerate = scc_bands(fused, gt)
        report.scc = float(np.mean(values))
        if degenerate:
            log.warning(f"SCC: constant high-pass response in bands {degenerate}")
            report.meta["scc_degenerate_bands"] = degenerate
        report.q = q_index(fused, gt, cfg.q_block)

        w = weights or BandWeights.uniform(fused.bands)
        fused_i = fused_intensity or intensity(fused, w)
        report.l_r, report.l_s, report.l_sum = loss_values(
            fused, fused_i, gt, intensity(gt, w), cfg.lambda_, cfg.ssim_window, cfg.ssim_sigma
        )

    if lr is not None and pan is not None:
        report.d_lambda, report.d_s, report.qnr = qnr_suite(fused, lr, pan, cfg.q_block)
        report.meta["d_s_protocol"] = (
            "PAN degraded to the LR grid by Gaussian blur (sigma = ratio / 2) and decimation"
        )

    return report
