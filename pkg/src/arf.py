"""Alternating reverse filtering: the fixed-point fusion engine."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from src.config import BandWeights, IterationConfig
from src.errors import DimensionError, NumericError
from src.gauss_filter import MultiScaleFilter, apply_multiscale_array
from src.raster import (
    Raster,
    intensity,
    replace_intensity,
    require_same_shape,
    require_single_band,
    scale_ratio,
    upsample,
)

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["k", "ms_residual", "pan_residual", "delta", "ratio"]


def rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(values))))


@dataclass
class IterationTrace:
    """Per outer iteration residuals (RMS) of the alternating scheme."""

    ms_residual: list[float] = field(default_factory=list)
    pan_residual: list[float] = field(default_factory=list)
    delta: list[float] = field(default_factory=list)
    ratio: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ms_residual)

    def record(self, ms_residual: float, pan_residual: float, delta: float):
        previous = self.ms_residual[-1] if self.ms_residual else None
        self.ms_residual.append(ms_residual)
        self.pan_residual.append(pan_residual)
        self.delta.append(delta)
        if previous is None or previous == 0.0:
            self.ratio.append(float("nan"))
        else:
            self.ratio.append(ms_residual / previous)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "k": range(len(self)),
                "ms_residual": self.ms_residual,
                "pan_residual": self.pan_residual,
                "delta": self.delta,
                "ratio": self.ratio,
            },
            columns=TRACE_COLUMNS,
        )

    def write_csv(self, path: str | Path):
        """Export as CSV with 9 significant digits; the first ratio is left empty."""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(
            path, index=False, float_format="%.9g", na_rep="", lineterminator="\n"
        )


@dataclass(frozen=True, eq=False)
class FusionResult:
    """Fused HR MS image H^K, intensity estimate and iteration trace."""

    fused: Raster
    intensity_estimate: Raster
    trace: IterationTrace


def _checked(step: str, k: int, build: Callable[[], Raster]) -> Raster:
    try:
        return build()
    except NumericError as e:
        raise NumericError(
            f"non-finite values in {step} at iteration {k}", step=step
        ) from e


def reverse_step(x: Raster, y: Raster, f: MultiScaleFilter) -> Raster:
    """One reverse filtering update x + y - F(x)."""
    require_same_shape(x, y, "reverse step operands")
    return Raster(y.data + (x.data - apply_multiscale_array(x.data, f)))


def consistency_residual(h: Raster, l_up: Raster, f_bank: MultiScaleFilter) -> float:
    """RMS of L_up - f(H) over all samples."""
    require_same_shape(h, l_up, "consistency operands")
    return rms(l_up.data - apply_multiscale_array(h.data, f_bank))


def arf_fuse(
    lr: Raster,
    pan: Raster,
    f_bank: MultiScaleFilter,
    g_bank: MultiScaleFilter,
    w: BandWeights,
    cfg: IterationConfig = IterationConfig(),
) -> FusionResult:
    """Fuse LR MS and PAN with the alternating reverse filtering iteration."""
    require_single_band(pan, "PAN")
    if lr.bands != len(w):
        raise DimensionError(f"{lr.bands} MS bands but {len(w)} intensity weights")
    s = scale_ratio(lr, pan)

    l_up = upsample(lr, s)
    h = l_up
    h_i = intensity(h, w)
    trace = IterationTrace()
    log.debug(
        f"ARF start: {lr!r} -> {pan.width}x{pan.height}, ratio {s}, K={cfg.iterations}"
    )

    for k in range(cfg.iterations):
        # MS branch: H^{k+1/2} = H^k + L_up - f(H^k)
        f_h = apply_multiscale_array(h.data, f_bank)
        ms_residual = rms(l_up.data - f_h)
        h_half = _checked("ms reverse step", k, lambda: Raster(l_up.data + (h.data - f_h)))

        # PAN branch on the fetched intensity
        i_fetched = intensity(h_half, w)
        i_next = i_fetched
        pan_residual = None
        for _ in range(cfg.pan_inner_steps):
            g_i = apply_multiscale_array(i_next.data, g_bank)
            if pan_residual is None:
                pan_residual = rms(pan.data - g_i)
            i_next = _checked(
                "pan reverse step", k, lambda: Raster(pan.data + (i_next.data - g_i))
            )

        h_next = _checked(
            "intensity substitution", k, lambda: replace_intensity(h_half, i_fetched, i_next)
        )
        delta = rms(h_next.data - h.data)
        if cfg.record_trace:
            trace.record(ms_residual, pan_residual, delta)
        log.debug(
            f"k={k}: ms_residual={ms_residual:.6g} pan_residual={pan_residual:.6g} "
            f"delta={delta:.6g}"
        )

        h, h_i = h_next, i_next
        if cfg.residual_tolerance > 0 and delta < cfg.residual_tolerance:
            log.info(f"Early stop at iteration {k + 1}: delta {delta:.3g} below tolerance")
            break

    return FusionResult(fused=h, intensity_estimate=h_i, trace=trace)
