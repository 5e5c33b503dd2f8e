"""Ablation sweeps of the ARF fusion on a reference scene.

Three studies are supported: the number of outer iterations K, the largest
kernel size M of both filter banks and the structural loss weight used while
tuning the mixing coefficients. Every run is scored with the full metric suite
and collected in one table.
"""

import logging

import pandas as pd
from tqdm import tqdm

from src.arf import arf_fuse
from src.config import BandWeights, FilterBankConfig, IterationConfig, MetricsConfig
from src.errors import ParameterError
from src.gauss_filter import MultiScaleFilter, build_filter
from src.metrics import REPORT_COLUMNS, evaluate
from src.raster import Raster, scale_ratio
from src.tuning import tune_gammas

log = logging.getLogger(__name__)

STUDIES = ("iterations", "max_kernel", "lambda")
ABLATION_COLUMNS = ["study", "value", *REPORT_COLUMNS]


def resize_bank(cfg: FilterBankConfig, max_kernel: int) -> FilterBankConfig:
    """Same bank with a new largest size; per-size sigmas and gammas do not carry over."""
    if max_kernel == cfg.max_kernel:
        return cfg
    return FilterBankConfig(max_kernel=max_kernel, sigma_rule="quarter")


class AblationRunner:
    """Fuses one (LR, PAN, GT) scene under varying settings and scores each result."""

    def __init__(
        self,
        lr: Raster,
        pan: Raster,
        gt: Raster,
        f_cfg: FilterBankConfig,
        g_cfg: FilterBankConfig,
        w: BandWeights,
        iteration: IterationConfig = IterationConfig(),
        metrics: MetricsConfig = MetricsConfig(),
    ):
        self.lr, self.pan, self.gt = lr, pan, gt
        self.f_cfg, self.g_cfg = f_cfg, g_cfg
        self.w = w
        self.iteration = iteration
        self.metrics = metrics.model_copy(update={"ratio": scale_ratio(lr, pan)})

    def score(
        self,
        f_bank: MultiScaleFilter,
        g_bank: MultiScaleFilter,
        iteration: IterationConfig,
        metrics: MetricsConfig | None = None,
    ) -> dict[str, float | None]:
        result = arf_fuse(self.lr, self.pan, f_bank, g_bank, self.w, iteration)
        report = evaluate(
            result.fused,
            gt=self.gt,
            lr=self.lr,
            pan=self.pan,
            cfg=metrics or self.metrics,
            weights=self.w,
            fused_intensity=result.intensity_estimate,
        )
        return report.to_row()

    def sweep_iterations(self, values: list[int]) -> list[dict]:
        f_bank, g_bank = build_filter(self.f_cfg), build_filter(self.g_cfg)
        rows = []
        for k in tqdm(values, desc="Iterations", unit="run", disable=None):
            iteration = IterationConfig(**{**self.iteration.model_dump(), "iterations": k})
            row = self.score(f_bank, g_bank, iteration)
            rows.append({"study": "iterations", "value": k, **row})
        return rows

    def sweep_max_kernel(self, values: list[int]) -> list[dict]:
        rows = []
        for m in tqdm(values, desc="Max kernel", unit="run", disable=None):
            f_bank = build_filter(resize_bank(self.f_cfg, m))
            g_bank = build_filter(resize_bank(self.g_cfg, m))
            row = self.score(f_bank, g_bank, self.iteration)
            rows.append({"study": "max_kernel", "value": m, **row})
        return rows

    def sweep_lambda(self, values: list[float], budget: int = 20, seed: int = 0) -> list[dict]:
        """Tune the gammas once per loss weight, then score the tuned banks."""
        f_bank, g_bank = build_filter(self.f_cfg), build_filter(self.g_cfg)
        rows = []
        for lam in tqdm(values, desc="Lambda", unit="run", disable=None):
            if lam < 0:
                raise ParameterError(f"lambda must be >= 0, got {lam}")
            tuned = tune_gammas(
                self.lr, self.pan, self.gt, f_bank, g_bank, self.w, self.iteration,
                budget=budget, seed=seed, lam=lam,
            )  # fmt: skip
            log.debug(f"lambda={lam}: L_sum {tuned.initial_loss:.9g} -> {tuned.best_loss:.9g}")
            metrics = self.metrics.model_copy(update={"lambda_": lam})
            row = self.score(tuned.f_bank, tuned.g_bank, self.iteration, metrics)
            rows.append({"study": "lambda", "value": lam, **row})
        return rows


def run_ablation(
    runner: AblationRunner,
    studies: list[str],
    iterations: list[int],
    max_kernels: list[int],
    lambdas: list[float],
    budget: int = 20,
    seed: int = 0,
) -> pd.DataFrame:
    """Run the requested studies in order and stack their rows into one table."""
    unknown = [s for s in studies if s not in STUDIES]
    if unknown or not studies:
        raise ParameterError(f"studies must be a non-empty subset of {STUDIES}, got {studies}")
    values = {"iterations": iterations, "max_kernel": max_kernels, "lambda": lambdas}
    for study in studies:
        if not values[study]:
            raise ParameterError(f"no values given for the {study} study")

    rows = []
    for study in studies:
        log.info(f"Running {study} study over {values[study]}")
        if study == "iterations":
            rows += runner.sweep_iterations(iterations)
        elif study == "max_kernel":
            rows += runner.sweep_max_kernel(max_kernels)
        else:
            rows += runner.sweep_lambda(lambdas, budget=budget, seed=seed)
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)
