"""Derivative-free tuning of the filter bank mixing coefficients on a reference scene."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from src.arf import arf_fuse
from src.config import BandWeights, IterationConfig
from src.errors import ParameterError
from src.gauss_filter import MultiScaleFilter
from src.metrics import loss_values
from src.raster import Raster, intensity
from src.wald_sim import rng_for

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class TuningResult:
    """Best filter bank pair found and the objective before and after."""

    f_bank: MultiScaleFilter
    g_bank: MultiScaleFilter
    initial_loss: float
    best_loss: float
    evaluations: int


def move_coordinate(gammas: np.ndarray, j: int, t: float) -> np.ndarray:
    """Set gamma_j = t and rescale the other coefficients to keep the sum at 1."""
    out = np.asarray(gammas, dtype=np.float64).copy()
    rest = 1.0 - out[j]
    others = np.arange(len(out)) != j
    if rest > 0.0:
        out[others] *= (1.0 - t) / rest
    elif len(out) > 1:
        out[others] = (1.0 - t) / (len(out) - 1)
    out[j] = t if len(out) > 1 else 1.0
    return out / out.sum()


class _Objective:
    """Cached L_sum evaluations under an evaluation budget."""

    def __init__(self, lr, pan, gt, f_bank, g_bank, w, cfg, lam, progress):
        self.lr, self.pan, self.gt = lr, pan, gt
        self.f_bank, self.g_bank = f_bank, g_bank
        self.w, self.cfg, self.lam = w, cfg, lam
        self.gt_i = intensity(gt, w)
        self.cache: dict[tuple[float, ...], float] = {}
        self.progress = progress
        self.split = len(f_bank.gammas)

    def banks(self, vector: np.ndarray) -> tuple[MultiScaleFilter, MultiScaleFilter]:
        return (
            self.f_bank.with_gammas(vector[: self.split]),
            self.g_bank.with_gammas(vector[self.split :]),
        )

    @property
    def evaluations(self) -> int:
        return len(self.cache)

    def __call__(self, vector: np.ndarray, budget: int) -> float | None:
        """Loss of a coefficient vector; None when a fresh evaluation would exceed the budget."""
        key = tuple(float(v) for v in vector)
        if key in self.cache:
            return self.cache[key]
        if self.evaluations >= budget:
            return None
        f_bank, g_bank = self.banks(vector)
        result = arf_fuse(self.lr, self.pan, f_bank, g_bank, self.w, self.cfg)
        _, _, l_sum = loss_values(
            result.fused, result.intensity_estimate, self.gt, self.gt_i, self.lam
        )
        self.cache[key] = l_sum
        self.progress.update(1)
        return l_sum


def _line_search(objective, vector, j, budget, steps):
    """Golden-section search of gamma_j over [0, 1]; returns the best (loss, vector) seen."""
    best = None

    def try_point(t):
        nonlocal best
        candidate = move_coordinate(vector, j, t)
        loss = objective(candidate, budget)
        if loss is not None and (best is None or loss < best[0]):
            best = (loss, candidate)
        return loss

    a, b = 0.0, 1.0
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = try_point(c), try_point(d)
    for _ in range(steps):
        if fc is None or fd is None:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = try_point(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = try_point(d)
    return best


def tune_gammas(
    lr: Raster,
    pan: Raster,
    gt: Raster,
    f_bank: MultiScaleFilter,
    g_bank: MultiScaleFilter,
    w: BandWeights,
    cfg: IterationConfig = IterationConfig(),
    budget: int = 200,
    seed: int = 0,
    lam: float = 0.1,
    line_steps: int = 8,
) -> TuningResult:
    """Coordinate search on both gamma simplices minimizing L_sum against the reference.

    Each coordinate move sets one gamma to t in [0, 1] and rescales the others
    proportionally; t comes from a golden-section search. Coordinates are visited
    in a seeded random order per sweep and only strict improvements are kept, so
    the returned banks never score worse than the initial ones. The search stops
    when the budget of distinct evaluations is spent or a sweep finds nothing.
    """
    if budget < 1:
        raise ParameterError(f"budget must be >= 1, got {budget}")
    rng = rng_for(seed)

    with tqdm(total=budget, desc="Tuning gammas", unit="eval", disable=None) as progress:
        objective = _Objective(lr, pan, gt, f_bank, g_bank, w, cfg, lam, progress)
        best_vector = np.concatenate([f_bank.gamma_array(), g_bank.gamma_array()])
        initial_loss = best_loss = objective(best_vector, budget)
        log.info(f"Initial L_sum {initial_loss:.9g}")

        improved = True
        while improved and objective.evaluations < budget:
            improved = False
            for j in rng.permutation(len(best_vector)):
                if objective.evaluations >= budget:
                    break
                found = _line_search(objective, best_vector, int(j), budget, line_steps)
                if found is not None and found[0] < best_loss:
                    best_loss, best_vector = found
                    improved = True
                    log.debug(f"Coordinate {j}: L_sum {best_loss:.9g}")

    best_f, best_g = f_bank, g_bank
    if best_loss < initial_loss:
        best_f, best_g = objective.banks(best_vector)
    log.info(
        f"Tuning finished after {objective.evaluations} evaluations: "
        f"L_sum {initial_loss:.9g} -> {best_loss:.9g}"
    )
    return TuningResult(best_f, best_g, initial_loss, best_loss, objective.evaluations)
