"""Configuration settings for the pan-sharpening toolkit."""

import logging
import os
import re
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

log = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-6


def _normalized(values: list[float], what: str) -> list[float]:
    """Check a simplex vector and renormalize it so the sum is 1 to rounding."""
    if not values:
        raise ValueError(f"{what} must not be empty")
    if any(not np.isfinite(v) or v < 0 for v in values):
        raise ValueError(f"{what} must be finite and non-negative, got {values}")
    total = float(np.sum(values))
    if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise ValueError(f"{what} must sum to 1, got {total}")
    return [float(v) / total for v in values]


class BandWeights(BaseModel):
    """Per-band weights forming the generalized IHS intensity."""

    model_config = ConfigDict(frozen=True)

    weights: list[float]

    @field_validator("weights")
    @classmethod
    def _check_simplex(cls, value: list[float]) -> list[float]:
        return _normalized(value, "band weights")

    @classmethod
    def uniform(cls, bands: int) -> "BandWeights":
        if bands < 1:
            raise ValueError("bands must be >= 1")
        return cls(weights=[1.0 / bands] * bands)

    @classmethod
    def parse(cls, text: str) -> "BandWeights":
        """Parse a comma separated list such as ``0.25,0.25,0.25,0.25``."""
        return cls(weights=[float(part) for part in text.split(",") if part.strip()])

    def __len__(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


class FilterBankConfig(BaseModel):
    """Multi-scale Gaussian filter bank settings (kernel sizes 1, 3, ..., M)."""

    max_kernel: int = 17
    sigma_rule: Literal["quarter", "explicit"] = "quarter"
    sigmas: dict[int, float] = {}  # size -> sigma, overrides the rule
    gammas: dict[int, float] = {}  # size -> mixing coefficient, empty = uniform

    @field_validator("max_kernel")
    @classmethod
    def _check_max_kernel(cls, value: int) -> int:
        if value < 1 or value % 2 == 0:
            raise ValueError(f"max kernel size must be odd and >= 1, got {value}")
        return value

    @model_validator(mode="after")
    def _check_bank(self) -> "FilterBankConfig":
        sizes = set(self.sizes())
        for size, sigma in self.sigmas.items():
            if size not in sizes:
                raise ValueError(f"sigma given for size {size} outside the bank")
            if sigma < 0:
                raise ValueError(f"sigma for size {size} must be >= 0")
        if self.sigma_rule == "explicit":
            missing = [s for s in sizes if s > 1 and s not in self.sigmas]
            if missing:
                raise ValueError(f"explicit sigma rule needs sigmas for sizes {missing}")
        for size in self.gammas:
            if size not in sizes:
                raise ValueError(f"gamma given for size {size} outside the bank")
        if self.gammas:
            _normalized([self.gammas.get(s, 0.0) for s in self.sizes()], "gammas")
        return self

    def sizes(self) -> list[int]:
        return list(range(1, self.max_kernel + 1, 2))

    def sigma_for(self, size: int) -> float:
        if size == 1:
            return 0.0
        if size in self.sigmas:
            return float(self.sigmas[size])
        return size / 4.0

    def gamma_vector(self) -> np.ndarray:
        sizes = self.sizes()
        if not self.gammas:
            return np.full(len(sizes), 1.0 / len(sizes))
        return np.asarray(
            _normalized([self.gammas.get(s, 0.0) for s in sizes], "gammas")
        )


class IterationConfig(BaseModel):
    """Alternating reverse filtering loop settings."""

    iterations: int = Field(5, ge=1)  # K
    residual_tolerance: float = Field(0.0, ge=0.0)  # 0 disables early stop
    record_trace: bool = True
    pan_inner_steps: int = Field(1, ge=1)


class WaldConfig(BaseModel):
    """Wald protocol degradation settings."""

    ratio: int = Field(4, ge=2)
    blur_sigma: float | None = None  # None -> ratio / 2
    pan_weights: list[float] | None = None  # None -> uniform
    noise_sigma: float = Field(0.0, ge=0.0)
    seed: int = 0

    @field_validator("blur_sigma")
    @classmethod
    def _check_sigma(cls, value: float | None) -> float | None:
        if value is not None and value < 0:
            raise ValueError("blur sigma must be >= 0")
        return value

    def sigma(self) -> float:
        return self.ratio / 2.0 if self.blur_sigma is None else self.blur_sigma

    def band_weights(self, bands: int) -> BandWeights:
        if self.pan_weights is None:
            return BandWeights.uniform(bands)
        return BandWeights(weights=self.pan_weights)


class MetricsConfig(BaseModel):
    """Quality metric settings."""

    model_config = ConfigDict(populate_by_name=True)

    lambda_: float = Field(0.1, ge=0.0, alias="lambda")
    ratio: int = Field(4, ge=1)
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    q_block: int = 8


class RegistryConfig(BaseModel):
    """Run registry settings."""

    path: str = ""  # sqlite file; empty disables the registry


class AppConfig(BaseModel):
    """Application configuration settings."""

    intensity_weights: list[float] | None = None
    ms_filter: FilterBankConfig = FilterBankConfig()
    pan_filter: FilterBankConfig = FilterBankConfig()
    iteration: IterationConfig = IterationConfig()
    wald: WaldConfig = WaldConfig()
    metrics: MetricsConfig = MetricsConfig()
    registry: RegistryConfig = RegistryConfig()
    threads: int = Field(0, ge=0)

    def band_weights(self, bands: int) -> BandWeights:
        if self.intensity_weights is None:
            return BandWeights.uniform(bands)
        return BandWeights(weights=self.intensity_weights)


def load_config(yaml_path: str | None = None) -> AppConfig:
    """Load configuration from a YAML file, or defaults when no path is given."""
    if yaml_path is None:
        return AppConfig()

    with open(yaml_path, "r") as file:
        config_data = yaml.safe_load(file) or {}

    return AppConfig(**config_data)


_BANK_KEY = re.compile(r"^(sigma|gamma)_(\d+)$")


def parse_filter_bank_text(text: str) -> FilterBankConfig:
    """Parse the ``key=value`` filter bank format."""
    fields: dict = {"sigmas": {}, "gammas": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "M":
            fields["max_kernel"] = int(value)
        elif key == "sigma_rule":
            fields["sigma_rule"] = value
        elif match := _BANK_KEY.match(key):
            kind, size = match.group(1), int(match.group(2))
            fields[f"{kind}s"][size] = float(value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return FilterBankConfig(**fields)


def load_filter_bank_file(path: str | Path) -> FilterBankConfig:
    """Load a filter bank configuration file."""
    return parse_filter_bank_text(Path(path).read_text())


def format_filter_bank(cfg: FilterBankConfig) -> str:
    lines = [f"M={cfg.max_kernel}", f"sigma_rule={cfg.sigma_rule}"]
    for size in sorted(cfg.sigmas):
        lines.append(f"sigma_{size}={cfg.sigmas[size]:.9g}")
    for size, gamma in zip(cfg.sizes(), cfg.gamma_vector()):
        lines.append(f"gamma_{size}={gamma:.17g}")
    return "\n".join(lines) + "\n"


def dump_filter_bank_file(cfg: FilterBankConfig, path: str | Path):
    """Write a filter bank configuration file."""
    Path(path).write_text(format_filter_bank(cfg))


_configured_threads = 0


def set_threads(threads: int):
    """Set the worker thread count used when ARF_THREADS is not set."""
    global _configured_threads
    _configured_threads = max(0, int(threads))


def worker_count() -> int:
    """Number of worker threads; ARF_THREADS overrides the configured value."""
    configured = _configured_threads
    env = os.environ.get("ARF_THREADS", "").strip()
    if env:
        try:
            configured = int(env)
        except ValueError:
            log.warning(f"Ignoring invalid ARF_THREADS={env!r}")
    if configured <= 0:
        return os.cpu_count() or 1
    return configured
