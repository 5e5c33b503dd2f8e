import numpy as np
import pytest

from src.ablation import (
    ABLATION_COLUMNS,
    AblationRunner,
    resize_bank,
    run_ablation,
)
from src.arf import arf_fuse
from src.config import FilterBankConfig, IterationConfig
from src.errors import ParameterError
from src.gauss_filter import build_filter
from src.metrics import psnr


@pytest.fixture
def runner(desk_scene, uniform4):
    return AblationRunner(
        desk_scene.lr,
        desk_scene.pan,
        desk_scene.gt,
        FilterBankConfig(max_kernel=5),
        FilterBankConfig(max_kernel=5),
        uniform4,
    )


def test_resize_bank():
    tuned = FilterBankConfig(max_kernel=5, gammas={1: 0.5, 3: 0.5})
    assert resize_bank(tuned, 5) is tuned
    resized = resize_bank(tuned, 9)
    assert resized.sizes() == [1, 3, 5, 7, 9]
    np.testing.assert_allclose(resized.gamma_vector(), 0.2)


def test_iteration_rows_match_direct_fusion(runner, desk_scene, uniform4):
    rows = runner.sweep_iterations([1, 3])
    assert [row["value"] for row in rows] == [1, 3]
    bank = build_filter(FilterBankConfig(max_kernel=5))
    fused = arf_fuse(
        desk_scene.lr, desk_scene.pan, bank, bank, uniform4, IterationConfig(iterations=3)
    ).fused
    assert rows[1]["PSNR"] == pytest.approx(psnr(fused, desk_scene.gt), rel=1e-8)
    assert rows[0]["PSNR"] != rows[1]["PSNR"]


def test_max_kernel_rows(runner):
    rows = runner.sweep_max_kernel([1, 5])
    assert [row["study"] for row in rows] == ["max_kernel", "max_kernel"]
    assert rows[0]["PSNR"] != rows[1]["PSNR"]


def test_run_ablation_table(runner):
    frame = run_ablation(
        runner,
        ["iterations", "max_kernel", "lambda"],
        iterations=[1, 2],
        max_kernels=[1, 3],
        lambdas=[0.0, 1.0],
        budget=3,
    )
    assert list(frame.columns) == ABLATION_COLUMNS
    assert list(frame["study"]) == ["iterations"] * 2 + ["max_kernel"] * 2 + ["lambda"] * 2
    assert frame[["PSNR", "SSIM", "QNR", "L_sum"]].notna().all().all()
    lam = frame[frame["study"] == "lambda"]
    row = lam.iloc[1]
    assert row["L_sum"] == pytest.approx(row["L_r"] + row["L_s"], rel=1e-6)
    assert lam.iloc[0]["L_sum"] == pytest.approx(lam.iloc[0]["L_r"], rel=1e-6)


def test_run_ablation_validation(runner):
    with pytest.raises(ParameterError):
        run_ablation(runner, ["stripes"], [1], [1], [0.1])
    with pytest.raises(ParameterError):
        run_ablation(runner, [], [1], [1], [0.1])
    with pytest.raises(ParameterError):
        run_ablation(runner, ["iterations"], [], [1], [0.1])
    with pytest.raises(ParameterError):
        runner.sweep_lambda([-1.0], budget=1)
