import numpy as np
import pytest

from src.arf import arf_fuse
from src.config import FilterBankConfig, IterationConfig
from src.errors import ParameterError
from src.gauss_filter import build_filter
from src.metrics import loss_values
from src.raster import Raster, intensity
from src.tuning import move_coordinate, tune_gammas

SMALL = IterationConfig(iterations=2)


@pytest.fixture(scope="module")
def small_bank():
    return build_filter(FilterBankConfig(max_kernel=5))


def test_move_coordinate_rescales_the_rest():
    out = move_coordinate(np.full(4, 0.25), 0, 0.5)
    np.testing.assert_allclose(out, [0.5, 1 / 6, 1 / 6, 1 / 6], atol=1e-15)
    assert out.sum() == pytest.approx(1.0, abs=1e-15)


def test_move_coordinate_from_a_vertex():
    np.testing.assert_allclose(move_coordinate([1.0, 0.0, 0.0], 0, 0.4), [0.4, 0.3, 0.3])
    np.testing.assert_allclose(move_coordinate([1.0], 0, 0.2), [1.0])


def test_budget_validation(desk_scene, small_bank, uniform4):
    with pytest.raises(ParameterError):
        tune_gammas(desk_scene.lr, desk_scene.pan, desk_scene.gt, small_bank, small_bank, uniform4, budget=0)


def test_single_evaluation_keeps_banks(desk_scene, small_bank, uniform4):
    result = tune_gammas(
        desk_scene.lr, desk_scene.pan, desk_scene.gt, small_bank, small_bank, uniform4, SMALL, budget=1
    )
    assert result.evaluations == 1
    assert result.f_bank is small_bank and result.g_bank is small_bank
    assert result.best_loss == result.initial_loss


def test_tuning_never_gets_worse(desk_scene, small_bank, uniform4):
    result = tune_gammas(
        desk_scene.lr, desk_scene.pan, desk_scene.gt, small_bank, small_bank, uniform4, SMALL, budget=30
    )
    assert result.evaluations <= 30
    assert result.best_loss <= result.initial_loss
    for bank in (result.f_bank, result.g_bank):
        gammas = bank.gamma_array()
        assert np.all(gammas >= 0.0)
        assert gammas.sum() == pytest.approx(1.0, abs=1e-9)

    fused = arf_fuse(desk_scene.lr, desk_scene.pan, result.f_bank, result.g_bank, uniform4, SMALL)
    _, _, l_sum = loss_values(
        fused.fused, fused.intensity_estimate, desk_scene.gt, intensity(desk_scene.gt, uniform4)
    )
    assert l_sum == pytest.approx(result.best_loss, abs=1e-12)


def test_tuning_is_seeded(desk_scene, small_bank, uniform4):
    runs = [
        tune_gammas(
            desk_scene.lr, desk_scene.pan, desk_scene.gt, small_bank, small_bank, uniform4, SMALL, budget=20, seed=3
        )
        for _ in range(2)
    ]
    assert runs[0].best_loss == runs[1].best_loss
    assert np.array_equal(runs[0].f_bank.gamma_array(), runs[1].f_bank.gamma_array())
    assert np.array_equal(runs[0].g_bank.gamma_array(), runs[1].g_bank.gamma_array())


def test_default_budget_on_reference_scene(desk_scene, default_bank, uniform4):
    result = tune_gammas(desk_scene.lr, desk_scene.pan, desk_scene.gt, default_bank, default_bank, uniform4)
    assert result.evaluations <= 200
    assert result.best_loss <= result.initial_loss


def test_flat_reference_leaves_reconstruction_loss_alone(default_bank, uniform4):
    gt = Raster.constant(32, 32, 4, 0.4)
    lr = Raster.constant(8, 8, 4, 0.4)
    pan = Raster.constant(32, 32, 1, 0.4)
    gt_i = intensity(gt, uniform4)
    result = tune_gammas(lr, pan, gt, default_bank, default_bank, uniform4, SMALL, budget=10)

    def l_r(f_bank, g_bank):
        fused = arf_fuse(lr, pan, f_bank, g_bank, uniform4, SMALL)
        return loss_values(fused.fused, fused.intensity_estimate, gt, gt_i)[0]

    assert abs(l_r(result.f_bank, result.g_bank) - l_r(default_bank, default_bank)) <= 1e-6
