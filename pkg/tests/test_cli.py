import json
import shutil

import numpy as np
import pytest
from typer.testing import CliRunner

from main import app
from src.config import load_filter_bank_file
from src.metrics import REPORT_COLUMNS
from src.raster_io import read_mbr, read_pnm

runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    result = invoke("simulate", "--size", 64, "--seed", 1, "--out-dir", out)
    assert result.exit_code == 0
    return out


def test_simulate_writes_triple_and_manifest(scene_dir):
    for name, shape in (("gt", (4, 64, 64)), ("lr", (4, 16, 16)), ("pan", (1, 64, 64))):
        assert read_mbr(scene_dir / f"{name}.mbr").data.shape == shape
    assert not (scene_dir / "manifest.json").exists()
    manifest = json.loads((scene_dir / "scene.json").read_text())
    assert manifest["command"] == "simulate"
    assert sorted(manifest["outputs"]) == sorted(str(scene_dir / f"{n}.mbr") for n in ("gt", "lr", "pan"))
    assert all(len(digest) == 64 for digest in manifest["outputs"].values())
    params = manifest["parameters"]
    assert params["blur_sigma"] == 2.0
    assert params["pan_weights"] == [0.25] * 4
    assert (params["seed"], params["width"], params["height"], params["bands"]) == (1, 64, 64, 4)
    assert params["kind"] == "blobs"


def test_simulate_is_deterministic(scene_dir, tmp_path):
    assert invoke("simulate", "--size", 64, "--seed", 1, "--out-dir", tmp_path).exit_code == 0
    for name in ("gt", "lr", "pan"):
        assert (tmp_path / f"{name}.mbr").read_bytes() == (scene_dir / f"{name}.mbr").read_bytes()


def test_simulate_ratio_checks(tmp_path):
    assert invoke("simulate", "--size", 96, "--ratio", 3, "--out-dir", tmp_path / "a").exit_code == 0
    assert read_mbr(tmp_path / "a" / "lr.mbr").size == (32, 32)
    assert invoke("simulate", "--size", 100, "--ratio", 3, "--out-dir", tmp_path / "b").exit_code == 1
    assert invoke("simulate", "--size", 64, "--ratio", 1, "--out-dir", tmp_path / "c").exit_code == 1


def sharpen(scene_dir, out, *extra):
    return invoke(
        "sharpen", "--lr", scene_dir / "lr.mbr", "--pan", scene_dir / "pan.mbr", "--out", out, *extra
    )


def test_single_dirac_iteration_matches_ihs(scene_dir, tmp_path):
    assert sharpen(scene_dir, tmp_path / "ihs.mbr", "--method", "ihs").exit_code == 0
    assert sharpen(scene_dir, tmp_path / "arf.mbr", "--iters", 1, "--max-kernel", 1).exit_code == 0
    assert (tmp_path / "arf.mbr").read_bytes() == (tmp_path / "ihs.mbr").read_bytes()
    assert (tmp_path / "arf.manifest.json").exists()


def test_sharpen_trace_is_deterministic(scene_dir, tmp_path):
    for run in ("a", "b"):
        result = sharpen(
            scene_dir,
            tmp_path / f"{run}.mbr",
            "--trace",
            tmp_path / f"{run}.csv",
            "--intensity-out",
            tmp_path / f"{run}_i.mbr",
        )
        assert result.exit_code == 0
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "k,ms_residual,pan_residual,delta,ratio"
    assert len(lines) == 6
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.mbr").read_bytes() == (tmp_path / "b.mbr").read_bytes()
    assert read_mbr(tmp_path / "a_i.mbr").bands == 1


@pytest.mark.parametrize("method", ["brovey", "gs", "sfim", "upsample"])
def test_sharpen_baselines(scene_dir, tmp_path, method):
    assert sharpen(scene_dir, tmp_path / "out.mbr", "--method", method).exit_code == 0
    assert read_mbr(tmp_path / "out.mbr").data.shape == (4, 64, 64)


def test_sharpen_rejects_bad_input(scene_dir, tmp_path):
    assert sharpen(scene_dir, tmp_path / "x.mbr", "--method", "pca").exit_code == 2
    assert sharpen(scene_dir, tmp_path / "x.mbr", "--weights", "0.5,0.5").exit_code == 1
    missing = invoke(
        "sharpen", "--lr", tmp_path / "nope.mbr", "--pan", scene_dir / "pan.mbr", "--out", tmp_path / "x.mbr"
    )
    assert missing.exit_code == 1


def test_evaluate_identity_json(scene_dir, tmp_path):
    report = tmp_path / "report.json"
    result = invoke(
        "evaluate",
        "--fused", scene_dir / "gt.mbr",
        "--gt", scene_dir / "gt.mbr",
        "--lr", scene_dir / "lr.mbr",
        "--pan", scene_dir / "pan.mbr",
        "--json",
        "--out", report,
    )  # fmt: skip
    assert result.exit_code == 0
    body = json.loads(report.read_text())
    assert body["psnr"] == 99.0
    assert body["ssim"] == 1.0
    assert body["ergas"] == 0.0
    assert body["meta"]["ratio"] == 4
    assert body["qnr"] is not None


def test_evaluate_without_reference(scene_dir, tmp_path):
    report = tmp_path / "report.json"
    result = invoke(
        "evaluate",
        "--fused", scene_dir / "gt.mbr",
        "--lr", scene_dir / "lr.mbr",
        "--pan", scene_dir / "pan.mbr",
        "--json",
        "--out", report,
    )  # fmt: skip
    assert result.exit_code == 0
    body = json.loads(report.read_text())
    assert body["psnr"] is None and body["l_sum"] is None
    assert 0.0 <= body["qnr"] <= 1.0


def test_evaluate_argument_checks(scene_dir):
    assert invoke("evaluate").exit_code == 1
    assert invoke("evaluate", "--fused", scene_dir / "gt.mbr", "--json", "--csv").exit_code == 1


def test_evaluate_batch(scene_dir, tmp_path):
    batch = tmp_path / "batch"
    for scene in ("s1", "s2"):
        (batch / scene).mkdir(parents=True)
        for name in ("gt", "lr", "pan"):
            shutil.copy(scene_dir / f"{name}.mbr", batch / scene / f"{name}.mbr")
        shutil.copy(scene_dir / "gt.mbr", batch / scene / "fused.mbr")
    (batch / "empty").mkdir()

    table = tmp_path / "table.csv"
    assert invoke("evaluate", "--batch", batch, "--out", table).exit_code == 0
    lines = table.read_text().splitlines()
    assert lines[0] == ",".join(["scene", *REPORT_COLUMNS])
    assert [line.split(",")[0] for line in lines[1:]] == ["s1", "s2"]
    assert lines[1].split(",")[1] == "99"


def test_verify_default_banks_pass():
    result = invoke("verify", "--grid", "64x64")
    assert result.exit_code == 0
    lines = result.stdout.splitlines()
    assert lines[0].startswith("ms: c=") and lines[0].endswith("PASS")
    assert lines[1].startswith("pan: c=")
    assert lines[-1] == "PASS"


def test_verify_dirac_bank_has_zero_constant():
    result = invoke("verify", "--max-kernel", 1, "--grid", "32x32")
    assert result.exit_code == 0
    assert result.stdout.startswith("ms: c=0 ")


def test_verify_rejects_negative_gamma(tmp_path):
    bank = tmp_path / "bank.txt"
    bank.write_text("M=3\ngamma_1=-0.5\ngamma_3=1.5\n")
    assert invoke("verify", "--gamma-file", bank).exit_code == 1


def test_verify_fails_on_truncated_kernel(tmp_path):
    bank = tmp_path / "bank.txt"
    bank.write_text("M=5\nsigma_rule=explicit\nsigma_3=0.75\nsigma_5=1.25\ngamma_5=1\n")
    result = invoke("verify", "--gamma-file", bank, "--grid", "64x64")
    assert result.exit_code == 1
    assert result.stdout.splitlines()[-1] == "FAIL"


def test_verify_uses_image_grid(scene_dir):
    result = invoke("verify", "--image", scene_dir / "pan.mbr")
    assert result.exit_code == 0
    assert "on 128x128" in result.stdout


def test_convert_round_trip(scene_dir, tmp_path):
    assert invoke("convert", "--input", scene_dir / "pan.mbr", "--output", tmp_path / "pan.pgm").exit_code == 0
    assert invoke("convert", "--input", tmp_path / "pan.pgm", "--output", tmp_path / "back.mbr").exit_code == 0
    original = read_mbr(scene_dir / "pan.mbr")
    back = read_mbr(tmp_path / "back.mbr")
    np.testing.assert_array_equal(back.data, read_pnm(tmp_path / "pan.pgm").to_f32().data)
    assert np.max(np.abs(back.data - original.data)) <= 0.5 / 255 + 1e-6

    assert invoke("convert", "--input", scene_dir / "gt.mbr", "--output", tmp_path / "gt.ppm").exit_code == 0
    assert (tmp_path / "gt.ppm").read_bytes().startswith(b"P6\n64 64\n255\n")
    assert invoke("convert", "--input", scene_dir / "gt.mbr", "--output", tmp_path / "gt.tif").exit_code == 1


def test_tune_writes_bank_files(scene_dir, tmp_path):
    result = invoke(
        "tune",
        "--lr", scene_dir / "lr.mbr",
        "--pan", scene_dir / "pan.mbr",
        "--gt", scene_dir / "gt.mbr",
        "--budget", 4,
        "--iters", 1,
        "--max-kernel", 3,
        "--out-dir", tmp_path,
    )  # fmt: skip
    assert result.exit_code == 0
    for name in ("ms_bank.txt", "pan_bank.txt"):
        bank = load_filter_bank_file(tmp_path / name)
        assert bank.max_kernel == 3
        assert sum(bank.gamma_vector()) == pytest.approx(1.0, abs=1e-9)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["parameters"]["evaluations"] <= 4
    assert manifest["parameters"]["best_loss"] <= manifest["parameters"]["initial_loss"]


def test_ablate_writes_table(scene_dir, tmp_path):
    table = tmp_path / "ablation.csv"
    result = invoke(
        "ablate",
        "--lr", scene_dir / "lr.mbr",
        "--pan", scene_dir / "pan.mbr",
        "--gt", scene_dir / "gt.mbr",
        "--study", "iterations",
        "--study", "max_kernel",
        "--iters", "1,2",
        "--max-kernels", "1,3",
        "--out", table,
    )  # fmt: skip
    assert result.exit_code == 0
    lines = table.read_text().splitlines()
    assert lines[0] == ",".join(["study", "value", *REPORT_COLUMNS])
    assert [line.split(",")[:2] for line in lines[1:]] == [
        ["iterations", "1"], ["iterations", "2"], ["max_kernel", "1"], ["max_kernel", "3"],
    ]  # fmt: skip
    manifest = json.loads((tmp_path / "ablation.manifest.json").read_text())
    assert manifest["parameters"]["iterations"] == [1, 2]


def test_ablate_rejects_bad_lists(scene_dir):
    args = ["--lr", scene_dir / "lr.mbr", "--pan", scene_dir / "pan.mbr", "--gt", scene_dir / "gt.mbr"]
    assert invoke("ablate", *args, "--study", "iterations", "--iters", "1,x").exit_code == 1
    assert invoke("ablate", *args, "--study", "stripes").exit_code == 1
    assert invoke("ablate", *args, "--study", "lambda", "--lambdas", "-1").exit_code == 1


def test_runs_are_recorded_in_registry(tmp_path):
    config = tmp_path / "config.yml"
    config.write_text(f"registry:\n  path: {tmp_path / 'runs.db'}\n")
    out = tmp_path / "scene"
    assert invoke("--config", config, "simulate", "--size", 32, "--out-dir", out).exit_code == 0
    assert invoke("--config", config, "convert", "--input", out / "pan.mbr", "--output", out / "pan.pgm").exit_code == 0

    result = invoke("--config", config, "runs")
    assert result.exit_code == 0
    lines = result.stdout.splitlines()
    assert len(lines) == 2
    assert " convert " in lines[0] and " simulate " in lines[1]

    only = invoke("--config", config, "runs", "--command", "simulate")
    assert len(only.stdout.splitlines()) == 1


def test_runs_without_registry():
    assert invoke("runs").exit_code == 1


def test_invalid_config(tmp_path):
    config = tmp_path / "bad.yml"
    config.write_text("iteration:\n  iterations: 0\n")
    assert invoke("--config", config, "verify").exit_code == 1
