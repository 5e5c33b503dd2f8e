"""Main entry point for the pan-sharpening toolkit."""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import pandas as pd
import typer
import yaml
from pydantic import ValidationError
from tqdm import tqdm

from src.ablation import STUDIES, AblationRunner, run_ablation
from src.arf import arf_fuse
from src.baselines import get_fuser
from src.config import (
    AppConfig,
    BandWeights,
    FilterBankConfig,
    IterationConfig,
    MetricsConfig,
    WaldConfig,
    dump_filter_bank_file,
    format_filter_bank,
    load_config,
    load_filter_bank_file,
    set_threads,
)
from src.errors import FormatError, ParameterError, PansharpenError
from src.gauss_filter import build_filter, contraction_constant
from src.log_config import basic_config
from src.manifest import MANIFEST_NAME, SCENE_MANIFEST_NAME, RunManifest, RunRegistry
from src.metrics import REPORT_COLUMNS, MetricReport, evaluate
from src.raster import Raster, intensity, scale_ratio
from src.raster_io import read_mbr, read_pnm, write_mbr, write_pnm
from src.tuning import tune_gammas
from src.wald_sim import SceneKind, make_scene, simulate as simulate_scene

log = logging.getLogger(__name__)
app = typer.Typer(help="Pan-sharpening by alternating reverse filtering.")

PNM_SUFFIXES = {".pgm", ".ppm", ".pnm"}
SCENE_FILES = ("gt", "lr", "pan", "fused")


class Method(str, Enum):
    arf = "arf"
    ihs = "ihs"
    brovey = "brovey"
    gs = "gs"
    sfim = "sfim"
    upsample = "upsample"


class SigmaRule(str, Enum):
    quarter = "quarter"
    explicit = "explicit"


@dataclass
class State:
    config: AppConfig
    verbose: bool


@app.callback()
def main(
    ctx: typer.Context,
    config_path: str = typer.Option(None, "--config", help="Path to YAML configuration file"),
    verbose: bool = typer.Option(False, "--verbose", help="Enable debug logging"),
):
    """Pan-sharpening toolkit built on alternating reverse filtering."""
    basic_config(verbose)
    try:
        config = load_config(config_path)
    except (OSError, ValidationError, yaml.YAMLError) as e:
        log.error(f"Invalid configuration {config_path}: {e}")
        raise typer.Exit(1)
    set_threads(config.threads)
    log.debug(f"Loaded config: {config}")
    ctx.obj = State(config=config, verbose=verbose)


@contextmanager
def running(command: str):
    """Start/end banners; toolkit and validation errors become exit code 1."""
    banner = command.upper()
    log.info(f"+-+-+-+-+-START-{banner}-+-+-+-+-+")
    try:
        yield
    except (PansharpenError, ValueError, OSError) as e:
        log.error(f"{command} failed: {e}")
        raise typer.Exit(1)
    finally:
        log.info(f"+-+-+-+-+-END-{banner}-+-+-+-+-+")


def manifest_path(output: str | Path) -> Path:
    output = Path(output)
    return output.with_name(f"{output.stem}.manifest.json")


def record_run(state: State, manifest: RunManifest, started: float, path: Path | None):
    manifest.finish(started)
    if path is not None:
        manifest.write(path)
    if state.config.registry.path:
        run_id = RunRegistry(state.config.registry.path).record(manifest)
        log.debug(f"Recorded run #{run_id}")


def resolve_bank(
    base: FilterBankConfig,
    gamma_file: str | None,
    max_kernel: int | None,
    sigma_rule: SigmaRule | None,
) -> FilterBankConfig:
    """Bank from the config or a bank file, with command-line overrides applied."""
    cfg = load_filter_bank_file(gamma_file) if gamma_file else base
    fields = cfg.model_dump()
    if max_kernel is not None and max_kernel != cfg.max_kernel:
        if cfg.gammas or cfg.sigmas:
            log.warning(f"--max-kernel {max_kernel} replaces the per-size sigmas and gammas")
        fields.update(max_kernel=max_kernel, gammas={}, sigmas={})
    if sigma_rule is not None:
        fields["sigma_rule"] = sigma_rule.value
    return FilterBankConfig(**fields)


def resolve_weights(state: State, weights: str | None, bands: int) -> BandWeights:
    if weights:
        return BandWeights.parse(weights)
    return state.config.band_weights(bands)


def read_raster(path: str | Path) -> Raster:
    path = Path(path)
    if path.suffix.lower() in PNM_SUFFIXES:
        return read_pnm(path)
    return read_mbr(path)


@app.command("simulate")
def simulate_cmd(
    ctx: typer.Context,
    kind: SceneKind = typer.Option(SceneKind.blobs, "--kind", help="Procedural scene kind"),
    size: int = typer.Option(128, "--size", help="Scene width and height in pixels"),
    bands: int = typer.Option(4, "--bands", help="Number of MS bands"),
    ratio: int = typer.Option(None, "--ratio", help="Resolution ratio (config: wald.ratio)"),
    seed: int = typer.Option(None, "--seed", help="Scene and noise seed (config: wald.seed)"),
    noise: float = typer.Option(None, "--noise", help="LR noise sigma (config: wald.noise_sigma)"),
    input_path: str = typer.Option(
        None, "--input", help="Use an existing MBR raster as ground truth"
    ),
    out_dir: str = typer.Option(".", "--out-dir", help="Directory for gt/lr/pan files"),
):
    """Build a Wald protocol (GT, LR MS, PAN) triple."""
    state: State = ctx.obj
    started = time.perf_counter()
    with running("simulate"):
        overrides = {"ratio": ratio, "seed": seed, "noise_sigma": noise}
        wald = WaldConfig(
            **{
                **state.config.wald.model_dump(),
                **{k: v for k, v in overrides.items() if v is not None},
            }
        )
        manifest = RunManifest(command="simulate")
        if input_path:
            gt = read_mbr(input_path)
            manifest.add_input(input_path)
        else:
            gt = make_scene(kind, size, size, bands, seed=wald.seed)
        scene = simulate_scene(gt.to_f32(), wald)
        # record what was applied, not the null defaults
        manifest.parameters = {
            "kind": None if input_path else kind.value,
            "width": gt.width,
            "height": gt.height,
            "bands": gt.bands,
            "ratio": wald.ratio,
            "blur_sigma": wald.sigma(),
            "pan_weights": wald.band_weights(gt.bands).weights,
            "noise_sigma": wald.noise_sigma,
            "seed": wald.seed,
        }

        out = Path(out_dir)
        for name, raster in (("gt", scene.gt), ("lr", scene.lr), ("pan", scene.pan)):
            path = out / f"{name}.mbr"
            write_mbr(raster, path)
            manifest.add_output(path)
            typer.echo(f"Wrote {path} ({raster.width}x{raster.height}x{raster.bands})")
        record_run(state, manifest, started, out / SCENE_MANIFEST_NAME)


@app.command()
def sharpen(
    ctx: typer.Context,
    method: Method = typer.Option(Method.arf, "--method", help="Fusion method"),
    lr_path: str = typer.Option(..., "--lr", help="Low resolution MS raster (MBR)"),
    pan_path: str = typer.Option(..., "--pan", help="PAN raster (MBR)"),
    out: str = typer.Option(..., "--out", help="Fused MBR output path"),
    iters: int = typer.Option(None, "--iters", help="Outer iterations K"),
    max_kernel: int = typer.Option(None, "--max-kernel", help="Largest kernel size M"),
    sigma_rule: SigmaRule = typer.Option(None, "--sigma-rule", help="Sigma rule"),
    gamma_file: str = typer.Option(None, "--gamma-file", help="MS branch filter bank file"),
    pan_gamma_file: str = typer.Option(
        None, "--pan-gamma-file", help="PAN branch filter bank file (default: --gamma-file)"
    ),
    weights: str = typer.Option(None, "--weights", help="Comma separated intensity weights"),
    trace: str = typer.Option(None, "--trace", help="Write the ARF iteration trace CSV"),
    intensity_out: str = typer.Option(
        None, "--intensity-out", help="Write the intensity estimate MBR"
    ),
):
    """Fuse an LR MS raster with a PAN raster."""
    state: State = ctx.obj
    started = time.perf_counter()
    with running("sharpen"):
        lr, pan = read_mbr(lr_path), read_mbr(pan_path)
        w = resolve_weights(state, weights, lr.bands)
        manifest = RunManifest(
            command="sharpen", parameters={"method": method.value, "weights": w.weights}
        )
        manifest.add_input(lr_path)
        manifest.add_input(pan_path)

        if method is Method.arf:
            ms_cfg = resolve_bank(state.config.ms_filter, gamma_file, max_kernel, sigma_rule)
            pan_cfg = resolve_bank(
                state.config.pan_filter, pan_gamma_file or gamma_file, max_kernel, sigma_rule
            )
            iteration = state.config.iteration
            if iters is not None:
                iteration = IterationConfig(**{**iteration.model_dump(), "iterations": iters})
            manifest.parameters.update(
                ms_bank=format_filter_bank(ms_cfg),
                pan_bank=format_filter_bank(pan_cfg),
                iteration=iteration.model_dump(),
            )
            result = arf_fuse(lr, pan, build_filter(ms_cfg), build_filter(pan_cfg), w, iteration)
            fused, fused_i = result.fused, result.intensity_estimate
            if trace:
                result.trace.write_csv(trace)
                manifest.add_output(trace)
        else:
            if trace:
                log.warning("--trace only applies to --method arf")
            fused = get_fuser(method.value)(lr, pan, w)
            fused_i = intensity(fused, w)

        write_mbr(fused, out)
        manifest.add_output(out)
        if intensity_out:
            write_mbr(fused_i, intensity_out)
            manifest.add_output(intensity_out)
        log.info(f"Fused {method.value}: {fused!r} -> {out}")
        record_run(state, manifest, started, manifest_path(out))


def format_report_text(report: MetricReport) -> str:
    lines = []
    for name, value in report.to_row().items():
        lines.append(f"{name:<9}{'null' if value is None else f'{value:.9g}'}")
    return "\n".join(lines) + "\n"


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format="%.9g", na_rep="", lineterminator="\n")


def _optional(path: Path) -> Raster | None:
    return read_mbr(path) if path.exists() else None


@app.command("evaluate")
def evaluate_cmd(
    ctx: typer.Context,
    fused_path: str = typer.Option(None, "--fused", help="Fused MBR raster"),
    gt_path: str = typer.Option(None, "--gt", help="Reference HR MS raster"),
    lr_path: str = typer.Option(None, "--lr", help="LR MS raster (no-reference metrics)"),
    pan_path: str = typer.Option(None, "--pan", help="PAN raster (no-reference metrics)"),
    ratio: int = typer.Option(None, "--ratio", help="Resolution ratio for ERGAS"),
    lam: float = typer.Option(None, "--lambda", help="Weight of the structural loss"),
    weights: str = typer.Option(None, "--weights", help="Comma separated intensity weights"),
    as_json: bool = typer.Option(False, "--json", help="Print a JSON report"),
    as_csv: bool = typer.Option(False, "--csv", help="Print a CSV row"),
    batch: str = typer.Option(
        None, "--batch", help="Directory of scene folders holding gt/lr/pan/fused.mbr"
    ),
    out: str = typer.Option(None, "--out", help="Also write the report to this file"),
):
    """Compute quality metrics of fused rasters."""
    state: State = ctx.obj
    started = time.perf_counter()
    with running("evaluate"):
        if as_json and as_csv:
            raise ParameterError("--json and --csv are mutually exclusive")
        if bool(fused_path) == bool(batch):
            raise ParameterError("give exactly one of --fused or --batch")
        overrides = {"ratio": ratio, "lambda_": lam}
        base = state.config.metrics.model_dump()
        cfg = MetricsConfig(**{**base, **{k: v for k, v in overrides.items() if v is not None}})
        manifest = RunManifest(command="evaluate", parameters=cfg.model_dump(by_alias=True))

        if batch:
            scenes = sorted(p for p in Path(batch).iterdir() if p.is_dir())
            rows = []
            for scene_dir in tqdm(scenes, desc="Evaluating scenes", unit="scene", disable=None):
                paths = {name: scene_dir / f"{name}.mbr" for name in SCENE_FILES}
                if not paths["fused"].exists():
                    log.warning(f"Skipping {scene_dir}: no fused.mbr")
                    continue
                rasters = {name: _optional(path) for name, path in paths.items()}
                for path in paths.values():
                    if path.exists():
                        manifest.add_input(path)
                fused = rasters["fused"]
                scene_cfg = cfg
                if rasters["lr"] is not None and ratio is None:
                    scene_cfg = cfg.model_copy(update={"ratio": scale_ratio(rasters["lr"], fused)})
                report = evaluate(
                    fused,
                    gt=rasters["gt"],
                    lr=rasters["lr"],
                    pan=rasters["pan"],
                    cfg=scene_cfg,
                    weights=resolve_weights(state, weights, fused.bands),
                )
                rows.append({"scene": scene_dir.name, **report.to_row()})
            if not rows:
                raise ParameterError(f"no scene folders with fused.mbr under {batch}")
            text = frame_to_csv(pd.DataFrame(rows, columns=["scene", *REPORT_COLUMNS]))
        else:
            fused = read_mbr(fused_path)
            manifest.add_input(fused_path)
            rasters = {}
            for name, path in (("gt", gt_path), ("lr", lr_path), ("pan", pan_path)):
                if path:
                    rasters[name] = read_mbr(path)
                    manifest.add_input(path)
            if "lr" in rasters and ratio is None:
                cfg = cfg.model_copy(update={"ratio": scale_ratio(rasters["lr"], fused)})
            report = evaluate(
                fused,
                gt=rasters.get("gt"),
                lr=rasters.get("lr"),
                pan=rasters.get("pan"),
                cfg=cfg,
                weights=resolve_weights(state, weights, fused.bands),
            )
            if as_json:
                text = report.to_json() + "\n"
            elif as_csv:
                text = frame_to_csv(pd.DataFrame([report.to_row()], columns=REPORT_COLUMNS))
            else:
                text = format_report_text(report)

        typer.echo(text, nl=False)
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(text)
            manifest.add_output(out)
        record_run(state, manifest, started, manifest_path(out) if out else None)


def parse_grid(grid: str) -> tuple[int, int]:
    width, _, height = grid.lower().partition("x")
    try:
        return int(width), int(height)
    except ValueError:
        raise ParameterError(f"grid must look like 128x128, got {grid!r}") from None


@app.command()
def verify(
    ctx: typer.Context,
    max_kernel: int = typer.Option(None, "--max-kernel", help="Largest kernel size M"),
    sigma_rule: SigmaRule = typer.Option(None, "--sigma-rule", help="Sigma rule"),
    gamma_file: str = typer.Option(None, "--gamma-file", help="MS branch filter bank file"),
    pan_gamma_file: str = typer.Option(
        None, "--pan-gamma-file", help="PAN branch filter bank file (default: --gamma-file)"
    ),
    grid: str = typer.Option("128x128", "--grid", help="DFT grid as WIDTHxHEIGHT"),
    image: str = typer.Option(
        None, "--image", help="Use the 2W x 2H grid of this raster instead of --grid"
    ),
):
    """Report the contraction constant of both branches; exit 0 only when every c < 1."""
    state: State = ctx.obj
    started = time.perf_counter()
    with running("verify"):
        if image:
            raster = read_raster(image)
            grid_w, grid_h = 2 * raster.width, 2 * raster.height
        else:
            grid_w, grid_h = parse_grid(grid)
        banks = {
            "ms": resolve_bank(state.config.ms_filter, gamma_file, max_kernel, sigma_rule),
            "pan": resolve_bank(
                state.config.pan_filter, pan_gamma_file or gamma_file, max_kernel, sigma_rule
            ),
        }
        manifest = RunManifest(
            command="verify", parameters={"grid": [grid_w, grid_h]}
        )
        certified = True
        for name, cfg in banks.items():
            report = contraction_constant(build_filter(cfg), grid_w, grid_h)
            certified &= report.certified
            manifest.parameters[f"{name}_bank"] = format_filter_bank(cfg)
            manifest.parameters[f"{name}_c"] = report.c
            typer.echo(
                f"{name}: c={report.c:.9g} min_response={report.min_response:.9g} "
                f"at {report.location} on {grid_w}x{grid_h} "
                f"{'PASS' if report.certified else 'FAIL'}"
            )
        record_run(state, manifest, started, None)

    typer.echo("PASS" if certified else "FAIL")
    if not certified:
        raise typer.Exit(1)


@app.command()
def convert(
    ctx: typer.Context,
    input_path: str = typer.Option(..., "--input", help="Source raster (.mbr, .pgm, .ppm)"),
    output_path: str = typer.Option(..., "--output", help="Target raster (.mbr, .pgm, .ppm)"),
):
    """Convert between MBR and 8-bit PGM/PPM."""
    state: State = ctx.obj
    started = time.perf_counter()
    with running("convert"):
        suffix = Path(output_path).suffix.lower()
        if suffix != ".mbr" and suffix not in PNM_SUFFIXES:
            raise FormatError(f"unsupported output format {suffix!r}")
        raster = read_raster(input_path)
        if suffix == ".mbr":
            write_mbr(raster, output_path)
        else:
            write_pnm(raster, output_path)
        manifest = RunManifest(command="convert")
        manifest.add_input(input_path)
        manifest.add_output(output_path)
        typer.echo(f"Wrote {output_path}")
        record_run(state, manifest, started, manifest_path(output_path))


@app.command()
def tune(
    ctx: typer.Context,
    lr_path: str = typer.Option(..., "--lr", help="LR MS raster (MBR)"),
    pan_path: str = typer.Option(..., "--pan", help="PAN raster (MBR)"),
    gt_path: str = typer.Option(..., "--gt", help="Reference HR MS raster (MBR)"),
    budget: int = typer.Option(200, "--budget", help="Maximum number of fusion evaluations"),
    seed: int = typer.Option(0, "--seed", help="Seed of the coordinate order"),
    iters: int = typer.Option(None, "--iters", help="Outer iterations K"),
    max_kernel: int = typer.Option(None, "--max-kernel", help="Largest kernel size M"),
    lam: float = typer.Option(None, "--lambda", help="Weight of the structural loss"),
    weights: str = typer.Option(None, "--weights", help="Comma separated intensity weights"),
    out_dir: str = typer.Option(".", "--out-dir", help="Directory for the tuned bank files"),
):
    """Tune the mixing coefficients of both banks on a reference scene."""
    state: State = ctx.obj
    started = time.perf_counter()
    with running("tune"):
        lr, pan, gt = read_mbr(lr_path), read_mbr(pan_path), read_mbr(gt_path)
        w = resolve_weights(state, weights, lr.bands)
        ms_cfg = resolve_bank(state.config.ms_filter, None, max_kernel, None)
        pan_cfg = resolve_bank(state.config.pan_filter, None, max_kernel, None)
        iteration = state.config.iteration
        if iters is not None:
            iteration = IterationConfig(**{**iteration.model_dump(), "iterations": iters})
        lam = state.config.metrics.lambda_ if lam is None else lam

        manifest = RunManifest(
            command="tune",
            parameters={"budget": budget, "seed": seed, "lambda": lam, "weights": w.weights},
        )
        for path in (lr_path, pan_path, gt_path):
            manifest.add_input(path)

        result = tune_gammas(
            lr,
            pan,
            gt,
            build_filter(ms_cfg),
            build_filter(pan_cfg),
            w,
            iteration,
            budget=budget,
            seed=seed,
            lam=lam,
        )
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, bank in (("ms_bank.txt", result.f_bank), ("pan_bank.txt", result.g_bank)):
            dump_filter_bank_file(bank.to_config(), out / name)
            manifest.add_output(out / name)
        manifest.parameters.update(
            initial_loss=result.initial_loss,
            best_loss=result.best_loss,
            evaluations=result.evaluations,
        )
        typer.echo(
            f"L_sum {result.initial_loss:.9g} -> {result.best_loss:.9g} "
            f"after {result.evaluations} evaluations"
        )
        record_run(state, manifest, started, out / MANIFEST_NAME)


def parse_list(text: str, kind: type) -> list:
    try:
        return [kind(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ParameterError(f"invalid comma separated list {text!r}") from None


@app.command()
def ablate(
    ctx: typer.Context,
    lr_path: str = typer.Option(..., "--lr", help="LR MS raster (MBR)"),
    pan_path: str = typer.Option(..., "--pan", help="PAN raster (MBR)"),
    gt_path: str = typer.Option(..., "--gt", help="Reference HR MS raster (MBR)"),
    study: list[str] = typer.Option(
        list(STUDIES), "--study", help="Study to run (iterations, max_kernel, lambda); repeatable"
    ),
    iters: str = typer.Option("1,2,3,4,5,6,7", "--iters", help="Values of K"),
    max_kernels: str = typer.Option("1,5,9,13,17", "--max-kernels", help="Values of M"),
    lambdas: str = typer.Option("0,0.001,0.01,0.1,0.5,1,2", "--lambdas", help="Loss weights"),
    budget: int = typer.Option(20, "--budget", help="Tuning evaluations per loss weight"),
    seed: int = typer.Option(0, "--seed", help="Seed of the tuning coordinate order"),
    weights: str = typer.Option(None, "--weights", help="Comma separated intensity weights"),
    out: str = typer.Option(None, "--out", help="Also write the table to this CSV file"),
):
    """Sweep K, M and the loss weight on a reference scene and tabulate the metrics."""
    state: State = ctx.obj
    started = time.perf_counter()
    with running("ablate"):
        lr, pan, gt = read_mbr(lr_path), read_mbr(pan_path), read_mbr(gt_path)
        values = {
            "iterations": parse_list(iters, int),
            "max_kernels": parse_list(max_kernels, int),
            "lambdas": parse_list(lambdas, float),
        }
        manifest = RunManifest(
            command="ablate",
            parameters={"studies": study, "budget": budget, "seed": seed, **values},
        )
        for path in (lr_path, pan_path, gt_path):
            manifest.add_input(path)

        runner = AblationRunner(
            lr,
            pan,
            gt,
            state.config.ms_filter,
            state.config.pan_filter,
            resolve_weights(state, weights, lr.bands),
            state.config.iteration,
            state.config.metrics,
        )
        frame = run_ablation(runner, study, budget=budget, seed=seed, **values)
        text = frame_to_csv(frame)
        typer.echo(text, nl=False)
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(text)
            manifest.add_output(out)
        record_run(state, manifest, started, manifest_path(out) if out else None)


@app.command()
def runs(
    ctx: typer.Context,
    db: str = typer.Option(None, "--db", help="Registry database (config: registry.path)"),
    command: str = typer.Option(None, "--command", help="Only show runs of this command"),
    limit: int = typer.Option(20, "--limit", help="Number of runs to list"),
):
    """List runs recorded in the registry."""
    state: State = ctx.obj
    path = db or state.config.registry.path
    if not path:
        typer.echo("Run registry is disabled; set registry.path in the config or pass --db")
        raise typer.Exit(1)

    rows = RunRegistry(path).list_runs(command, limit)
    if not rows:
        typer.echo("No runs recorded.")
        return
    for row in rows:
        outputs = ", ".join(row["outputs"]) or "-"
        typer.echo(
            f"#{row['id']} {row['started_at']} {row['command']} "
            f"({row['duration_seconds']:.3f}s) -> {outputs}"
        )


if __name__ == "__main__":
    app()
