"""Command-line entry point: data generation, training, evaluation, inference and checks."""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import click
import numpy as np
from loguru import logger
from pydantic import ValidationError

from config import PRESETS, AblationConfig, PipelineConfig, SceneConfig, load_config
from dataset import ClipDataset, export_dataset, generate_dataset, load_split
from detection import DetectionSet
from engine.tensor import precision
from errors import ConfigError, DataError, GradCheckError, HyperTeaError
from inference import detect_sequence, detections_by_key, load_model, write_detections, write_overlays
from logs import configure_logging
from metrics import evaluate, read_pr_curve, write_metrics, write_pr_curve
from model.hypertea import HyperTea
from oracles import MODULE_CHOICES, run_suites
from plotting import write_pr_plot
from trainer import Trainer, evaluate_model

ABLATION_VARIANTS: Dict[str, Dict[str, bool]] = {
    "full": {},
    "gtem_only": {"use_ltem": False},
    "ltem_only": {"use_gtem": False},
}


def error_line(error: Exception) -> str:
    return f"error={type(error).__name__} reason={json.dumps(str(error))}"


class HyperTeaGroup(click.Group):
    """Turns library errors into a single machine-parseable stderr line and exit 1."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (HyperTeaError, ValidationError) as e:
            logger.debug(f"{type(e).__name__}: {e}")
            click.echo(error_line(e), err=True)
            raise click.exceptions.Exit(1) from e


def resolve_config(config_path: Optional[Path], preset: Optional[str]) -> PipelineConfig:
    if config_path and preset:
        raise ConfigError("use either --config or --preset, not both")
    if config_path:
        return load_config(config_path)
    return PipelineConfig.preset(preset or "desk")


def _with_optimizer(config: PipelineConfig, **updates) -> PipelineConfig:
    updates = {k: v for k, v in updates.items() if v is not None}
    # --epochs 0 means "write the initial checkpoint", whatever the preset's step cap
    if updates.get("epochs") == 0 and "max_steps" not in updates:
        updates["max_steps"] = None
    if not updates:
        return config
    optimizer = config.optimizer.model_copy(update=updates)
    return PipelineConfig.model_validate({**config.model_dump(), "optimizer": optimizer.model_dump()})


def _val_data(root: Path, length: int) -> Optional[ClipDataset]:
    sequences = load_split(root, "val")
    return ClipDataset(sequences, length) if sequences else None


def _write_json(payload: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


@click.group(cls=HyperTeaGroup)
@click.option("--log-level", default=None, help="Log level (default: $HYPERTEA_LOG_LEVEL or INFO).")
def app(log_level: Optional[str]) -> None:
    configure_logging(log_level)


@app.command("gen-data")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--val", "val_count", type=int, default=2, show_default=True)
@click.option("--workers", type=int, default=4, show_default=True)
@click.option("--height", type=int, default=64, show_default=True)
@click.option("--width", type=int, default=64, show_default=True)
@click.option("--frames", type=int, default=5, show_default=True)
@click.option("--targets-min", type=int, default=1, show_default=True)
@click.option("--targets-max", type=int, default=3, show_default=True)
@click.option("--sigma-min", type=float, default=0.7, show_default=True)
@click.option("--sigma-max", type=float, default=2.0, show_default=True)
@click.option("--scr", type=float, default=3.0, show_default=True)
@click.option("--target-mse", type=float, default=33.0, show_default=True)
@click.option("--motion", type=click.Choice(["linear", "circle", "zigzag"]), default="linear", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def gen_data(out_dir: Path, count: int, val_count: int, workers: int, **scene) -> None:
    """Generate and export a synthetic dataset."""
    scene_config = SceneConfig(**scene)
    sequences = generate_dataset(scene_config, count, workers)
    index = export_dataset(sequences, out_dir, val_count)
    logger.info(f"Wrote {len(index.train)} train / {len(index.val)} val sequences to {out_dir}")


@app.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--preset", type=click.Choice(PRESETS), default=None)
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--epochs", type=int, default=None, help="Override optimizer.epochs.")
@click.option("--max-steps", type=int, default=None, help="Override optimizer.max_steps.")
@click.option("--resume", type=click.Path(path_type=Path), default=None, help="Checkpoint to continue from.")
def train(config_path, preset, data_dir, out_dir, epochs, max_steps, resume) -> None:
    """Train on the train split, validating each epoch."""
    config = _with_optimizer(resolve_config(config_path, preset), epochs=epochs, max_steps=max_steps)
    train_data = ClipDataset.from_directory(data_dir, "train", config.frames)
    trainer = Trainer(config, train_data, _val_data(data_dir, config.frames), out_dir)
    if resume:
        trainer.resume(resume)
    result = trainer.run()
    logger.info(f"Finished at step {result.step}; best val mAP50 {result.best_map50:.4f}; artifacts in {out_dir}")


@app.command("eval")
@click.option("--ckpt", type=click.Path(path_type=Path), default=None)
@click.option("--detections", type=click.Path(path_type=Path), default=None, help="Score an existing JSON-lines file.")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--split", type=click.Choice(["train", "val"]), default="val", show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="Thresholds for --detections.")
def eval_cmd(ckpt, detections, data_dir, split, out_dir, config_path) -> None:
    """Write metrics.json and pr_curve.csv for a checkpoint or a detections file."""
    if (ckpt is None) == (detections is None):
        raise ConfigError("pass exactly one of --ckpt or --detections")
    out_dir = Path(out_dir)
    if ckpt is not None:
        model, config = load_model(ckpt)
        data = ClipDataset.from_directory(data_dir, split, config.frames)
        with precision(config.precision):
            result = evaluate_model(model, data, config)
        report, curve = result.report, result.curve
        write_detections(result.detections, out_dir / "detections.jsonl")
    else:
        config = load_config(config_path) if config_path else PipelineConfig()
        by_key = detections_by_key(detections)
        frames = []
        for sequence in load_split(data_dir, split):
            for t in range(sequence.length):
                found = by_key.get((sequence.sequence_id, t), DetectionSet.empty())
                frames.append((found, sequence.boxes[t]))
        if not frames:
            raise DataError(f"split '{split}' of {data_dir} has no frames")
        report, curve = evaluate(frames, config.conf_thresh, config.match_iou)
    write_metrics(report, out_dir / "metrics.json")
    write_pr_curve(curve, out_dir / "pr_curve.csv")
    logger.info(
        f"mAP50={report.map50:.4f} P={report.pr_at_conf.precision:.4f} R={report.pr_at_conf.recall:.4f} "
        f"best F1={report.pr_at_best_f1.f1:.4f} @ conf {report.pr_at_best_f1.conf:.4f}"
    )


@app.command()
@click.option("--ckpt", type=click.Path(path_type=Path), required=True)
@click.option("--seq", "seq_dir", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--overlays/--no-overlays", default=False, show_default=True, help="Also write box overlays.")
def infer(ckpt, seq_dir, out_dir, overlays) -> None:
    """Detect targets on every frame of one exported sequence."""
    model, config = load_model(ckpt)
    records = detect_sequence(model, config, seq_dir)
    path = write_detections(records, Path(out_dir) / "detections.jsonl")
    logger.info(f"Wrote {sum(len(d) for _, _, d in records)} detections over {len(records)} frames to {path}")
    if overlays:
        count = write_overlays(seq_dir, records, Path(out_dir) / "overlays")
        logger.info(f"Wrote {count} overlays")


@app.command()
@click.option("--module", type=click.Choice(MODULE_CHOICES), default="all", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def gradcheck(module: str, seed: int) -> None:
    """Finite-difference and dense-oracle checks; exits 1 if any fails."""
    reports = run_suites(module, seed)
    failed = [r.name for r in reports if not r.passed]
    for report in reports:
        click.echo(report.summary())
    if failed:
        raise GradCheckError(f"{len(failed)} of {len(reports)} checks failed: {', '.join(failed)}")


@app.command()
@click.option("--curve", "curve_path", type=click.Path(path_type=Path), required=True, help="pr_curve.csv")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True, help="Output .ppm")
@click.option("--title", default="", help="Caption drawn above the axes.")
def plot(curve_path, out_path, title) -> None:
    """Render a PR curve CSV as a portable-pixmap raster."""
    path = write_pr_plot(read_pr_curve(curve_path), out_path, title)
    logger.info(f"Wrote {path}")


@app.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--preset", type=click.Choice(PRESETS), default=None)
@click.option("--data", "data_dir", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--seeds", default="0,1,2", show_default=True, help="Comma-separated training seeds.")
@click.option("--epochs", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
def ablate(config_path, preset, data_dir, out_dir, seeds, epochs, max_steps) -> None:
    """Train full / GTEM-only / LTEM-only variants per seed and compare val mAP50."""
    base = _with_optimizer(resolve_config(config_path, preset), epochs=epochs, max_steps=max_steps)
    try:
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(f"--seeds must be comma-separated integers, got '{seeds}'") from e
    if not seed_list:
        raise ConfigError("--seeds is empty")
    train_data = ClipDataset.from_directory(data_dir, "train", base.frames)
    val_data = _val_data(data_dir, base.frames)
    if val_data is None:
        raise DataError(f"ablation needs a val split in {data_dir}")
    out_dir = Path(out_dir)
    variants = {}
    for name, flags in ABLATION_VARIANTS.items():
        scores = []
        for seed in seed_list:
            ablation = AblationConfig(**flags).model_dump()
            config = PipelineConfig.model_validate({**base.model_dump(), "ablation": ablation, "seed": seed})
            logger.info(f"Ablation variant {name}, seed {seed}")
            result = Trainer(config, train_data, val_data, out_dir / name / f"seed_{seed}").run()
            scores.append(result.report.map50)
        variants[name] = {"flags": AblationConfig(**flags).model_dump(), "map50": scores, "mean_map50": float(np.mean(scores))}
    mean = {name: v["mean_map50"] for name, v in variants.items()}
    payload = {
        "seeds": seed_list,
        "variants": variants,
        "full_ge_gtem_only": mean["full"] >= mean["gtem_only"],
        "full_ge_ltem_only": mean["full"] >= mean["ltem_only"],
    }
    _write_json(payload, out_dir / "ablation.json")
    for name, value in mean.items():
        logger.info(f"{name}: mean val mAP50 {value:.4f}")
    if not (payload["full_ge_gtem_only"] and payload["full_ge_ltem_only"]):
        logger.warning("Full model did not beat both single-branch variants on this seed set")


@app.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--preset", type=click.Choice(PRESETS), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None, help="Optional JSON output.")
def summary(config_path, preset, out_path) -> None:
    """Parameter counts per top-level module."""
    config = resolve_config(config_path, preset)
    with precision(config.precision):
        counts = HyperTea.from_config(config).parameter_summary()
    for name, count in counts.items():
        logger.info(f"{name:<9} {count:>10,d}")
    click.echo(json.dumps(counts))
    if out_path:
        _write_json(counts, Path(out_path))


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line; returns the process exit code."""
    args: List[str] = list(sys.argv[1:] if argv is None else argv)
    try:
        rv = app.main(args=args, prog_name="hypertea", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(cli())
