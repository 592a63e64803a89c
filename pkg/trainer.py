"""Training loop: shuffled clip batches, SGD with a single step LR drop,
per-epoch validation, best/last checkpoints and ``metrics.json``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from tqdm import tqdm

from checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from config import PipelineConfig
from dataset import ClipBatch, ClipDataset
from detection import DetectionSet, assign_batch, compute_loss, postprocess
from engine.optim import SGD, step_drop_lr
from engine.tensor import Tensor, backward, no_grad, precision
from errors import CheckpointError, DataError, NonFiniteError
from metrics import HistoryEntry, MetricsReport, PRPoint, evaluate, read_metrics, write_metrics, write_pr_curve
from model.hypertea import HyperTea

BEST_CHECKPOINT = "best.npz"
LAST_CHECKPOINT = "last.npz"


@dataclass
class Evaluation:
    report: MetricsReport
    curve: List[PRPoint]
    detections: List[Tuple[str, int, DetectionSet]]


@dataclass
class TrainResult:
    out_dir: Path
    step: int
    best_map50: float
    report: MetricsReport
    losses: List[Tuple[int, float]] = field(default_factory=list)


def predict_batch(model: HyperTea, batch: ClipBatch, config: PipelineConfig) -> List[DetectionSet]:
    with no_grad():
        pred = model(Tensor(batch.frames))
    return postprocess(pred, config.conf_thresh, config.nms_iou)


def evaluate_model(model: HyperTea, data: ClipDataset, config: PipelineConfig, batch_size: int = 8) -> Evaluation:
    """Run on every annotated frame (with its trailing window) and score against ground truth."""
    was_training = model.training
    model.eval()
    frames, detections = [], []
    try:
        for batch in data.batches(batch_size):
            for dets, gts, (sid, t) in zip(predict_batch(model, batch, config), batch.boxes, batch.keys):
                frames.append((dets, gts))
                detections.append((sid, t, dets))
    finally:
        model.train(was_training)
    report, curve = evaluate(frames, config.conf_thresh, config.match_iou)
    return Evaluation(report, curve, detections)


class Trainer:
    def __init__(
        self,
        config: PipelineConfig,
        train_data: ClipDataset,
        val_data: Optional[ClipDataset],
        out_dir: Path,
    ):
        if len(train_data) == 0:
            raise DataError("training split is empty")
        self.config = config
        self.train_data = train_data
        self.val_data = val_data
        self.out_dir = Path(out_dir)
        opt = config.optimizer
        with precision(config.precision):
            self.model = HyperTea.from_config(config)
        self.names = [name for name, _ in self.model.named_parameters()]
        self.optimizer = SGD(self.model.parameters(), opt.lr, opt.momentum, opt.weight_decay)
        self.steps_per_epoch = math.ceil(len(train_data) / opt.batch_size)
        if opt.max_steps is not None:
            self.total_steps = opt.max_steps
        else:
            self.total_steps = opt.epochs * self.steps_per_epoch
        self.step = 0
        self.best_map50 = 0.0
        self.history: List[HistoryEntry] = []

    # state

    def checkpoint(self) -> Checkpoint:
        state = self.model.state_dict()
        state.update(self.optimizer.state_dict(self.names))
        return Checkpoint(
            state=state,
            step=self.step,
            epoch=self.step // self.steps_per_epoch,
            best_map50=self.best_map50,
            config_yaml=self.config.to_yaml(),
        )

    def save(self, name: str) -> Path:
        return save_checkpoint(self.out_dir / name, self.checkpoint())

    def resume(self, path: Path) -> None:
        ckpt = load_checkpoint(path)
        self.model.load_state_dict(ckpt.state)
        self.optimizer.load_state_dict(ckpt.state, self.names)
        missing = [n for n in self.names if f"momentum/{n}" not in ckpt.state]
        if missing:
            raise CheckpointError(f"checkpoint {path} has no momentum for {len(missing)} parameters")
        self.step = ckpt.step
        self.best_map50 = ckpt.best_map50
        metrics_path = self.out_dir / "metrics.json"
        if metrics_path.exists():
            self.history = [h for h in read_metrics(metrics_path).history if h.step <= self.step]
        logger.info(f"Resumed from {path} at step {self.step}")

    # loop

    def epoch_order(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.config.seed, epoch]).permutation(len(self.train_data))

    def train_step(self, batch: ClipBatch) -> Dict[str, float]:
        opt = self.config.optimizer
        lr = step_drop_lr(self.step, self.total_steps, opt.lr, opt.lr_drop_factor, opt.lr_drop_at)
        self.optimizer.set_lr(lr)
        try:
            pred = self.model(Tensor(batch.frames))
            targets = assign_batch(batch.boxes, pred.grid, pred.stride)
            losses = compute_loss(pred, targets, self.config.loss)
            grads = backward(losses.total, self.optimizer.params)
        except NonFiniteError as e:
            logger.error(f"Non-finite value at step {self.step} in op '{e.op}' (clips {batch.keys[:4]})")
            raise NonFiniteError(f"training diverged at step {self.step}: {e}", op=e.op) from e
        self.optimizer.step(grads)
        self.step += 1
        values = losses.as_floats()
        values["lr"] = lr
        return values

    def validate(self, epoch: int, loss: float) -> MetricsReport:
        if self.val_data is None:
            report = MetricsReport()
            curve: List[PRPoint] = []
        else:
            evaluation = evaluate_model(self.model, self.val_data, self.config)
            report, curve = evaluation.report, evaluation.curve
        self.history.append(
            HistoryEntry(epoch=epoch, step=self.step, loss=loss, map50=report.map50, f1=report.pr_at_best_f1.f1)
        )
        report.history = list(self.history)
        logger.info(
            f"Epoch {epoch}: val mAP50={report.map50:.4f} F1={report.pr_at_best_f1.f1:.4f} "
            f"P={report.pr_at_conf.precision:.4f} R={report.pr_at_conf.recall:.4f}"
        )
        if self.val_data is not None and (report.map50 > self.best_map50 or not (self.out_dir / BEST_CHECKPOINT).exists()):
            self.best_map50 = max(report.map50, self.best_map50)
            self.save(BEST_CHECKPOINT)
        write_metrics(report, self.out_dir / "metrics.json")
        write_pr_curve(curve, self.out_dir / "pr_curve.csv")
        return report

    def run(self) -> TrainResult:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        losses: List[Tuple[int, float]] = []
        report = MetricsReport(history=list(self.history))
        with precision(self.config.precision):
            if self.total_steps == 0:
                self.save(LAST_CHECKPOINT)
                write_metrics(report, self.out_dir / "metrics.json")
                logger.info(f"No training steps requested; wrote initial checkpoint to {self.out_dir}")
                return TrainResult(self.out_dir, self.step, self.best_map50, report, losses)
            self.model.train()
            progress = tqdm(total=self.total_steps, initial=self.step, desc="train", unit="step", leave=False)
            while self.step < self.total_steps:
                epoch = self.step // self.steps_per_epoch
                order = self.epoch_order(epoch)
                skip = (self.step % self.steps_per_epoch) * self.config.optimizer.batch_size
                epoch_losses = []
                for batch in self.train_data.batches(self.config.optimizer.batch_size, order[skip:]):
                    values = self.train_step(batch)
                    losses.append((self.step, values["loss"]))
                    epoch_losses.append(values["loss"])
                    progress.update(1)
                    if self.step % self.config.log_every == 0:
                        logger.info(
                            f"step {self.step}/{self.total_steps} lr={values['lr']:.5f} loss={values['loss']:.5f} "
                            f"reg={values['reg']:.5f} cls={values['cls']:.5f} obj={values['obj']:.5f}"
                        )
                    if self.step >= self.total_steps:
                        break
                report = self.validate(epoch, float(np.mean(epoch_losses)))
                self.save(LAST_CHECKPOINT)
            progress.close()
        return TrainResult(self.out_dir, self.step, self.best_map50, report, losses)
