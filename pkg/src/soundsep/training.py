"""Two-stage training harness.

Stage 1 jointly optimizes aggregate-SDR separation and framewise
classification under permutation-invariant assignment. The refinement stage
reuses the stage-1 assignment criterion but applies the SI-SDR/SDR
combination only to tracks the classifier predicts active.

Both stages emit one JSON log line per epoch, keep a rolling "last"
checkpoint (with optimizer state, for resuming) and a best-validation
checkpoint, and are bit-deterministic given a seed in strict mode.
"""

import dataclasses
import json
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .counting import count_sources_classifier
from .losses import LossWeights, pad_references, pit_assign, srt_loss
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.config import ModelConfig
from .model.network import Separator
from .simulator.dataset_io import read_dataset
from .stft import StftConfig

log = logging.getLogger(__name__)

STAGE1 = "stage1"
STAGE_SRT = "srt"


class TrainingError(RuntimeError):
    pass


class StageError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    train_manifest: str | Path = ""
    val_manifest: str | Path | None = None
    stage: str = STAGE1
    epochs: int | None = None  # stage defaults: 100 (stage1) / 20 (srt)
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 4
    grad_accum: int = 1
    seed: int = 0
    lambda_ce: float = 1.0
    out_dir: str | Path = "runs"
    resume: str | Path | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    strict_determinism: bool = True
    plateau_decay: bool = False
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    max_steps: int | None = None

    def __post_init__(self):
        if self.stage not in (STAGE1, STAGE_SRT):
            raise ValueError(f"stage must be {STAGE1} or {STAGE_SRT}, got {self.stage!r}")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("batch_size and grad_accum must be >= 1")
        if self.lambda_ce < 0:
            raise ValueError("lambda_ce must be >= 0")

    @property
    def resolved_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        return 100 if self.stage == STAGE1 else 20


@dataclass
class TrainResult:
    best_ckpt: Path
    last_ckpt: Path
    epoch_logs: list[dict]
    step_losses: list[float]


@dataclass
class _Example:
    clip_id: str
    mixture: torch.Tensor          # (mics, samples)
    refs: torch.Tensor             # (num_sources, samples), reference channel 0
    labels: list[tuple[int, float, float]]


def load_examples(manifest: str | Path) -> list[_Example]:
    examples = []
    for i, clip in enumerate(read_dataset(manifest)):
        examples.append(_Example(
            clip_id=clip.clip_id or f"clip_{i:06d}",
            mixture=torch.from_numpy(clip.mixture),
            refs=torch.from_numpy(clip.stems[:, 0, :].copy()),
            labels=[(int(c), float(a), float(b)) for c, a, b in clip.labels],
        ))
    if not examples:
        raise TrainingError(f"manifest {manifest} contains no clips")
    return examples


def _seed_everything(seed: int, strict: bool) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if strict:
        torch.use_deterministic_algorithms(True)


def _epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    g = torch.Generator()
    g.manual_seed(seed * 1_000_003 + epoch)
    return torch.randperm(n, generator=g).tolist()


def _clip_loss_stage1(model, batch, weights, stft_cfg):
    mix = torch.stack([ex.mixture for ex in batch])
    out = model(mix)
    losses = []
    for i, ex in enumerate(batch):
        refs, labels = pad_references(ex.refs, ex.labels, model.config.max_sources)
        assign = pit_assign(refs, labels, out.waveforms[i], out.class_probs[i], weights, stft_cfg)
        losses.append(assign.joint_loss)
    return torch.stack(losses).mean()


def _clip_loss_srt(model, batch, weights, stft_cfg):
    """Returns (loss or None, number of contributing clips)."""
    mix = torch.stack([ex.mixture for ex in batch])
    out = model(mix)
    losses = []
    for i, ex in enumerate(batch):
        refs, labels = pad_references(ex.refs, ex.labels, model.config.max_sources)
        assign = pit_assign(refs, labels, out.waveforms[i], out.class_probs[i], weights, stft_cfg)
        count = count_sources_classifier(out.class_probs[i])
        loss = srt_loss(refs, out.waveforms[i], count.active_mask, assign.perm, weights)
        if loss is not None:
            losses.append(loss)
    if not losses:
        return None, 0
    return torch.stack(losses).mean(), len(losses)


def _validate(model, examples, batch_size, loss_fn):
    model.eval()
    totals, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(examples), batch_size):
            batch = examples[i:i + batch_size]
            loss = loss_fn(model, batch)
            if loss is None:
                continue
            totals += float(loss) * len(batch)
            count += len(batch)
    model.train()
    return totals / count if count else None


def _run_training(cfg: TrainConfig, model: Separator, stage: str, batch_loss_fn) -> TrainResult:
    """Shared epoch loop: batching, accumulation, logging, checkpoints."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    last_path = out_dir / "last.pt"
    best_path = out_dir / "best.pt"
    log_path = out_dir / "train_log.jsonl"

    train_examples = load_examples(cfg.train_manifest)
    val_examples = load_examples(cfg.val_manifest) if cfg.val_manifest else None
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas)

    start_epoch, global_step = 0, 0
    best_val = float("inf")
    if cfg.resume is not None:
        resumed, payload = load_checkpoint(cfg.resume)
        if payload["stage"] != stage:
            raise StageError(
                f"cannot resume {stage} training from a {payload['stage']!r} checkpoint"
            )
        model.load_state_dict(resumed.state_dict())
        if payload.get("optimizer_state") is not None:
            optimizer.load_state_dict(payload["optimizer_state"])
        start_epoch = payload["epoch"]
        global_step = payload.get("global_step", 0)
        best_val = payload.get("best_val", float("inf"))

    epoch_logs: list[dict] = []
    step_losses: list[float] = []
    plateau_wait = 0
    model.train()

    def save(path, epoch):
        save_checkpoint(
            path, model, stage=stage, epoch=epoch,
            optimizer_state=optimizer.state_dict(),
            extra={"best_val": best_val, "global_step": global_step},
        )

    stop = False
    for epoch in range(start_epoch, cfg.resolved_epochs):
        t0 = time.monotonic()
        order = _epoch_order(len(train_examples), cfg.seed, epoch)
        batches = [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        epoch_loss_sum, epoch_loss_n = 0.0, 0
        epoch_contributed = False
        optimizer.zero_grad()
        accumulated = 0

        for b, idx in enumerate(batches):
            batch = [train_examples[j] for j in idx]
            result = batch_loss_fn(model, batch)
            if isinstance(result, tuple):
                loss, n_used = result
            else:
                loss, n_used = result, len(batch)
            if loss is None:
                continue
            if not bool(torch.isfinite(loss)):
                clip_ids = ", ".join(ex.clip_id for ex in batch)
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} batch {b} (clips: {clip_ids})"
                )
            epoch_contributed = True
            (loss / cfg.grad_accum).backward()
            accumulated += 1
            if accumulated == cfg.grad_accum or b == len(batches) - 1:
                optimizer.step()
                optimizer.zero_grad()
                accumulated = 0
                global_step += 1
            loss_value = float(loss.detach())
            step_losses.append(loss_value)
            epoch_loss_sum += loss_value * n_used
            epoch_loss_n += n_used
            if cfg.max_steps is not None and global_step >= cfg.max_steps:
                stop = True
                break

        if stage == STAGE_SRT and not epoch_contributed:
            raise TrainingError(
                f"no batch in epoch {epoch} had any predicted-active track; "
                "the classifier is degenerate"
            )
        train_loss = epoch_loss_sum / epoch_loss_n if epoch_loss_n else None
        val_loss = (
            _validate(model, val_examples, cfg.batch_size, batch_loss_fn)
            if val_examples else None
        )
        entry = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "lr": optimizer.param_groups[0]["lr"],
            "wall_s": round(time.monotonic() - t0, 3),
        }
        epoch_logs.append(entry)
        with log_path.open("a") as fh:
            fh.write(json.dumps(entry) + "\n")
        log.info("epoch %d: train %s val %s", epoch, train_loss, val_loss)

        monitored = val_loss if val_loss is not None else train_loss
        if monitored is not None and monitored < best_val:
            best_val = monitored
            plateau_wait = 0
            save(best_path, epoch + 1)
        else:
            plateau_wait += 1
            if cfg.plateau_decay and plateau_wait >= cfg.plateau_patience:
                for group in optimizer.param_groups:
                    group["lr"] *= cfg.plateau_factor
                plateau_wait = 0
        save(last_path, epoch + 1)
        if stop:
            break

    if not best_path.exists():
        save(best_path, cfg.resolved_epochs)
    return TrainResult(
        best_ckpt=best_path, last_ckpt=last_path,
        epoch_logs=epoch_logs, step_losses=step_losses,
    )


def train_stage1(cfg: TrainConfig) -> TrainResult:
    """Joint separation + classification training from scratch (or resumed)."""
    if cfg.stage != STAGE1:
        raise StageError(f"train_stage1 requires stage={STAGE1!r}, got {cfg.stage!r}")
    _seed_everything(cfg.seed, cfg.strict_determinism)
    model = Separator(cfg.model, cfg.stft)
    weights = LossWeights(lambda_ce=cfg.lambda_ce)

    def batch_loss(m, batch):
        return _clip_loss_stage1(m, batch, weights, cfg.stft)

    return _run_training(cfg, model, STAGE1, batch_loss)


def train_srt(cfg: TrainConfig, stage1_ckpt: str | Path) -> TrainResult:
    """Refinement fine-tuning from a stage-1 checkpoint.

    The permutation is recomputed each batch under the frozen stage-1
    criterion; the loss covers only predicted-active tracks.
    """
    _seed_everything(cfg.seed, cfg.strict_determinism)
    model, payload = load_checkpoint(stage1_ckpt)
    if payload["stage"] != STAGE1:
        raise StageError(
            f"refinement requires a {STAGE1!r}-tagged checkpoint, "
            f"got {payload['stage']!r} from {stage1_ckpt}"
        )
    cfg = dataclasses.replace(cfg, stage=STAGE_SRT, model=model.config, stft=model.stft_config)
    weights = LossWeights(lambda_ce=cfg.lambda_ce)

    def batch_loss(m, batch):
        return _clip_loss_srt(m, batch, weights, cfg.stft)

    return _run_training(cfg, model, STAGE_SRT, batch_loss)
