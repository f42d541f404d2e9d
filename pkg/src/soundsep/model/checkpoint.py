"""Checkpoint serialization: model + configs + training stage metadata."""

import dataclasses
from pathlib import Path

import torch

from ..simulator.corpus import CLASS_NAMES
from ..stft import StftConfig
from .config import ModelConfig
from .network import Separator

FORMAT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    model: Separator,
    *,
    stage: str,
    epoch: int = 0,
    optimizer_state: dict | None = None,
    extra: dict | None = None,
) -> None:
    """Write a self-describing checkpoint; `stage` tags the training phase."""
    payload = {
        "version": FORMAT_VERSION,
        "stage": stage,
        "epoch": epoch,
        "model_config": model.config.to_dict(),
        "stft_config": dataclasses.asdict(model.stft_config),
        "class_names": list(CLASS_NAMES),
        "state_dict": model.state_dict(),
        "optimizer_state": optimizer_state,
    }
    if extra:
        payload.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[Separator, dict]:
    """Rebuild the model from a checkpoint; returns (model, payload)."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r} in {path}")
    model = Separator(
        ModelConfig.from_dict(payload["model_config"]),
        StftConfig(**payload["stft_config"]),
    )
    model.load_state_dict(payload["state_dict"])
    return model, payload
