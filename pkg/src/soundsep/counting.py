"""Source counting from separator outputs.

Two methods: classifier-based (a track is active unless the silence class
wins its pooled class probabilities) and energy-threshold-based (a track is
active when its power exceeds -30 dB relative to mixture channel 0).
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from .simulator.corpus import SILENCE_ID

THRESHOLD_DB = -30.0


@dataclass
class CountResult:
    predicted_count: int
    active_mask: list[bool]
    per_track_class: list[int] | None = None

    def __post_init__(self):
        if self.predicted_count != sum(self.active_mask):
            raise ValueError("predicted_count must equal popcount(active_mask)")


@dataclass
class ScaResult:
    """Exact-count accuracy, total and per true-count bucket (None if empty)."""

    total: float
    by_count: dict[int, float | None] = field(default_factory=dict)


def count_sources_classifier(class_probs, pooling: str = "mean") -> CountResult:
    """class_probs: (tracks, frames, classes+1) rows summing to 1.

    Pools frame probabilities per track (arithmetic mean by default, max
    behind the flag), then marks the track active iff the pooled argmax is
    not the silence class. Argmax ties resolve to the lowest class id.
    """
    probs = np.asarray(
        class_probs.detach().cpu() if isinstance(class_probs, torch.Tensor) else class_probs,
        dtype=np.float64,
    )
    if probs.ndim != 3:
        raise ValueError(f"expected (tracks, frames, classes), got {probs.shape}")
    if pooling == "mean":
        pooled = probs.mean(axis=1)
    elif pooling == "max":
        pooled = probs.max(axis=1)
    else:
        raise ValueError(f"unknown pooling {pooling!r}")
    classes = pooled.argmax(axis=1)  # np.argmax takes the first (lowest) id on ties
    active = [int(c) != SILENCE_ID for c in classes]
    return CountResult(
        predicted_count=sum(active),
        active_mask=active,
        per_track_class=[int(c) for c in classes],
    )


def count_sources_threshold(est_waves, mixture) -> CountResult:
    """est_waves: (tracks, samples); mixture: (mics, samples).

    A track is active iff 10*log10(|est|^2 / |mix_ch0|^2) > -30 dB, strictly.
    No class information is available from this method.
    """
    ests = np.asarray(
        est_waves.detach().cpu() if isinstance(est_waves, torch.Tensor) else est_waves,
        dtype=np.float64,
    )
    mix = np.asarray(
        mixture.detach().cpu() if isinstance(mixture, torch.Tensor) else mixture,
        dtype=np.float64,
    )
    ref_power = float(np.square(mix[0]).sum())
    if ref_power <= 0:
        raise ValueError("threshold counting is undefined for a silent mixture")
    active = []
    for est in ests:
        power = float(np.square(est).sum())
        if power <= 0:
            active.append(False)
            continue
        active.append(bool(10.0 * np.log10(power / ref_power) > THRESHOLD_DB))
    return CountResult(predicted_count=sum(active), active_mask=active)


def sca(predicted_counts, true_counts, buckets=(2, 3, 4)) -> ScaResult:
    """Fraction of clips whose predicted count matches exactly."""
    predicted = list(predicted_counts)
    truth = list(true_counts)
    if not predicted or len(predicted) != len(truth):
        raise ValueError("predicted and true counts must be equal-length and nonempty")
    hits = [p == t for p, t in zip(predicted, truth)]
    by_count: dict[int, float | None] = {}
    for b in buckets:
        idx = [i for i, t in enumerate(truth) if t == b]
        by_count[b] = sum(hits[i] for i in idx) / len(idx) if idx else None
    return ScaResult(total=sum(hits) / len(hits), by_count=by_count)
