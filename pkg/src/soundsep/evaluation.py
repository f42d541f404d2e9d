"""Corpus evaluation: separation metrics, segment-based event metrics, and
source-counting accuracy, written as a JSON report.

Scoring uses the metric-optimal track assignment per clip (permutation search
on aggregate SDR alone), independent of any permutation used in training.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .counting import count_sources_classifier, count_sources_threshold, sca
from .losses import LossWeights, pad_references, pit_assign, sdr, si_sdr
from .model.checkpoint import load_checkpoint
from .simulator.corpus import SILENCE_ID
from .simulator.dataset_io import read_dataset
from .simulator.scene import SAMPLE_RATE

Event = tuple[int, float, float]  # (class_id, onset_s, offset_s)


class ConfigError(ValueError):
    pass


@dataclass
class EvalReport:
    si_sdr_mean: float
    sdr_mean: float
    er: float
    f1: float
    sca_total: float
    sca_by_count: dict[int, float | None] = field(default_factory=dict)
    num_clips: int = 0
    counting_method: str = "classifier"

    def to_dict(self) -> dict:
        return {
            "si_sdr": self.si_sdr_mean,
            "sdr": self.sdr_mean,
            "er": self.er,
            "f1": self.f1,
            "sca": {
                "total": self.sca_total,
                "by_count": {str(k): v for k, v in sorted(self.sca_by_count.items())},
            },
            "num_clips": self.num_clips,
            "counting_method": self.counting_method,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            si_sdr_mean=d["si_sdr"],
            sdr_mean=d["sdr"],
            er=d["er"],
            f1=d["f1"],
            sca_total=d["sca"]["total"],
            sca_by_count={int(k): v for k, v in d["sca"]["by_count"].items()},
            num_clips=d["num_clips"],
            counting_method=d["counting_method"],
        )


def er_f1(
    predicted_events: list[list[Event]],
    reference_events: list[list[Event]],
    segment_s: float = 1.0,
    duration_s: float | list[float] = 4.0,
) -> tuple[float, float]:
    """Segment-based error rate and F1 over fixed-length clips.

    Events are (class_id, onset_s, offset_s); per segment the labels are the
    union of overlapping events across tracks. ER = (S + D + I) / N with
    S = min(FN, FP) per segment; F1 = 2*TP / (2*TP + FP + FN).
    duration_s: one length for all clips, or one per clip.
    """
    if len(predicted_events) != len(reference_events):
        raise ValueError("clip count mismatch between predictions and references")
    if isinstance(duration_s, (int, float)):
        durations = [float(duration_s)] * len(reference_events)
    else:
        durations = [float(d) for d in duration_s]
        if len(durations) != len(reference_events):
            raise ValueError("one duration per clip required")

    def segment_labels(events: list[Event], k: int) -> set[int]:
        lo, hi = k * segment_s, (k + 1) * segment_s
        return {int(c) for c, on, off in events if on < hi and off > lo}

    n_ref = tp = fp = fn = subs = dels = ins = 0
    for pred, ref, dur in zip(predicted_events, reference_events, durations):
        num_segments = int(np.ceil(dur / segment_s))
        for k in range(num_segments):
            p, r = segment_labels(pred, k), segment_labels(ref, k)
            seg_tp = len(p & r)
            seg_fp = len(p - r)
            seg_fn = len(r - p)
            seg_s = min(seg_fn, seg_fp)
            n_ref += len(r)
            tp += seg_tp
            fp += seg_fp
            fn += seg_fn
            subs += seg_s
            dels += seg_fn - seg_s
            ins += seg_fp - seg_s
    if n_ref == 0:
        raise ValueError("no reference events; error rate is undefined")
    er = (subs + dels + ins) / n_ref
    f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    return er, f1


def events_from_outputs(class_probs: torch.Tensor, hop_s: float) -> list[Event]:
    """Predicted events for one clip from (tracks, frames, classes+1) probs.

    Active tracks contribute one event per contiguous run of non-silent
    frames, labeled with the track's pooled class.
    """
    result = count_sources_classifier(class_probs)
    probs = class_probs.detach().cpu().numpy()
    events: list[Event] = []
    for t, active in enumerate(result.active_mask):
        if not active:
            continue
        cls = result.per_track_class[t]
        frame_active = probs[t].argmax(axis=-1) != SILENCE_ID
        k = 0
        while k < len(frame_active):
            if frame_active[k]:
                start = k
                while k < len(frame_active) and frame_active[k]:
                    k += 1
                events.append((cls, start * hop_s, k * hop_s))
            else:
                k += 1
    return events


def evaluate(
    ckpt_path: str | Path,
    manifest_path: str | Path,
    counting_method: str = "classifier",
    out_path: str | Path | None = None,
) -> EvalReport:
    """Score a dataset with a trained checkpoint; optionally write report.json."""
    if counting_method not in ("classifier", "threshold"):
        raise ValueError(f"unknown counting method {counting_method!r}")
    model, _ = load_checkpoint(ckpt_path)
    model.eval()
    cfg = model.stft_config
    if cfg.sample_rate != SAMPLE_RATE:
        raise ConfigError(
            f"checkpoint expects {cfg.sample_rate} Hz but the dataset is {SAMPLE_RATE} Hz"
        )
    hop_s = cfg.hop_length / cfg.sample_rate
    scoring = LossWeights(lambda_ce=0.0)
    tracks = model.config.max_sources

    si_vals: list[float] = []
    sdr_vals: list[float] = []
    pred_events: list[list[Event]] = []
    ref_events: list[list[Event]] = []
    pred_counts: list[int] = []
    true_counts: list[int] = []
    durations: list[float] = []
    num_clips = 0

    for clip in read_dataset(manifest_path):
        num_clips += 1
        durations.append(clip.mixture.shape[-1] / SAMPLE_RATE)
        mixture = torch.from_numpy(clip.mixture)
        with torch.no_grad():
            out = model(mixture.unsqueeze(0))
        ests = out.waveforms[0]
        probs = out.class_probs[0]

        refs = torch.from_numpy(clip.stems[:, 0, :].copy())
        n_true = refs.shape[0]
        refs, labels = pad_references(refs, clip.labels, tracks)
        assign = pit_assign(refs, labels, ests, probs, scoring, cfg)
        for i in range(n_true):
            est = ests[assign.perm[i]]
            si_vals.append(float(si_sdr(refs[i], est)))
            sdr_vals.append(float(sdr(refs[i], est)))

        pred_events.append(events_from_outputs(probs, hop_s))
        ref_events.append([(int(c), float(a), float(b)) for c, a, b in clip.labels])
        if counting_method == "classifier":
            pred_counts.append(count_sources_classifier(probs).predicted_count)
        else:
            pred_counts.append(count_sources_threshold(ests, mixture).predicted_count)
        true_counts.append(n_true)

    if num_clips == 0:
        raise ValueError(f"no clips in manifest {manifest_path}")
    er, f1 = er_f1(pred_events, ref_events, duration_s=durations)
    counts = sca(pred_counts, true_counts)
    report = EvalReport(
        si_sdr_mean=float(np.mean(si_vals)),
        sdr_mean=float(np.mean(sdr_vals)),
        er=er,
        f1=f1,
        sca_total=counts.total,
        sca_by_count=counts.by_count,
        num_clips=num_clips,
        counting_method=counting_method,
    )
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return report
