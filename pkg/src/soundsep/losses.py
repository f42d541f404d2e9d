"""Separation and classification objectives.

All SDR-family metrics are expressed in dB and clamped to [-40, 40] so that
perfect reconstruction stays finite during training. Losses are the negated
metrics; the optimizer minimizes.

Track assignment is permutation-invariant: `pit_assign` searches all S!
pairings of reference sources to output tracks under a joint criterion of
aggregate SDR plus classification cross-entropy, and the chosen permutation
is shared by the audio and class heads.
"""

import itertools
import math
from dataclasses import dataclass

import torch

from .simulator.corpus import SILENCE_ID
from .stft import StftConfig

DB_FLOOR = -40.0
DB_CEIL = 40.0


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights: stage-1 CE weight and the refinement SI-SDR/SDR split."""

    lambda_ce: float = 1.0
    srt_si: float = 0.1
    srt_sdr: float = 0.9

    def __post_init__(self):
        if self.lambda_ce < 0:
            raise ValueError("lambda_ce must be >= 0")
        if abs(self.srt_si + self.srt_sdr - 1.0) > 1e-9:
            raise ValueError("srt_si + srt_sdr must equal 1")


@dataclass
class PermutationAssignment:
    """perm[i] is the output track assigned to reference source i."""

    perm: tuple[int, ...]
    joint_loss: torch.Tensor

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError(f"perm {self.perm} is not a bijection")


def _ratio_db(num: torch.Tensor, den: torch.Tensor) -> torch.Tensor:
    # tiny floor keeps zero numerators/denominators finite; the clamp then
    # lands them on the dB floor/ceiling without NaN gradients
    tiny = torch.finfo(num.dtype).tiny
    db = 10.0 * torch.log10(num.clamp_min(tiny) / den.clamp_min(tiny))
    return db.clamp(DB_FLOOR, DB_CEIL)


def sdr(ref: torch.Tensor, est: torch.Tensor) -> torch.Tensor:
    """Signal-to-distortion ratio 10*log10(|ref|^2 / |ref - est|^2), in dB.

    ref, est: (..., samples). Raises on an all-zero reference.
    """
    ref_energy = ref.square().sum(dim=-1)
    if not bool((ref_energy > 0).all()):
        raise ValueError("sdr is undefined for an all-zero reference")
    return _ratio_db(ref_energy, (ref - est).square().sum(dim=-1))


def si_sdr(ref: torch.Tensor, est: torch.Tensor, return_orthogonal: bool = False):
    """Scale-invariant SDR: SDR after projecting est onto ref, in dB.

    ref, est: (..., samples). Orthogonal est (zero projection) yields the
    clamp floor; with return_orthogonal=True also returns that flag.
    """
    ref_energy = ref.square().sum(dim=-1)
    if not bool((ref_energy > 0).all()):
        raise ValueError("si_sdr is undefined for an all-zero reference")
    dot = (est * ref).sum(dim=-1)
    scale = dot / ref_energy
    target = scale.unsqueeze(-1) * ref
    db = _ratio_db(target.square().sum(dim=-1), (est - target).square().sum(dim=-1))
    if return_orthogonal:
        return db, dot == 0
    return db


def sa_sdr(refs: torch.Tensor, ests: torch.Tensor) -> torch.Tensor:
    """Source-aggregated SDR: one ratio of summed reference energy to summed
    residual energy across tracks, in dB.

    refs, ests: (..., tracks, samples). Silent references are allowed; their
    residuals still count. Raises only if every reference is zero.
    """
    # per-track energies are reduced in sorted order so the result is
    # bit-identical under any simultaneous permutation of refs and ests
    def pooled(x):
        vals, _ = x.square().sum(dim=-1).sort(dim=-1, descending=True)
        return vals.sum(dim=-1)

    ref_energy = pooled(refs)
    if not bool((ref_energy > 0).all()):
        raise ValueError("sa_sdr is undefined when all references are zero")
    return _ratio_db(ref_energy, pooled(refs - ests))


def frame_label_ids(
    target_class: int,
    onset_s: float | None,
    offset_s: float | None,
    num_frames: int,
    cfg: StftConfig,
) -> torch.Tensor:
    """Per-frame target ids: target_class where the frame center falls in
    [onset, offset), silence elsewhere. None interval means always silent."""
    ids = torch.full((num_frames,), SILENCE_ID, dtype=torch.long)
    if onset_s is not None and offset_s is not None:
        centers = torch.arange(num_frames, dtype=torch.float64) * cfg.hop_length / cfg.sample_rate
        ids[(centers >= onset_s) & (centers < offset_s)] = target_class
    return ids


def frame_cross_entropy(
    probs: torch.Tensor,
    target_class: int,
    onset_s: float | None,
    offset_s: float | None,
    cfg: StftConfig,
    clip_level: bool = False,
) -> torch.Tensor:
    """Cross-entropy of framewise class probabilities against interval labels.

    probs: (frames, classes+1) rows summing to 1. clip_level=True pools the
    frames by mean and scores a single clip-wide target instead.
    """
    if probs.ndim != 2:
        raise ValueError(f"expected (frames, classes), got {tuple(probs.shape)}")
    row_err = (probs.sum(dim=-1) - 1.0).abs().max()
    if float(row_err) > 1e-3:
        raise ValueError(f"probability rows are unnormalized (max err {float(row_err):.2e})")
    tiny = torch.finfo(probs.dtype).tiny
    if clip_level:
        pooled = probs.mean(dim=0)
        cls = target_class if onset_s is not None else SILENCE_ID
        return -pooled[cls].clamp_min(tiny).log()
    ids = frame_label_ids(target_class, onset_s, offset_s, probs.shape[0], cfg)
    picked = probs[torch.arange(probs.shape[0]), ids]
    return -picked.clamp_min(tiny).log().mean()


def pad_references(
    refs: torch.Tensor,
    labels: list[tuple[int, float, float]],
    num_tracks: int,
) -> tuple[torch.Tensor, list[tuple[int, float | None, float | None]]]:
    """Zero-pad references up to the track count; padded slots get silence
    labels with an empty interval."""
    s_true, n = refs.shape
    if s_true > num_tracks:
        raise ValueError(f"{s_true} references exceed {num_tracks} tracks")
    padded = [(int(c), float(a), float(b)) for c, a, b in labels]
    if s_true < num_tracks:
        refs = torch.cat([refs, refs.new_zeros(num_tracks - s_true, n)], dim=0)
        padded += [(SILENCE_ID, None, None)] * (num_tracks - s_true)
    return refs, padded


def pit_assign(
    refs: torch.Tensor,
    labels: list[tuple[int, float | None, float | None]],
    est_waves: torch.Tensor,
    est_probs: torch.Tensor,
    weights: LossWeights,
    stft_cfg: StftConfig,
) -> PermutationAssignment:
    """Exhaustive permutation-invariant assignment for one clip.

    refs: (S, samples) references already padded to the track count;
    labels: per-reference (class_id, onset_s, offset_s) with None interval
    for silent slots; est_waves: (S, samples); est_probs: (S, frames, C+1).
    Joint loss per permutation: -sa_sdr + lambda_ce * mean per-track CE.
    Ties break to the lexicographically smallest permutation.
    """
    s = refs.shape[0]
    if est_waves.shape[0] != s or est_probs.shape[0] != s or len(labels) != s:
        raise ValueError("reference/track count mismatch")

    ref_energy = refs.square().sum()
    if not bool(ref_energy > 0):
        raise ValueError("pit_assign requires at least one nonzero reference")
    # pairwise building blocks; each permutation then reduces to gathers
    residual = (refs.unsqueeze(1) - est_waves.unsqueeze(0)).square().sum(dim=-1)  # (S_ref, S_est)
    tiny = torch.finfo(est_probs.dtype).tiny
    logp = est_probs.clamp_min(tiny).log()  # (S, T, C+1)
    t = est_probs.shape[1]
    ce = refs.new_zeros(s, s)
    for i, (cls, onset, offset) in enumerate(labels):
        ids = frame_label_ids(cls, onset, offset, t, stft_cfg)
        ce[i] = -logp[:, torch.arange(t), ids].mean(dim=-1)

    best_perm, best_loss, best_val = None, None, math.inf
    for perm in itertools.permutations(range(s)):
        idx = torch.as_tensor(perm)
        den = residual[torch.arange(s), idx].sum()
        sa = _ratio_db(ref_energy, den)
        joint = -sa + weights.lambda_ce * ce[torch.arange(s), idx].mean()
        val = float(joint.detach())
        # the identity fallback also covers all-NaN losses (comparisons with
        # NaN are false), letting callers surface the bad batch
        if best_perm is None or val < best_val:
            best_perm, best_loss, best_val = perm, joint, val
    return PermutationAssignment(perm=best_perm, joint_loss=best_loss)


def srt_loss(
    refs: torch.Tensor,
    est_waves: torch.Tensor,
    active_mask,
    perm: tuple[int, ...],
    weights: LossWeights = LossWeights(),
) -> torch.Tensor | None:
    """Refinement objective over predicted-active tracks only.

    Sums weights.srt_si*(-si_sdr) + weights.srt_sdr*(-sdr) over tracks that
    are predicted active and carry a nonzero assigned reference, divided by
    their count. Returns None when no track qualifies (skip the batch).
    """
    terms = []
    for ref_idx, track_idx in enumerate(perm):
        if not bool(active_mask[track_idx]):
            continue
        ref = refs[ref_idx]
        if not bool((ref != 0).any()):
            continue
        est = est_waves[track_idx]
        terms.append(weights.srt_si * -si_sdr(ref, est) + weights.srt_sdr * -sdr(ref, est))
    if not terms:
        return None
    return torch.stack(terms).sum() / len(terms)
