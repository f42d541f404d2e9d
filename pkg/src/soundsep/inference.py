"""Single-file inference: track separation to stem WAVs and source counting.

Inputs longer than the model's native 4 s window are processed in 4 s chunks
with 50% overlap; chunk outputs are aligned to the running tracks by
waveform correlation over the overlap, then overlap-added with a smooth
strictly-positive weight window (so a single-chunk input reproduces the
direct forward pass exactly).
"""

import itertools
import json
import logging
from math import gcd
from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile
from scipy.signal import resample_poly

from .counting import CountResult, count_sources_classifier, count_sources_threshold
from .model.checkpoint import load_checkpoint
from .simulator.corpus import CLASS_NAMES, SILENCE_ID

log = logging.getLogger(__name__)

CHUNK_SECONDS = 4.0


def load_multichannel(
    path: str | Path,
    num_mics: int,
    sample_rate: int,
    allow_resample: bool = False,
    mic_map: list[int] | None = None,
) -> np.ndarray:
    """Read a WAV as float32 (mics, samples) at the model's rate.

    Channel count other than num_mics requires mic_map (indices into the
    file's channels, repeats allowed); a differing sample rate requires
    allow_resample and is converted with a warning.
    """
    sr, data = wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float32) - 128.0) / 128.0
    else:
        data = data.astype(np.float32)
    if data.ndim == 1:
        data = data[:, None]
    data = data.T  # (channels, samples)

    if data.shape[0] != num_mics:
        if mic_map is None:
            raise ValueError(
                f"{path}: {data.shape[0]} channels, expected {num_mics}; "
                "provide a mic map to select/reorder channels"
            )
        if len(mic_map) != num_mics or any(not 0 <= c < data.shape[0] for c in mic_map):
            raise ValueError(f"mic map {mic_map} invalid for {data.shape[0]} channels")
        data = data[mic_map]
    if sr != sample_rate:
        if not allow_resample:
            raise ValueError(
                f"{path}: sample rate {sr}, expected {sample_rate}; "
                "pass allow_resample to convert"
            )
        log.warning("resampling %s from %d Hz to %d Hz", path, sr, sample_rate)
        g = gcd(sr, sample_rate)
        data = resample_poly(data, sample_rate // g, sr // g, axis=-1).astype(np.float32)
    return np.ascontiguousarray(data)


def _chunk_weight(n: int) -> np.ndarray:
    # strictly positive raised cosine; normalization by the summed weights
    # makes single-chunk output exactly equal the direct forward pass
    k = np.arange(n)
    return (0.5 - 0.5 * np.cos(2.0 * np.pi * (k + 0.5) / n)).astype(np.float64)


def _align_tracks(prev: np.ndarray, new: np.ndarray) -> tuple[int, ...]:
    """Permutation of new tracks maximizing summed overlap correlation."""
    s = prev.shape[0]
    corr = np.zeros((s, s))
    for i in range(s):
        for j in range(s):
            a, b = prev[i], new[j]
            denom = np.linalg.norm(a) * np.linalg.norm(b)
            corr[i, j] = float(a @ b) / denom if denom > 0 else 0.0
    best, best_score = tuple(range(s)), -np.inf
    for perm in itertools.permutations(range(s)):
        score = sum(corr[i, perm[i]] for i in range(s))
        if score > best_score:
            best, best_score = perm, score
    return best


def run_model_chunked(model, waves: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward a (mics, samples) signal of any length.

    Returns (tracks, samples) estimates and (tracks, frames, classes+1)
    frame probabilities concatenated over chunks in track-aligned order.
    """
    model.eval()
    fs = model.stft_config.sample_rate
    chunk = int(CHUNK_SECONDS * fs)
    n = waves.shape[-1]
    s = model.config.max_sources

    def forward(seg: np.ndarray):
        with torch.no_grad():
            out = model(torch.from_numpy(seg).unsqueeze(0))
        return out.waveforms[0].numpy(), out.class_probs[0].numpy()

    if n <= chunk:
        seg = np.pad(waves, ((0, 0), (0, chunk - n))) if n < chunk else waves
        wav, probs = forward(seg)
        return wav[:, :n], probs

    hop = chunk // 2
    starts = list(range(0, n - chunk + 1, hop))
    if starts[-1] != n - chunk:
        starts.append(n - chunk)
    weight = _chunk_weight(chunk)
    acc = np.zeros((s, n), dtype=np.float64)
    norm = np.zeros(n, dtype=np.float64)
    probs_parts = []
    assembled_upto = 0
    for start in starts:
        wav, probs = forward(np.ascontiguousarray(waves[:, start:start + chunk]))
        if probs_parts:
            overlap = assembled_upto - start
            with np.errstate(invalid="ignore"):
                ref = acc[:, start:assembled_upto] / np.maximum(norm[start:assembled_upto], 1e-12)
            perm = _align_tracks(ref, wav[:, :overlap])
            wav, probs = wav[list(perm)], probs[list(perm)]
        acc[:, start:start + chunk] += weight * wav
        norm[start:start + chunk] += weight
        probs_parts.append(probs)
        assembled_upto = start + chunk
    return (acc / norm).astype(np.float32), np.concatenate(probs_parts, axis=1)


def separate(
    ckpt_path: str | Path,
    wav_in: str | Path,
    out_dir: str | Path,
    allow_resample: bool = False,
    mic_map: list[int] | None = None,
) -> dict:
    """Write per-track stems and classes.json for one multichannel recording."""
    model, _ = load_checkpoint(ckpt_path)
    fs = model.stft_config.sample_rate
    waves = load_multichannel(wav_in, model.config.num_mics, fs, allow_resample, mic_map)
    est, probs = run_model_chunked(model, waves)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = count_sources_classifier(torch.from_numpy(probs))
    pooled = probs.mean(axis=1)
    classes = {}
    for t in range(est.shape[0]):
        wavfile.write(out_dir / f"track_{t}.wav", fs, est[t])
        cls = count.per_track_class[t]
        classes[f"track_{t}"] = {
            "class_name": "silence" if cls == SILENCE_ID else CLASS_NAMES[cls],
            "active": bool(count.active_mask[t]),
            "mean_prob": float(pooled[t, cls]),
        }
    payload = {"num_active": count.predicted_count, "tracks": classes}
    (out_dir / "classes.json").write_text(json.dumps(payload, indent=2) + "\n")
    return payload


def count_file(
    ckpt_path: str | Path,
    wav_in: str | Path,
    method: str = "classifier",
    allow_resample: bool = False,
    mic_map: list[int] | None = None,
) -> CountResult:
    """Predict the number of active sources in one recording."""
    model, _ = load_checkpoint(ckpt_path)
    fs = model.stft_config.sample_rate
    waves = load_multichannel(wav_in, model.config.num_mics, fs, allow_resample, mic_map)
    est, probs = run_model_chunked(model, waves)
    if method == "classifier":
        return count_sources_classifier(torch.from_numpy(probs))
    if method == "threshold":
        return count_sources_threshold(est, waves)
    raise ValueError(f"unknown counting method {method!r}")
