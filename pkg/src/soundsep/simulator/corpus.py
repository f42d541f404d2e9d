"""Foreground clip catalog: 13 sound classes plus a reserved silence id.

Corpus layout on disk: root/<class name>/*.wav, one directory per class.
Clips are mono-ized, resampled to 16 kHz and padded/cropped to 4 s at ingest.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
CLIP_SAMPLES = 64000

CLASS_NAMES = [
    "Female speech",
    "Male speech",
    "Clapping",
    "Telephone",
    "Laughter",
    "Domestic sounds",
    "Walk",
    "Door",
    "Music",
    "Instrument",
    "Water tap",
    "Bell",
    "Knock",
]
NUM_CLASSES = len(CLASS_NAMES) + 1  # 13 sound classes + silence
SILENCE_ID = len(CLASS_NAMES)  # 13

_CANONICAL = {name.casefold(): i for i, name in enumerate(CLASS_NAMES)}


def class_id_for(name: str) -> int:
    key = name.replace("_", " ").strip().casefold()
    if key not in _CANONICAL:
        raise KeyError(f"unknown class name {name!r}")
    return _CANONICAL[key]


@dataclass
class ClipCatalog:
    clips_by_class: dict = field(default_factory=dict)  # class_id -> list of (64000,) float32
    class_names: list = field(default_factory=lambda: list(CLASS_NAMES))
    skipped: int = 0

    @property
    def num_clips(self) -> int:
        return sum(len(v) for v in self.clips_by_class.values())


def load_wav_mono(path) -> np.ndarray:
    """Read a WAV file as mono float32 at 16 kHz (resampling as needed)."""
    try:
        sr, data = wavfile.read(path)
    except Exception as exc:
        raise IOError(f"unreadable WAV file {path}: {exc}") from exc
    data = np.asarray(data)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float32) - 128.0) / 128.0
    else:
        data = data.astype(np.float32)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if sr != SAMPLE_RATE:
        g = math.gcd(int(sr), SAMPLE_RATE)
        data = resample_poly(data.astype(np.float64), SAMPLE_RATE // g, int(sr) // g).astype(np.float32)
    return data


def pad_or_crop(sig: np.ndarray, num_samples: int = CLIP_SAMPLES) -> np.ndarray:
    if len(sig) >= num_samples:
        return sig[:num_samples].astype(np.float32)
    out = np.zeros(num_samples, dtype=np.float32)
    out[: len(sig)] = sig
    return out


def ingest_corpus(root_dir) -> ClipCatalog:
    """Scan root_dir/<class name>/*.wav into a ClipCatalog.

    Unknown class directories are a schema error; unreadable files are skipped
    with a warning and counted in catalog.skipped.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise ValueError(f"corpus root {root} is not a directory")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not subdirs:
        raise ValueError(f"corpus root {root} contains no class directories")
    catalog = ClipCatalog()
    for sub in subdirs:
        try:
            cid = class_id_for(sub.name)
        except KeyError as exc:
            raise ValueError(f"corpus directory {sub.name!r} is not a known class") from exc
        clips = catalog.clips_by_class.setdefault(cid, [])
        for wav in sorted(sub.glob("*.wav")):
            try:
                sig = load_wav_mono(wav)
            except IOError as exc:
                log.warning("skipping %s: %s", wav, exc)
                catalog.skipped += 1
                continue
            clips.append(pad_or_crop(sig))
        if not clips:
            del catalog.clips_by_class[cid]
    if not catalog.clips_by_class:
        raise ValueError(f"corpus root {root} yielded no clips")
    return catalog
