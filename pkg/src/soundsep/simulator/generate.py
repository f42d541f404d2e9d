"""End-to-end dataset generation: corpus -> sampled scenes -> rendered clips
on disk. Fully determined by (corpus, num_clips, seed, source-count range)."""

from pathlib import Path

import numpy as np

from .corpus import ingest_corpus
from .dataset_io import write_dataset
from .render import mix_scene, white_noise
from .scene import sample_scene


def generate_dataset(
    corpus_dir: str | Path,
    out_dir: str | Path,
    num_clips: int,
    seed: int,
    min_sources: int = 2,
    max_sources: int = 4,
) -> Path:
    """Render num_clips mixtures into out_dir; returns the manifest path."""
    if num_clips < 1:
        raise ValueError("num_clips must be >= 1")
    if not 1 <= min_sources <= max_sources:
        raise ValueError(f"bad source-count range [{min_sources}, {max_sources}]")
    catalog = ingest_corpus(corpus_dir)

    def clips():
        for i in range(num_clips):
            scene = sample_scene(seed + i, catalog, (min_sources, max_sources))
            noise = white_noise(np.random.default_rng([seed + i, 1]))
            yield mix_scene(scene, noise)

    return write_dataset(clips(), out_dir)
