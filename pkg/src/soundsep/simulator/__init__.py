from .rir import RoomSpec, ArraySpec, rt60_to_absorption, image_sources, compute_rir
from .scene import SourceEvent, SceneSpec, sample_scene, sample_trajectory
from .render import MixtureClip, SceneError, render_moving_source, mix_scene, white_noise
from .corpus import CLASS_NAMES, SILENCE_ID, NUM_CLASSES, ClipCatalog, ingest_corpus
from .dataset_io import write_dataset, read_dataset

__all__ = [
    "RoomSpec", "ArraySpec", "rt60_to_absorption", "image_sources", "compute_rir",
    "SourceEvent", "SceneSpec", "sample_scene", "sample_trajectory",
    "MixtureClip", "SceneError", "render_moving_source", "mix_scene", "white_noise",
    "CLASS_NAMES", "SILENCE_ID", "NUM_CLASSES", "ClipCatalog", "ingest_corpus",
    "write_dataset", "read_dataset",
]
