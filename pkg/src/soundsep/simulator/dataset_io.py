"""Dataset persistence: float32 WAVs plus a JSON-lines manifest.

Layout: out_dir/{mix,stems,noise}/<clip_id>.wav, stems with an _s{idx} suffix.
Float32 PCM keeps read(write(x)) bit-exact.
"""

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .rir import RoomSpec, ArraySpec
from .scene import SceneSpec, SourceEvent, SAMPLE_RATE
from .render import MixtureClip


def _write_wav(path: Path, data: np.ndarray):
    wavfile.write(path, SAMPLE_RATE, np.ascontiguousarray(data.T.astype(np.float32)))


def _read_wav(path: Path) -> np.ndarray:
    try:
        sr, data = wavfile.read(path)
    except Exception as exc:
        raise IOError(f"failed to read {path}: {exc}") from exc
    if sr != SAMPLE_RATE:
        raise IOError(f"{path}: expected {SAMPLE_RATE} Hz, got {sr}")
    return np.asarray(data, dtype=np.float32).T


def _scene_record(clip_id: str, clip: MixtureClip) -> dict:
    scene = clip.scene
    room = scene.room
    return {
        "clip_id": clip_id,
        "num_sources": len(scene.sources),
        "snr_db": scene.noise_snr_db,
        "rt60_s": room.rt60_s,
        "room": [room.width_m, room.length_m, room.height_m],
        "sources": [
            {
                "class_id": ev.class_id,
                "class_name": ev.class_name,
                "onset_s": ev.onset_s,
                "offset_s": ev.offset_s,
                "moving": ev.moving,
                "waypoints": [[t, list(map(float, p))] for t, p in ev.trajectory],
            }
            for ev in scene.sources
        ],
        "seed": scene.seed,
        "array": {
            "center": list(map(float, scene.array.center_pos)),
            "offsets": [list(map(float, o)) for o in scene.array.mic_offsets],
        },
    }


def write_dataset(clips, out_dir) -> Path:
    """Write MixtureClips under out_dir; returns the manifest path."""
    out = Path(out_dir)
    for sub in ("mix", "stems", "noise"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for i, clip in enumerate(clips):
            clip_id = f"clip_{i:06d}"
            _write_wav(out / "mix" / f"{clip_id}.wav", clip.mixture)
            _write_wav(out / "noise" / f"{clip_id}.wav", clip.noise)
            for s, stem in enumerate(clip.stems):
                _write_wav(out / "stems" / f"{clip_id}_s{s}.wav", stem)
            fh.write(json.dumps(_scene_record(clip_id, clip)) + "\n")
    return manifest


def _scene_from_record(rec: dict) -> SceneSpec:
    w, l, h = rec["room"]
    room = RoomSpec(width_m=w, length_m=l, height_m=h, rt60_s=rec["rt60_s"])
    arr = rec.get("array")
    array = (
        ArraySpec(center_pos=np.array(arr["center"]), mic_offsets=np.array(arr["offsets"]))
        if arr
        else ArraySpec(center_pos=np.array([room.width_m / 2, room.length_m / 2, room.height_m / 2]))
    )
    sources = [
        SourceEvent(
            class_id=s["class_id"],
            class_name=s["class_name"],
            signal=None,  # dry signals are not persisted
            trajectory=[(t, np.array(p)) for t, p in s["waypoints"]],
            moving=s["moving"],
            onset_s=s["onset_s"],
            offset_s=s["offset_s"],
        )
        for s in rec["sources"]
    ]
    return SceneSpec(room=room, array=array, sources=sources, noise_snr_db=rec["snr_db"], seed=rec["seed"])


def read_manifest(manifest_path) -> list:
    """Parse manifest.jsonl; raises on malformed lines with the line number."""
    records = []
    with open(manifest_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{manifest_path} line {lineno}: {exc}") from exc
    return records


def read_dataset(manifest_path):
    """Yield MixtureClips in manifest order, bit-exact waveforms."""
    manifest = Path(manifest_path)
    root = manifest.parent
    for rec in read_manifest(manifest):
        cid = rec["clip_id"]
        mixture = _read_wav(root / "mix" / f"{cid}.wav")
        noise = _read_wav(root / "noise" / f"{cid}.wav")
        stems = np.stack(
            [_read_wav(root / "stems" / f"{cid}_s{s}.wav") for s in range(rec["num_sources"])]
        )
        labels = [(s["class_id"], s["onset_s"], s["offset_s"]) for s in rec["sources"]]
        yield MixtureClip(
            mixture=mixture, stems=stems, noise=noise, labels=labels,
            scene=_scene_from_record(rec), clip_id=cid,
        )
