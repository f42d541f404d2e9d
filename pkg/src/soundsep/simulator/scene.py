"""Random scene sampling: rooms, arrays, source trajectories and onsets.

Every scene is a pure function of (seed, corpus), so generation can be
parallelized across clips by seed splitting.
"""

from dataclasses import dataclass, field

import numpy as np

from .rir import RoomSpec, ArraySpec, GeometryError, tetrahedral_offsets
from .corpus import ClipCatalog

SAMPLE_RATE = 16000
CLIP_SAMPLES = 64000
CLIP_SECONDS = CLIP_SAMPLES / SAMPLE_RATE

WALL_CLEARANCE_SOURCE = 0.3
WALL_CLEARANCE_ARRAY = 0.5
ARRAY_CLEARANCE_SOURCE = 0.2  # keeps 1/(4*pi*d) amplitudes bounded
MAX_SPEED = 3.0
MOVING_PROB = 0.75
ACTIVITY_THRESHOLD = 1e-4  # of peak, defines the active extent of a clip


@dataclass
class SourceEvent:
    class_id: int
    class_name: str
    signal: np.ndarray  # (64000,) float32, zero outside [onset_s, offset_s]
    trajectory: list  # [(time_s, position 3-vector)], one entry for static sources
    moving: bool
    onset_s: float
    offset_s: float

    def positions(self) -> np.ndarray:
        return np.stack([p for _, p in self.trajectory])

    def position_at(self, t: float) -> np.ndarray:
        times = np.array([w[0] for w in self.trajectory])
        pts = self.positions()
        return np.stack([np.interp(t, times, pts[:, i]) for i in range(3)])

    def validate(self, room: RoomSpec):
        if not 0 <= self.class_id <= 12:
            raise ValueError(f"class_id {self.class_id} out of range")
        if self.signal.shape != (CLIP_SAMPLES,):
            raise ValueError(f"signal must be ({CLIP_SAMPLES},), got {self.signal.shape}")
        if not self.onset_s < self.offset_s:
            raise ValueError("onset_s must precede offset_s")
        for _, p in self.trajectory:
            if not room.contains(p, margin=WALL_CLEARANCE_SOURCE - 1e-9):
                raise GeometryError(f"waypoint {p} violates wall clearance")
        for (t0, p0), (t1, p1) in zip(self.trajectory, self.trajectory[1:]):
            speed = float(np.linalg.norm(p1 - p0) / max(t1 - t0, 1e-9))
            if speed > MAX_SPEED + 1e-9:
                raise ValueError(f"waypoint speed {speed:.2f} m/s exceeds {MAX_SPEED}")


@dataclass
class SceneSpec:
    room: RoomSpec
    array: ArraySpec
    sources: list  # of SourceEvent
    noise_snr_db: float
    seed: int

    def validate(self):
        if not 2 <= len(self.sources) <= 4:
            raise ValueError(f"need 2-4 sources, got {len(self.sources)}")
        if not 6 <= self.noise_snr_db <= 30:
            raise ValueError(f"noise_snr_db {self.noise_snr_db} outside [6, 30]")
        for mic in self.array.mic_positions:
            if not self.room.contains(mic):
                raise GeometryError("microphone outside the room")
        for src in self.sources:
            src.validate(self.room)


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _uniform_in_box(rng, dims, margin):
    return np.array([rng.uniform(margin, d - margin) for d in dims])


def sample_trajectory(
    rng: np.random.Generator,
    room: RoomSpec,
    moving: bool,
    array_center: np.ndarray,
    duration_s: float = CLIP_SECONDS,
) -> list:
    """Piecewise-linear trajectory as [(time_s, position)] waypoints.

    Moving sources get 2-5 waypoints at equal time splits; each hop is drawn
    inside the reachable sphere for the segment so the speed bound holds by
    construction. Static sources get a single waypoint.
    """
    dims = room.dims

    def draw_point(center=None, radius=None):
        for _ in range(200):
            if center is None:
                p = _uniform_in_box(rng, dims, WALL_CLEARANCE_SOURCE)
            else:
                vec = rng.normal(size=3)
                vec *= rng.uniform(0, radius) / max(np.linalg.norm(vec), 1e-12)
                p = center + vec
            if not room.contains(p, margin=WALL_CLEARANCE_SOURCE):
                continue
            if np.linalg.norm(p - array_center) < ARRAY_CLEARANCE_SOURCE:
                continue
            return p
        raise GeometryError("could not place a source waypoint")

    start = draw_point()
    if not moving:
        return [(0.0, start)]
    num = int(rng.integers(2, 6))
    times = np.linspace(0.0, duration_s, num)
    seg = times[1] - times[0]
    pts = [start]
    for _ in range(num - 1):
        pts.append(draw_point(center=pts[-1], radius=0.95 * MAX_SPEED * seg))
    return list(zip(times.tolist(), pts))


def _place_clip(rng: np.random.Generator, clip: np.ndarray):
    """Shift the active region of a 4 s clip to a uniform random onset.

    Returns (signal, onset_s, offset_s); signal is hard-zeroed outside the
    active interval. Returns None for an all-quiet clip.
    """
    env = np.abs(clip)
    peak = env.max()
    if peak <= 0:
        return None
    active = np.flatnonzero(env > ACTIVITY_THRESHOLD * peak)
    a, b = int(active[0]), int(active[-1]) + 1
    dur = b - a
    start = int(rng.integers(0, CLIP_SAMPLES - dur + 1))
    sig = np.zeros(CLIP_SAMPLES, dtype=np.float32)
    sig[start : start + dur] = clip[a:b]
    return sig, start / SAMPLE_RATE, (start + dur) / SAMPLE_RATE


def sample_scene(rng_seed: int, corpus: ClipCatalog, num_sources="auto") -> SceneSpec:
    """Draw one scene. num_sources: int, (lo, hi) range, or "auto" for {2,3,4}."""
    if not corpus.clips_by_class:
        raise ValueError("corpus catalog is empty")
    rng = np.random.default_rng(rng_seed)

    room = RoomSpec(
        width_m=float(rng.uniform(5.0, 8.0)),
        length_m=float(rng.uniform(5.0, 8.0)),
        height_m=float(rng.uniform(3.0, 4.0)),
        rt60_s=float(rng.uniform(0.2, 0.6)),
    )
    if num_sources == "auto" or num_sources is None:
        lo, hi = 2, 4
    elif isinstance(num_sources, int):
        lo = hi = num_sources
    else:
        lo, hi = num_sources
    n_src = int(rng.integers(lo, hi + 1))
    snr_db = float(rng.uniform(6.0, 30.0))

    center = _uniform_in_box(rng, room.dims, WALL_CLEARANCE_ARRAY)
    offsets = tetrahedral_offsets() @ _random_rotation(rng).T
    array = ArraySpec(center_pos=center, mic_offsets=offsets)

    class_ids = sorted(corpus.clips_by_class)
    sources = []
    while len(sources) < n_src:
        cid = int(class_ids[rng.integers(0, len(class_ids))])
        clips = corpus.clips_by_class[cid]
        clip = clips[int(rng.integers(0, len(clips)))]
        placed = _place_clip(rng, clip)
        if placed is None:
            continue
        sig, onset, offset = placed
        moving = bool(rng.random() < MOVING_PROB)
        traj = sample_trajectory(rng, room, moving, center)
        sources.append(
            SourceEvent(
                class_id=cid,
                class_name=corpus.class_names[cid],
                signal=sig,
                trajectory=traj,
                moving=moving,
                onset_s=onset,
                offset_s=offset,
            )
        )

    scene = SceneSpec(room=room, array=array, sources=sources, noise_snr_db=snr_db, seed=int(rng_seed))
    scene.validate()
    return scene
