"""Reverberant rendering of scenes: block-wise time-varying convolution for
moving sources, SNR-scaled noise mixing, and the MixtureClip container."""

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .rir import RoomSpec, ArraySpec, ImageLattice, default_max_order, synthesize_rir
from .scene import SceneSpec, SourceEvent, SAMPLE_RATE, CLIP_SAMPLES

BLOCK_SAMPLES = 2048  # 128 ms at 16 kHz
FADE_SAMPLES = 256    # 16 ms linear crossfade


class SceneError(RuntimeError):
    """Scene cannot be rendered as specified; caller should resample."""


@dataclass
class MixtureClip:
    mixture: np.ndarray  # (4, 64000) float32
    stems: np.ndarray    # (num_sources, 4, 64000) float32
    noise: np.ndarray    # (4, 64000) float32
    labels: list         # per source (class_id, onset_s, offset_s)
    scene: SceneSpec
    clip_id: str | None = None  # assigned when written to / read from disk


def block_window(start: int, stop: int, num_samples: int) -> np.ndarray:
    """Crossfade window for the block [start, stop): linear ramps of
    FADE_SAMPLES centered on interior block edges; flat at clip boundaries.
    Adjacent windows sum to 1 everywhere."""
    half = FADE_SAMPLES // 2
    lo = start - half if start > 0 else 0
    hi = stop + half if stop < num_samples else num_samples
    w = np.ones(hi - lo, dtype=np.float32)
    if start > 0:
        ramp = (np.arange(FADE_SAMPLES, dtype=np.float32) + 0.5) / FADE_SAMPLES
        w[: FADE_SAMPLES] = ramp
    if stop < num_samples:
        ramp = (np.arange(FADE_SAMPLES, dtype=np.float32) + 0.5) / FADE_SAMPLES
        w[-FADE_SAMPLES:] = ramp[::-1]
    return w, lo, hi


def _rir_length_for(room: RoomSpec, fs: int) -> int:
    diag = float(np.linalg.norm(room.dims))
    return int(np.ceil(fs * (room.rt60_s + diag / room.speed_of_sound))) + 82


def render_moving_source(
    event: SourceEvent,
    room: RoomSpec,
    array: ArraySpec,
    fs: int = SAMPLE_RATE,
    lattice: ImageLattice | None = None,
) -> np.ndarray:
    """Render one source event to the array, (4, 64000) float32.

    Static sources are one full convolution. Moving sources are rendered in
    128 ms blocks with the RIR frozen at each block's trajectory midpoint and
    16 ms complementary crossfades between adjacent blocks.
    """
    if lattice is None:
        lattice = ImageLattice(room, default_max_order(room))
    mics = array.mic_positions
    n = event.signal.shape[0]
    rir_len = _rir_length_for(room, fs)
    out = np.zeros((mics.shape[0], n), dtype=np.float64)

    if not event.moving or len(event.trajectory) == 1:
        rirs = synthesize_rir(lattice, event.trajectory[0][1], mics, fs, rir_len)
        conv = fftconvolve(event.signal[None, :].astype(np.float64), rirs.astype(np.float64), axes=1)
        return conv[:, :n].astype(np.float32)

    num_blocks = (n + BLOCK_SAMPLES - 1) // BLOCK_SAMPLES
    for b in range(num_blocks):
        start = b * BLOCK_SAMPLES
        stop = min(start + BLOCK_SAMPLES, n)
        w, lo, hi = block_window(start, stop, n)
        seg = event.signal[lo:hi].astype(np.float64) * w
        if not np.any(seg):
            continue
        t_mid = 0.5 * (start + stop) / fs
        pos = event.position_at(t_mid)
        rirs = synthesize_rir(lattice, pos, mics, fs, rir_len)
        conv = fftconvolve(seg[None, :], rirs.astype(np.float64), axes=1)
        stop_out = min(lo + conv.shape[1], n)
        out[:, lo:stop_out] += conv[:, : stop_out - lo]
    return out.astype(np.float32)


def white_noise(rng: np.random.Generator, num_channels: int = 4, num_samples: int = CLIP_SAMPLES) -> np.ndarray:
    return rng.standard_normal((num_channels, num_samples)).astype(np.float32)


def mix_scene(scene: SceneSpec, noise_clip: np.ndarray, fs: int = SAMPLE_RATE) -> MixtureClip:
    """Render all sources, scale noise to the scene SNR, and mix.

    SNR convention: 10*log10(sum_s ||stem_s||^2 / ||noise||^2) = noise_snr_db,
    energies summed over all channels. noise_snr_db = +inf mutes the noise.
    """
    noise = np.asarray(noise_clip, dtype=np.float32)
    if noise.ndim != 2 or noise.shape[0] != 4 or noise.shape[1] < CLIP_SAMPLES:
        raise ValueError(f"noise_clip must be (4, >={CLIP_SAMPLES}), got {noise.shape}")
    noise = noise[:, :CLIP_SAMPLES].copy()

    lattice = ImageLattice(scene.room, default_max_order(scene.room))
    stems = np.stack(
        [render_moving_source(ev, scene.room, scene.array, fs, lattice) for ev in scene.sources]
    )
    stem_energy = float(np.sum(stems.astype(np.float64) ** 2))
    if stem_energy <= 0:
        raise SceneError("all stems are silent; SNR undefined")

    if np.isinf(scene.noise_snr_db):
        noise = np.zeros_like(noise)
    else:
        noise_energy = float(np.sum(noise.astype(np.float64) ** 2))
        if noise_energy <= 0:
            raise SceneError("noise clip is silent but a finite SNR was requested")
        target = stem_energy / (10.0 ** (scene.noise_snr_db / 10.0))
        noise = noise * np.float32(np.sqrt(target / noise_energy))

    mixture = stems.sum(axis=0) + noise
    peak = float(np.abs(mixture).max())
    if peak > 0.99:
        g = np.float32(0.99 / peak)
        mixture, stems, noise = mixture * g, stems * g, noise * g

    labels = [(ev.class_id, ev.onset_s, ev.offset_s) for ev in scene.sources]
    return MixtureClip(mixture=mixture, stems=stems, noise=noise, labels=labels, scene=scene)
