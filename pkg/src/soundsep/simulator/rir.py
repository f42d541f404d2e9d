"""Shoebox room impulse responses via the image-source method.

Amplitude model: each image carries (reflectance ** num_bounces) / (4 * pi * d)
at delay d / c, with taps placed by an 81-tap Hann-windowed sinc
fractional-delay kernel (evaluated from a lookup table with linear
interpolation).

The per-bounce amplitude reflectance is exp(-DECAY_CALIBRATION * absorption / 2)
with the absorption from the Sabine inversion. With uniform angle-independent
reflectance, a raw image-source sum decays measurably slower than the Sabine
prediction (grazing propagation directions bounce less often per meter and
dominate the integrated decay), so the exponent is calibrated once so that the
Schroeder-fit T60 of generated RIRs tracks the requested rt60 across the
supported room range; empirically the fit stays within about -10%/+20% of
target for rooms of 5-8 m x 5-8 m x 3-4 m and rt60 0.3-0.5 s.
"""

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_SOUND = 343.0
DECAY_CALIBRATION = 1.5

KERNEL_TAPS = 81
_HALF = KERNEL_TAPS // 2  # 40
_FRAC_STEPS = 2048


@dataclass(frozen=True)
class RoomSpec:
    """Axis-aligned shoebox with one corner at the origin."""

    width_m: float   # x extent
    length_m: float  # y extent
    height_m: float  # z extent
    rt60_s: float
    speed_of_sound: float = SPEED_OF_SOUND

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.width_m, self.length_m, self.height_m], dtype=np.float64)

    @property
    def volume(self) -> float:
        return self.width_m * self.length_m * self.height_m

    @property
    def surface(self) -> float:
        w, l, h = self.width_m, self.length_m, self.height_m
        return 2.0 * (w * l + w * h + l * h)

    def contains(self, pos, margin: float = 0.0) -> bool:
        p = np.asarray(pos, dtype=np.float64)
        return bool(np.all(p > margin) and np.all(self.dims - p > margin))


def tetrahedral_offsets(radius: float = 0.042) -> np.ndarray:
    """Vertices of a regular tetrahedron on a sphere of the given radius, (4, 3)."""
    v = np.array(
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]],
        dtype=np.float64,
    )
    return v / np.sqrt(3.0) * radius


@dataclass(frozen=True)
class ArraySpec:
    """Rigid microphone array: center position plus per-mic offsets."""

    center_pos: np.ndarray
    mic_offsets: np.ndarray = field(default_factory=tetrahedral_offsets)

    def __post_init__(self):
        object.__setattr__(self, "center_pos", np.asarray(self.center_pos, dtype=np.float64))
        object.__setattr__(self, "mic_offsets", np.asarray(self.mic_offsets, dtype=np.float64))
        if self.mic_offsets.shape != (4, 3):
            raise ValueError(f"expected 4 mic offsets, got {self.mic_offsets.shape}")

    @property
    def mic_positions(self) -> np.ndarray:
        return self.center_pos[None, :] + self.mic_offsets


class GeometryError(ValueError):
    pass


def rt60_to_absorption(room: RoomSpec) -> float:
    """Sabine inversion: absorption = 0.161 * V / (S * rt60), clamped to (0, 1]."""
    if room.rt60_s <= 0:
        raise ValueError(f"rt60_s must be positive, got {room.rt60_s}")
    alpha = 0.161 * room.volume / (room.surface * room.rt60_s)
    if alpha > 1.0:
        raise ValueError(
            f"rt60 {room.rt60_s:.3f} s unachievable for this room (absorption {alpha:.3f} > 1)"
        )
    return alpha


def default_max_order(room: RoomSpec) -> int:
    min_dim = min(room.width_m, room.length_m, room.height_m)
    return int(np.ceil(room.speed_of_sound * room.rt60_s / min_dim)) + 1


def default_rir_length(room: RoomSpec, direct_dist: float, fs: int) -> int:
    return int(np.ceil(fs * (room.rt60_s + direct_dist / room.speed_of_sound))) + _HALF + 1


def _axis_entries(max_order: int):
    """Per-axis image index table: lattice multiplier n, source sign, bounce count."""
    ns, signs, counts = [], [], []
    for n in range(-(max_order // 2 + 1), max_order // 2 + 2):
        c_even = 2 * abs(n)
        if c_even <= max_order:
            ns.append(n)
            signs.append(1)
            counts.append(c_even)
        c_odd = abs(2 * n - 1)
        if c_odd <= max_order:
            ns.append(n)
            signs.append(-1)
            counts.append(c_odd)
    return np.array(ns, dtype=np.int32), np.array(signs, dtype=np.int8), np.array(counts, dtype=np.int16)


class ImageLattice:
    """Image bookkeeping for one (room, max_order) pair, reusable across source
    positions; only coordinates depend on the source, bounce counts do not."""

    def __init__(self, room: RoomSpec, max_order: int):
        self.room = room
        self.max_order = max_order
        per_axis = [_axis_entries(max_order) for _ in range(3)]
        grids = np.meshgrid(*[np.arange(len(a[0])) for a in per_axis], indexing="ij")
        total = sum(a[2][g] for a, g in zip(per_axis, grids))
        keep = total <= max_order
        self.idx = [g[keep].astype(np.int32) for g in grids]
        self.counts = total[keep].astype(np.int16)
        dims = room.dims
        self._offset = [per_axis[i][0] * 2.0 * dims[i] for i in range(3)]
        self._sign = [per_axis[i][1].astype(np.float64) for i in range(3)]

    def positions(self, src_pos) -> np.ndarray:
        """Image coordinates for one source position, (num_images, 3) float64."""
        s = np.asarray(src_pos, dtype=np.float64)
        cols = [
            self._offset[i][self.idx[i]] + self._sign[i][self.idx[i]] * s[i]
            for i in range(3)
        ]
        return np.stack(cols, axis=1)


def image_sources(room: RoomSpec, src_pos, max_order: int):
    """All image positions and bounce counts up to the given total order.

    Returns:
        positions: (num_images, 3) float64
        orders: (num_images,) int16 total wall-bounce count per image
    """
    lat = ImageLattice(room, max_order)
    return lat.positions(src_pos), lat.counts.copy()


def _kernel_table() -> np.ndarray:
    """(frac_steps + 1, 81) windowed-sinc taps for fractional delays in [0, 1]."""
    frac = np.arange(_FRAC_STEPS + 1, dtype=np.float64) / _FRAC_STEPS
    x = np.arange(KERNEL_TAPS, dtype=np.float64)[None, :] - _HALF - frac[:, None]
    w = 0.5 * (1.0 + np.cos(2.0 * np.pi * x / (KERNEL_TAPS + 1)))
    return (np.sinc(x) * w).astype(np.float32)


_KERNEL = _kernel_table()


def _scatter_taps(rir_acc: np.ndarray, dist: np.ndarray, amp: np.ndarray, fs: int, c: float):
    """Add windowed-sinc pulses amp_i at delay dist_i/c into a padded buffer.

    rir_acc has length rir_len + 2 * 81; tap index 0 of an image at integer
    delay i0 lands at i0 - 40 + 81 >= 41, so no bounds checks are needed as
    long as callers filtered dist to keep i0 within rir_len + 40.
    """
    delay = dist * (fs / c)
    i0 = np.floor(delay).astype(np.int64)
    frac = (delay - i0).astype(np.float32)
    fi = frac * _FRAC_STEPS
    row = np.minimum(fi.astype(np.int64), _FRAC_STEPS - 1)
    w1 = (fi - row).astype(np.float32)[:, None]
    kern = _KERNEL[row] * (1.0 - w1) + _KERNEL[row + 1] * w1
    kern *= amp.astype(np.float32)[:, None]
    flat_idx = (i0[:, None] + np.arange(KERNEL_TAPS, dtype=np.int64)[None, :]).ravel()
    rir_acc += np.bincount(flat_idx + (KERNEL_TAPS - _HALF), weights=kern.ravel().astype(np.float64),
                           minlength=rir_acc.shape[0])[: rir_acc.shape[0]]


def synthesize_rir(
    lattice: ImageLattice,
    src_pos,
    mic_positions: np.ndarray,
    fs: int,
    rir_length: int,
) -> np.ndarray:
    """RIRs from one source position to each mic, (num_mics, rir_length) float32."""
    room = lattice.room
    alpha = rt60_to_absorption(room)
    refl = np.exp(-0.5 * DECAY_CALIBRATION * alpha)
    img = lattice.positions(src_pos)
    gain = np.power(refl, lattice.counts.astype(np.float64))
    mics = np.atleast_2d(np.asarray(mic_positions, dtype=np.float64))
    c = room.speed_of_sound
    max_dist = (rir_length + _HALF) * c / fs
    out = np.empty((mics.shape[0], rir_length), dtype=np.float32)
    pad = KERNEL_TAPS
    for m, mic in enumerate(mics):
        d = np.sqrt(((img - mic[None, :]) ** 2).sum(axis=1))
        if np.any(d < 1e-3):
            raise GeometryError("image source within 1 mm of a microphone")
        keep = d < max_dist
        dk = d[keep]
        amp = gain[keep] / (4.0 * np.pi * dk)
        acc = np.zeros(rir_length + 2 * pad, dtype=np.float64)
        _scatter_taps(acc, dk, amp, fs, c)
        out[m] = acc[pad : pad + rir_length].astype(np.float32)
    return out


def compute_rir(
    room: RoomSpec,
    src_pos,
    mic_pos,
    max_order: int | None = None,
    fs: int = 16000,
    rir_length: int | None = None,
) -> np.ndarray:
    """Image-source RIRs from src_pos to one or more microphones.

    mic_pos: (3,) for a single RIR of shape (rir_length,), or (num_mics, 3)
    for a stack of shape (num_mics, rir_length).
    """
    src = np.asarray(src_pos, dtype=np.float64)
    mic = np.asarray(mic_pos, dtype=np.float64)
    single = mic.ndim == 1
    mics = np.atleast_2d(mic)
    if mics.ndim != 2 or mics.shape[1] != 3:
        raise ValueError(f"mic_pos must be (3,) or (num_mics, 3), got {mic.shape}")
    if not room.contains(src) or not all(room.contains(m) for m in mics):
        raise GeometryError("source and microphones must lie strictly inside the room")
    d_direct = np.sqrt(((mics - src[None, :]) ** 2).sum(axis=1))
    if float(d_direct.min()) < 1e-3:
        raise GeometryError("source and microphone closer than 1 mm")
    if max_order is None:
        max_order = default_max_order(room)
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    if rir_length is None:
        rir_length = default_rir_length(room, float(d_direct.max()), fs)
    lattice = ImageLattice(room, max_order)
    rirs = synthesize_rir(lattice, src, mics, fs, rir_length)
    return rirs[0] if single else rirs
