"""STFT front end shared by the model, the losses and the evaluation code.

All waveform tensors are float32 at 16 kHz unless stated otherwise. Complex
spectrograms are laid out (..., frames, bins) so that sequence models can run
along either of the two trailing axes.
"""

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 16000
    win_length: int = 512
    hop_length: int = 256

    def __post_init__(self):
        if self.sample_rate < 1 or self.win_length < 1 or self.hop_length < 1:
            raise ValueError("sample_rate, win_length and hop_length must be positive")
        if self.hop_length > self.win_length:
            raise ValueError("hop_length must not exceed win_length")

    @property
    def num_bins(self) -> int:
        return self.win_length // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        return num_samples // self.hop_length + 1


def _window(cfg: StftConfig, device, dtype) -> torch.Tensor:
    return torch.hamming_window(cfg.win_length, periodic=True, device=device, dtype=dtype)


def stft(x: torch.Tensor, cfg: StftConfig) -> torch.Tensor:
    """Centered STFT with reflect padding.

    Args:
        x: (..., num_samples) real waveform.
    Returns:
        (..., frames, bins) complex spectrogram, frames = num_samples // hop + 1.
    """
    shape = x.shape
    flat = x.reshape(-1, shape[-1])
    spec = torch.stft(
        flat,
        n_fft=cfg.win_length,
        hop_length=cfg.hop_length,
        win_length=cfg.win_length,
        window=_window(cfg, x.device, x.dtype),
        center=True,
        pad_mode="reflect",
        normalized=False,
        onesided=True,
        return_complex=True,
    )
    # torch returns (batch, bins, frames); place frames before bins
    spec = spec.transpose(-2, -1)
    return spec.reshape(*shape[:-1], spec.shape[-2], spec.shape[-1])


def istft(spec: torch.Tensor, cfg: StftConfig, num_samples: int) -> torch.Tensor:
    """Least-squares overlap-add inverse of :func:`stft`.

    Args:
        spec: (..., frames, bins) complex spectrogram.
        num_samples: output length in samples.
    Returns:
        (..., num_samples) real waveform.
    """
    shape = spec.shape
    flat = spec.reshape(-1, shape[-2], shape[-1]).transpose(-2, -1)
    win = _window(cfg, spec.device, spec.real.dtype)
    x = torch.istft(
        flat,
        n_fft=cfg.win_length,
        hop_length=cfg.hop_length,
        win_length=cfg.win_length,
        window=win,
        center=True,
        normalized=False,
        onesided=True,
        length=num_samples,
    )
    return x.reshape(*shape[:-2], num_samples)


def stack_ri(spec: torch.Tensor) -> torch.Tensor:
    """Interleave real/imaginary parts of per-channel spectrograms.

    Args:
        spec: (batch, channels, frames, bins) complex.
    Returns:
        (batch, 2 * channels, frames, bins) real, ordered
        [re(ch0), im(ch0), re(ch1), im(ch1), ...].
    """
    b, m, t, f = spec.shape
    out = torch.stack((spec.real, spec.imag), dim=2)  # (b, m, 2, t, f)
    return out.reshape(b, 2 * m, t, f)


def unstack_ri(x: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`stack_ri`: (batch, 2C, frames, bins) -> complex (batch, C, frames, bins)."""
    b, m2, t, f = x.shape
    if m2 % 2:
        raise ValueError(f"channel axis must be even, got {m2}")
    pairs = x.reshape(b, m2 // 2, 2, t, f)
    return torch.complex(pairs[:, :, 0], pairs[:, :, 1])
