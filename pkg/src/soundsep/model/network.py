"""Multichannel separator with per-track audio and class-activity decoders.

Pipeline: multichannel STFT -> real/imag channel stack -> conv encoder ->
alternating frequency/time hybrid stages -> per-track split -> complex-mask
audio decoder (iSTFT) and a CRNN class decoder emitting framewise class
probabilities (last class = silence).
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..stft import StftConfig, istft, stack_ri, stft
from .blocks import HybridStage
from .config import ModelConfig


@dataclass
class TrackOutputs:
    """Separator forward results.

    waveforms: (batch, tracks, samples)
    class_probs: (batch, tracks, frames, num_classes + 1), rows sum to 1.
    """

    waveforms: torch.Tensor
    class_probs: torch.Tensor


class ClassDecoder(nn.Module):
    """CRNN head: conv/pool stack over frequency, BiGRU over time, softmax."""

    def __init__(self, dim: int, num_bins: int, rnn_width: int, num_out: int):
        super().__init__()
        stages = []
        bins = num_bins
        for _ in range(3):
            stages += [
                nn.Conv2d(dim, dim, 3, padding=1),
                nn.GroupNorm(1, dim),
                nn.ReLU(),
                nn.MaxPool2d((1, 2)),
            ]
            bins //= 2
        self.conv = nn.Sequential(*stages)
        self.rnn = nn.GRU(dim * bins, rnn_width, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * rnn_width, num_out)

    def forward(self, x):
        # x: (B', D, T, F) -> (B', T, num_out) probabilities
        h = self.conv(x)
        b, d, t, f = h.shape
        h = h.permute(0, 2, 1, 3).reshape(b, t, d * f)
        h, _ = self.rnn(h)
        return self.proj(h).softmax(dim=-1)


class Separator(nn.Module):
    """Fixed-track-count separation and polyphonic classification network."""

    def __init__(self, config: ModelConfig | None = None, stft_config: StftConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        self.stft_config = stft_config or StftConfig()
        cfg = self.config
        d = cfg.embed_dim

        self.encoder = nn.Sequential(
            nn.Conv2d(2 * cfg.num_mics, d, 3, padding=1),
            nn.GroupNorm(1, d),
        )
        self.stages = nn.ModuleList()
        for _ in range(cfg.num_blocks):
            for axis in ("freq", "time"):
                self.stages.append(HybridStage(
                    d, axis, cfg.unfold_kernel, cfg.num_heads,
                    cfg.ssm_expand, cfg.ssm_state,
                ))
        self.split = nn.Conv2d(d, cfg.max_sources * d, 1)
        self.audio_decoder = nn.Conv2d(d, 2, 3, padding=1)
        self.class_decoder = ClassDecoder(
            d, self.stft_config.num_bins, cfg.rnn_width, cfg.num_classes_total,
        )

    def forward(self, mix: torch.Tensor) -> TrackOutputs:
        """mix: (batch, mics, samples) -> TrackOutputs."""
        if mix.ndim != 3 or mix.shape[1] != self.config.num_mics:
            raise ValueError(
                f"expected (batch, {self.config.num_mics}, samples), got {tuple(mix.shape)}"
            )
        b, _, n = mix.shape
        s = self.config.max_sources
        d = self.config.embed_dim

        spec = stft(mix, self.stft_config)             # (B, M, T, F) complex
        x = self.encoder(stack_ri(spec))               # (B, D, T, F)
        for stage in self.stages:
            x = stage(x)
        tracks = self.split(x).reshape(b, s, d, *x.shape[2:]).flatten(0, 1)

        ri = self.audio_decoder(tracks)                # (B*S, 2, T, F)
        track_spec = torch.complex(ri[:, 0], ri[:, 1])
        wav = istft(track_spec, self.stft_config, num_samples=n)
        probs = self.class_decoder(tracks)             # (B*S, T, C+1)
        return TrackOutputs(
            waveforms=wav.reshape(b, s, n),
            class_probs=probs.reshape(b, s, *probs.shape[1:]),
        )

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())
