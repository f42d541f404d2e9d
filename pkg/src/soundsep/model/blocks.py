"""Hybrid dual-path stage: gated convolution, position-free attention and a
selective-SSM feedforward, each pre-normalized with a residual connection.

Stages run on (batch, D, T, F) latents. A stage works along one axis ("time"
or "freq"); the other spatial axis is folded into the batch for the sequence
sub-layers.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .scan import selective_scan


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel dim of (B, D, T, F) tensors."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        return self.norm(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)


class GatedConvBlock(nn.Module):
    """Unfold G neighbors along one axis, then gate two pointwise branches.

    The unfold stacks the G shifted copies into G*D channels; two kernel-1
    convolutions reduce GD -> D into branches a and b, combined as
    a * mish(b).
    """

    def __init__(self, dim: int, kernel: int):
        super().__init__()
        self.kernel = kernel
        self.value = nn.Conv2d(kernel * dim, dim, 1)
        self.gate = nn.Conv2d(kernel * dim, dim, 1)

    def forward(self, x, axis: str):
        # x: (B, D, T, F); unfold with stride 1 and zero same-padding
        k = self.kernel
        half = k // 2
        dim_ax = 2 if axis == "time" else 3
        pad = (0, 0, half, half) if axis == "time" else (half, half)
        xp = F.pad(x, pad)
        shifts = [xp.narrow(dim_ax, j, x.shape[dim_ax]) for j in range(k)]
        stacked = torch.cat(shifts, dim=1)  # (B, G*D, T, F)
        return self.value(stacked) * F.mish(self.gate(stacked))


class MultiHeadSelfAttention(nn.Module):
    """Scaled dot-product attention without positional embeddings."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x):
        # x: (B', L, D)
        b, L, d = x.shape
        def split(t):
            return t.reshape(b, L, self.heads, self.head_dim).transpose(1, 2)
        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        attn = scores.softmax(dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(b, L, d)
        return self.out(ctx)


class MambaFeedForward(nn.Module):
    """Gated selective-SSM sub-layer operating position-wise along a sequence.

    in_proj D -> 2E splits into the SSM path and a gate; the SSM path runs a
    short causal depthwise convolution + SiLU, then the selective scan; the
    gated product is projected back to D.
    """

    CONV_KERNEL = 4

    def __init__(self, dim: int, expand: int, state: int):
        super().__init__()
        self.inner = expand * dim
        self.state = state
        self.in_proj = nn.Linear(dim, 2 * self.inner, bias=False)
        self.conv = nn.Conv1d(
            self.inner, self.inner, self.CONV_KERNEL,
            groups=self.inner, padding=self.CONV_KERNEL - 1,
        )
        self.dt_proj = nn.Linear(self.inner, self.inner)
        self.bc_proj = nn.Linear(self.inner, 2 * state, bias=False)
        self.A_log = nn.Parameter(torch.log(torch.arange(1, state + 1, dtype=torch.float32)).repeat(self.inner, 1))
        self.D = nn.Parameter(torch.ones(self.inner))
        self.out_proj = nn.Linear(self.inner, dim, bias=False)
        # softplus(dt bias) in [1e-3, 0.1] keeps early steps well-conditioned
        dt = torch.exp(torch.empty(self.inner).uniform_(math.log(1e-3), math.log(0.1)))
        with torch.no_grad():
            self.dt_proj.bias.copy_(dt + torch.log(-torch.expm1(-dt)))

    def forward(self, x):
        # x: (B', L, D)
        L = x.shape[1]
        u, z = self.in_proj(x).chunk(2, dim=-1)
        u = self.conv(u.transpose(1, 2))[:, :, :L].transpose(1, 2)
        u = F.silu(u)
        delta = F.softplus(self.dt_proj(u))
        Bmat, Cmat = self.bc_proj(u).chunk(2, dim=-1)
        A = -torch.exp(self.A_log)
        y = selective_scan(delta, A, Bmat, Cmat, u, self.D)
        return self.out_proj(y * F.silu(z))


class HybridStage(nn.Module):
    """GCB -> MHSA -> Mamba-FFN along one axis, each with pre-norm residual.

    Args:
        dim: channel width D.
        axis: "time" or "freq"; sequence axis for all three sub-layers.
    """

    def __init__(self, dim: int, axis: str, kernel: int, heads: int, expand: int, state: int):
        super().__init__()
        if axis not in ("time", "freq"):
            raise ValueError(f"axis must be time or freq, got {axis}")
        self.axis = axis
        self.norm_gcb = ChannelLayerNorm(dim)
        self.gcb = GatedConvBlock(dim, kernel)
        self.norm_attn = nn.LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads)
        self.norm_ffn = nn.LayerNorm(dim)
        self.ffn = MambaFeedForward(dim, expand, state)

    def _to_seq(self, x):
        b, d, t, f = x.shape
        if self.axis == "time":
            return x.permute(0, 3, 2, 1).reshape(b * f, t, d), (b, d, t, f)
        return x.permute(0, 2, 3, 1).reshape(b * t, f, d), (b, d, t, f)

    def _from_seq(self, s, shape):
        b, d, t, f = shape
        if self.axis == "time":
            return s.reshape(b, f, t, d).permute(0, 3, 2, 1)
        return s.reshape(b, t, f, d).permute(0, 3, 1, 2)

    def forward(self, x):
        x = x + self.gcb(self.norm_gcb(x), self.axis)
        s, shape = self._to_seq(x)
        s = s + self.attn(self.norm_attn(s))
        s = s + self.ffn(self.norm_ffn(s))
        return self._from_seq(s, shape)
