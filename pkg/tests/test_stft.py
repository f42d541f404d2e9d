import numpy as np
import pytest
import torch

from soundsep.stft import StftConfig, istft, stack_ri, stft, unstack_ri


def test_default_geometry():
    cfg = StftConfig()
    assert cfg.sample_rate == 16000
    assert cfg.win_length == 512
    assert cfg.hop_length == 256
    assert cfg.num_bins == 257
    assert cfg.num_frames(64000) == 251


def test_forward_shape_and_layout():
    cfg = StftConfig()
    x = torch.randn(2, 4, 64000)
    spec = stft(x, cfg)
    assert spec.shape == (2, 4, 251, 257)
    assert spec.is_complex()


def test_tone_lands_in_expected_bin():
    cfg = StftConfig()
    t = torch.arange(16000) / cfg.sample_rate
    x = torch.sin(2 * torch.pi * 1000.0 * t)
    spec = stft(x, cfg)
    mag = spec.abs().mean(dim=0)
    assert int(mag.argmax()) == round(1000 * cfg.win_length / cfg.sample_rate)


def test_round_trip_within_tolerance():
    cfg = StftConfig()
    g = torch.Generator().manual_seed(0)
    for _ in range(10):
        x = torch.randn(4, 64000, generator=g)
        err = (istft(stft(x, cfg), cfg, x.shape[-1]) - x).abs().max()
        assert float(err) <= 1e-6 * float(x.abs().max())


def test_round_trip_odd_lengths():
    cfg = StftConfig()
    g = torch.Generator().manual_seed(1)
    for n in (1000, 16000, 40001, 63999):
        x = torch.randn(n, generator=g)
        y = istft(stft(x, cfg), cfg, n)
        assert y.shape == x.shape
        assert float((y - x).abs().max()) <= 1e-6 * float(x.abs().max())


def test_stack_ri_interleaves_re_im():
    cfg = StftConfig()
    x = torch.randn(1, 2, 8000)
    spec = stft(x, cfg)
    stacked = stack_ri(spec)
    assert stacked.shape == (1, 4, spec.shape[2], spec.shape[3])
    assert torch.equal(stacked[:, 0], spec[:, 0].real)
    assert torch.equal(stacked[:, 1], spec[:, 0].imag)
    assert torch.equal(stacked[:, 2], spec[:, 1].real)
    assert torch.equal(stacked[:, 3], spec[:, 1].imag)


def test_unstack_ri_inverts_stack():
    cfg = StftConfig()
    spec = stft(torch.randn(3, 4, 16000), cfg)
    assert torch.equal(unstack_ri(stack_ri(spec)), spec)


def test_unstack_ri_rejects_odd_channels():
    with pytest.raises(ValueError):
        unstack_ri(torch.randn(1, 3, 10, 10))


def test_config_validation():
    with pytest.raises(ValueError):
        StftConfig(win_length=0)
    with pytest.raises(ValueError):
        StftConfig(hop_length=0)


def test_linearity():
    cfg = StftConfig()
    g = torch.Generator().manual_seed(2)
    a = torch.randn(16000, generator=g)
    b = torch.randn(16000, generator=g)
    lhs = stft(a + 2.0 * b, cfg)
    rhs = stft(a, cfg) + 2.0 * stft(b, cfg)
    assert float((lhs - rhs).abs().max()) < 1e-4
