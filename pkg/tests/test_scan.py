import pytest
import torch

from soundsep.model import scan
from soundsep.model.scan import CHUNK, selective_scan, selective_scan_reference


def _random_case(gen, bsz, L, E, N, dtype=torch.float64):
    kw = {"generator": gen, "dtype": dtype}
    delta = 0.01 + torch.rand(bsz, L, E, **kw) * 0.1
    A = -torch.rand(E, N, **kw) * 2.0 - 0.05
    B = torch.randn(bsz, L, N, **kw)
    C = torch.randn(bsz, L, N, **kw)
    x = torch.randn(bsz, L, E, **kw)
    D = torch.randn(E, **kw)
    return delta, A, B, C, x, D


@pytest.mark.parametrize("L", [1, 15, 16, 17, 32, 33, 100])
def test_matches_reference_at_chunk_boundaries(L):
    gen = torch.Generator().manual_seed(L)
    args = _random_case(gen, 3, L, 5, 4)
    y_ref = selective_scan_reference(*args)
    y = selective_scan(*args)
    assert torch.allclose(y, y_ref, atol=1e-10, rtol=1e-10)


def test_matches_reference_float32_loop():
    for seed in range(20):
        gen = torch.Generator().manual_seed(seed)
        args = _random_case(gen, 2, 64, 8, 16, dtype=torch.float32)
        y_ref = selective_scan_reference(*args)
        y = selective_scan(*args)
        assert (y - y_ref).abs().max().item() <= 1e-4


def test_integrator_closed_form():
    # A = 0, B = C = 1, delta = 1, D = 0 reduces to a running sum of x
    bsz, L, E, N = 2, 40, 3, 1
    x = torch.randn(bsz, L, E, dtype=torch.float64)
    delta = torch.ones(bsz, L, E, dtype=torch.float64)
    A = torch.zeros(E, N, dtype=torch.float64)
    B = torch.ones(bsz, L, N, dtype=torch.float64)
    C = torch.ones(bsz, L, N, dtype=torch.float64)
    D = torch.zeros(E, dtype=torch.float64)
    y = selective_scan(delta, A, B, C, x, D)
    assert torch.allclose(y, x.cumsum(dim=1), atol=1e-10)


def test_single_decay_step_closed_form():
    # one step: y_0 = C_0 B_0 delta_0 x_0 + D x_0
    gen = torch.Generator().manual_seed(0)
    delta, A, B, C, x, D = _random_case(gen, 1, 1, 2, 3)
    y = selective_scan(delta, A, B, C, x, D)
    expect = (C[:, 0] * B[:, 0]).sum(-1, keepdim=True) * delta[:, 0] * x[:, 0] + D * x[:, 0]
    assert torch.allclose(y[:, 0], expect, atol=1e-12)


def test_gradients_match_reference():
    gen = torch.Generator().manual_seed(7)
    args = _random_case(gen, 2, 35, 4, 6)
    grads = {}
    for name, fn in (("fast", selective_scan), ("ref", selective_scan_reference)):
        leaves = [t.clone().requires_grad_(True) for t in args]
        fn(*leaves).square().sum().backward()
        grads[name] = [t.grad for t in leaves]
    for gf, gr in zip(grads["fast"], grads["ref"]):
        assert torch.allclose(gf, gr, atol=1e-9, rtol=1e-7)


def test_gradcheck():
    gen = torch.Generator().manual_seed(3)
    args = [t.requires_grad_(True) for t in _random_case(gen, 1, CHUNK + 3, 2, 2)]
    assert torch.autograd.gradcheck(selective_scan, args, eps=1e-6, atol=1e-7)


def test_slab_split_matches_single_slab(monkeypatch):
    gen = torch.Generator().manual_seed(9)
    args = _random_case(gen, 6, 33, 4, 5)
    whole = selective_scan(*args)
    monkeypatch.setattr(scan, "_SLAB_ELEMS", 33 * 4 * 5 * 2)  # forces 2-row slabs
    split = selective_scan(*args)
    assert torch.equal(whole, split)


def test_reference_rejects_nonpositive_delta():
    gen = torch.Generator().manual_seed(1)
    delta, A, B, C, x, D = _random_case(gen, 1, 8, 2, 2)
    delta[0, 3, 1] = 0.0
    with pytest.raises(ValueError):
        selective_scan_reference(delta, A, B, C, x, D)
