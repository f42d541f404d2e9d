import json

import numpy as np
import pytest
import torch
from scipy.io import wavfile

from soundsep.inference import (
    CHUNK_SECONDS,
    _align_tracks,
    _chunk_weight,
    count_file,
    load_multichannel,
    run_model_chunked,
    separate,
)
from soundsep.model import Separator
from soundsep.model.checkpoint import save_checkpoint
from tests.toydata import TINY_MODEL, make_toy_clip

FS = 16000


@pytest.fixture(scope="module")
def tiny_ckpt(tmp_path_factory):
    torch.manual_seed(3)
    model = Separator(TINY_MODEL)
    path = tmp_path_factory.mktemp("infer") / "ckpt.pt"
    save_checkpoint(path, model, stage="stage1")
    return path


@pytest.fixture(scope="module")
def quad_wav(tmp_path_factory):
    clip = make_toy_clip(seed=900, duration_s=1.0)
    path = tmp_path_factory.mktemp("wavs") / "mix.wav"
    wavfile.write(path, FS, clip.mixture.T)
    return path


def test_load_multichannel_float32_passthrough(quad_wav):
    waves = load_multichannel(quad_wav, num_mics=4, sample_rate=FS)
    assert waves.shape == (4, FS)
    assert waves.dtype == np.float32


def test_load_multichannel_int16_scaling(tmp_path):
    path = tmp_path / "int16.wav"
    pcm = np.full((100, 4), 16384, dtype=np.int16)
    wavfile.write(path, FS, pcm)
    waves = load_multichannel(path, num_mics=4, sample_rate=FS)
    assert np.allclose(waves, 0.5)


def test_load_multichannel_channel_mismatch(tmp_path):
    path = tmp_path / "stereo.wav"
    wavfile.write(path, FS, np.zeros((100, 2), dtype=np.float32))
    with pytest.raises(ValueError, match="mic map"):
        load_multichannel(path, num_mics=4, sample_rate=FS)


def test_load_multichannel_mic_map_reorders(tmp_path):
    path = tmp_path / "stereo.wav"
    data = np.stack([np.full(50, 0.1), np.full(50, 0.2)], axis=1).astype(np.float32)
    wavfile.write(path, FS, data)
    waves = load_multichannel(path, num_mics=4, sample_rate=FS, mic_map=[1, 0, 1, 0])
    assert np.allclose(waves[0], 0.2) and np.allclose(waves[1], 0.1)
    with pytest.raises(ValueError):
        load_multichannel(path, num_mics=4, sample_rate=FS, mic_map=[0, 1, 2, 0])


def test_load_multichannel_resample_gate(tmp_path):
    path = tmp_path / "8k.wav"
    wavfile.write(path, 8000, np.zeros((800, 4), dtype=np.float32))
    with pytest.raises(ValueError, match="sample rate"):
        load_multichannel(path, num_mics=4, sample_rate=FS)
    waves = load_multichannel(path, num_mics=4, sample_rate=FS, allow_resample=True)
    assert waves.shape == (4, 1600)


def test_chunk_weight_strictly_positive_and_symmetric():
    w = _chunk_weight(1024)
    assert (w > 0).all()
    assert np.allclose(w, w[::-1])
    # two half-overlapped copies sum to exactly 1 everywhere
    assert np.allclose(w[:512] + w[512:], 1.0, atol=1e-12)


def test_align_tracks_recovers_permutation():
    rng = np.random.default_rng(0)
    prev = rng.standard_normal((4, 500))
    perm = (2, 0, 3, 1)
    new = np.stack([prev[list(perm).index(j)] for j in range(4)])
    # new[perm[i]] == prev[i], so the recovered mapping must equal perm
    assert _align_tracks(prev, new) == perm


def test_chunked_equals_direct_for_native_length(tiny_ckpt):
    from soundsep.model.checkpoint import load_checkpoint

    model, _ = load_checkpoint(tiny_ckpt)
    model.eval()
    n = int(CHUNK_SECONDS * FS)
    rng = np.random.default_rng(1)
    waves = rng.standard_normal((4, n)).astype(np.float32) * 0.05
    est, probs = run_model_chunked(model, waves)
    with torch.no_grad():
        direct = model(torch.from_numpy(waves).unsqueeze(0))
    assert np.array_equal(est, direct.waveforms[0].numpy())
    assert np.array_equal(probs, direct.class_probs[0].numpy())


def test_chunked_long_input_shapes(tiny_ckpt):
    from soundsep.model.checkpoint import load_checkpoint

    model, _ = load_checkpoint(tiny_ckpt)
    n = int(1.5 * CHUNK_SECONDS * FS)
    rng = np.random.default_rng(2)
    waves = rng.standard_normal((4, n)).astype(np.float32) * 0.05
    est, probs = run_model_chunked(model, waves)
    assert est.shape == (4, n)
    assert np.isfinite(est).all()
    frames_per_chunk = int(CHUNK_SECONDS * FS) // model.stft_config.hop_length + 1
    assert probs.shape == (4, 2 * frames_per_chunk, 14)


def test_separate_writes_stems_and_classes(tiny_ckpt, quad_wav, tmp_path):
    out = tmp_path / "sep"
    payload = separate(tiny_ckpt, quad_wav, out)
    for t in range(4):
        sr, wav = wavfile.read(out / f"track_{t}.wav")
        assert sr == FS and wav.shape == (FS,)
    on_disk = json.loads((out / "classes.json").read_text())
    assert on_disk == payload
    assert set(payload) == {"num_active", "tracks"}
    assert set(payload["tracks"]) == {f"track_{t}" for t in range(4)}
    for info in payload["tracks"].values():
        assert set(info) == {"class_name", "active", "mean_prob"}
        assert isinstance(info["active"], bool)
        assert 0.0 <= info["mean_prob"] <= 1.0
    assert payload["num_active"] == sum(i["active"] for i in payload["tracks"].values())


def test_count_file_both_methods(tiny_ckpt, quad_wav):
    for method in ("classifier", "threshold"):
        result = count_file(tiny_ckpt, quad_wav, method)
        assert 0 <= result.predicted_count <= 4
        assert len(result.active_mask) == 4
    with pytest.raises(ValueError):
        count_file(tiny_ckpt, quad_wav, "guesswork")
