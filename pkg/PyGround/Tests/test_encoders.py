import numpy as np
import pytest
import torch

from PyGround.encoders import (EncoderConfig, MediaPayload, ModalityBranches,
                               QFormer, audio_windows, encode_audio,
                               encode_image, encode_video, frame_indices,
                               qformer, sample_frames, temporal_encoding)
from PyGround.errors import BadDim, EmptyAudio, EmptyVideo, ShapeMismatch

from PyGround.Tests.conftest import tiny_encoder_config


def random_video(rng, frames, size=32):
    return MediaPayload.video(rng.random((frames, size, size, 3)))


def test_frame_indices():
    assert frame_indices(32, 8) == [0, 4, 9, 13, 18, 22, 27, 31]
    assert frame_indices(8, 8) == list(range(8))
    assert frame_indices(1, 4) == [0, 0, 0, 0]
    assert frame_indices(5, 1) == [0]
    with pytest.raises(EmptyVideo):
        frame_indices(0, 8)


def test_sample_frames_keeps_order(rng):
    frames = rng.random((10, 4, 4, 3))
    picked = sample_frames(frames, 4)
    assert [f.tolist() for f in picked] == \
        [frames[i].tolist() for i in frame_indices(10, 4)]


def test_audio_windows():
    waveform = np.arange(10, dtype=np.float32)
    windows = audio_windows(waveform, 3, 4)
    assert [w[0] for w in windows] == [0, 3, 6]
    short = audio_windows(np.ones(3, dtype=np.float32), 2, 5)
    assert [w.tolist() for w in short] == [[1, 1, 1, 0, 0]] * 2
    with pytest.raises(EmptyAudio):
        audio_windows(np.zeros(0), 2, 4)


def test_temporal_encoding():
    encoding = temporal_encoding(0, 8, 16)
    assert encoding.shape == (16,)
    assert torch.allclose(encoding[:8], torch.zeros(8))
    assert torch.allclose(encoding[8:], torch.ones(8))
    assert not torch.allclose(temporal_encoding(1, 8, 16), encoding)
    with pytest.raises(BadDim):
        temporal_encoding(0, 8, 15)
    with pytest.raises(ValueError):
        temporal_encoding(8, 8, 16)


def test_output_shapes(encoder_config, rng):
    branches = ModalityBranches(encoder_config)
    image = encode_image(MediaPayload.image(rng.random((32, 32, 3))),
                         branches)
    video = encode_video(random_video(rng, 9), branches)
    audio = encode_audio(MediaPayload.audio(rng.normal(size=20000), 8000),
                         branches)
    assert image.shape == encoder_config.output_shape('image')
    assert video.shape == encoder_config.output_shape('video')
    assert audio.shape == encoder_config.output_shape('audio')
    assert (image.modality, video.modality, audio.modality) == \
        ('image', 'video', 'audio')


def test_branches_are_deterministic(encoder_config, rng):
    payload = random_video(rng, 6)
    first = ModalityBranches(encoder_config).encode(payload).tokens
    second = ModalityBranches(encoder_config).encode(payload).tokens
    assert torch.equal(first, second)


def test_frozen_encoders_do_not_train(encoder_config):
    branches = ModalityBranches(encoder_config)
    assert all(not p.requires_grad for p in branches.frozen.parameters())
    assert all(p.requires_grad for p in branches.video_qformer.parameters())


@pytest.mark.parametrize('temporalPE, changes', [('sinusoidal', True),
                                                 ('none', False)])
def test_frame_order_sensitivity(rng, temporalPE, changes):
    config = tiny_encoder_config(temporal_pe=temporalPE)
    branches = ModalityBranches(config)
    for _ in range(50):
        frames = rng.random((config.num_frames, 32, 32, 3))
        permutation = rng.permutation(config.num_frames)
        if (permutation == np.arange(config.num_frames)).all():
            permutation = permutation[::-1]
        with torch.no_grad():
            original = branches.encode(MediaPayload.video(frames)).tokens
            permuted = branches.encode(
                MediaPayload.video(frames[permutation])).tokens
        if changes:
            assert float(torch.linalg.norm(original - permuted)) > 1e-6
        else:
            assert float((original - permuted).abs().max()) < 1e-5


def test_qformer_without_layers_returns_queries(rng):
    queries = torch.from_numpy(rng.normal(size=(3, 16))).float()
    sequence = torch.from_numpy(rng.normal(size=(7, 16))).float()
    assert torch.equal(qformer(queries, sequence, []), queries)
    bare = QFormer(3, 16, 16, layers=0)
    assert torch.equal(bare(sequence), bare.query_tokens)


def test_qformer_ignores_row_order(rng):
    torch.manual_seed(0)
    block = QFormer(2, 16, 16, layers=2, heads=2, ffn=32).eval()
    for _ in range(20):
        sequence = torch.from_numpy(rng.normal(size=(12, 16))).float()
        permutation = torch.from_numpy(rng.permutation(12))
        with torch.no_grad():
            original = block(sequence)
            permuted = block(sequence[permutation])
        assert float((original - permuted).abs().max()) < 1e-5


def test_image_rows_follow_patches(encoder_config, rng):
    branches = ModalityBranches(encoder_config)
    image = rng.random((32, 32, 3))
    changed = image.copy()
    # patch (0, 1) of the 2 x 2 grid
    changed[:16, 16:] = rng.random((16, 16, 3))
    first = encode_image(MediaPayload.image(image), branches).tokens
    second = encode_image(MediaPayload.image(changed), branches).tokens
    difference = (first - second).abs().amax(dim=-1)
    assert float(difference[1]) > 1e-6
    assert float(difference[[0, 2, 3]].max()) == 0.0


def test_audio_content_matters(encoder_config):
    branches = ModalityBranches(encoder_config)
    samples = 2 * encoder_config.segment_samples
    tone = np.sin(2 * np.pi * 440.0 * np.arange(samples) / 8000.0)
    with torch.no_grad():
        silent = encode_audio(MediaPayload.audio(np.zeros(samples), 8000),
                              branches).tokens
        toned = encode_audio(MediaPayload.audio(tone, 8000), branches).tokens
    assert float(torch.linalg.norm(silent - toned)) > 1e-6


@pytest.mark.parametrize('temporalPE, changes', [('sinusoidal', True),
                                                 ('none', False)])
def test_segment_order_sensitivity(rng, temporalPE, changes):
    config = tiny_encoder_config(temporal_pe=temporalPE)
    branches = ModalityBranches(config)
    length = config.segment_samples
    for _ in range(10):
        first = rng.normal(size=length)
        second = np.sin(2 * np.pi * rng.uniform(100, 3000) *
                        np.arange(length) / 8000.0)
        with torch.no_grad():
            original = encode_audio(MediaPayload.audio(
                np.concatenate([first, second]), 8000), branches).tokens
            swapped = encode_audio(MediaPayload.audio(
                np.concatenate([second, first]), 8000), branches).tokens
        if changes:
            assert float(torch.linalg.norm(original - swapped)) > 1e-6
        else:
            assert float((original - swapped).abs().max()) < 1e-5


def test_outputs_are_finite(encoder_config, rng):
    branches = ModalityBranches(encoder_config)
    for trial in range(1000):
        kind = ('image', 'video', 'audio')[trial % 3]
        scale = float(10.0 ** rng.integers(-3, 4))
        if kind == 'image':
            payload = MediaPayload.image(rng.random((32, 32, 3)) * scale)
        elif kind == 'video':
            frames = int(rng.integers(1, 12))
            payload = MediaPayload.video(
                rng.random((frames, 32, 32, 3)) * scale)
        else:
            size = int(rng.integers(1, 3 * encoder_config.segment_samples))
            payload = MediaPayload.audio(rng.normal(size=size) * scale, 8000)
        with torch.no_grad():
            tokens = branches.encode(payload).tokens
        assert bool(torch.isfinite(tokens).all()), (trial, kind, scale)


def test_payload_errors(encoder_config, rng):
    branches = ModalityBranches(encoder_config)
    with pytest.raises(EmptyVideo):
        MediaPayload.video([])
    with pytest.raises(EmptyVideo):
        MediaPayload('video', np.zeros((0, 32, 32, 3)))
    with pytest.raises(EmptyAudio):
        MediaPayload.audio(np.zeros(0), 8000)
    with pytest.raises(ShapeMismatch):
        MediaPayload.image(rng.random((32, 32)))
    with pytest.raises(ShapeMismatch):
        branches.encode(MediaPayload.image(rng.random((31, 31, 3))))
    with pytest.raises(ShapeMismatch):
        branches.encode_video(MediaPayload.image(rng.random((32, 32, 3))))


def test_config_checks():
    with pytest.raises(BadDim):
        EncoderConfig(image_dim=15)
    with pytest.raises(ValueError):
        EncoderConfig(temporal_pe='learned')
    with pytest.raises(ShapeMismatch):
        EncoderConfig(image_tokens=5, frame_tokens=5).validate()
    with pytest.raises(ShapeMismatch):
        EncoderConfig(frame_dim=32).validate()
    with pytest.raises(ShapeMismatch):
        tiny_encoder_config(video_dim=18, qformer_heads=4).validate()
    config = EncoderConfig()
    assert config.validate() is config
    assert config.grid == 4
    assert config.segment_samples == 16000
