import numpy as np
import pytest

from PyGround.dataset import build_stage_corpus
from PyGround.encoders import EncoderConfig
from PyGround.model import GroundingModel, LanguageModelConfig
from PyGround.worlds import gen_world


def tiny_encoder_config(**overrides):
    attrs = dict(image_tokens=4, image_dim=16, patch_pixels=4,
                 frame_tokens=4, frame_dim=16, num_frames=4,
                 video_queries=2, video_dim=16, num_segments=2,
                 segment_tokens=4, segment_dim=16, audio_queries=2,
                 audio_dim=16, spectral_bins=16, qformer_layers=1,
                 qformer_heads=2, qformer_ffn=32)
    attrs.update(overrides)
    return EncoderConfig(**attrs)


def tiny_lm_config(**overrides):
    attrs = dict(dim=32, num_layers=1, num_heads=2, ffn=64, context=256)
    attrs.update(overrides)
    return LanguageModelConfig(**attrs)


@pytest.fixture
def encoder_config():
    return tiny_encoder_config()


@pytest.fixture
def lm_config():
    return tiny_lm_config()


@pytest.fixture
def model(encoder_config, lm_config):
    return GroundingModel(encoder_config, lm_config)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def worlds(tmp_path_factory):
    """Small image, video and audio worlds, written once per session."""
    root = tmp_path_factory.mktemp('worlds')
    paths = {}
    for kind, count in (('image', 8), ('video', 6), ('audio', 4)):
        path = root / kind
        gen_world(kind, 0, count).write(path)
        paths[kind] = str(path)
    return paths


@pytest.fixture(scope='session')
def corpora(worlds, tmp_path_factory):
    """Stage 1-3 corpora built from the session worlds."""
    root = tmp_path_factory.mktemp('corpora')
    sources = [worlds[kind] for kind in sorted(worlds)]
    paths = {}
    for stage in (1, 2, 3):
        path = root / ('stage%i.jsonl' % stage)
        build_stage_corpus(stage, sources, np.random.default_rng(stage),
                           str(path))
        paths[stage] = str(path)
    return paths
