"""Modality branches: frozen toy encoders plus the trainable Q-Former
aggregation for video and audio.

The frozen parts (patch embedding, spectral featurizer) are fixed seeded
random projections.  Video frames and audio segments are encoded one at a
time, a sinusoidal temporal position encoding is added to every token of a
frame/segment, and a Q-Former compresses the concatenated tokens to a fixed
number of query outputs.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from PyGround.base import GroundObject
from PyGround.errors import BadDim, EmptyAudio, EmptyVideo, ShapeMismatch

logger = logging.getLogger(__name__)

MODALITIES = ('image', 'video', 'audio')
TEMPORAL_PE_KINDS = ('sinusoidal', 'none')

# scale applied to the normalized position before the sinusoid
PE_POSITION_SCALE = 100.0


class EncoderConfig(GroundObject):
    """Token counts and dimensions of every branch.

    image_tokens/image_dim are K_I/d_I; frame_tokens/frame_dim are K_f/d_f;
    num_frames is M; video_queries/video_dim are k_V/d_V; num_segments is N;
    segment_tokens/segment_dim are K_s/d_s; audio_queries/audio_dim are
    k_A/d_A.  The reference_* values document the full-scale audio front end
    and are not used by the toy featurizer."""
    def __init__(self,
                 image_size=32,
                 image_tokens=16,
                 image_dim=64,
                 patch_pixels=8,
                 frame_tokens=16,
                 frame_dim=64,
                 num_frames=8,
                 video_queries=8,
                 video_dim=64,
                 num_segments=3,
                 segment_tokens=8,
                 segment_dim=64,
                 audio_queries=4,
                 audio_dim=64,
                 sample_rate=8000,
                 segment_seconds=2.0,
                 spectral_bins=64,
                 qformer_layers=2,
                 qformer_heads=4,
                 qformer_ffn=128,
                 temporal_pe='sinusoidal',
                 reference_sample_rate=16000,
                 reference_segment_seconds=2.0,
                 reference_mel_bins=128,
                 seed=0,
                 ):
        GroundObject.__init__(self, locals())

    def __setattr__(self, key, value):

        # check EncoderConfig specific attributes
        if key.endswith('_tokens') or key.endswith('_queries') or \
           key in ('num_frames', 'num_segments', 'image_size', 'patch_pixels',
                   'sample_rate', 'spectral_bins', 'qformer_ffn',
                   'reference_sample_rate', 'reference_mel_bins'):
            self._check_type(int, key, value)
            self._check_range(key, value, 1, None)
        elif key.endswith('_dim'):
            self._check_type(int, key, value)
            self._check_range(key, value, 2, None)
            if value % 2:
                raise BadDim('%s = %i must be even' % (key, value))
        elif key.endswith('_seconds'):
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, None, includeMin=False)
        elif key == 'temporal_pe':
            self._check_type(str, key, value)
            self._check_membership(key, value, TEMPORAL_PE_KINDS)

        GroundObject.__setattr__(self, key, value)

    @property
    def grid(self):
        side = int(round(math.sqrt(self.image_tokens)))
        if side * side != self.image_tokens:
            message = 'image_tokens = %i is not a square patch grid' % \
                      self.image_tokens
            raise ShapeMismatch(message)
        return side

    def validate(self):
        """Cross-field checks that single assignments cannot make."""
        self.grid
        if (self.frame_tokens, self.frame_dim) != \
           (self.image_tokens, self.image_dim):
            message = 'frames are encoded by the image encoder, so ' \
                      'frame_tokens x frame_dim (%i x %i) must equal ' \
                      'image_tokens x image_dim (%i x %i)' % \
                      (self.frame_tokens, self.frame_dim,
                       self.image_tokens, self.image_dim)
            raise ShapeMismatch(message)
        heads = self.qformer_heads or 1
        for key in ('video_dim', 'audio_dim'):
            if getattr(self, key) % heads:
                message = '%s = %i is not divisible by qformer_heads = %i' % \
                          (key, getattr(self, key), heads)
                raise ShapeMismatch(message)
        return self

    @property
    def segment_samples(self):
        return int(round(self.segment_seconds * self.sample_rate))

    def output_shape(self, modality):
        return {
            'image': (self.image_tokens, self.image_dim),
            'video': (self.video_queries, self.video_dim),
            'audio': (self.audio_queries, self.audio_dim),
            }[modality]


@dataclass
class MediaPayload:
    """Raw media: an H x W x 3 image, a T x H x W x 3 stack of frames or a
    1-D waveform, values finite (pixels in [0, 1])."""
    kind: str
    data: np.ndarray
    sample_rate: Optional[int] = None

    def __post_init__(self):
        if self.kind not in MODALITIES:
            raise ValueError('kind = %s is not in %s' % (self.kind, MODALITIES))
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.size == 0:
            if self.kind == 'video':
                raise EmptyVideo('video has no frames')
            if self.kind == 'audio':
                raise EmptyAudio('waveform has no samples')
            raise ShapeMismatch('image is empty')
        if not np.all(np.isfinite(self.data)):
            raise ValueError('%s payload has non-finite values' % self.kind)
        expected = {'image': 3, 'video': 4, 'audio': 1}[self.kind]
        if self.data.ndim != expected or \
           (self.kind != 'audio' and self.data.shape[-1] != 3):
            message = '%s payload has shape %s' % (self.kind,
                                                   self.data.shape)
            raise ShapeMismatch(message)

    @classmethod
    def image(cls, array):
        return cls('image', array)

    @classmethod
    def video(cls, frames):
        frames = list(frames) if not isinstance(frames, np.ndarray) else frames
        if len(frames) == 0:
            raise EmptyVideo('video has no frames')
        return cls('video', np.stack(frames))

    @classmethod
    def audio(cls, waveform, sample_rate):
        return cls('audio', waveform, sample_rate)


@dataclass
class EncoderOutput:
    tokens: torch.Tensor
    modality: str

    def __post_init__(self):
        if not bool(torch.isfinite(self.tokens).all()):
            raise ValueError('%s encoder output is not finite' % self.modality)

    @property
    def shape(self):
        return tuple(self.tokens.shape)


def frame_indices(num_available: int, M: int) -> List[int]:
    """Indices of M uniformly spaced frames, round(i*(T-1)/(M-1))."""
    if num_available < 1:
        raise EmptyVideo('video has no frames')
    if M < 1:
        raise ValueError('M = %i does not satisfy M >= 1' % M)
    if M == 1 or num_available == 1:
        return [0] * M
    span = num_available - 1
    # round half away from zero, exact in integers
    return [(2 * i * span + (M - 1)) // (2 * (M - 1)) for i in range(M)]


def sample_frames(video, M: int) -> List[np.ndarray]:
    """The M uniformly sampled frames of a video payload (or frame stack),
    in their original order."""
    frames = video.data if isinstance(video, MediaPayload) else video
    if len(frames) == 0:
        raise EmptyVideo('video has no frames')
    return [frames[i] for i in frame_indices(len(frames), M)]


def temporal_encoding(index: int, total: int, dim: int) -> torch.Tensor:
    """Sinusoidal encoding of the normalized position index/total; the
    first half holds sines, the second half cosines."""
    if dim % 2:
        raise BadDim('dim = %i must be even' % dim)
    if not (0 <= index < total):
        message = 'index = %i does not satisfy 0 <= index < %i' % \
                  (index, total)
        raise ValueError(message)
    half = dim // 2
    position = PE_POSITION_SCALE * float(index) / float(total)
    freqs = torch.exp(-math.log(10000.0) *
                      torch.arange(half, dtype=torch.float64) / half)
    angles = position * freqs
    return torch.cat([torch.sin(angles), torch.cos(angles)]).float()


class PatchEmbedding(nn.Module):
    """Frozen image encoder: each patch is pooled to patch_pixels^2 x 3
    values, projected linearly to image_dim and given a fixed per-patch
    position vector."""
    def __init__(self, cfg: EncoderConfig, generator: torch.Generator):
        super().__init__()
        self.grid = cfg.grid
        self.patch_pixels = cfg.patch_pixels
        inDim = cfg.patch_pixels * cfg.patch_pixels * 3
        scale = 1.0 / math.sqrt(inDim)
        self.proj = nn.Parameter(
            torch.randn(inDim, cfg.image_dim, generator=generator) * scale,
            requires_grad=False)
        self.position = nn.Parameter(
            torch.randn(cfg.image_tokens, cfg.image_dim,
                        generator=generator) * 0.5,
            requires_grad=False)

    def patchify(self, image: torch.Tensor) -> torch.Tensor:
        height, width, _ = image.shape
        if height % self.grid or width % self.grid:
            message = 'a %i x %i image does not split into a %i x %i grid' % \
                      (height, width, self.grid, self.grid)
            raise ShapeMismatch(message)
        ph, pw = height // self.grid, width // self.grid
        patches = image.reshape(self.grid, ph, self.grid, pw, 3)
        patches = patches.permute(0, 2, 4, 1, 3).reshape(-1, 3, ph, pw)
        if (ph, pw) != (self.patch_pixels, self.patch_pixels):
            patches = F.adaptive_avg_pool2d(
                patches, (self.patch_pixels, self.patch_pixels))
        return patches.reshape(patches.shape[0], -1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.patchify(image) @ self.proj + self.position


class SpectralFeaturizer(nn.Module):
    """Frozen audio encoder: a window is split into segment_tokens frames,
    each frame's log magnitude spectrum is pooled to spectral_bins and
    projected to segment_dim."""
    def __init__(self, cfg: EncoderConfig, generator: torch.Generator):
        super().__init__()
        self.frames = cfg.segment_tokens
        self.bins = cfg.spectral_bins
        scale = 1.0 / math.sqrt(cfg.spectral_bins)
        self.proj = nn.Parameter(
            torch.randn(cfg.spectral_bins, cfg.segment_dim,
                        generator=generator) * scale,
            requires_grad=False)
        self.position = nn.Parameter(
            torch.randn(cfg.segment_tokens, cfg.segment_dim,
                        generator=generator) * 0.5,
            requires_grad=False)

    def spectrum(self, window: torch.Tensor) -> torch.Tensor:
        frameLength = window.shape[0] // self.frames
        if frameLength < 2:
            message = 'window of %i samples is too short for %i frames' % \
                      (window.shape[0], self.frames)
            raise ShapeMismatch(message)
        frames = window[:frameLength * self.frames].reshape(self.frames, -1)
        magnitude = torch.fft.rfft(frames, dim=-1).abs()
        pooled = F.adaptive_avg_pool1d(magnitude.unsqueeze(1), self.bins)
        return torch.log1p(pooled.squeeze(1))

    def forward(self, window: torch.Tensor) -> torch.Tensor:
        return self.spectrum(window) @ self.proj + self.position


class FrozenEncoders(nn.Module):
    """Everything in here belongs to the never-trained encoder set."""
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        generator = torch.Generator().manual_seed(cfg.seed)
        self.image = PatchEmbedding(cfg, generator)
        self.audio = SpectralFeaturizer(cfg, generator)


class QFormerLayer(nn.Module):
    """Self-attention over the queries, cross-attention into the sequence
    and a feed-forward block, each wrapped in residual + LayerNorm."""
    def __init__(self, dim, heads, ffn, encoderDim):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.self_norm = nn.LayerNorm(dim)
        self.cross_attn = nn.MultiheadAttention(dim, heads, batch_first=True,
                                                kdim=encoderDim,
                                                vdim=encoderDim)
        self.cross_norm = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, ffn), nn.GELU(),
                                 nn.Linear(ffn, dim))
        self.ffn_norm = nn.LayerNorm(dim)

    def forward(self, queries, sequence):
        attended, _ = self.self_attn(queries, queries, queries,
                                     need_weights=False)
        queries = self.self_norm(queries + attended)
        attended, _ = self.cross_attn(queries, sequence, sequence,
                                      need_weights=False)
        queries = self.cross_norm(queries + attended)
        return self.ffn_norm(queries + self.ffn(queries))


class QFormer(nn.Module):
    """Learnable queries that summarize a variable-length token sequence
    into a fixed k x d matrix."""
    def __init__(self, numQueries, dim, encoderDim, layers=2, heads=4,
                 ffn=128):
        super().__init__()
        self.query_tokens = nn.Parameter(torch.randn(numQueries, dim) * 0.02)
        self.layers = nn.ModuleList(
            [QFormerLayer(dim, heads, ffn, encoderDim) for _ in range(layers)])
        self.encoder_dim = encoderDim

    def forward(self, sequence: torch.Tensor,
                queries: Optional[torch.Tensor] = None) -> torch.Tensor:
        queries = self.query_tokens if queries is None else queries
        return qformer(queries, sequence, self.layers, self.encoder_dim)


def qformer(queries: torch.Tensor, sequence: torch.Tensor, layers,
            encoderDim: Optional[int] = None) -> torch.Tensor:
    """Run the query matrix (k x d) through the layers against a sequence
    (n x d_enc); zero layers return the queries unchanged."""
    if sequence.dim() != 2 or sequence.shape[0] < 1:
        message = 'sequence must be a non-empty n x d matrix (got %s)' % \
                  (tuple(sequence.shape),)
        raise ShapeMismatch(message)
    if encoderDim is not None and sequence.shape[1] != encoderDim:
        message = 'sequence dim %i does not match the Q-Former input dim %i' \
                  % (sequence.shape[1], encoderDim)
        raise ShapeMismatch(message)
    hidden = queries.unsqueeze(0)
    memory = sequence.unsqueeze(0)
    for layer in layers:
        hidden = layer(hidden, memory)
    return hidden.squeeze(0)


class ModalityBranches(nn.Module):
    """Frozen encoders plus the video and audio Q-Formers.

    Parameter names under ``frozen.`` are the encoder set; the Q-Formers
    (weights and query tokens) are adapters."""
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg.validate()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self.frozen = FrozenEncoders(cfg)
            self.video_qformer = QFormer(cfg.video_queries, cfg.video_dim,
                                         cfg.frame_dim, cfg.qformer_layers,
                                         cfg.qformer_heads, cfg.qformer_ffn)
            self.audio_qformer = QFormer(cfg.audio_queries, cfg.audio_dim,
                                         cfg.segment_dim, cfg.qformer_layers,
                                         cfg.qformer_heads, cfg.qformer_ffn)
        for parameter in self.frozen.parameters():
            parameter.requires_grad_(False)

    # ---------------------------------------------------------------------
    # frozen features (cacheable, never depend on trainable weights)
    # ---------------------------------------------------------------------
    def image_features(self, image: MediaPayload) -> torch.Tensor:
        _expect(image, 'image')
        with torch.no_grad():
            return self.frozen.image(torch.from_numpy(image.data))

    def frame_features(self, video: MediaPayload) -> torch.Tensor:
        """M x K_f x d_f tokens of the sampled frames, temporal PE added."""
        _expect(video, 'video')
        indices = frame_indices(video.data.shape[0], self.cfg.num_frames)
        with torch.no_grad():
            frames = torch.from_numpy(video.data[indices])
            tokens = torch.stack([self.frozen.image(f) for f in frames])
            return tokens + self._temporal_table(self.cfg.num_frames,
                                                 self.cfg.frame_dim)

    def segment_features(self, audio: MediaPayload) -> torch.Tensor:
        """N x K_s x d_s tokens of the audio windows, temporal PE added."""
        _expect(audio, 'audio')
        windows = audio_windows(audio.data, self.cfg.num_segments,
                                self.cfg.segment_samples)
        with torch.no_grad():
            tokens = torch.stack([self.frozen.audio(torch.from_numpy(w))
                                  for w in windows])
            return tokens + self._temporal_table(self.cfg.num_segments,
                                                 self.cfg.segment_dim)

    def _temporal_table(self, total, dim):
        if self.cfg.temporal_pe == 'none':
            return torch.zeros(total, 1, dim)
        table = torch.stack([temporal_encoding(i, total, dim)
                             for i in range(total)])
        return table.unsqueeze(1)

    # ---------------------------------------------------------------------
    # branch outputs
    # ---------------------------------------------------------------------
    def aggregate_video(self, frameTokens: torch.Tensor) -> torch.Tensor:
        return self.video_qformer(frameTokens.reshape(-1, frameTokens.shape[-1]))

    def aggregate_audio(self, segmentTokens: torch.Tensor) -> torch.Tensor:
        return self.audio_qformer(
            segmentTokens.reshape(-1, segmentTokens.shape[-1]))

    def encode_image(self, image: MediaPayload) -> EncoderOutput:
        return EncoderOutput(self.image_features(image), 'image')

    def encode_video(self, video: MediaPayload) -> EncoderOutput:
        return EncoderOutput(self.aggregate_video(self.frame_features(video)),
                             'video')

    def encode_audio(self, audio: MediaPayload) -> EncoderOutput:
        return EncoderOutput(
            self.aggregate_audio(self.segment_features(audio)), 'audio')

    def encode(self, payload: MediaPayload) -> EncoderOutput:
        return getattr(self, 'encode_%s' % payload.kind)(payload)


def audio_windows(waveform: np.ndarray, count: int,
                  length: int) -> List[np.ndarray]:
    """count equally spaced windows of length samples; windows running past
    the end are zero-padded."""
    waveform = np.asarray(waveform, dtype=np.float32)
    if waveform.size < 1:
        raise EmptyAudio('waveform has no samples')
    slack = max(waveform.shape[0] - length, 0)
    if count == 1:
        starts = [0]
    else:
        starts = [(2 * i * slack + (count - 1)) // (2 * (count - 1))
                  for i in range(count)]
    windows = []
    for start in starts:
        window = np.zeros(length, dtype=np.float32)
        piece = waveform[start:start + length]
        window[:piece.shape[0]] = piece
        windows.append(window)
    return windows


def _expect(payload, kind):
    if payload.kind != kind:
        message = 'expected a %s payload (got %s)' % (kind, payload.kind)
        raise ShapeMismatch(message)


def encode_image(image: MediaPayload, branches: ModalityBranches):
    return branches.encode_image(image)


def encode_video(video: MediaPayload, branches: ModalityBranches):
    return branches.encode_video(video)


def encode_audio(audio: MediaPayload, branches: ModalityBranches):
    return branches.encode_audio(audio)
