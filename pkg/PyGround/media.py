"""Media references -> payloads -> encoder outputs.

A media reference is ``{kind, ref}`` where ref is a file stem; each modality
of the item lives in ``<stem>.<modality>.npy`` (pixels as uint8, waveforms as
float32).  Frozen encoder features depend only on the media and the encoder
configuration, so they are cached per item; the trainable Q-Former and
adapter steps are always recomputed.
"""
import json
import logging
import os
from typing import Dict, List

import numpy as np
import torch

from PyGround.encoders import EncoderConfig, EncoderOutput, MediaPayload
from PyGround.errors import SourceNotFound

logger = logging.getLogger(__name__)


def media_path(stem, modality) -> str:
    return '%s.%s.npy' % (stem, modality)


def save_array(stem, modality, array) -> str:
    path = media_path(stem, modality)
    np.save(path, array, allow_pickle=False)
    return path


def load_array(stem, modality) -> np.ndarray:
    path = media_path(stem, modality)
    if not os.path.isfile(path):
        raise SourceNotFound('no %s media at %s' % (modality, path))
    return np.load(path, allow_pickle=False)


def to_pixels(array: np.ndarray) -> np.ndarray:
    """uint8 storage -> float pixels in [0, 1]."""
    if array.dtype == np.uint8:
        return array.astype(np.float32) / 255.0
    return array.astype(np.float32)


class MediaStore(object):
    """Loads media by reference and caches frozen features."""
    def __init__(self, encoderConfig: EncoderConfig = None, root=None,
                 cacheFeatures=True):
        self.encoder_config = encoderConfig or EncoderConfig()
        self.root = root
        self.cache_features = cacheFeatures
        self._features = {}
        self._namespace = json.dumps(self.encoder_config.as_dict(),
                                     sort_keys=True)

    def _stem(self, ref):
        if self.root is not None and not os.path.isabs(ref):
            return os.path.join(self.root, ref)
        return ref

    def payload(self, ref, modality) -> MediaPayload:
        array = load_array(self._stem(ref), modality)
        if modality == 'audio':
            return MediaPayload.audio(array, self.encoder_config.sample_rate)
        return MediaPayload(modality, to_pixels(array))

    def payloads(self, media: Dict[str, str]) -> List[MediaPayload]:
        return [self.payload(media['ref'], modality)
                for modality in media['kind'].split('_')]

    def features(self, model, ref, modality) -> torch.Tensor:
        """Frozen tokens of one modality of one item."""
        key = (self._namespace, self._stem(ref), modality)
        if self.cache_features and key in self._features:
            return self._features[key]
        payload = self.payload(ref, modality)
        branches = model.branches
        if modality == 'image':
            tokens = branches.image_features(payload)
        elif modality == 'video':
            tokens = branches.frame_features(payload)
        else:
            tokens = branches.segment_features(payload)
        if self.cache_features:
            self._features[key] = tokens
        return tokens

    def encoder_outputs(self, model, media: Dict[str, str]) \
            -> List[EncoderOutput]:
        """One output per media slot, in slot order."""
        if model.encoder_config.as_dict() != self.encoder_config.as_dict():
            message = 'media store and model disagree on the encoder ' \
                      'configuration'
            raise ValueError(message)
        outputs = []
        for modality in media['kind'].split('_'):
            tokens = self.features(model, media['ref'], modality)
            if modality == 'video':
                tokens = model.branches.aggregate_video(tokens)
            elif modality == 'audio':
                tokens = model.branches.aggregate_audio(tokens)
            outputs.append(EncoderOutput(tokens, modality))
        return outputs

    def clear(self):
        self._features.clear()

    def __len__(self):
        return len(self._features)
