"""Character-level tokenizer.

Coordinates and timestamps are plain digits and punctuation here, so a
serialized box is 26 ordinary tokens and nothing is added to the vocabulary
for grounding.
"""
import string
from typing import List

from PyGround.base import BaseSet
from PyGround.errors import UnknownChar

CHARSET = string.ascii_lowercase + string.digits + " .,[]{}?<>:-'"

PAD = '<pad>'
BOS = '<bos>'
EOS = '<eos>'
MEDIA_IMAGE = '<media:image>'
MEDIA_VIDEO = '<media:video>'
MEDIA_AUDIO = '<media:audio>'
SPECIALS = (PAD, BOS, EOS, MEDIA_IMAGE, MEDIA_VIDEO, MEDIA_AUDIO)

MEDIA_SYMBOLS = {
    'image': MEDIA_IMAGE,
    'video': MEDIA_VIDEO,
    'audio': MEDIA_AUDIO,
    }


class Symbol(object):
    """Mapping between a token id and the character (or special name) it
    stands for."""
    def __init__(self, index, name, special=False):
        self.index = index
        self.name = name
        self.special = special

    def __str__(self):
        return '%i\t%r' % (self.index, self.name)


class Vocabulary(BaseSet):
    """Specials first, then the charset in order; ids are stable."""
    def __init__(self, charset=CHARSET):
        BaseSet.__init__(self)
        for name in SPECIALS:
            self.add_item(Symbol, name, special=True)
        for char in charset:
            self.add_item(Symbol, char)


class Tokenizer(object):

    def __init__(self, charset=CHARSET):
        self.charset = charset
        self.vocab = Vocabulary(charset)
        self._char2id = dict((s.name, s.index) for s in self.vocab
                             if not s.special)
        self._id2char = dict((s.index, s.name) for s in self.vocab
                             if not s.special)
        self.pad_id = self.vocab.get_item_by_name(PAD).index
        self.bos_id = self.vocab.get_item_by_name(BOS).index
        self.eos_id = self.vocab.get_item_by_name(EOS).index
        self.media_ids = dict((kind, self.vocab.get_item_by_name(name).index)
                              for kind, name in MEDIA_SYMBOLS.items())

    def __len__(self):
        return len(self.vocab)

    @property
    def vocab_size(self):
        return len(self.vocab)

    def tokenize(self, text: str, bos: bool = False,
                 eos: bool = False) -> List[int]:
        """One id per (case-folded) character."""
        ids = [self.bos_id] if bos else []
        for offset, char in enumerate(text.casefold()):
            try:
                ids.append(self._char2id[char])
            except KeyError:
                raise UnknownChar(char, offset)
        if eos:
            ids.append(self.eos_id)
        return ids

    def detokenize(self, ids) -> str:
        """Characters only; specials are dropped."""
        return ''.join(self._id2char.get(int(i), '') for i in ids)

    def can_encode(self, text: str) -> bool:
        return all(c in self._char2id for c in text.casefold())
