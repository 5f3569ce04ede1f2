"""The grounding model: modality branches, per-modality adapters and a small
character-level causal language model.

Media slots in a prompt (``<image>``, ``<video>``, ``<audio>``) are replaced
by the adapter rows of the matching encoder output; everything else is
ordinary text through the token table.  The loss is next-token negative
log-likelihood over the supervised (assistant) positions only.
"""
import hashlib
import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from PyGround.base import GroundObject
from PyGround.encoders import (EncoderConfig, EncoderOutput, MediaPayload,
                               ModalityBranches, MODALITIES)
from PyGround.errors import (CheckpointError, DimMismatch, EmptyMask,
                             SlotMismatch)
from PyGround.tokenizer import Tokenizer

logger = logging.getLogger(__name__)

PARAMETER_SETS = ('encoders', 'adapters', 'llm')
ADAPTER_KINDS = ('mlp2x_gelu', 'linear')
CHECKPOINT_FORMAT = 'pyground-checkpoint'
CHECKPOINT_VERSION = 1
IGNORE_INDEX = -100

SLOT_PATTERN = re.compile(r'<(image|video|audio)>')


class LanguageModelConfig(GroundObject):
    """Decoder-only transformer and adapter settings."""
    def __init__(self,
                 dim=128,
                 num_layers=4,
                 num_heads=4,
                 ffn=256,
                 context=512,
                 adapter='mlp2x_gelu',
                 seed=0,
                 ):
        GroundObject.__init__(self, locals())

    def __setattr__(self, key, value):

        # check LanguageModelConfig specific attributes
        if key in ('dim', 'num_layers', 'num_heads', 'ffn', 'context'):
            self._check_type(int, key, value)
            self._check_range(key, value, 1, None)
        elif key == 'adapter':
            self._check_type(str, key, value)
            self._check_membership(key, value, ADAPTER_KINDS)

        GroundObject.__setattr__(self, key, value)


class Adapter(nn.Module):
    """Maps modality tokens into the language model embedding space."""
    def __init__(self, inDim, outDim, kind='mlp2x_gelu'):
        super().__init__()
        self.kind = kind
        self.in_dim = inDim
        if kind == 'linear':
            self.net = nn.Linear(inDim, outDim)
        elif kind == 'mlp2x_gelu':
            self.net = nn.Sequential(nn.Linear(inDim, outDim), nn.GELU(),
                                     nn.Linear(outDim, outDim))
        else:
            raise ValueError('unknown adapter kind: %s' % kind)

    def forward(self, tokens):
        if tokens.shape[-1] != self.in_dim:
            message = 'adapter expects dim %i (got %i)' % (self.in_dim,
                                                           tokens.shape[-1])
            raise DimMismatch(message)
        return self.net(tokens)


class DecoderBlock(nn.Module):
    def __init__(self, dim, heads, ffn):
        super().__init__()
        self.attn_norm = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.ffn_norm = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, ffn), nn.GELU(),
                                 nn.Linear(ffn, dim))

    def forward(self, hidden, causalMask):
        normed = self.attn_norm(hidden)
        attended, _ = self.attn(normed, normed, normed, attn_mask=causalMask,
                                need_weights=False)
        hidden = hidden + attended
        return hidden + self.ffn(self.ffn_norm(hidden))


class LanguageModel(nn.Module):
    """Token table, learned positions, pre-norm decoder blocks and an output
    projection.  forward() takes embeddings so media rows can be spliced in
    before the first block."""
    def __init__(self, vocabSize, cfg: LanguageModelConfig):
        super().__init__()
        self.context = cfg.context
        self.token_embedding = nn.Embedding(vocabSize, cfg.dim)
        self.position_embedding = nn.Embedding(cfg.context, cfg.dim)
        self.blocks = nn.ModuleList([DecoderBlock(cfg.dim, cfg.num_heads,
                                                  cfg.ffn)
                                     for _ in range(cfg.num_layers)])
        self.final_norm = nn.LayerNorm(cfg.dim)
        self.head = nn.Linear(cfg.dim, vocabSize)
        nn.init.normal_(self.token_embedding.weight, std=0.02)
        nn.init.normal_(self.position_embedding.weight, std=0.02)

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        return self.token_embedding(ids)

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        """(B, L, D) embeddings -> (B, L, V) logits; position i only sees
        positions <= i."""
        length = embeddings.shape[1]
        if length > self.context:
            message = 'sequence of length %i exceeds the context of %i' % \
                      (length, self.context)
            raise DimMismatch(message)
        positions = torch.arange(length, device=embeddings.device)
        hidden = embeddings + self.position_embedding(positions)
        causalMask = torch.triu(torch.ones(length, length, dtype=torch.bool,
                                           device=embeddings.device),
                                diagonal=1)
        for block in self.blocks:
            hidden = block(hidden, causalMask)
        return self.head(self.final_norm(hidden))


@dataclass
class MultimodalSequence:
    """One assembled example.  ids hold the token id of every text position
    and IGNORE_INDEX on media rows; loss_mask is 1 on supervised positions."""
    embeddings: torch.Tensor
    ids: torch.Tensor
    loss_mask: torch.Tensor
    media_rows: int = 0

    def __len__(self):
        return self.embeddings.shape[0]

    def __post_init__(self):
        if not (self.embeddings.shape[0] == self.ids.shape[0] ==
                self.loss_mask.shape[0]):
            raise DimMismatch('sequence parts have different lengths')


@dataclass
class Piece:
    """A span of an assembled sequence: text (supervised or not) or a media
    slot."""
    text: str = ''
    supervised: bool = False
    media: Optional[str] = None
    eos: bool = False


class GroundingModel(nn.Module):

    def __init__(self, encoderConfig: Optional[EncoderConfig] = None,
                 lmConfig: Optional[LanguageModelConfig] = None):
        super().__init__()
        self.encoder_config = encoderConfig or EncoderConfig()
        self.lm_config = lmConfig or LanguageModelConfig()
        self.tokenizer = Tokenizer()
        self.branches = ModalityBranches(self.encoder_config)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.lm_config.seed)
            self.adapters = nn.ModuleDict(dict(
                (modality, Adapter(self.encoder_config.output_shape(modality)[1],
                                   self.lm_config.dim, self.lm_config.adapter))
                for modality in MODALITIES))
            self.llm = LanguageModel(self.tokenizer.vocab_size, self.lm_config)

    # ---------------------------------------------------------------------
    # parameter sets
    # ---------------------------------------------------------------------
    def parameter_sets(self) -> Dict[str, Dict[str, nn.Parameter]]:
        return parameter_sets(self)

    # ---------------------------------------------------------------------
    # sequence assembly
    # ---------------------------------------------------------------------
    def encode(self, payload: MediaPayload) -> EncoderOutput:
        return self.branches.encode(payload)

    def assemble_pieces(self, pieces: Sequence[Piece],
                        encoderOutputs: Sequence[EncoderOutput]) \
            -> MultimodalSequence:
        slots = [p.media for p in pieces if p.media is not None]
        if len(slots) != len(encoderOutputs):
            message = '%i media slot(s) but %i encoder output(s)' % \
                      (len(slots), len(encoderOutputs))
            raise SlotMismatch(message)
        outputs = iter(encoderOutputs)
        embeddings, ids, mask = [], [], []
        mediaRows = 0
        for piece in pieces:
            if piece.media is not None:
                output = next(outputs)
                if output.modality != piece.media:
                    message = '<%s> slot filled with a %s output' % \
                              (piece.media, output.modality)
                    raise SlotMismatch(message)
                rows = self.adapters[piece.media](output.tokens)
                embeddings.append(rows)
                ids.extend([IGNORE_INDEX] * rows.shape[0])
                mask.extend([0] * rows.shape[0])
                mediaRows += rows.shape[0]
                continue
            tokenIds = self.tokenizer.tokenize(piece.text, eos=piece.eos)
            if piece is pieces[0]:
                tokenIds = [self.tokenizer.bos_id] + tokenIds
                mask.append(0)
                mask.extend([int(piece.supervised)] * (len(tokenIds) - 1))
            else:
                mask.extend([int(piece.supervised)] * len(tokenIds))
            if tokenIds:
                embeddings.append(self.llm.embed(torch.tensor(tokenIds)))
            ids.extend(tokenIds)
        return MultimodalSequence(torch.cat(embeddings, dim=0),
                                  torch.tensor(ids, dtype=torch.long),
                                  torch.tensor(mask, dtype=torch.float32),
                                  mediaRows)

    def assemble(self, prompt: str, encoderOutputs: Sequence[EncoderOutput],
                 targetText: Optional[str] = None) -> MultimodalSequence:
        """BOS + prompt (slots replaced by adapter rows) + target + EOS.

        The loss mask is 1 exactly on the target tokens and the EOS that
        closes them, so it sums to len(targetText) + 1; without a target
        it is all zero."""
        pieces = split_prompt(prompt)
        if targetText is not None:
            pieces.append(Piece(targetText, supervised=True, eos=True))
        if pieces[0].media is not None:
            pieces.insert(0, Piece(''))
        return self.assemble_pieces(pieces, encoderOutputs)

    def assemble_conversation(self, turns, encoderOutputs) \
            -> MultimodalSequence:
        """turns: (role, text) pairs alternating user/assistant; media slots
        go in front of the first user turn."""
        pieces = [Piece('')]
        for slot in [o.modality for o in encoderOutputs]:
            pieces.append(Piece(media=slot))
        for index, (role, text) in enumerate(turns):
            if role == 'user':
                lead = ' ' if index == 0 and encoderOutputs else ''
                pieces.append(Piece('%suser: %s assistant: ' % (lead, text)))
            else:
                pieces.append(Piece(text, supervised=True, eos=True))
        return self.assemble_pieces(pieces, encoderOutputs)

    # ---------------------------------------------------------------------
    # loss and generation
    # ---------------------------------------------------------------------
    def sequence_losses(self, sequences: Sequence[MultimodalSequence]) \
            -> torch.Tensor:
        """Per-sequence mean NLL over supervised positions, one forward pass
        over the right-padded batch."""
        for sequence in sequences:
            if float(sequence.loss_mask[1:].sum()) <= 0:
                raise EmptyMask('sequence has no supervised position')
        length = max(len(s) for s in sequences)
        dim = sequences[0].embeddings.shape[1]
        batch = sequences[0].embeddings.new_zeros(len(sequences), length, dim)
        ids = torch.full((len(sequences), length), IGNORE_INDEX,
                         dtype=torch.long)
        mask = torch.zeros(len(sequences), length)
        for row, sequence in enumerate(sequences):
            batch[row, :len(sequence)] = sequence.embeddings
            ids[row, :len(sequence)] = sequence.ids
            mask[row, :len(sequence)] = sequence.loss_mask
        logits = self.llm(batch)[:, :-1]
        targets = ids[:, 1:]
        weights = mask[:, 1:]
        nll = F.cross_entropy(logits.reshape(-1, logits.shape[-1]),
                              targets.clamp(min=0).reshape(-1),
                              reduction='none').reshape(targets.shape)
        return (nll * weights).sum(dim=1) / weights.sum(dim=1)

    def lm_loss(self, sequence: MultimodalSequence) -> torch.Tensor:
        return self.sequence_losses([sequence])[0]

    @torch.no_grad()
    def generate(self, prompt: str, encoderOutputs: Sequence[EncoderOutput],
                 maxNewTokens: int = 32, mode: str = 'greedy') -> str:
        """Continue the prompt; stops at EOS or after maxNewTokens."""
        if mode != 'greedy':
            raise ValueError('only greedy decoding is supported (got %s)'
                             % mode)
        sequence = self.assemble(prompt, encoderOutputs)
        if maxNewTokens <= 0:
            return ''
        wasTraining = self.training
        self.eval()
        banned = [self.tokenizer.pad_id, self.tokenizer.bos_id]
        banned.extend(self.tokenizer.media_ids.values())
        embeddings = sequence.embeddings
        generated = []
        try:
            for _ in range(maxNewTokens):
                if embeddings.shape[0] >= self.llm.context:
                    break
                logits = self.llm(embeddings.unsqueeze(0))[0, -1].clone()
                logits[banned] = -math.inf
                nextId = int(torch.argmax(logits))
                if nextId == self.tokenizer.eos_id:
                    break
                generated.append(nextId)
                nextRow = self.llm.embed(torch.tensor([nextId]))
                embeddings = torch.cat([embeddings, nextRow], dim=0)
        finally:
            self.train(wasTraining)
        return self.tokenizer.detokenize(generated)


def split_prompt(prompt: str) -> List[Piece]:
    """Text pieces and media slots of a prompt, in order."""
    pieces = []
    cursor = 0
    for match in SLOT_PATTERN.finditer(prompt):
        if match.start() > cursor:
            pieces.append(Piece(prompt[cursor:match.start()]))
        pieces.append(Piece(media=match.group(1)))
        cursor = match.end()
    if cursor < len(prompt) or not pieces:
        pieces.append(Piece(prompt[cursor:]))
    return pieces


def render_prompt(question: str, mediaKinds: Sequence[str] = ()) -> str:
    """Single-turn prompt laid out like assemble_conversation: media slots,
    then 'user: ... assistant: '."""
    slots = ''.join('<%s>' % kind for kind in mediaKinds)
    if slots:
        slots += ' '
    return '%suser: %s assistant: ' % (slots, question)


def parameter_sets(model: GroundingModel) -> Dict[str, Dict[str, nn.Parameter]]:
    """Split every parameter into exactly one of encoders/adapters/llm.

    The Q-Formers and their query tokens count as adapters: they are the
    trainable bridge between a frozen encoder and the language model."""
    sets = dict((name, {}) for name in PARAMETER_SETS)
    for name, parameter in model.named_parameters():
        if name.startswith('branches.frozen.'):
            sets['encoders'][name] = parameter
        elif name.startswith('branches.') or name.startswith('adapters.'):
            sets['adapters'][name] = parameter
        elif name.startswith('llm.'):
            sets['llm'][name] = parameter
        else:
            raise CheckpointError('parameter %s belongs to no set' % name)
    return sets


def parameter_checksums(model: GroundingModel) -> Dict[str, str]:
    """sha256 over the raw bytes of each set, parameters in name order."""
    result = {}
    for setName, params in parameter_sets(model).items():
        digest = hashlib.sha256()
        for name in sorted(params):
            digest.update(name.encode('utf-8'))
            data = params[name].detach().cpu().contiguous()
            digest.update(data.numpy().tobytes())
        result[setName] = digest.hexdigest()
    return result


def count_parameters(model: GroundingModel, trainableOnly=False) -> int:
    sets = parameter_sets(model)
    total = 0
    for setName, params in sets.items():
        if trainableOnly and setName == 'encoders':
            continue
        total += sum(p.numel() for p in params.values())
    return total


def save_checkpoint(model: GroundingModel, path, extra=None) -> None:
    """One archive holding the config echo, the parameter-set manifest and
    every named parameter array."""
    manifest = dict((setName, sorted(params))
                    for setName, params in parameter_sets(model).items())
    archive = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'config': {
            'encoder': model.encoder_config.as_dict(),
            'llm': model.lm_config.as_dict(),
            },
        'manifest': manifest,
        'state': dict((k, v.detach().cpu().clone())
                      for k, v in model.state_dict().items()),
        'extra': extra or {},
        }
    torch.save(archive, str(path))
    logger.info('wrote checkpoint %s', path)


def load_checkpoint(path) -> GroundingModel:
    try:
        archive = torch.load(str(path), map_location='cpu', weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as error:
        raise CheckpointError('cannot read checkpoint %s: %s' % (path, error))
    if not isinstance(archive, dict) or \
       archive.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError('%s is not a PyGround checkpoint' % path)
    if archive.get('version') != CHECKPOINT_VERSION:
        message = 'checkpoint version %r is not supported (expected %i)' % \
                  (archive.get('version'), CHECKPOINT_VERSION)
        raise CheckpointError(message)
    model = GroundingModel(EncoderConfig.from_dict(archive['config']['encoder']),
                           LanguageModelConfig.from_dict(
                               archive['config']['llm']))
    validate_manifest(model, archive['manifest'])
    try:
        model.load_state_dict(archive['state'])
    except RuntimeError as error:
        raise CheckpointError('checkpoint state does not fit: %s' % error)
    model.checkpoint_extra = archive.get('extra', {})
    return model


def validate_manifest(model: GroundingModel, manifest) -> None:
    """The stored partition must be total, disjoint and match the model."""
    seen = {}
    for setName, names in manifest.items():
        if setName not in PARAMETER_SETS:
            raise CheckpointError('unknown parameter set %s' % setName)
        for name in names:
            if name in seen:
                message = '%s is in both %s and %s' % (name, seen[name],
                                                       setName)
                raise CheckpointError(message)
            seen[name] = setName
    expected = dict((name, setName)
                    for setName, params in parameter_sets(model).items()
                    for name in params)
    if seen != expected:
        missing = sorted(set(expected) - set(seen))
        extra = sorted(set(seen) - set(expected))
        message = 'parameter manifest does not match the model ' \
                  '(missing %s, unexpected %s)' % (missing[:5], extra[:5])
        raise CheckpointError(message)
