"""Stage corpora: raw annotations -> templated conversations -> JSONL.

A raw annotation is one JSON object with an ``id``, a ``task``, a ``media``
reference ``{kind, ref}`` and the fields its task needs:

    rec                     exp, box
    reg                     region, desc
    object_attribute        exp, question_kind (color|count), answer
    image_captioning        caption, mentions [{entity, box}] (optional)
    video_captioning        caption
    video_dense_captioning  seg, desc
    temporal_grounding      event, seg
    audio_captioning        caption
    sound_localization      entity, box
    object_presence         object, label (yes|no)

Corpus files hold one ConversationSample per line with sorted keys, so the
same sources and seed always give the same bytes.
"""
import json
import logging
import os
import re
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from PyGround import codec
from PyGround.errors import (BadAlpha, EmptyCorpus, EmptyPool, EmptyPrevious,
                             MissingField, SourceNotFound, UnknownTask)
from PyGround.templates import (PLACEHOLDER_PATTERN, TASKS, TemplateBank,
                                select_question)

logger = logging.getLogger(__name__)

ROLES = ('user', 'assistant')
REJECTION_REASONS = ('malformed_coordinates', 'out_of_range',
                     'missing_placeholder', 'empty_answer', 'bad_alternation',
                     'missing_field')
ANNOTATION_FILE = 'annotations.jsonl'
CONVERSATION_TASK = 'conversation'

REQUIRED_FIELDS = {
    'rec': ('exp', 'box'),
    'reg': ('region', 'desc'),
    'object_attribute': ('exp', 'question_kind', 'answer'),
    'image_captioning': ('caption',),
    'video_captioning': ('caption',),
    'video_dense_captioning': ('seg', 'desc'),
    'temporal_grounding': ('event', 'seg'),
    'audio_captioning': ('caption',),
    'sound_localization': ('entity', 'box'),
    'object_presence': ('object', 'label'),
    }

# coarse captions first, fine-grained grounding second, instruction data last
STAGE_TASKS = {
    1: ('image_captioning', 'video_captioning', 'audio_captioning'),
    2: ('rec', 'reg', 'object_attribute', 'temporal_grounding',
        'video_dense_captioning', 'sound_localization'),
    3: ('image_captioning', 'object_presence', 'rec', 'reg',
        'object_attribute', 'temporal_grounding', 'video_dense_captioning'),
    }

# stage-3 tasks that are merged into multi-turn conversations per media item
MULTI_TURN_TASKS = ('rec', 'reg', 'object_attribute', 'temporal_grounding',
                    'video_dense_captioning')

_BRACKETED = re.compile(r'\[[^\[\]]*\]|\{[^{}]*\}')


@dataclass
class ConversationSample:
    id: str
    task: str
    stage: int
    media: Dict[str, str]
    turns: List[Tuple[str, str]]
    annotations: Dict[str, list] = field(
        default_factory=lambda: {'boxes': [], 'segments': []})

    @property
    def media_kinds(self) -> List[str]:
        """The modalities of the media slots, in slot order."""
        return media_kinds(self.media['kind'])

    def to_json(self) -> str:
        record = {
            'id': self.id,
            'task': self.task,
            'stage': self.stage,
            'media': dict(self.media),
            'turns': [{'role': role, 'text': text}
                      for role, text in self.turns],
            'annotations': self.annotations,
            }
        return json.dumps(record, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> 'ConversationSample':
        record = json.loads(line)
        try:
            turns = [(t['role'], t['text']) for t in record['turns']]
            return cls(record['id'], record['task'], int(record['stage']),
                       dict(record['media']), turns,
                       record.get('annotations',
                                  {'boxes': [], 'segments': []}))
        except KeyError as error:
            raise MissingField('corpus line lacks field %s' % error)


@dataclass(frozen=True)
class RejectionRecord:
    sample_id: str
    reason: str
    task: str = ''
    detail: str = ''

    def __post_init__(self):
        if self.reason not in REJECTION_REASONS:
            raise ValueError('reason = %s is not in %s' % (self.reason,
                                                           REJECTION_REASONS))


@dataclass
class CorpusBuild:
    """What build_stage_corpus produced: the kept samples, the rejections
    and the report that was written next to the corpus."""
    samples: List[ConversationSample]
    rejections: List[RejectionRecord]
    report: dict
    path: Optional[str] = None
    report_path: Optional[str] = None


@dataclass(frozen=True)
class TaggedItem:
    """One draw of the mixed sampler; pool is 'current' or 'previous'."""
    pool: str
    item: object


def media_kinds(kind: str) -> List[str]:
    """'audio_image' is an audio clip with its paired image."""
    return kind.split('_')


# -------------------------------------------------------------------------
# conversion
# -------------------------------------------------------------------------
def render_box(values) -> str:
    """Serialized box text for raw values; validity is left to the filter so
    that bad raws end up as rejections rather than crashes."""
    return '[%s]' % ','.join(codec.format_value(float(v), codec.BOX_DECIMALS)
                             for v in values)


def render_segment(values) -> str:
    return '{%s}' % ','.join(
        codec.format_value(float(v), codec.SEGMENT_DECIMALS) for v in values)


def grounded_text(caption: str, mentions) -> str:
    """Append each mention's serialized box after its first occurrence."""
    text = caption
    cursor = 0
    for mention in mentions:
        entity = mention['entity']
        at = text.find(entity, cursor)
        if at < 0:
            continue
        end = at + len(entity)
        inserted = ' ' + render_box(mention['box'])
        text = text[:end] + inserted + text[end:]
        cursor = end + len(inserted)
    return text


def _require(raw, task):
    for name in REQUIRED_FIELDS[task]:
        if name not in raw:
            message = "raw annotation %s (%s) lacks field '%s'" % \
                      (raw.get('id', '?'), task, name)
            raise MissingField(message)


def question_pool(task: str, raw, bank: TemplateBank) -> List[str]:
    """The templates that fit this raw; attribute questions are split by
    whether the template asks for a color."""
    pool = bank.slice(task)
    if task == 'object_attribute':
        wantColor = raw['question_kind'] == 'color'
        pool = [t for t in pool if ('color' in t.lower()) == wantColor]
        if not pool:
            message = "no object_attribute template asks for a %s" % \
                      raw['question_kind']
            raise EmptyPool(message)
    return pool


def convert_sample(raw: dict, task: str, bank: TemplateBank, rng,
                   stage: int = 2, grounded: bool = True) \
        -> ConversationSample:
    """Single-turn conversation for one raw annotation.

    With grounded=False captions keep no coordinates even when the raw
    carries mentions."""
    if task not in TASKS:
        raise UnknownTask('unknown task: %s' % task)
    _require(raw, task)
    if 'media' not in raw:
        raise MissingField("raw annotation %s lacks field 'media'"
                           % raw.get('id', '?'))
    template = select_question(question_pool(task, raw, bank), rng)
    boxes, segments = [], []

    # set the question and the answer
    if task == 'rec':
        question = template.replace('<exp>', raw['exp'])
        answer = render_box(raw['box'])
        boxes.append({'entity': raw['exp'], 'box': list(raw['box'])})
    elif task == 'reg':
        question = template.replace('<region>', render_box(raw['region']))
        answer = raw['desc']
        boxes.append({'entity': raw['desc'], 'box': list(raw['region'])})
    elif task == 'object_attribute':
        question = template.replace('<exp>', raw['exp'])
        answer = str(raw['answer'])
    elif task == 'temporal_grounding':
        question = template.replace('<event>', raw['event'])
        answer = render_segment(raw['seg'])
        segments.append({'entity': raw['event'], 'seg': list(raw['seg'])})
    elif task == 'video_dense_captioning':
        question = template.replace('<time>', render_segment(raw['seg']))
        answer = raw['desc']
        segments.append({'entity': raw['desc'], 'seg': list(raw['seg'])})
    elif task == 'sound_localization':
        question = template
        answer = '%s %s' % (raw['entity'], render_box(raw['box']))
        boxes.append({'entity': raw['entity'], 'box': list(raw['box'])})
    elif task == 'object_presence':
        question = template.replace('<object>', raw['object'])
        answer = raw['label']
    else:
        question = template
        answer = raw['caption']
        mentions = raw.get('mentions') or []
        if grounded and mentions:
            answer = grounded_text(answer, mentions)
            boxes.extend({'entity': m['entity'], 'box': list(m['box'])}
                         for m in mentions if m['entity'] in raw['caption'])

    return ConversationSample(
        id='s%i-%s' % (stage, raw['id']),
        task=task,
        stage=stage,
        media=dict(raw['media']),
        turns=[('user', question), ('assistant', answer)],
        annotations={'boxes': boxes, 'segments': segments},
        )


def raw_rejection(raw, stage, task, reason, error) -> RejectionRecord:
    """A raw annotation that could not be converted at all."""
    detail = error.args[0] if error.args else str(error)
    return RejectionRecord('s%i-%s' % (stage, raw.get('id', '?')), reason,
                           task, str(detail))


def merge_conversation(samples: Sequence[ConversationSample]) \
        -> ConversationSample:
    """Concatenate single-turn samples about the same media item."""
    first = samples[0]
    turns, boxes, segments = [], [], []
    for sample in samples:
        if sample.media != first.media:
            raise ValueError('cannot merge samples about different media')
        turns.extend(sample.turns)
        boxes.extend(sample.annotations['boxes'])
        segments.extend(sample.annotations['segments'])
    return ConversationSample(
        id='+'.join(s.id for s in samples),
        task=CONVERSATION_TASK,
        stage=first.stage,
        media=dict(first.media),
        turns=turns,
        annotations={'boxes': boxes, 'segments': segments},
        )


# -------------------------------------------------------------------------
# filtering
# -------------------------------------------------------------------------
def filter_sample(sample: ConversationSample):
    """None when the sample is kept, otherwise a RejectionRecord."""
    def reject(reason, detail=''):
        return RejectionRecord(sample.id, reason, sample.task, detail)

    # turns alternate user/assistant, starting with the user
    turns = sample.turns
    if not turns or len(turns) % 2:
        return reject('bad_alternation', '%i turn(s)' % len(turns))
    for index, (role, _) in enumerate(turns):
        if role != ROLES[index % 2]:
            return reject('bad_alternation',
                          'turn %i is %s' % (index, role))

    for role, text in turns:
        if role == 'user':
            match = PLACEHOLDER_PATTERN.search(text)
            if match:
                return reject('missing_placeholder', match.group(0))
        elif not text.strip():
            return reject('empty_answer')

    # every bracketed span in the answers is a canonical, valid target
    for role, text in turns:
        if role != 'assistant':
            continue
        problem = _coordinate_problem(text)
        if problem is not None:
            return reject(*problem)

    # annotations appear in the conversation exactly as serialized
    allText = ' '.join(text for _, text in turns)
    for entry in sample.annotations.get('boxes', []):
        problem = _annotation_problem(entry['box'], 4, codec.BoundingBox,
                                      codec.InvalidBox, render_box, allText)
        if problem is not None:
            return reject(*problem)
    for entry in sample.annotations.get('segments', []):
        problem = _annotation_problem(entry['seg'], 2, codec.TimeSegment,
                                      codec.InvalidSegment, render_segment,
                                      allText)
        if problem is not None:
            return reject(*problem)
    return None


def _coordinate_problem(text):
    spans, rejections = [], []
    for parse in (codec.parse_boxes_with_rejections,
                  codec.parse_segments_with_rejections):
        found, rejected = parse(text)
        spans.extend(found)
        rejections.extend(rejected)
    if rejections:
        first = min(rejections, key=lambda r: r.char_start)
        return first.reason, first.text
    covered = set((s.char_start, s.char_end) for s in spans)
    for match in _BRACKETED.finditer(text):
        if match.span() not in covered:
            return 'malformed_coordinates', match.group(0)
    for span in spans:
        original = text[span.char_start:span.char_end]
        if isinstance(span.target, codec.BoundingBox):
            canonical = codec.serialize_box(span.target)
        else:
            canonical = codec.serialize_segment(span.target)
        if original != canonical:
            return 'malformed_coordinates', original
    return None


def _annotation_problem(values, size, build, errorClass, render, text):
    if len(values) != size:
        return 'malformed_coordinates', repr(values)
    try:
        build(*(float(v) for v in values))
    except errorClass as error:
        return codec.rejection_reason(str(error)), str(error)
    except (TypeError, ValueError) as error:
        return 'malformed_coordinates', str(error)
    if render(values) not in text:
        return 'malformed_coordinates', render(values)
    return None


# -------------------------------------------------------------------------
# corpus assembly
# -------------------------------------------------------------------------
def read_jsonl(path) -> List[dict]:
    records = []
    with open(path, encoding='utf-8') as inStream:
        for line in inStream:
            if line.strip():
                records.append(json.loads(line))
    return records


def write_jsonl(path, lines: Sequence[str]) -> None:
    with open(path, 'w', encoding='utf-8') as outStream:
        for line in lines:
            outStream.write(line + '\n')


def resolve_source(source) -> str:
    """A world directory (holding annotations.jsonl) or an annotation file."""
    path = str(source)
    if os.path.isdir(path):
        path = os.path.join(path, ANNOTATION_FILE)
    if not os.path.isfile(path):
        raise SourceNotFound('no raw annotations at %s' % source)
    return path


def _relocate(media, sourceDir, corpusDir):
    """Media references are stored relative to the corpus directory."""
    media = dict(media)
    absolute = os.path.normpath(os.path.join(sourceDir, media['ref']))
    media['ref'] = os.path.relpath(absolute, corpusDir)
    return media


def build_stage_corpus(stage: int, sources: Sequence, rng, outPath=None,
                       tasks: Optional[Sequence[str]] = None,
                       bank: Optional[TemplateBank] = None,
                       maxTurns: int = 3) -> CorpusBuild:
    """Convert, filter, shuffle and write one stage's corpus.

    tasks defaults to the stage's task set; stage 1 captions carry no
    coordinates, stage 3 merges 2..maxTurns single-turn samples about the
    same media item into one conversation."""
    if stage not in STAGE_TASKS:
        raise ValueError('stage = %r is not in (1, 2, 3)' % stage)
    tasks = tuple(tasks or STAGE_TASKS[stage])
    for task in tasks:
        if task not in TASKS:
            raise UnknownTask('unknown task: %s' % task)
    bank = bank or TemplateBank.builtin()
    corpusDir = os.path.dirname(os.path.abspath(str(outPath or '.')))
    paths = [resolve_source(source) for source in sources]

    # set the per task tallies
    tally = OrderedDict((task, {'raw': 0, 'kept': 0, 'rejected': Counter()})
                        for task in tasks)
    samples, rejections = [], []
    for path in paths:
        sourceDir = os.path.dirname(os.path.abspath(path))
        for raw in read_jsonl(path):
            task = raw.get('task')
            if task not in tally:
                continue
            tally[task]['raw'] += 1
            raw = dict(raw)
            if 'media' in raw:
                raw['media'] = _relocate(raw['media'], sourceDir, corpusDir)
            try:
                sample = convert_sample(raw, task, bank, rng, stage=stage,
                                        grounded=stage != 1)
            except EmptyPool:
                raise
            except KeyError as error:
                rejection = raw_rejection(raw, stage, task, 'missing_field',
                                          error)
            except (TypeError, ValueError) as error:
                rejection = raw_rejection(raw, stage, task,
                                          'malformed_coordinates', error)
            else:
                rejection = filter_sample(sample)
            if rejection is None:
                samples.append(sample)
                tally[task]['kept'] += 1
            else:
                rejections.append(rejection)
                tally[task]['rejected'][rejection.reason] += 1

    if stage == 3:
        samples = _merge_turns(samples, rng, maxTurns)
    if not samples:
        message = 'stage %i corpus from %s is empty' % (stage,
                                                       ', '.join(paths))
        raise EmptyCorpus(message)
    order = rng.permutation(len(samples))
    samples = [samples[i] for i in order]

    report = build_report(stage, paths, tally, samples)
    build = CorpusBuild(samples, rejections, report)
    if outPath is not None:
        build.path = str(outPath)
        build.report_path = report_path(outPath)
        write_jsonl(build.path, [s.to_json() for s in samples])
        with open(build.report_path, 'w', encoding='utf-8') as outStream:
            json.dump(report, outStream, indent=2, sort_keys=True)
            outStream.write('\n')
    if rejections:
        logger.warning('stage %i: rejected %i of %i raw samples (%s)', stage,
                       len(rejections), report['raw'],
                       ', '.join('%s=%i' % item for item in
                                 sorted(Counter(r.reason for r in
                                                rejections).items())))
    logger.info('stage %i corpus: %i samples (%i kept of %i raw)', stage,
                len(samples), report['kept'], report['raw'])
    return build


def _merge_turns(samples, rng, maxTurns):
    """Group mergeable samples by media item and cut each group into
    conversations of 2..maxTurns pairs; a leftover single stays single."""
    groups = OrderedDict()
    result = []
    for sample in samples:
        if sample.task in MULTI_TURN_TASKS:
            groups.setdefault(sample.media['ref'], []).append(sample)
        else:
            result.append(sample)
    for group in groups.values():
        cursor = 0
        while cursor < len(group):
            left = len(group) - cursor
            if left == 1:
                result.append(group[cursor])
                break
            size = int(rng.integers(2, min(maxTurns, left) + 1))
            result.append(merge_conversation(group[cursor:cursor + size]))
            cursor += size
    return result


def report_path(corpusPath) -> str:
    root, _ = os.path.splitext(str(corpusPath))
    return root + '.report.json'


def build_report(stage, paths, tally, samples) -> dict:
    tasks = OrderedDict()
    for task, counts in tally.items():
        tasks[task] = {
            'raw': counts['raw'],
            'kept': counts['kept'],
            'rejected': dict((reason, counts['rejected'][reason])
                             for reason in REJECTION_REASONS
                             if counts['rejected'][reason]),
            }
    rejectedTotal = sum(sum(t['rejected'].values()) for t in tasks.values())
    return {
        'stage': stage,
        'sources': list(paths),
        'raw': sum(t['raw'] for t in tasks.values()),
        'kept': sum(t['kept'] for t in tasks.values()),
        'rejected': rejectedTotal,
        'lines': len(samples),
        'tasks': tasks,
        }


def load_corpus(path) -> List[ConversationSample]:
    """Samples of a corpus file; media refs are made absolute."""
    if not os.path.isfile(str(path)):
        raise SourceNotFound('no corpus at %s' % path)
    corpusDir = os.path.dirname(os.path.abspath(str(path)))
    samples = []
    with open(path, encoding='utf-8') as inStream:
        for line in inStream:
            if not line.strip():
                continue
            sample = ConversationSample.from_json(line)
            sample.media['ref'] = os.path.normpath(
                os.path.join(corpusDir, sample.media['ref']))
            samples.append(sample)
    return samples


# -------------------------------------------------------------------------
# mixed sampling
# -------------------------------------------------------------------------
def pool_probability(alpha: float) -> float:
    """Chance that a draw comes from the previous stages."""
    return alpha / (1.0 + alpha)


def mixed_sampler(current: Sequence, previous: Sequence[Sequence], alpha,
                  rng) -> Iterator[TaggedItem]:
    """Endless stream of tagged items.

    previous is a list of earlier corpora, pooled.  With alpha = 0 the
    generator draws no pool decision at all, so the stream equals a
    current-only stream for the same rng."""
    if alpha < 0:
        raise BadAlpha('alpha = %r must be >= 0' % alpha)
    if not current:
        raise EmptyCorpus('the current corpus is empty')
    pooled = [item for corpus in previous for item in corpus]
    if alpha > 0 and not pooled:
        raise EmptyPrevious('alpha = %r needs previous-stage data' % alpha)
    probability = pool_probability(alpha)
    while True:
        if alpha > 0 and rng.random() < probability:
            yield TaggedItem('previous', pooled[int(rng.integers(len(pooled)))])
        else:
            yield TaggedItem('current', current[int(rng.integers(len(current)))])
