"""Grounding and understanding metrics.

Predictions come either from a live GroundingModel (greedy decoding on the
rendered evaluation prompt) or from a mapping / JSONL file of {id, text}.
Every report keeps one record per item, and its aggregate metrics are
recomputed from those records on demand.
"""
import json
import logging
import math
import os
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from PyGround.base import GroundObject
from PyGround.codec import (BoundingBox, TimeSegment, box_iou, first_box,
                            first_segment, segment_iou)
from PyGround.dataset import STAGE_TASKS, read_jsonl, resolve_source
from PyGround.errors import MissingGroundTruth, UnlabeledProbe
from PyGround.media import MediaStore
from PyGround.model import GroundingModel, load_checkpoint, render_prompt
from PyGround.recipes import ToySizes, toy_pipeline
from PyGround.trainer import run_pipeline
from PyGround.worlds import ProbeSet

logger = logging.getLogger(__name__)

TASKS = ('rec', 'tvg', 'pope')
RAW_TASKS = {'rec': 'rec', 'tvg': 'temporal_grounding'}
POPE_ANSWERS = ('yes', 'no')

# one-line metric definitions for report headers
METRIC_NOTES = {
    'rec': 'share of items whose first box has IoU above the threshold',
    'tvg': 'R@1: share of items whose first segment has IoU above m',
    'pope': 'object-presence probing: accuracy, F1 and yes-rate',
    }
ABLATION_REFERENCE = {'C then F': 84.68, 'C+F in stage 1': 82.43}


class EvalConfig(GroundObject):
    """Thresholds, decoding and prompts of an evaluation run."""
    def __init__(self,
                 rec_iou_threshold=0.5,
                 tvg_thresholds=(0.5, 0.7),
                 decoding='greedy',
                 max_new_tokens=40,
                 rec_prompt='Output the coordinate of <exp>.',
                 tvg_prompt='When did <event> occur in the video?',
                 pope_prompt='Is there <object> in the image?',
                 curve_points=19,
                 ):
        GroundObject.__init__(self, locals())

    def __setattr__(self, key, value):

        # check EvalConfig specific attributes
        if key == 'tvg_thresholds':
            self._check_type((list, tuple), key, value)
            if not value:
                raise ValueError('tvg_thresholds must not be empty')
            value = [float(m) for m in value]
            for m in value:
                self._check_range(key, m, 0, 1, includeMin=False)
        elif key == 'decoding':
            self._check_membership(key, value, ('greedy',))
        elif key in ('max_new_tokens', 'curve_points'):
            self._check_type(int, key, value)
            self._check_range(key, value, 1, None)
        elif key.endswith('_prompt'):
            self._check_type(str, key, value)

        GroundObject.__setattr__(self, key, value)

    def prompt(self, task, query):
        if task == 'rec':
            return self.rec_prompt.replace('<exp>', query)
        elif task == 'tvg':
            return self.tvg_prompt.replace('<event>', query)
        return self.pope_prompt.replace('<object>', 'a %s' % query)

    def curve_thresholds(self):
        """Evenly spaced thresholds strictly inside (0, 1)."""
        count = self.curve_points
        return [round((i + 1) / float(count + 1), 6) for i in range(count)]


@dataclass
class EvalItem:
    id: str
    media: Dict[str, str]
    query: str
    target: Optional[List[float]] = None
    label: Optional[str] = None


@dataclass
class ItemRecord:
    id: str
    prediction: str
    parsed: Optional[List[float]] = None
    iou: Optional[float] = None
    label: Optional[str] = None
    answer: Optional[str] = None
    verdict: object = None


@dataclass
class EvalReport:
    task: str
    split: str
    n: int
    metrics: dict
    items: List[ItemRecord]
    config: dict
    checkpoint: Optional[str] = None

    def recompute(self) -> dict:
        return aggregate(self.task, self.items, EvalConfig.from_dict(
            self.config))

    def consistent(self) -> bool:
        return self.recompute() == self.metrics

    def curve(self, thresholds):
        """(threshold, fraction with IoU > threshold) over the records."""
        return threshold_curve(self.items, thresholds)

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, attrs):
        attrs = dict(attrs)
        attrs['items'] = [ItemRecord(**record) for record in attrs['items']]
        return cls(**attrs)

    @classmethod
    def read(cls, path) -> 'EvalReport':
        with open(path, encoding='utf-8') as inStream:
            return cls.from_dict(json.load(inStream))

    def table(self) -> str:
        lines = ['%s on %s (%i items)' % (self.task, self.split, self.n),
                 'metric: %s' % METRIC_NOTES[self.task]]
        if self.checkpoint:
            lines.append('checkpoint: %s' % self.checkpoint)
        lines.append('-' * 36)
        for name, value in _flatten(self.metrics):
            if isinstance(value, float):
                lines.append('%-24s %10.4f' % (name, value))
            else:
                lines.append('%-24s %10s' % (name, value))
        return '\n'.join(lines) + '\n'

    def write(self, path) -> List[str]:
        """JSON report at path plus the text table next to it."""
        directory = os.path.dirname(str(path))
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as outStream:
            json.dump(self.as_dict(), outStream, indent=2, sort_keys=True)
            outStream.write('\n')
        tablePath = os.path.splitext(str(path))[0] + '.txt'
        with open(tablePath, 'w', encoding='utf-8') as outStream:
            outStream.write(self.table())
        return [str(path), tablePath]


def _flatten(metrics, prefix=''):
    for name, value in metrics.items():
        if isinstance(value, dict):
            for pair in _flatten(value, '%s%s ' % (prefix, name)):
                yield pair
        else:
            yield prefix + name, value


# -------------------------------------------------------------------------
# items and predictions
# -------------------------------------------------------------------------
def load_items(task, worldDir) -> List[EvalItem]:
    """REC or TVG items of a generated world, media refs made absolute."""
    if task not in RAW_TASKS:
        raise ValueError('task %s has no world items (use probes)' % task)
    path = resolve_source(worldDir)
    base = os.path.dirname(os.path.abspath(path))
    queryKey, targetKey = ('exp', 'box') if task == 'rec' else \
        ('event', 'seg')
    items = []
    for raw in read_jsonl(path):
        if raw.get('task') != RAW_TASKS[task]:
            continue
        media = dict(raw['media'])
        media['ref'] = os.path.normpath(os.path.join(base, media['ref']))
        items.append(EvalItem(raw['id'], media, raw[queryKey],
                              target=raw.get(targetKey)))
    return items


def probe_items(probes: ProbeSet, worldDir) -> List[EvalItem]:
    base = os.path.abspath(str(worldDir))
    return [EvalItem(p.id, {'kind': 'image',
                            'ref': os.path.join(base, p.media)},
                     p.object, label=p.label)
            for p in probes]


def read_predictions(path) -> Dict[str, str]:
    """{id: text} from a JSONL prediction file."""
    predictions = {}
    with open(path, encoding='utf-8') as inStream:
        for number, line in enumerate(inStream, 1):
            if not line.strip():
                continue
            record = json.loads(line)
            try:
                predictions[str(record['id'])] = str(record['text'])
            except KeyError as error:
                message = '%s line %i lacks %s' % (path, number, error)
                raise ValueError(message)
    return predictions


def model_predictions(model: GroundingModel, items: Sequence[EvalItem],
                      task, config: EvalConfig,
                      store: Optional[MediaStore] = None) -> Dict[str, str]:
    store = store or MediaStore(model.encoder_config)
    model.eval()
    predictions = {}
    with torch.no_grad():
        for item in items:
            outputs = store.encoder_outputs(model, item.media)
            prompt = render_prompt(config.prompt(task, item.query),
                                   [o.modality for o in outputs])
            predictions[item.id] = model.generate(
                prompt, outputs, config.max_new_tokens, config.decoding)
    return predictions


def collect_predictions(source, items, task, config, store=None) \
        -> Dict[str, str]:
    """Predictions for items from a model, a mapping or a JSONL path; an
    item without a prediction gets the empty string."""
    if isinstance(source, GroundingModel):
        return model_predictions(source, items, task, config, store)
    if isinstance(source, (str, os.PathLike)):
        source = read_predictions(source)
    if not isinstance(source, Mapping):
        raise TypeError('predictions must come from a GroundingModel, a '
                        'mapping or a JSONL path (got %s)'
                        % type(source).__name__)
    missing = [item.id for item in items if item.id not in source]
    if missing:
        logger.warning('%i item(s) have no prediction, e.g. %s',
                       len(missing), missing[0])
    return dict((item.id, source.get(item.id, '')) for item in items)


# -------------------------------------------------------------------------
# scoring
# -------------------------------------------------------------------------
def leading_answer(text) -> str:
    """'yes', 'no' or 'other' from the first word of an answer."""
    words = text.strip().casefold().split()
    if not words:
        return 'other'
    word = words[0].strip('.,!?:;\'"')
    return word if word in POPE_ANSWERS else 'other'


def score_rec(item: EvalItem, text, threshold) -> ItemRecord:
    box = first_box(text)
    iou = 0.0 if box is None else box_iou(box,
                                          BoundingBox.from_list(item.target))
    return ItemRecord(item.id, text, None if box is None else box.as_list(),
                      iou=iou, verdict=iou > threshold)


def score_tvg(item: EvalItem, text, thresholds) -> ItemRecord:
    seg = first_segment(text)
    iou = 0.0 if seg is None else segment_iou(
        seg, TimeSegment.from_list(item.target))
    return ItemRecord(item.id, text, None if seg is None else seg.as_list(),
                      iou=iou,
                      verdict=dict(('%g' % m, iou > m) for m in thresholds))


def score_pope(item: EvalItem, text) -> ItemRecord:
    answer = leading_answer(text)
    return ItemRecord(item.id, text, label=item.label, answer=answer,
                      verdict=answer == item.label)


def pope_counts(records: Sequence[ItemRecord]):
    counts = dict(tp=0, fp=0, fn=0, tn=0)
    for record in records:
        saidYes = record.answer == 'yes'
        if record.label == 'yes':
            counts['tp' if saidYes else 'fn'] += 1
        elif saidYes:
            counts['fp'] += 1
        elif record.answer == 'no':
            counts['tn'] += 1
    return counts


def aggregate(task, records: Sequence[ItemRecord], config: EvalConfig) -> dict:
    """Aggregate metrics from per-item records alone."""
    n = len(records)
    if task == 'rec':
        correct = sum(r.iou > config.rec_iou_threshold for r in records)
        return {'rec_accuracy': correct / n,
                'mean_iou': math.fsum(r.iou for r in records) / n}
    elif task == 'tvg':
        recall = dict(('%g' % m, sum(r.iou > m for r in records) / n)
                      for m in config.tvg_thresholds)
        return {'r_at_1': recall,
                'mean_iou': math.fsum(r.iou for r in records) / n}
    counts = pope_counts(records)
    denominator = 2 * counts['tp'] + counts['fp'] + counts['fn']
    return {'pope': {
        'accuracy': (counts['tp'] + counts['tn']) / n,
        'f1': 2 * counts['tp'] / denominator if denominator else 0.0,
        'yes_rate': (counts['tp'] + counts['fp']) / n,
        },
        'counts': counts}


def threshold_curve(records: Sequence[ItemRecord], thresholds):
    n = len(records)
    return [(t, sum(r.iou > t for r in records) / n) for t in thresholds]


def _check_items(task, items):
    if not items:
        raise ValueError('no %s items to evaluate' % task)
    for item in items:
        if task == 'pope':
            if item.label not in POPE_ANSWERS:
                raise UnlabeledProbe('probe %s has label %r' % (item.id,
                                                                item.label))
        elif item.target is None:
            raise MissingGroundTruth('item %s has no ground-truth %s'
                                     % (item.id, 'box' if task == 'rec'
                                        else 'segment'))


def evaluate(task, source, items: Sequence[EvalItem],
             config: Optional[EvalConfig] = None, split='test',
             store=None, checkpoint=None) -> EvalReport:
    if task not in TASKS:
        raise ValueError('task %s is not in %s' % (task, TASKS))
    config = config or EvalConfig()
    items = list(items)
    _check_items(task, items)
    predictions = collect_predictions(source, items, task, config, store)
    if task == 'rec':
        records = [score_rec(i, predictions[i.id], config.rec_iou_threshold)
                   for i in items]
    elif task == 'tvg':
        records = [score_tvg(i, predictions[i.id], config.tvg_thresholds)
                   for i in items]
    else:
        records = [score_pope(i, predictions[i.id]) for i in items]
    unparsed = sum(r.parsed is None for r in records) if task != 'pope' \
        else sum(r.answer == 'other' for r in records)
    for record in records:
        logger.debug('%s %s: %r -> %s', task, record.id, record.prediction,
                     record.verdict)
    report = EvalReport(task, split, len(records),
                        aggregate(task, records, config), records,
                        config.as_dict(), checkpoint)
    logger.info('%s on %s: %s (%i of %i predictions without a usable '
                'answer)', task, split,
                ', '.join('%s=%.4f' % pair for pair in _flatten(report.metrics)
                          if isinstance(pair[1], float)), unparsed, len(records))
    return report


def eval_rec(source, dataset, config=None, **kwargs) -> EvalReport:
    """REC accuracy: the first parsed box against the ground truth, correct
    when IoU > rec_iou_threshold; no box means IoU 0.

    dataset is a list of EvalItem or a world directory."""
    if not isinstance(dataset, (list, tuple)):
        dataset = load_items('rec', dataset)
    return evaluate('rec', source, dataset, config, **kwargs)


def eval_tvg(source, dataset, config=None, **kwargs) -> EvalReport:
    """Temporal grounding R@1 at each threshold m (IoU > m)."""
    if not isinstance(dataset, (list, tuple)):
        dataset = load_items('tvg', dataset)
    return evaluate('tvg', source, dataset, config, **kwargs)


def eval_pope(source, probes, config=None, worldDir=None, **kwargs) \
        -> EvalReport:
    """Accuracy, F1 (yes is positive) and yes-rate of yes/no probes.

    probes is a list of EvalItem, or a ProbeSet together with the image
    world directory its media refs are relative to."""
    if isinstance(probes, ProbeSet):
        probes = probe_items(probes, worldDir or '.')
    return evaluate('pope', source, probes, config, **kwargs)


# -------------------------------------------------------------------------
# coarse-to-fine ablation
# -------------------------------------------------------------------------
class AblationConfig(GroundObject):
    """Seeds, data sizes and step budget of the coarse-to-fine comparison."""
    def __init__(self,
                 seeds=(0, 1, 2, 3, 4),
                 train_images=400,
                 train_videos=300,
                 train_audio=150,
                 held_out_images=200,
                 step_scale=1.0,
                 alpha=0.25,
                 adapter='linear',
                 rec_iou_threshold=0.5,
                 ):
        GroundObject.__init__(self, locals())

    def __setattr__(self, key, value):

        # check AblationConfig specific attributes
        if key == 'seeds':
            self._check_type((list, tuple), key, value)
            value = [int(s) for s in value]
            if len(value) < 5 or len(set(value)) != len(value):
                raise ValueError('seeds must hold at least 5 distinct values')
        elif key in ('train_images', 'train_videos', 'train_audio',
                     'held_out_images'):
            self._check_type(int, key, value)
            self._check_range(key, value, 1, None)
        elif key in ('step_scale', 'alpha'):
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, None, includeMin=key == 'alpha')
        elif key == 'adapter':
            self._check_membership(key, value, ('linear', 'mlp2x_gelu'))

        GroundObject.__setattr__(self, key, value)


def ablation_variants():
    """Variant name -> stage task overrides (stages 2 and 3 are shared)."""
    coarse = STAGE_TASKS[1]
    fine = tuple(t for t in STAGE_TASKS[2] if t not in coarse)
    return {
        'C then F': {1: coarse},
        'C+F in stage 1': {1: coarse + fine},
        }


@dataclass
class AblationReport:
    seeds: List[int]
    variants: Dict[str, dict] = field(default_factory=dict)
    reference: Dict[str, float] = field(
        default_factory=lambda: dict(ABLATION_REFERENCE))
    config: dict = field(default_factory=dict)

    @property
    def direction_matched(self) -> bool:
        first, second = list(ABLATION_REFERENCE)
        return self.variants[first]['mean'] > self.variants[second]['mean']

    def summary(self):
        return dict((name, (v['mean'], v['std']))
                    for name, v in self.variants.items())

    def as_dict(self):
        attrs = asdict(self)
        attrs['direction_matched'] = self.direction_matched
        return attrs

    def table(self) -> str:
        lines = ['coarse-to-fine ablation over seeds %s' %
                 ', '.join(str(s) for s in self.seeds),
                 'reference direction: %s' % ', '.join(
                     '%s %.2f' % pair for pair in self.reference.items()),
                 '-' * 48]
        for name, variant in self.variants.items():
            lines.append('%-18s %.4f +- %.4f  [%s]' % (
                name, variant['mean'], variant['std'],
                ' '.join('%.4f' % a for a in variant['per_seed'])))
        lines.append('direction matched: %s' %
                     ('yes' if self.direction_matched else 'no'))
        return '\n'.join(lines) + '\n'

    def write(self, path) -> List[str]:
        with open(path, 'w', encoding='utf-8') as outStream:
            json.dump(self.as_dict(), outStream, indent=2, sort_keys=True)
            outStream.write('\n')
        tablePath = os.path.splitext(str(path))[0] + '.txt'
        with open(tablePath, 'w', encoding='utf-8') as outStream:
            outStream.write(self.table())
        return [str(path), tablePath]


def ablation_coarse_to_fine(config: Optional[AblationConfig] = None,
                            outDir='ablation', progress=False):
    """Train both variants for every seed and compare held-out REC accuracy.

    Returns (AblationReport, written paths).  Nothing is asserted about the
    outcome."""
    config = config or AblationConfig()
    evalConfig = EvalConfig(rec_iou_threshold=config.rec_iou_threshold)
    sizes = ToySizes(image=config.train_images, video=config.train_videos,
                     audio=config.train_audio,
                     held_out_image=config.held_out_images,
                     held_out_video=1)
    report = AblationReport(list(config.seeds), config=config.as_dict())
    written = []
    for name, stageTasks in ablation_variants().items():
        accuracies = []
        for seed in config.seeds:
            root = os.path.join(str(outDir), _slug(name), 'seed%i' % seed)
            pipeline, heldOut, paths = toy_pipeline(
                root, seed, sizes, config.alpha, config.adapter, stageTasks,
                config.step_scale)
            written.extend(paths)
            result = run_pipeline(pipeline, progress=progress)
            written.extend(r.checkpoint for r in result.reports)
            written.append(result.report_path)
            evaluation = eval_rec(result.model, heldOut['image'], evalConfig,
                                  checkpoint=result.checkpoint)
            written.extend(evaluation.write(os.path.join(root, 'rec.json')))
            accuracies.append(evaluation.metrics['rec_accuracy'])
            logger.info('ablation %s seed %i: REC accuracy %.4f', name, seed,
                        accuracies[-1])
        report.variants[name] = {
            'stage_tasks': dict((str(s), list(t))
                                for s, t in stageTasks.items()),
            'per_seed': accuracies,
            'mean': float(np.mean(accuracies)),
            'std': float(np.std(accuracies)),
            }
    written.extend(report.write(os.path.join(str(outDir), 'ablation.json')))
    return report, written


def _slug(name):
    return ''.join(c if c.isalnum() else '_' for c in name.lower())


def load_model(checkpoint) -> GroundingModel:
    model = load_checkpoint(checkpoint)
    model.eval()
    return model
