"""Deterministic synthetic worlds with exact ground truth.

Images show 1-3 coloured shapes on a dark background.  Each shape is drawn
at full brightness on a dim plate of its own colour that fills its box, so
every pixel inside a box belongs to the box's colour class while the shape
itself still stands out.  Videos show objects that are visible exactly
during their event segment; audio clips hold tone bursts.  Every scene is
generated from its own generator, seeded with (seed, scene index).
"""
import json
import logging
import math
import os
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import numpy as np

from PyGround.base import GroundObject
from PyGround.codec import BoundingBox, TimeSegment
from PyGround.media import save_array

logger = logging.getLogger(__name__)

SHAPES = ('square', 'circle', 'triangle')
COLORS = OrderedDict([
    ('red', (1.0, 0.0, 0.0)),
    ('green', (0.0, 1.0, 0.0)),
    ('blue', (0.0, 0.0, 1.0)),
    ('yellow', (1.0, 1.0, 0.0)),
    ])
CLASSES = tuple((color, shape) for color in COLORS for shape in SHAPES)

TONES = OrderedDict([
    ('low beep', 500.0),
    ('high beep', 2000.0),
    ('noise', None),
    ])
TONE_PHRASES = {
    'low beep': 'a low beep',
    'high beep': 'a high beep',
    'noise': 'a noise burst',
    }
TONE_SHAPES = {
    'low beep': 'square',
    'high beep': 'circle',
    'noise': 'triangle',
    }

WORLD_KINDS = ('image', 'video', 'audio')
POPE_STRATEGIES = ('random', 'popular', 'adversarial')
MANIFEST_FILE = 'manifest.json'
ANNOTATION_FILE = 'annotations.jsonl'

BACKGROUND = 0.1
PLATE_FLOOR = 0.05
PLATE_GAIN = 0.4
SHAPE_FLOOR = 0.1
PIXEL_NOISE = 0.03
SEGMENT_GRID = 20


class WorldConfig(GroundObject):
    """Sizes of the synthetic media."""
    def __init__(self,
                 image_size=32,
                 max_objects=3,
                 min_box_pixels=8,
                 max_box_pixels=14,
                 num_frames=32,
                 max_events=2,
                 sample_rate=8000,
                 audio_seconds=4.0,
                 max_bursts=2,
                 ):
        GroundObject.__init__(self, locals())

    def __setattr__(self, key, value):

        # check WorldConfig specific attributes
        if key in ('image_size', 'max_objects', 'min_box_pixels',
                   'max_box_pixels', 'num_frames', 'max_events',
                   'sample_rate', 'max_bursts'):
            self._check_type(int, key, value)
            self._check_range(key, value, 1, None)
        elif key == 'audio_seconds':
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, None, includeMin=False)

        GroundObject.__setattr__(self, key, value)

    @property
    def audio_samples(self):
        return int(round(self.audio_seconds * self.sample_rate))


# -------------------------------------------------------------------------
# scene specifications
# -------------------------------------------------------------------------
@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    box: BoundingBox

    @property
    def name(self):
        return '%s %s' % (self.color, self.shape)

    @property
    def expression(self):
        return 'the %s' % self.name

    @property
    def phrase(self):
        return 'a %s' % self.name

    def as_dict(self):
        return {'shape': self.shape, 'color': self.color,
                'box': self.box.as_list()}


@dataclass(frozen=True)
class Event:
    obj: SceneObject
    segment: TimeSegment

    def as_dict(self):
        return dict(self.obj.as_dict(), seg=self.segment.as_list())


@dataclass(frozen=True)
class Burst:
    tone: str
    segment: TimeSegment

    def as_dict(self):
        return {'tone': self.tone, 'seg': self.segment.as_list()}


@dataclass
class SceneSpec:
    """One scene of any world kind.  image scenes use objects; video scenes
    use events; audio scenes use bursts plus the paired image and the index
    of its sounding object."""
    kind: str
    objects: List[SceneObject] = field(default_factory=list)
    events: List[Event] = field(default_factory=list)
    bursts: List[Burst] = field(default_factory=list)
    num_frames: int = 0
    duration: float = 0.0
    sounding_object: Optional[int] = None

    def as_dict(self):
        if self.kind == 'image':
            return {'objects': [o.as_dict() for o in self.objects]}
        if self.kind == 'video':
            return {'num_frames': self.num_frames,
                    'events': [e.as_dict() for e in self.events]}
        return {'duration': self.duration,
                'bursts': [b.as_dict() for b in self.bursts],
                'image': {'objects': [o.as_dict() for o in self.objects]},
                'sounding_object': self.sounding_object}


@dataclass
class World:
    """A generated world: manifest, raw annotations and media arrays keyed by
    stem and modality."""
    kind: str
    seed: int
    manifest: dict
    annotations: List[dict]
    media: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)

    def __iter__(self):
        return iter((self.manifest, self.annotations))

    def write(self, outDir) -> List[str]:
        """Write manifest, annotations and media; returns the paths."""
        os.makedirs(os.path.join(str(outDir), 'media'), exist_ok=True)
        written = []
        manifestPath = os.path.join(str(outDir), MANIFEST_FILE)
        with open(manifestPath, 'w', encoding='utf-8') as outStream:
            json.dump(self.manifest, outStream, indent=2, sort_keys=True)
            outStream.write('\n')
        written.append(manifestPath)
        annotationPath = os.path.join(str(outDir), ANNOTATION_FILE)
        with open(annotationPath, 'w', encoding='utf-8') as outStream:
            for raw in self.annotations:
                outStream.write(json.dumps(raw, sort_keys=True) + '\n')
        written.append(annotationPath)
        for stem in sorted(self.media):
            for modality in sorted(self.media[stem]):
                written.append(save_array(os.path.join(str(outDir), stem),
                                          modality,
                                          self.media[stem][modality]))
        logger.info('wrote %s world (%i items, %i annotations) to %s',
                    self.kind, len(self.manifest['items']),
                    len(self.annotations), outDir)
        return written


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def load_manifest(worldDir) -> dict:
    with open(os.path.join(str(worldDir), MANIFEST_FILE),
              encoding='utf-8') as inStream:
        return json.load(inStream)


# -------------------------------------------------------------------------
# rendering
# -------------------------------------------------------------------------
def frame_index(t: float, numFrames: int) -> int:
    """round(t * (T - 1)), halves rounded up."""
    return int(math.floor(t * (numFrames - 1) + 0.5))


def visible_frames(segment: TimeSegment, numFrames: int) -> range:
    return range(frame_index(segment.t1, numFrames),
                 frame_index(segment.t2, numFrames) + 1)


def color_class(pixel) -> Optional[str]:
    """Nearest colour class of a pixel after normalizing its brightest
    channel to 1; dark pixels have no class."""
    pixel = np.asarray(pixel, dtype=np.float64)
    peak = pixel.max()
    if peak < 0.2:
        return None
    normalized = pixel / peak
    distances = dict((name, float(np.sum((normalized - np.array(rgb)) ** 2)))
                     for name, rgb in COLORS.items())
    return min(distances, key=distances.get)


def pixel_box(box: BoundingBox, size: int):
    """(row0, row1, col0, col1) of the pixels covered by a relative box."""
    return (int(round(box.y1 * size)), int(round(box.y2 * size)),
            int(round(box.x1 * size)), int(round(box.x2 * size)))


def shape_mask(shape: str, height: int, width: int) -> np.ndarray:
    v, u = np.meshgrid((np.arange(height) + 0.5) / height,
                       (np.arange(width) + 0.5) / width, indexing='ij')
    if shape == 'square':
        return np.ones((height, width), dtype=bool)
    if shape == 'circle':
        return (u - 0.5) ** 2 + (v - 0.5) ** 2 <= 0.25
    if shape == 'triangle':
        return np.abs(u - 0.5) <= v / 2.0
    raise ValueError('unknown shape: %s' % shape)


def draw_object(canvas: np.ndarray, obj: SceneObject) -> None:
    size = canvas.shape[0]
    row0, row1, col0, col1 = pixel_box(obj.box, size)
    rgb = np.array(COLORS[obj.color])
    canvas[row0:row1, col0:col1] = PLATE_FLOOR + PLATE_GAIN * rgb
    mask = shape_mask(obj.shape, row1 - row0, col1 - col0)
    region = canvas[row0:row1, col0:col1]
    region[mask] = SHAPE_FLOOR + (1.0 - SHAPE_FLOOR) * rgb


def blank_canvas(size: int) -> np.ndarray:
    return np.full((size, size, 3), BACKGROUND)


def finish(canvas: np.ndarray, rng) -> np.ndarray:
    """Add pixel noise and quantize to uint8."""
    noisy = canvas + rng.uniform(-PIXEL_NOISE, PIXEL_NOISE, canvas.shape)
    return np.round(np.clip(noisy, 0.0, 1.0) * 255).astype(np.uint8)


def render_image(objects: Sequence[SceneObject], size: int, rng) \
        -> np.ndarray:
    canvas = blank_canvas(size)
    for obj in objects:
        draw_object(canvas, obj)
    return finish(canvas, rng)


def render_video(events: Sequence[Event], numFrames: int, size: int, rng) \
        -> np.ndarray:
    frames = []
    for index in range(numFrames):
        canvas = blank_canvas(size)
        for event in events:
            if index in visible_frames(event.segment, numFrames):
                draw_object(canvas, event.obj)
        frames.append(finish(canvas, rng))
    return np.stack(frames)


def render_audio(bursts: Sequence[Burst], cfg: WorldConfig, rng) \
        -> np.ndarray:
    count = cfg.audio_samples
    times = np.arange(count) / float(cfg.sample_rate)
    waveform = rng.normal(0.0, 0.005, count)
    fade = int(0.005 * cfg.sample_rate)
    for burst in bursts:
        start = int(round(burst.segment.t1 * count))
        stop = int(round(burst.segment.t2 * count))
        length = stop - start
        if length <= 0:
            continue
        envelope = np.ones(length)
        ramp = min(fade, length // 2)
        if ramp > 0:
            envelope[:ramp] = np.linspace(0.0, 1.0, ramp)
            envelope[-ramp:] = np.linspace(1.0, 0.0, ramp)
        frequency = TONES[burst.tone]
        if frequency is None:
            signal = rng.normal(0.0, 0.3, length)
        else:
            signal = 0.5 * np.sin(2 * np.pi * frequency * times[start:stop])
        waveform[start:stop] += envelope * signal
    return waveform.astype(np.float32)


# -------------------------------------------------------------------------
# scene sampling
# -------------------------------------------------------------------------
def place_objects(rng, classes, cfg: WorldConfig, tries=100) \
        -> List[SceneObject]:
    """Non-overlapping pixel-aligned boxes, one per (color, shape) class;
    a class that does not fit after `tries` attempts is dropped."""
    size = cfg.image_size
    taken = []
    objects = []
    for color, shape in classes:
        for _ in range(tries):
            width = int(rng.integers(cfg.min_box_pixels,
                                     cfg.max_box_pixels + 1))
            height = int(rng.integers(cfg.min_box_pixels,
                                      cfg.max_box_pixels + 1))
            col = int(rng.integers(0, size - width + 1))
            row = int(rng.integers(0, size - height + 1))
            rect = (col, row, col + width, row + height)
            if all(rect[2] <= o[0] or o[2] <= rect[0] or
                   rect[3] <= o[1] or o[3] <= rect[1] for o in taken):
                taken.append(rect)
                box = BoundingBox(rect[0] / size, rect[1] / size,
                                  rect[2] / size, rect[3] / size)
                objects.append(SceneObject(shape, color, box))
                break
    return objects


def draw_classes(rng, count, required=None):
    """count distinct (color, shape) classes; required is included first."""
    pool = [c for c in CLASSES if c != required]
    picks = [pool[i] for i in rng.permutation(len(pool))[:count]]
    if required is not None:
        picks = [required] + picks[:count - 1]
    return picks


def sample_segment(rng, minLength=4, maxLength=12) -> TimeSegment:
    """A segment on the 0.05 grid, at least 0.2 long."""
    length = int(rng.integers(minLength, maxLength + 1))
    start = int(rng.integers(0, SEGMENT_GRID - length + 1))
    return TimeSegment(start / SEGMENT_GRID, (start + length) / SEGMENT_GRID)


def sample_image_scene(rng, cfg: WorldConfig) -> SceneSpec:
    count = int(rng.integers(1, cfg.max_objects + 1))
    objects = place_objects(rng, draw_classes(rng, count), cfg)
    return SceneSpec('image', objects=objects)


def sample_video_scene(rng, cfg: WorldConfig) -> SceneSpec:
    count = int(rng.integers(1, cfg.max_events + 1))
    objects = place_objects(rng, draw_classes(rng, count), cfg)
    events = [Event(obj, sample_segment(rng)) for obj in objects]
    events.sort(key=lambda e: (e.segment.t1, e.segment.t2))
    return SceneSpec('video', events=events, num_frames=cfg.num_frames)


def sample_audio_scene(rng, cfg: WorldConfig, tries=50) -> SceneSpec:
    count = int(rng.integers(1, cfg.max_bursts + 1))
    tones = [list(TONES)[i] for i in rng.permutation(len(TONES))[:count]]
    bursts = []
    for tone in tones:
        for _ in range(tries):
            segment = sample_segment(rng, 4, 10)
            if all(segment.t2 <= b.segment.t1 or b.segment.t2 <= segment.t1
                   for b in bursts):
                bursts.append(Burst(tone, segment))
                break
    bursts.sort(key=lambda b: b.segment.t1)

    # the earliest burst sounds from an object of the mapped shape
    shape = TONE_SHAPES[bursts[0].tone]
    color = list(COLORS)[int(rng.integers(len(COLORS)))]
    others = [c for c in CLASSES if c[1] != shape]
    extra = int(rng.integers(0, cfg.max_objects))
    classes = [(color, shape)] + \
              [others[i] for i in rng.permutation(len(others))[:extra]]
    # at most one object per shape, so the sounding object is unique
    seen, unique = set(), []
    for item in classes:
        if item[1] not in seen:
            seen.add(item[1])
            unique.append(item)
    objects = place_objects(rng, unique, cfg)
    return SceneSpec('audio', objects=objects, bursts=bursts,
                     duration=cfg.audio_seconds, sounding_object=0)


# -------------------------------------------------------------------------
# raw annotations
# -------------------------------------------------------------------------
def image_annotations(itemId, ref, objects: Sequence[SceneObject], rng) \
        -> List[dict]:
    media = {'kind': 'image', 'ref': ref}
    raws = []
    ordered = sorted(objects, key=lambda o: (o.box.x1, o.box.y1))

    def add(task, suffix, **fields):
        raws.append(dict(fields, id='%s-%s' % (itemId, suffix), task=task,
                         media=dict(media)))

    add('image_captioning', 'cap',
        caption=' and '.join(o.phrase for o in ordered),
        mentions=[{'entity': o.phrase, 'box': o.box.as_list()}
                  for o in ordered])
    shapeCounts = Counter(o.shape for o in objects)
    for index, obj in enumerate(ordered):
        add('rec', 'rec%i' % index, exp=obj.expression,
            box=obj.box.as_list())
        add('reg', 'reg%i' % index, region=obj.box.as_list(),
            desc=obj.phrase)
        if shapeCounts[obj.shape] == 1:
            add('object_attribute', 'color%i' % index, exp=obj.shape,
                question_kind='color', answer=obj.color)
    shapes = sorted(shapeCounts)
    shape = shapes[int(rng.integers(len(shapes)))]
    add('object_attribute', 'count', exp=shape + 's', question_kind='count',
        answer=str(shapeCounts[shape]))

    present = sorted(set((o.color, o.shape) for o in objects))
    absent = [c for c in CLASSES if c not in present]
    yes = present[int(rng.integers(len(present)))]
    no = absent[int(rng.integers(len(absent)))]
    add('object_presence', 'yes', object='a %s %s' % yes, label='yes')
    add('object_presence', 'no', object='a %s %s' % no, label='no')
    return raws


def video_annotations(itemId, ref, events: Sequence[Event]) -> List[dict]:
    media = {'kind': 'video', 'ref': ref}
    raws = [{
        'id': '%s-cap' % itemId,
        'task': 'video_captioning',
        'media': dict(media),
        'caption': ', then '.join('%s appears' % e.obj.phrase
                                  for e in events),
        }]
    for index, event in enumerate(events):
        raws.append({'id': '%s-tvg%i' % (itemId, index),
                     'task': 'temporal_grounding', 'media': dict(media),
                     'event': event.obj.expression,
                     'seg': event.segment.as_list()})
        raws.append({'id': '%s-dense%i' % (itemId, index),
                     'task': 'video_dense_captioning', 'media': dict(media),
                     'seg': event.segment.as_list(),
                     'desc': '%s appears' % event.obj.phrase})
    return raws


def audio_annotations(itemId, ref, scene: SceneSpec) -> List[dict]:
    sounding = scene.objects[scene.sounding_object]
    return [
        {'id': '%s-cap' % itemId, 'task': 'audio_captioning',
         'media': {'kind': 'audio', 'ref': ref},
         'caption': ' then '.join(TONE_PHRASES[b.tone]
                                  for b in scene.bursts)},
        {'id': '%s-loc' % itemId, 'task': 'sound_localization',
         'media': {'kind': 'audio_image', 'ref': ref},
         'entity': sounding.expression, 'box': sounding.box.as_list()},
        ]


# -------------------------------------------------------------------------
# generators
# -------------------------------------------------------------------------
def _check_count(n):
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ValueError('n = %r must be an integer >= 1' % (n,))


def _manifest(kind, seed, cfg, items):
    return {'world_kind': kind, 'seed': seed, 'config': cfg.as_dict(),
            'items': items}


def gen_image_world(seed: int, n: int, cfg: WorldConfig = None) -> World:
    cfg = cfg or WorldConfig()
    _check_count(n)
    items, annotations, media = [], [], {}
    for index in range(n):
        rng = scene_rng(seed, index)
        scene = sample_image_scene(rng, cfg)
        itemId = 'img-%05i' % index
        ref = 'media/%s' % itemId
        media[ref] = {'image': render_image(scene.objects, cfg.image_size,
                                            rng)}
        items.append({'id': itemId, 'media': ref, 'scene': scene.as_dict()})
        annotations.extend(image_annotations(itemId, ref, scene.objects, rng))
    logger.info('generated %i image scenes (seed %i)', n, seed)
    return World('image', seed, _manifest('image', seed, cfg, items),
                 annotations, media)


def gen_video_world(seed: int, n: int, cfg: WorldConfig = None) -> World:
    cfg = cfg or WorldConfig()
    _check_count(n)
    items, annotations, media = [], [], {}
    for index in range(n):
        rng = scene_rng(seed, index)
        scene = sample_video_scene(rng, cfg)
        itemId = 'vid-%05i' % index
        ref = 'media/%s' % itemId
        media[ref] = {'video': render_video(scene.events, cfg.num_frames,
                                            cfg.image_size, rng)}
        items.append({'id': itemId, 'media': ref, 'scene': scene.as_dict()})
        annotations.extend(video_annotations(itemId, ref, scene.events))
    logger.info('generated %i video clips (seed %i)', n, seed)
    return World('video', seed, _manifest('video', seed, cfg, items),
                 annotations, media)


def gen_audio_world(seed: int, n: int, cfg: WorldConfig = None) -> World:
    cfg = cfg or WorldConfig()
    _check_count(n)
    items, annotations, media = [], [], {}
    for index in range(n):
        rng = scene_rng(seed, index)
        scene = sample_audio_scene(rng, cfg)
        itemId = 'aud-%05i' % index
        ref = 'media/%s' % itemId
        media[ref] = {
            'audio': render_audio(scene.bursts, cfg, rng),
            'image': render_image(scene.objects, cfg.image_size, rng),
            }
        items.append({'id': itemId, 'media': ref, 'scene': scene.as_dict()})
        annotations.extend(audio_annotations(itemId, ref, scene))
    logger.info('generated %i audio clips (seed %i)', n, seed)
    return World('audio', seed, _manifest('audio', seed, cfg, items),
                 annotations, media)


GENERATORS = {
    'image': gen_image_world,
    'video': gen_video_world,
    'audio': gen_audio_world,
    }


def gen_world(kind: str, seed: int, n: int, cfg: WorldConfig = None) -> World:
    try:
        generator = GENERATORS[kind]
    except KeyError:
        raise ValueError('world kind %s is not in %s' % (kind, WORLD_KINDS))
    return generator(seed, n, cfg)


# -------------------------------------------------------------------------
# object-presence probes
# -------------------------------------------------------------------------
@dataclass(frozen=True)
class Probe:
    id: str
    item_id: str
    media: str
    object: str
    label: Optional[str]

    @property
    def question(self):
        return 'Is there a %s in the image?' % self.object

    def as_dict(self):
        return {'id': self.id, 'item_id': self.item_id, 'media': self.media,
                'object': self.object, 'question': self.question,
                'label': self.label}


@dataclass
class ProbeSet:
    strategy: str
    seed: int
    probes: List[Probe]

    def __len__(self):
        return len(self.probes)

    def __iter__(self):
        return iter(self.probes)

    @property
    def yes_fraction(self):
        return sum(p.label == 'yes' for p in self.probes) / len(self.probes)

    def write(self, path) -> str:
        with open(path, 'w', encoding='utf-8') as outStream:
            for probe in self.probes:
                outStream.write(json.dumps(probe.as_dict(), sort_keys=True)
                                + '\n')
        return str(path)

    @classmethod
    def read(cls, path, strategy='unknown', seed=0) -> 'ProbeSet':
        probes = []
        with open(path, encoding='utf-8') as inStream:
            for line in inStream:
                if line.strip():
                    record = json.loads(line)
                    probes.append(Probe(record['id'], record['item_id'],
                                        record['media'], record['object'],
                                        record.get('label')))
        return cls(strategy, seed, probes)


def scene_classes(item) -> List[tuple]:
    """(color, shape) classes of an image manifest item."""
    return sorted(set((o['color'], o['shape'])
                      for o in item['scene']['objects']))


def class_statistics(manifest):
    """Per-class scene frequency and pairwise co-occurrence counts."""
    frequency = Counter()
    cooccurrence = Counter()
    for item in manifest['items']:
        present = scene_classes(item)
        frequency.update(present)
        for a, b in combinations(present, 2):
            cooccurrence[(a, b)] += 1
            cooccurrence[(b, a)] += 1
    return frequency, cooccurrence


def _pick_best(candidates, score, rng):
    best = max(score(c) for c in candidates)
    tied = [c for c in candidates if score(c) == best]
    return tied[int(rng.integers(len(tied)))]


def gen_pope_probes(manifest, strategy: str, seed: int) -> ProbeSet:
    """One yes-probe and one no-probe per scene of an image world."""
    if isinstance(manifest, World):
        manifest = manifest.manifest
    if strategy not in POPE_STRATEGIES:
        raise ValueError('strategy %s is not in %s' % (strategy,
                                                       POPE_STRATEGIES))
    if not manifest.get('items'):
        raise ValueError('the image manifest has no items')
    frequency, cooccurrence = class_statistics(manifest)
    rng = np.random.default_rng(seed)
    probes = []
    for item in manifest['items']:
        present = scene_classes(item)
        absent = [c for c in CLASSES if c not in present]
        yes = present[int(rng.integers(len(present)))]
        if strategy == 'random':
            no = absent[int(rng.integers(len(absent)))]
        elif strategy == 'popular':
            no = _pick_best(absent, lambda c: frequency[c], rng)
        else:
            no = _pick_best(absent,
                            lambda c: sum(cooccurrence[(c, p)]
                                          for p in present), rng)
        for label, cls in (('yes', yes), ('no', no)):
            probes.append(Probe('%s-%s' % (item['id'], label), item['id'],
                                item['media'], '%s %s' % cls, label))
    logger.info('generated %i %s probes (seed %i)', len(probes), strategy,
                seed)
    return ProbeSet(strategy, seed, probes)
