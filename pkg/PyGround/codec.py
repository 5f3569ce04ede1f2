"""Plain-text grounding targets.

Boxes are written as ``[x1,y1,x2,y2]`` with three decimals and time segments
as ``{t1,t2}`` with two decimals, all values relative to the image size or the
clip duration.  Serialized strings are ordinary text for the tokenizer; no
extra vocabulary is needed.  Rounding is half-away-from-zero.
"""
import re
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from typing import List, Tuple, Union

from PyGround.errors import InvalidBox, InvalidSegment

BOX_DECIMALS = 3
SEGMENT_DECIMALS = 2
LENIENT_DECIMALS = 3

_NUMBER = r'(-?\d+(?:\.\d*)?)'
_LENIENT_SEP = r', ?'

# a lenient value has 1-3 decimals; strict values are exactly as serialized
_LENIENT_BOX = re.compile(
    r'\[' + _LENIENT_SEP.join([_NUMBER] * 4) + r'\]')
_LENIENT_SEGMENT = re.compile(
    r'\{' + _LENIENT_SEP.join([_NUMBER] * 2) + r'\}')
_STRICT_BOX = re.compile(r'\[' + ','.join([r'(\d\.\d{3})'] * 4) + r'\]')
_STRICT_SEGMENT = re.compile(r'\{' + ','.join([r'(\d\.\d{2})'] * 2) + r'\}')


@dataclass(frozen=True)
class BoundingBox:
    """Relative box; (x1, y1) is the upper-left corner."""
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        check_box(self)

    def as_list(self) -> List[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @classmethod
    def from_list(cls, values) -> 'BoundingBox':
        if len(values) != 4:
            raise InvalidBox('a box needs 4 values (got %i)' % len(values))
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class TimeSegment:
    """Relative start and end of a moment."""
    t1: float
    t2: float

    def __post_init__(self):
        check_segment(self)

    def as_list(self) -> List[float]:
        return [self.t1, self.t2]

    @property
    def length(self) -> float:
        return self.t2 - self.t1

    @classmethod
    def from_list(cls, values) -> 'TimeSegment':
        if len(values) != 2:
            message = 'a segment needs 2 values (got %i)' % len(values)
            raise InvalidSegment(message)
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class ParsedSpan:
    target: Union[BoundingBox, TimeSegment]
    char_start: int
    char_end: int


@dataclass(frozen=True)
class Rejection:
    """A bracketed match whose values are not a valid target."""
    text: str
    char_start: int
    char_end: int
    reason: str


def check_box(box) -> None:
    values = (box.x1, box.y1, box.x2, box.y2)
    for name, value in zip(('x1', 'y1', 'x2', 'y2'), values):
        if not isinstance(value, (int, float)) or value != value:
            raise InvalidBox('%s = %r is not a number' % (name, value))
    if not (0.0 <= box.x1 <= box.x2 <= 1.0):
        message = 'box does not satisfy 0 <= x1 <= x2 <= 1 (x1=%r, x2=%r)' % \
                  (box.x1, box.x2)
        raise InvalidBox(message)
    if not (0.0 <= box.y1 <= box.y2 <= 1.0):
        message = 'box does not satisfy 0 <= y1 <= y2 <= 1 (y1=%r, y2=%r)' % \
                  (box.y1, box.y2)
        raise InvalidBox(message)


def check_segment(seg) -> None:
    for name, value in (('t1', seg.t1), ('t2', seg.t2)):
        if not isinstance(value, (int, float)) or value != value:
            raise InvalidSegment('%s = %r is not a number' % (name, value))
    if not (0.0 <= seg.t1 <= seg.t2 <= 1.0):
        message = 'segment does not satisfy 0 <= t1 <= t2 <= 1 ' \
                  '(t1=%r, t2=%r)' % (seg.t1, seg.t2)
        raise InvalidSegment(message)


def round_half_away(value: float, decimals: int) -> Decimal:
    """Round through the shortest decimal representation of the float, so
    0.0005 becomes 0.001 and 0.125 becomes 0.13."""
    quantum = Decimal(1).scaleb(-decimals)
    return Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP)


def format_value(value: float, decimals: int) -> str:
    rounded = round_half_away(value, decimals)
    # -0.000 can only come from tiny negatives, which never validate anyway
    if rounded.is_zero():
        rounded = abs(rounded)
    return '%.*f' % (decimals, rounded)


def serialize_box(box: BoundingBox) -> str:
    check_box(box)
    return '[%s]' % ','.join(format_value(v, BOX_DECIMALS)
                             for v in box.as_list())


def serialize_segment(seg: TimeSegment) -> str:
    check_segment(seg)
    return '{%s}' % ','.join(format_value(v, SEGMENT_DECIMALS)
                             for v in seg.as_list())


def quantize_box(box: BoundingBox) -> BoundingBox:
    """The box as it reads back after serialization."""
    return BoundingBox(*(float(round_half_away(v, BOX_DECIMALS))
                         for v in box.as_list()))


def quantize_segment(seg: TimeSegment) -> TimeSegment:
    return TimeSegment(*(float(round_half_away(v, SEGMENT_DECIMALS))
                         for v in seg.as_list()))


def _lenient_value_ok(token: str, decimals: int = LENIENT_DECIMALS) -> bool:
    if token.startswith('-'):
        return True  # range check rejects it with a precise reason
    if '.' not in token:
        return False
    whole, frac = token.split('.', 1)
    return len(whole) >= 1 and 1 <= len(frac) <= decimals


def _parse(text, pattern, lenient, decimals, build, error_class):
    spans, rejections = [], []
    for match in pattern.finditer(text):
        tokens = match.groups()
        start, end = match.span()
        if lenient and \
           not all(_lenient_value_ok(t, decimals) for t in tokens):
            rejections.append(Rejection(match.group(0), start, end,
                                        'malformed_coordinates'))
            continue
        try:
            target = build([float(t) for t in tokens])
        except error_class as error:
            rejections.append(Rejection(match.group(0), start, end,
                                        rejection_reason(str(error))))
            continue
        spans.append(ParsedSpan(target, start, end))
    return spans, rejections


def rejection_reason(message: str) -> str:
    """Closed-set reason for a target that failed validation."""
    if 'does not satisfy 0 <=' in message:
        return 'out_of_range'
    return 'malformed_coordinates'


def parse_boxes_with_rejections(text: str, strict: bool = False) \
        -> Tuple[List[ParsedSpan], List[Rejection]]:
    """All bracketed quadruples in text, left to right, plus the matches
    whose values are not a valid box."""
    return _parse_kind(text, strict, _LENIENT_BOX, _STRICT_BOX, BOX_DECIMALS,
                       BoundingBox.from_list, InvalidBox)


def parse_segments_with_rejections(text: str, strict: bool = False) \
        -> Tuple[List[ParsedSpan], List[Rejection]]:
    return _parse_kind(text, strict, _LENIENT_SEGMENT, _STRICT_SEGMENT,
                       SEGMENT_DECIMALS, TimeSegment.from_list, InvalidSegment)


def _parse_kind(text, strict, lenientPattern, strictPattern, decimals, build,
                error_class):
    if strict:
        return _parse(text, strictPattern, False, decimals, build,
                      error_class)
    return _parse(text, lenientPattern, True, LENIENT_DECIMALS, build,
                  error_class)


def parse_boxes(text: str, strict: bool = False) -> List[ParsedSpan]:
    return parse_boxes_with_rejections(text, strict)[0]


def parse_segments(text: str, strict: bool = False) -> List[ParsedSpan]:
    return parse_segments_with_rejections(text, strict)[0]


def first_box(text: str):
    spans = parse_boxes(text)
    return spans[0].target if spans else None


def first_segment(text: str):
    spans = parse_segments(text)
    return spans[0].target if spans else None


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    check_box(a)
    check_box(b)
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 1.0 if a == b else 0.0
    return min(1.0, max(0.0, inter / union))


def segment_iou(a: TimeSegment, b: TimeSegment) -> float:
    check_segment(a)
    check_segment(b)
    inter = max(0.0, min(a.t2, b.t2) - max(a.t1, b.t1))
    union = a.length + b.length - inter
    if union <= 0.0:
        return 1.0 if a == b else 0.0
    return min(1.0, max(0.0, inter / union))
