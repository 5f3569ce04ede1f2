import numpy as np
import pytest

from PyGround.codec import (BoundingBox, TimeSegment, box_iou, first_box,
                            first_segment, format_value, parse_boxes,
                            parse_boxes_with_rejections, parse_segments,
                            parse_segments_with_rejections, quantize_box,
                            quantize_segment, serialize_box,
                            serialize_segment, segment_iou)
from PyGround.errors import InvalidBox, InvalidSegment


def random_box(rng):
    xs = np.sort(rng.random(2))
    ys = np.sort(rng.random(2))
    return BoundingBox(float(xs[0]), float(ys[0]), float(xs[1]), float(ys[1]))


def random_segment(rng):
    ts = np.sort(rng.random(2))
    return TimeSegment(float(ts[0]), float(ts[1]))


def test_serialize_box():
    assert serialize_box(BoundingBox(0.1, 0.2, 0.3, 0.4)) == \
        '[0.100,0.200,0.300,0.400]'
    assert serialize_box(BoundingBox(0, 0, 1, 1)) == \
        '[0.000,0.000,1.000,1.000]'


def test_serialize_segment():
    assert serialize_segment(TimeSegment(0.125, 0.5)) == '{0.13,0.50}'


def test_rounding_is_half_up():
    assert format_value(0.0005, 3) == '0.001'
    assert format_value(0.125, 2) == '0.13'
    assert format_value(0.1244, 3) == '0.124'
    assert format_value(0.0, 3) == '0.000'


def test_invalid_targets():
    with pytest.raises(InvalidBox):
        BoundingBox(0.5, 0.1, 0.2, 0.3)
    with pytest.raises(InvalidBox):
        BoundingBox(0.1, 0.1, 1.2, 0.3)
    with pytest.raises(InvalidBox):
        BoundingBox.from_list([0.1, 0.2, 0.3])
    with pytest.raises(InvalidSegment):
        TimeSegment(0.7, 0.2)
    with pytest.raises(ValueError):
        TimeSegment(-0.1, 0.2)


def test_round_trip(rng):
    for _ in range(10000):
        text = serialize_box(random_box(rng))
        spans = parse_boxes(text, strict=True)
        assert len(spans) == 1
        assert serialize_box(spans[0].target) == text

        text = serialize_segment(random_segment(rng))
        spans = parse_segments(text, strict=True)
        assert len(spans) == 1
        assert serialize_segment(spans[0].target) == text


def test_quantize_matches_parse(rng):
    box = random_box(rng)
    assert quantize_box(box) == parse_boxes(serialize_box(box))[0].target
    seg = random_segment(rng)
    assert quantize_segment(seg) == \
        parse_segments(serialize_segment(seg))[0].target


@pytest.mark.parametrize('text, reason', [
    ('[0.500,0.100,0.200,0.300]', 'out_of_range'),
    ('[0.100,0.100,1.200,0.300]', 'out_of_range'),
    ('[-0.100,0.100,0.200,0.300]', 'out_of_range'),
    ('[0.1234,0.100,0.200,0.300]', 'malformed_coordinates'),
    ('[1,0,1,1]', 'malformed_coordinates'),
    ])
def test_box_rejections(text, reason):
    spans, rejections = parse_boxes_with_rejections('it is at %s.' % text)
    assert spans == []
    assert [r.reason for r in rejections] == [reason]
    assert rejections[0].text == text


def test_invalid_fixture_set_is_rejected(rng):
    fixtures = []
    for _ in range(500):
        box = random_box(rng)
        if box.x2 - box.x1 > 0.002:
            fixtures.append('[%.3f,%.3f,%.3f,%.3f]' % (box.x2, box.y1,
                                                       box.x1, box.y2))
        fixtures.append('[%.3f,%.3f,%.3f,%.3f]' % (box.x1, box.y1,
                                                   box.x2 + 1.5, box.y2))
    for text in fixtures[:1000]:
        spans, rejections = parse_boxes_with_rejections(text)
        assert spans == []
        assert len(rejections) == 1


def test_segment_rejection():
    spans, rejections = parse_segments_with_rejections(
        'from {0.10,0.40} and {0.70,0.20}')
    assert [s.target for s in spans] == [TimeSegment(0.1, 0.4)]
    assert [r.reason for r in rejections] == ['out_of_range']


def test_segment_leniency_matches_boxes():
    spans, rejections = parse_segments_with_rejections('at {0.125,0.5}')
    assert [s.target for s in spans] == [TimeSegment(0.125, 0.5)]
    assert rejections == []
    assert parse_segments('{0.1, 0.25}')[0].target == TimeSegment(0.1, 0.25)
    assert parse_segments('{0.125,0.5}', strict=True) == []
    spans, rejections = parse_segments_with_rejections('{0.1250,0.5}')
    assert spans == []
    assert [r.reason for r in rejections] == ['malformed_coordinates']


def test_lenient_and_strict_parsing():
    text = 'the cat [0.1, 0.2, 0.3, 0.4] and the dog [0.500,0.500,0.700,0.900]'
    assert len(parse_boxes(text)) == 2
    strict = parse_boxes(text, strict=True)
    assert [s.target for s in strict] == [BoundingBox(0.5, 0.5, 0.7, 0.9)]


def test_first_target():
    text = 'two: [0.100,0.100,0.200,0.200] then [0.300,0.300,0.400,0.400]'
    assert first_box(text) == BoundingBox(0.1, 0.1, 0.2, 0.2)
    assert first_box('no box here') is None
    assert first_segment('during {0.25,0.75}.') == TimeSegment(0.25, 0.75)


def test_spans_point_into_text():
    text = 'x {0.10,0.20} y'
    span = parse_segments(text)[0]
    assert text[span.char_start:span.char_end] == '{0.10,0.20}'


def test_box_iou_analytic():
    a = BoundingBox(0, 0, 0.5, 0.5)
    b = BoundingBox(0.25, 0.25, 0.75, 0.75)
    assert box_iou(a, b) == pytest.approx(1 / 7, abs=1e-9)
    assert box_iou(a, b) == box_iou(b, a)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, BoundingBox(0.6, 0.6, 0.9, 0.9)) == 0.0


def test_segment_iou_analytic():
    assert segment_iou(TimeSegment(0, 0.5), TimeSegment(0.25, 0.75)) == \
        pytest.approx(1 / 3, abs=1e-12)
    assert segment_iou(TimeSegment(0, 0.2), TimeSegment(0.2, 0.4)) == 0.0
    assert segment_iou(TimeSegment(0.3, 0.3), TimeSegment(0.3, 0.3)) == 1.0


def overlapping_boxes(rng):
    width, height = rng.uniform(0.2, 0.5, 2)
    x1, y1 = rng.uniform(0, 1 - 1.3 * np.array([width, height]))
    dx, dy = rng.uniform(0, 0.3, 2) * np.array([width, height])
    a = BoundingBox(x1, y1, x1 + width, y1 + height)
    b = BoundingBox(x1 + dx, y1 + dy, x1 + dx + width, y1 + dy + height)
    return a, b


@pytest.mark.slow
def test_box_iou_monte_carlo():
    rng = np.random.default_rng(7)
    samples = 4000000
    for _ in range(50):
        a, b = overlapping_boxes(rng)
        lo = np.array([min(a.x1, b.x1), min(a.y1, b.y1)])
        hi = np.array([max(a.x2, b.x2), max(a.y2, b.y2)])
        points = lo + rng.random((samples, 2)) * (hi - lo)
        inA = (points[:, 0] >= a.x1) & (points[:, 0] <= a.x2) & \
              (points[:, 1] >= a.y1) & (points[:, 1] <= a.y2)
        inB = (points[:, 0] >= b.x1) & (points[:, 0] <= b.x2) & \
              (points[:, 1] >= b.y1) & (points[:, 1] <= b.y2)
        estimate = np.sum(inA & inB) / np.sum(inA | inB)
        assert abs(estimate - box_iou(a, b)) < 2e-3


@pytest.mark.slow
def test_segment_iou_monte_carlo():
    rng = np.random.default_rng(8)
    samples = 4000000
    for _ in range(50):
        length = rng.uniform(0.1, 0.5)
        t1 = rng.uniform(0, 1 - 1.3 * length)
        shift = rng.uniform(0, 0.3) * length
        a = TimeSegment(t1, t1 + length)
        b = TimeSegment(t1 + shift, t1 + shift + length)
        points = a.t1 + rng.random(samples) * (b.t2 - a.t1)
        inA = (points >= a.t1) & (points <= a.t2)
        inB = (points >= b.t1) & (points <= b.t2)
        estimate = np.sum(inA & inB) / np.sum(inA | inB)
        assert abs(estimate - segment_iou(a, b)) < 2e-3
