from PyGround.codec import (BoundingBox, TimeSegment, box_iou, parse_boxes,
                            parse_segments_with_rejections, serialize_box,
                            serialize_segment)

# boxes and segments become plain text the language model can emit
box = BoundingBox(0.1, 0.2, 0.4575, 0.9)
segment = TimeSegment(0.125, 0.5)
answer = 'the red square %s appears during %s' % (serialize_box(box),
                                                 serialize_segment(segment))
print(answer)

# and parse back out of free text
for span in parse_boxes(answer):
    print('box at chars %i..%i: %s' % (span.char_start, span.char_end,
                                       span.target))
segments, rejections = parse_segments_with_rejections(
    'from {0.10,0.40} and {0.70,0.20}')
print('segments: %s' % [s.target for s in segments])
print('rejected: %s' % [(r.text, r.reason) for r in rejections])

# IoU of two overlapping boxes is 1/7
print('IoU = %.6f' % box_iou(BoundingBox(0, 0, 0.5, 0.5),
                             BoundingBox(0.25, 0.25, 0.75, 0.75)))
