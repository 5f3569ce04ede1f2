import os

from PyGround.codec import (BoundingBox, TimeSegment, serialize_box,
                            serialize_segment)
from PyGround.recipes import ToySizes

OUTPUT_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                          'output')


def output_name(path, extension='agr'):
    """path inside the example output directory, with a new extension."""
    filename = os.path.join(OUTPUT_DIR, os.path.basename(path))
    base, oldExtension = os.path.splitext(filename)
    return '.'.join((base, extension))


def output_path(*parts):
    path = os.path.join(OUTPUT_DIR, *parts)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    return path


def output_dir(*parts):
    path = os.path.join(OUTPUT_DIR, *parts)
    os.makedirs(path, exist_ok=True)
    return path


def tiny_sizes():
    return ToySizes(image=24, video=16, audio=8, held_out_image=12,
                    held_out_video=12)


def oracle_predictions(items, corrupt=()):
    """Ground truth rendered as model answers; ids in corrupt answer with
    nothing parseable."""
    predictions = {}
    for item in items:
        if item.id in corrupt:
            predictions[item.id] = 'i do not know'
        elif len(item.target) == 4:
            predictions[item.id] = serialize_box(
                BoundingBox.from_list(item.target))
        else:
            predictions[item.id] = serialize_segment(
                TimeSegment.from_list(item.target))
    return predictions
