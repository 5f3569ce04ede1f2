"""Instruction template banks.

Each task owns a pool of questions.  Placeholders: <region> (a serialized
box), <exp> (a referring expression), <time> (a serialized segment),
<event> (an event description) and <object> (an object name for presence
probes).
"""
import json
import logging
import re
from typing import Dict, List, Optional

from PyGround.errors import EmptyPool, UnknownTask

logger = logging.getLogger(__name__)

PLACEHOLDER_PATTERN = re.compile(r'<(region|exp|time|event|object)>')

TASK_PLACEHOLDERS = {
    'image_captioning': set(),
    'reg': {'region'},
    'rec': {'exp'},
    'object_attribute': {'exp'},
    'video_captioning': set(),
    'video_dense_captioning': {'time'},
    'temporal_grounding': {'event'},
    'audio_captioning': set(),
    'sound_localization': set(),
    'object_presence': {'object'},
    }

TASKS = tuple(TASK_PLACEHOLDERS)

# three per task, as listed for the first two training stages (including the
# original "How mang" spelling)
BUILTIN_TEMPLATES = {
    'image_captioning': [
        'Provide a brief description of the given image.',
        'Write a terse but informative summary of the picture.',
        'Share a concise interpretation of the image provided.',
        ],
    'reg': [
        'What object is present within the specified region<region>?',
        'Can you identify the item within the region<region>?',
        'Describe the object located within the region<region>.',
        ],
    'rec': [
        'In this image, where is <exp> located?',
        'Can you identify the position of <exp> within this image?',
        'Please describe the location of <exp> in this image.',
        'Output the coordinate of <exp>.',
        ],
    'object_attribute': [
        'What color is this <exp>?',
        'How many <exp> are visible within this image?',
        'How mang <exp> are there in the image?',
        ],
    'video_captioning': [
        'Relay a brief, clear account of the video shown.',
        'Offer a succinct explanation of the footage presented.',
        "Present a compact description of the clip's key features.",
        ],
    'video_dense_captioning': [
        'Describe the content shown in the video clip<time> of this video.',
        'What can you tell me about the video segment<time> in this video?',
        'Can you provide a description of the video snippet<time>?',
        ],
    'temporal_grounding': [
        'When did <event> occur in the video?',
        'Tell me the timestamp when <event> happened.',
        'At what time does <event> take place in the video?',
        ],
    'audio_captioning': [
        'Analyze the audio and provide a description of its content.',
        'Examine the audio and describe the different sounds present.',
        'Provide a detailed summary of the auditory elements in the audio '
        'clip.',
        ],
    'sound_localization': [
        'What is the cause of the sound in this given image?',
        'Can you pinpoint the source of the sound in this image?',
        "Describe the location of the sound's origin in this image.",
        ],
    'object_presence': [
        'Is there <object> in the image?',
        'Does the image contain <object>?',
        'Can you see <object> in this image?',
        ],
    }


def placeholders(template: str) -> set:
    return set(PLACEHOLDER_PATTERN.findall(template))


class TemplateBank(object):
    """task -> list of templates, checked against the placeholders each task
    defines."""
    def __init__(self, templates: Optional[Dict[str, List[str]]] = None):
        self.templates = {}
        for task, pool in (templates or {}).items():
            self.extend(task, pool)

    @classmethod
    def builtin(cls, extensionPath=None):
        bank = cls(BUILTIN_TEMPLATES)
        if extensionPath is not None:
            bank.load_extensions(extensionPath)
        return bank

    def extend(self, task: str, pool: List[str]) -> None:
        if task not in TASK_PLACEHOLDERS:
            raise UnknownTask('unknown task: %s' % task)
        for template in pool:
            extra = placeholders(template) - TASK_PLACEHOLDERS[task]
            if extra:
                message = "template %r uses placeholders %s that task '%s' " \
                          "does not define" % (template, sorted(extra), task)
                raise ValueError(message)
            if template not in self.templates.setdefault(task, []):
                self.templates[task].append(template)

    def load_extensions(self, path) -> None:
        """A JSON file {task: [templates]} appended to the bank."""
        with open(path, encoding='utf-8') as inStream:
            extensions = json.load(inStream)
        for task, pool in extensions.items():
            self.extend(task, pool)
        logger.info('loaded template extensions for %i task(s) from %s',
                    len(extensions), path)

    def slice(self, task: str) -> List[str]:
        try:
            return list(self.templates[task])
        except KeyError:
            raise UnknownTask('unknown task: %s' % task)

    def __contains__(self, task):
        return task in self.templates


def load_template_bank(task: str, extensionPath=None) -> List[str]:
    """The built-in templates of one task plus any file extensions."""
    if task not in TASK_PLACEHOLDERS:
        raise UnknownTask('unknown task: %s' % task)
    return TemplateBank.builtin(extensionPath).slice(task)


def select_question(bankSlice: List[str], rng) -> str:
    """Uniform draw from the pool with a numpy Generator."""
    if not bankSlice:
        raise EmptyPool('question pool is empty')
    return bankSlice[int(rng.integers(len(bankSlice)))]
