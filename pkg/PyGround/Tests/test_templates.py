import json
from collections import Counter

import numpy as np
import pytest

from PyGround.errors import EmptyPool, UnknownTask
from PyGround.templates import (BUILTIN_TEMPLATES, TASK_PLACEHOLDERS,
                                TemplateBank, load_template_bank, placeholders,
                                select_question)


def test_builtin_templates_use_declared_placeholders():
    for task, pool in BUILTIN_TEMPLATES.items():
        assert len(pool) >= 3
        for template in pool:
            assert placeholders(template) <= TASK_PLACEHOLDERS[task]


def test_extend_checks_placeholders():
    bank = TemplateBank.builtin()
    bank.extend('rec', ['Where is <exp>?'])
    assert 'Where is <exp>?' in bank.slice('rec')
    with pytest.raises(ValueError):
        bank.extend('rec', ['Where is <event>?'])
    with pytest.raises(UnknownTask):
        bank.extend('segmentation', ['Segment it.'])
    with pytest.raises(UnknownTask):
        bank.slice('segmentation')


def test_extensions_file(tmp_path):
    path = tmp_path / 'extra.json'
    path.write_text(json.dumps({'temporal_grounding':
                                ['Find the moment of <event>.']}))
    pool = load_template_bank('temporal_grounding', str(path))
    assert pool[-1] == 'Find the moment of <event>.'
    assert len(pool) == len(BUILTIN_TEMPLATES['temporal_grounding']) + 1


def test_select_question_is_uniform():
    pool = BUILTIN_TEMPLATES['reg']
    rng = np.random.default_rng(5)
    draws = 30000
    counts = Counter(select_question(pool, rng) for _ in range(draws))
    expected = draws / float(len(pool))
    chiSquare = sum((counts[t] - expected) ** 2 / expected for t in pool)
    # df = 2, p = 0.001
    assert chiSquare < 13.82


def test_select_question_empty_pool(rng):
    with pytest.raises(EmptyPool):
        select_question([], rng)
