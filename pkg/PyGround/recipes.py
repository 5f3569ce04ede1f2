"""Ready-made toy runs: worlds -> stage corpora -> pipeline configuration."""
import logging
import os

import numpy as np

from PyGround.base import GroundObject
from PyGround.config import PipelineConfig, default_config, dump_config
from PyGround.dataset import STAGE_TASKS, build_stage_corpus
from PyGround.worlds import WORLD_KINDS, WorldConfig, gen_world

logger = logging.getLogger(__name__)

# held-out worlds use a seed this far from the training seed
HELD_OUT_OFFSET = 1000


class ToySizes(GroundObject):
    """Scene counts of the training and held-out worlds."""
    def __init__(self,
                 image=400,
                 video=300,
                 audio=150,
                 held_out_image=200,
                 held_out_video=200,
                 ):
        GroundObject.__init__(self, locals())

    def __setattr__(self, key, value):
        self._check_type(int, key, value)
        self._check_range(key, value, 1, None)
        GroundObject.__setattr__(self, key, value)


def generate_worlds(root, seed, sizes: ToySizes = None,
                    worldConfig: WorldConfig = None):
    """Training worlds under root/train/<kind> and held-out image and video
    worlds under root/test/<kind>; returns ({kind: dir}, {kind: dir},
    written paths)."""
    sizes = sizes or ToySizes()
    train, test, written = {}, {}, []
    for kind in WORLD_KINDS:
        path = os.path.join(str(root), 'train', kind)
        written.extend(gen_world(kind, seed, getattr(sizes, kind),
                                 worldConfig).write(path))
        train[kind] = path
    for kind in ('image', 'video'):
        path = os.path.join(str(root), 'test', kind)
        count = getattr(sizes, 'held_out_%s' % kind)
        written.extend(gen_world(kind, seed + HELD_OUT_OFFSET, count,
                                 worldConfig).write(path))
        test[kind] = path
    return train, test, written


def build_corpora(root, worlds, seed, stageTasks=None):
    """One corpus per stage from all training worlds; stageTasks overrides
    the task set of individual stages."""
    stageTasks = stageTasks or {}
    corpusDir = os.path.join(str(root), 'corpora')
    os.makedirs(corpusDir, exist_ok=True)
    paths, written = {}, []
    sources = [worlds[kind] for kind in sorted(worlds)]
    for stage in (1, 2, 3):
        rng = np.random.default_rng([seed, stage])
        path = os.path.join(corpusDir, 'stage%i.jsonl' % stage)
        build = build_stage_corpus(stage, sources, rng, path,
                                   tasks=stageTasks.get(stage,
                                                        STAGE_TASKS[stage]))
        paths[stage] = path
        written.extend([build.path, build.report_path])
    return paths, written


def toy_pipeline(root, seed=0, sizes: ToySizes = None, alpha=0.25,
                 adapter='mlp2x_gelu', stageTasks=None, stepScale=1.0):
    """Generate data under root and return (config, held-out worlds,
    written paths); the configuration is also written to root/toy.yaml."""
    train, test, written = generate_worlds(root, seed, sizes)
    corpora, corpusFiles = build_corpora(root, train, seed, stageTasks)
    written.extend(corpusFiles)
    config = default_config('toy', corpora, seed,
                            os.path.join(str(root), 'run'), alpha)
    config.llm.adapter = adapter
    config.llm.seed = seed
    config.encoder.seed = seed
    scale_steps(config, stepScale)
    written.append(dump_config(config, os.path.join(str(root), 'toy.yaml')))
    return config, test, written


def scale_steps(config: PipelineConfig, factor):
    """Shrink (or grow) every step budget, keeping at least one step."""
    if factor == 1.0:
        return config
    config.language_warmup.steps = max(
        1, int(round(config.language_warmup.steps * factor))) \
        if config.language_warmup.steps else 0
    for plan in config.stages:
        if plan.steps:
            plan.steps = max(1, int(round(plan.steps * factor)))
    return config
