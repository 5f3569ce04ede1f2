import numpy as np

from PyGround.dataset import build_stage_corpus, load_corpus
from PyGround.recipes import generate_worlds

import example_tools

# training worlds, then one corpus per stage
root = example_tools.output_dir('corpora_run')
train, heldOut, written = generate_worlds(root, 3, example_tools.tiny_sizes())
for stage in (1, 2, 3):
    build = build_stage_corpus(stage, [train[k] for k in sorted(train)],
                               np.random.default_rng([3, stage]),
                               example_tools.output_path(
                                   'corpora_run', 'stage%i.jsonl' % stage))
    report = build.report
    print('stage %i: %i raw, %i kept, %i rejected, %i lines' % (
        stage, report['raw'], report['kept'], report['rejected'],
        report['lines']))

# a multi-turn stage-3 conversation
for sample in load_corpus(build.path):
    if len(sample.turns) > 2:
        for role, text in sample.turns:
            print('  %-9s %s' % (role + ':', text))
        break
