import json

from PyGround.worlds import gen_pope_probes, gen_world

import example_tools

# small worlds of each kind, written next to this script
for kind, count in (('image', 12), ('video', 8), ('audio', 6)):
    world = gen_world(kind, 7, count)
    paths = world.write(example_tools.output_dir('worlds', kind))
    print('%s world: %i items, %i annotations, %i files' % (
        kind, len(world.manifest['items']), len(world.annotations),
        len(paths)))
    print('  e.g. %s' % json.dumps(world.annotations[1], sort_keys=True))

# object-presence probes from the image world
world = gen_world('image', 7, 12)
for strategy in ('random', 'popular', 'adversarial'):
    probes = gen_pope_probes(world.manifest, strategy, seed=0)
    probes.write(example_tools.output_path('probes.%s.jsonl' % strategy))
    print('%-12s %i probes, yes fraction %.2f, first no: %s' % (
        strategy, len(probes), probes.yes_fraction, probes.probes[1].object))
