from PyGround.evaluator import EvalConfig, eval_rec, eval_tvg, load_items
from PyGround.Extensions.curves import plot_threshold_curves
from PyGround.worlds import gen_world

import example_tools

# score oracle answers, a few of them replaced by unusable text
root = example_tools.output_dir('eval_worlds')
gen_world('image', 11, 20).write(root + '/image')
gen_world('video', 11, 20).write(root + '/video')

config = EvalConfig()
curves = {}
for task, world, evaluate in (('rec', 'image', eval_rec),
                              ('tvg', 'video', eval_tvg)):
    items = load_items(task, root + '/' + world)
    corrupt = set(item.id for item in items[::4])
    predictions = example_tools.oracle_predictions(items, corrupt)
    report = evaluate(predictions, items, config)
    report.write(example_tools.output_path('%s.json' % task))
    print(report.table())
    curves[task] = report.curve(config.curve_thresholds())

plot_threshold_curves(curves, example_tools.output_name('04_evaluate'))
