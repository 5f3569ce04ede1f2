from PyGround.Extensions.curves import plot_reports
from PyGround.recipes import toy_pipeline
from PyGround.trainer import run_pipeline

import example_tools

# the toy recipe with a tiny data and step budget; only shows the mechanics
root = example_tools.output_dir('train_run')
config, heldOut, written = toy_pipeline(root, seed=0,
                                        sizes=example_tools.tiny_sizes(),
                                        stepScale=0.01)
for plan in config.stages:
    plan.batch_size = 4
config.language_warmup.batch_size = 4
result = run_pipeline(config)

for report in result.reports:
    changed = [name for name in report.checksums_before
               if report.checksums_before[name] !=
               report.checksums_after[name]]
    print('stage %i: %i steps, loss %.3f -> %.3f, changed %s' % (
        report.stage, report.steps, report.loss[0], report.loss[-1],
        ', '.join(sorted(changed))))

# loss traces as a Grace project
plot_reports(result.reports, example_tools.output_name('03_train_tiny'),
             window=2)
