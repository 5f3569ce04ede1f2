from PyGround.Plotting.dataset import DataSet
from PyGround.Plotting.grace import Grace
from PyGround.Plotting.graph import Graph
from PyGround.evaluator import eval_rec, load_items
from PyGround.worlds import gen_world

import example_tools


class IoUPoints(DataSet):
    def __init__(self, *args, **kwargs):
        DataSet.__init__(self, *args, **kwargs)

        # circles without a connecting line
        self.symbol.configure(shape=1, size=0.4)
        self.line.configure(type=0, linestyle=0)


class IoUGraph(Graph):
    """IoU of every item of an evaluation report, in item order."""
    def __init__(self, parent, index, report):
        Graph.__init__(self, parent, index)
        data = [(i, record.iou) for i, record in enumerate(report.items)]
        self.add_dataset(data, IoUPoints, legend=report.task)
        self.set_labels('item', 'IoU')
        self.autoscale()


# jittered oracle boxes, so that IoUs spread out
root = example_tools.output_dir('subclass_world')
gen_world('image', 5, 15).write(root)
items = load_items('rec', root)
predictions = {}
for index, item in enumerate(items):
    x1, y1, x2, y2 = item.target
    shift = 0.01 * (index % 7)
    predictions[item.id] = '[%.3f,%.3f,%.3f,%.3f]' % (
        x1, y1, min(1.0, x2 + shift), min(1.0, y2 + shift))
report = eval_rec(predictions, items)

grace = Grace()
grace.add_graph(IoUGraph, report)
grace.write_agr(example_tools.output_name('05_subclass'))
print('accuracy %.3f over %i items' % (report.metrics['rec_accuracy'],
                                        report.n))
