from PyGround.Plotting.grace import Grace
from PyGround.Plotting.graph import Graph


class TraceGraph(Graph):
    """A per-step trace; window > 1 adds a running mean on top."""
    def __init__(self, parent, index, trace, label='loss', window=1):
        Graph.__init__(self, parent, index)
        data = [(step, value) for step, value in enumerate(trace)
                if value is not None]
        self.dataset = self.add_dataset(data, legend=label)
        self.dataset.line.linewidth = 1.0
        if window > 1 and len(data) >= window:
            smooth = running_mean(data, window)
            self.smooth = self.add_dataset(smooth,
                                           legend='%s (mean of %i)' %
                                           (label, window))
        self.set_labels('step', label)
        self.autoscale()
        self.world.xmin = 0


class LossTraceGraph(TraceGraph):
    """Training loss with the current and previous pool terms."""
    def __init__(self, parent, index, report, window=25):
        TraceGraph.__init__(self, parent, index, report.loss, 'loss', window)
        for name, trace in (('current term', report.loss_current),
                            ('previous term', report.loss_previous)):
            data = [(step, value) for step, value in enumerate(trace)
                    if value is not None]
            if data and report.alpha > 0:
                dataset = self.add_dataset(data, legend=name)
                dataset.line.linestyle = 3
                dataset.line.linewidth = 1.0
        self.title.text = 'stage %i (alpha %g)' % (report.stage, report.alpha)
        self.autoscale()
        self.world.xmin = 0


class ThresholdCurveGraph(Graph):
    """Metric as a function of the IoU threshold, one dataset per curve."""
    def __init__(self, parent, index, curves, metric='accuracy'):
        Graph.__init__(self, parent, index)
        for label, points in curves.items():
            dataset = self.add_dataset(points, legend=label)
            dataset.symbol.shape = 1
        self.set_labels('IoU threshold', metric)
        self.world.configure(xmin=0, xmax=1, ymin=0, ymax=1)
        self.xaxis.major = 0.2
        self.yaxis.major = 0.2


class SeedComparisonGraph(Graph):
    """Per-variant mean with a standard-deviation bar."""
    def __init__(self, parent, index, summary, metric='REC accuracy'):
        Graph.__init__(self, parent, index)
        for position, (label, (mean, std)) in enumerate(summary.items()):
            dataset = self.add_dataset([(position + 1, mean, std)],
                                       type='xydy', legend=label)
            dataset.symbol.shape = 2
            dataset.line.type = 0
        self.set_labels('variant', metric)
        self.world.configure(xmin=0, xmax=len(summary) + 1, ymin=0, ymax=1)
        self.xaxis.major = 1
        self.yaxis.major = 0.2


def running_mean(data, window):
    result = []
    for end in range(window, len(data) + 1):
        values = [v for _, v in data[end - window:end]]
        result.append((data[end - 1][0], sum(values) / window))
    return result


def plot_reports(reports, filename, window=25):
    """One loss graph per stage report, stacked in one project."""
    grace = Grace()
    count = len(reports)
    for row, report in enumerate(reports):
        graph = grace.add_graph(LossTraceGraph, report, window)
        top = 0.95 - row * 0.85 / count
        graph.view.configure(ymax=top, ymin=top - 0.85 / count + 0.07)
    return grace.write_agr(filename)


def plot_threshold_curves(curves, filename, metric='accuracy'):
    grace = Grace()
    grace.add_graph(ThresholdCurveGraph, curves, metric)
    return grace.write_agr(filename)


def plot_seed_comparison(summary, filename):
    grace = Grace()
    grace.add_graph(SeedComparisonGraph, summary)
    return grace.write_agr(filename)
