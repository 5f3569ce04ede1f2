import math

from PyGround.base import GraceElement
from PyGround.Plotting.dataset import DataSet

INDEX_ORIGIN = 0


class Title(GraceElement):
    def __init__(self, parent,
                 text='',
                 size=1.5,
                 ):
        GraceElement.__init__(self, parent, locals())

    def __str__(self):
        return ('@    title "%(text)s"\n'
                '@    title size %(size)s') % self


class View(GraceElement):
    def __init__(self, parent,
                 xmin=0.15,
                 xmax=1.15,
                 ymin=0.15,
                 ymax=0.85,
                 ):
        GraceElement.__init__(self, parent, locals())

    def __str__(self):
        return ('@    view xmin %(xmin)s\n'
                '@    view xmax %(xmax)s\n'
                '@    view ymin %(ymin)s\n'
                '@    view ymax %(ymax)s') % self


class World(GraceElement):
    def __init__(self, parent,
                 xmin=0,
                 xmax=1,
                 ymin=0,
                 ymax=1,
                 ):
        GraceElement.__init__(self, parent, locals())

    def __str__(self):
        return ('@    world xmin %(xmin)s\n'
                '@    world xmax %(xmax)s\n'
                '@    world ymin %(ymin)s\n'
                '@    world ymax %(ymax)s') % self


class Legend(GraceElement):
    def __init__(self, parent,
                 onoff='on',
                 loc=(0.85, 0.8),
                 char_size=1.0,
                 ):
        GraceElement.__init__(self, parent, locals())
        self._formatting_template = {'loc': '%.6f, %.6f'}

    def __setattr__(self, key, value):

        # check Legend specific attributes
        if key == 'loc':
            self._check_type(tuple, key, value)
        elif key == 'onoff':
            self._check_membership(key, value, ('on', 'off'))

        GraceElement.__setattr__(self, key, value)

    def __str__(self):
        return ('@    legend %(onoff)s\n'
                '@    legend loctype view\n'
                '@    legend %(loc)s\n'
                '@    legend char size %(char_size)s') % self


class Axis(GraceElement):
    """One axis with its label, major tick spacing and tick label
    precision."""
    def __init__(self, parent, orientation,
                 label='',
                 major=0.5,
                 minor_ticks=1,
                 prec=1,
                 ):
        GraceElement.__init__(self, parent, locals())

    def __setattr__(self, key, value):

        # check Axis specific attributes
        if key == 'orientation':
            self._check_membership(key, value, ('x', 'y'))
        elif key == 'major':
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, None, includeMin=False)
        elif key in ('minor_ticks', 'prec'):
            self._check_type(int, key, value)
            self._check_range(key, value, 0, None)

        GraceElement.__setattr__(self, key, value)

    def __str__(self):
        return ('@    %(orientation)saxis on\n'
                '@    %(orientation)saxis label "%(label)s"\n'
                '@    %(orientation)saxis tick major %(major)s\n'
                '@    %(orientation)saxis tick minor ticks %(minor_ticks)s\n'
                '@    %(orientation)saxis ticklabel format decimal\n'
                '@    %(orientation)saxis ticklabel prec %(prec)s') % self


class Graph(GraceElement):
    def __init__(self, parent, index,
                 onoff='on',
                 hidden='false',
                 type='XY',
                 ):
        GraceElement.__init__(self, parent, locals())
        self.title = Title(self)
        self.view = View(self)
        self.world = World(self)
        self.legend = Legend(self)
        self.xaxis = Axis(self, 'x')
        self.yaxis = Axis(self, 'y')
        self.datasets = []
        self._datasetIndex = INDEX_ORIGIN

    def __str__(self):
        return ('@g%(index)s %(onoff)s\n'
                '@g%(index)s hidden %(hidden)s\n'
                '@g%(index)s type %(type)s\n'
                '@with g%(index)s\n'
                '%(world)s\n'
                '%(view)s\n'
                '%(title)s\n'
                '%(legend)s\n'
                '%(xaxis)s\n'
                '%(yaxis)s') % self + ''.join(
                    '\n' + str(dataset) for dataset in self.datasets)

    def add_dataset(self, data, cls=DataSet, *args, **kwargs):

        # make sure that cls is a subclass of DataSet
        if not issubclass(cls, DataSet):
            message = '%s is not a subclass of DataSet' % cls.__name__
            raise TypeError(message)

        dataset = cls(self, data, self._datasetIndex, *args, **kwargs)
        self.datasets.append(dataset)

        # set a distinct colour for each new dataset
        colors = self.root.colors.line_colors()
        dataset.line.color = colors[self._datasetIndex % len(colors)]
        dataset.symbol.color = dataset.line.color
        dataset.symbol.fill_color = dataset.line.color

        self._datasetIndex += 1
        return dataset

    def set_labels(self, xLabel, yLabel):
        self.xaxis.label = xLabel
        self.yaxis.label = yLabel

    def limits(self):
        bounds = [d.limits() for d in self.datasets
                  if d.hidden == 'false' and d.limits() is not None]
        if not bounds:
            return None
        return (min(b[0] for b in bounds), min(b[1] for b in bounds),
                max(b[2] for b in bounds), max(b[3] for b in bounds))

    def autoscale(self, padx=0.0, pady=0.05):
        """Set the world to the data limits plus a relative pad and pick
        round tick spacings."""
        limits = self.limits()
        if limits is None:
            return
        xmin, ymin, xmax, ymax = limits
        xspan = (xmax - xmin) or 1.0
        yspan = (ymax - ymin) or 1.0
        self.world.configure(xmin=xmin - padx * xspan,
                             xmax=xmax + padx * xspan,
                             ymin=ymin - pady * yspan,
                             ymax=ymax + pady * yspan)
        self.xaxis.major = nice_step(self.world.xmax - self.world.xmin)
        self.yaxis.major = nice_step(self.world.ymax - self.world.ymin)

    def _repr_data(self):
        lines = []
        for dataset in self.datasets:
            lines.append('@target G%i.S%i' % (self.index, dataset.index))
            lines.append('@type %s' % dataset.type)
            lines.append(dataset._repr_data())
        return '\n'.join(lines)


def nice_step(span, ticks=5):
    """1, 2 or 5 times a power of ten, about span / ticks."""
    if span <= 0:
        return 1.0
    raw = span / float(ticks)
    power = 10 ** math.floor(math.log10(raw))
    for factor in (1, 2, 5, 10):
        if raw <= factor * power:
            return factor * power
    return 10 * power
