from PyGround.base import GraceElement

DATA_TYPES = ('xy', 'xydy')


class Symbol(GraceElement):
    def __init__(self, parent,
                 shape=0,
                 size=0.5,
                 color=1,
                 fill_color=1,
                 fill_pattern=1,
                 ):
        GraceElement.__init__(self, parent, locals())

    def __setattr__(self, key, value):

        # check Symbol specific attributes
        if key == 'shape':
            self._check_type(int, key, value)
            self._check_range(key, value, 0, 12, includeMax=False)

        GraceElement.__setattr__(self, key, value)

    def __str__(self):
        return ('@    s%(i)s symbol %(shape)s\n'
                '@    s%(i)s symbol size %(size)s\n'
                '@    s%(i)s symbol color %(color)s\n'
                '@    s%(i)s symbol fill color %(fill_color)s\n'
                '@    s%(i)s symbol fill pattern %(fill_pattern)s') % \
            dict(self.as_dict(), i=self.parent.index)


class Line(GraceElement):
    def __init__(self, parent,
                 type=1,
                 linestyle=1,
                 linewidth=2.0,
                 color=1,
                 ):
        GraceElement.__init__(self, parent, locals())

    def __setattr__(self, key, value):

        # check Line specific attributes
        if key == 'type':
            self._check_type(int, key, value)
            self._check_range(key, value, 0, 6, includeMax=False)
        elif key == 'linestyle':
            self._check_type(int, key, value)
            self._check_range(key, value, 0, 9, includeMax=False)

        GraceElement.__setattr__(self, key, value)

    def __str__(self):
        return ('@    s%(i)s line type %(type)s\n'
                '@    s%(i)s line linestyle %(linestyle)s\n'
                '@    s%(i)s line linewidth %(linewidth)s\n'
                '@    s%(i)s line color %(color)s') % \
            dict(self.as_dict(), i=self.parent.index)


class DataSet(GraceElement):
    """Rows of (x, y) or (x, y, dy) numbers."""
    def __init__(self, parent, data, index,
                 type='xy',
                 hidden='false',
                 comment='',
                 legend='',
                 ):
        GraceElement.__init__(self, parent, locals())
        self.symbol = Symbol(self)
        self.line = Line(self)

    def __setattr__(self, key, value):

        # check DataSet specific attributes
        if key == 'type':
            self._check_type(str, key, value)
            self._check_membership(key, value, DATA_TYPES)
        elif key == 'hidden':
            self._check_membership(key, value, ('true', 'false'))
        elif key in ('comment', 'legend'):
            self._check_type(str, key, value)
            if '"' in value:
                raise ValueError('%s cannot contain a double quote' % key)
        elif key == 'data':
            value = [tuple(float(v) for v in row) for row in value]

        GraceElement.__setattr__(self, key, value)

    def __str__(self):
        return ('@    s%(index)s hidden %(hidden)s\n'
                '@    s%(index)s type %(type)s\n'
                '%(symbol)s\n'
                '%(line)s\n'
                '@    s%(index)s comment "%(comment)s"\n'
                '@    s%(index)s legend "%(legend)s"') % self

    def limits(self):
        """(xmin, ymin, xmax, ymax) including error bars, or None."""
        if not self.data:
            return None
        xs = [row[0] for row in self.data]
        if self.type == 'xydy':
            ys = [row[1] + sign * row[2] for row in self.data
                  for sign in (-1, 1)]
        else:
            ys = [row[1] for row in self.data]
        return min(xs), min(ys), max(xs), max(ys)

    def _repr_data(self):
        lines = [' '.join(repr(v) for v in row) for row in self.data]
        lines.append('&')
        return '\n'.join(lines)
