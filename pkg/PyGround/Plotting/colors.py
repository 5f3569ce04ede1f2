from PyGround.base import BaseSet


class Color(object):
    """One '@map color' entry: an index, an RGB triple and a name."""
    def __init__(self, index, red, green, blue, name=''):
        self.index = index
        self.red = red
        self.green = green
        self.blue = blue
        self.name = name or ('color%i' % index)

    def __str__(self):
        return '@map color %i to (%i, %i, %i), "%s"' % \
            (self.index, self.red, self.green, self.blue, self.name)


class DefaultColorScheme(BaseSet):
    """The Grace default palette."""
    def __init__(self):
        BaseSet.__init__(self, [
            Color(0, 255, 255, 255, 'white'),
            Color(1, 0, 0, 0, 'black'),
            Color(2, 255, 0, 0, 'red'),
            Color(3, 0, 255, 0, 'green'),
            Color(4, 0, 0, 255, 'blue'),
            Color(5, 255, 255, 0, 'yellow'),
            Color(6, 188, 143, 143, 'brown'),
            Color(7, 220, 220, 220, 'grey'),
            Color(8, 148, 0, 211, 'violet'),
            Color(9, 0, 255, 255, 'cyan'),
            Color(10, 255, 0, 255, 'magenta'),
            Color(11, 255, 165, 0, 'orange'),
            Color(12, 114, 33, 188, 'indigo'),
            Color(13, 103, 7, 72, 'maroon'),
            Color(14, 64, 224, 208, 'turquoise'),
            Color(15, 0, 139, 0, 'green4'),
            ])

    def line_colors(self):
        """Indices to cycle through for datasets (no white)."""
        return [color.index for color in self.items if color.index != 0]
