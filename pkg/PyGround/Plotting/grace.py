"""Grace (.agr) project files for training traces and metric curves."""
import logging
import os

from PyGround.base import GraceElement
from PyGround.Plotting.colors import DefaultColorScheme
from PyGround.Plotting.graph import Graph, INDEX_ORIGIN

logger = logging.getLogger(__name__)

HEADER_COMMENT = '# written by PyGround'


class Grace(GraceElement):
    def __init__(self,
                 width=792,
                 height=612,
                 version='50114',
                 colors=None,
                 ):
        GraceElement.__init__(self, None, locals())

        # set these first, so that graphs inherit this color scheme
        self.colors = colors or DefaultColorScheme()
        self._graphIndex = INDEX_ORIGIN
        self.graphs = []

    def __setattr__(self, key, value):

        # check Grace specific attributes
        if key == 'width' or key == 'height':
            self._check_type(int, key, value)
            self._check_range(key, value, 0, None)
        elif key == 'version':
            self._check_type(str, key, value)

        GraceElement.__setattr__(self, key, value)

    def _header_string(self):
        lines = []
        lines.append('@version %s' % self.version)
        lines.append('@page size %i, %i' % (self.width, self.height))
        lines.append(str(self.colors))
        return '\n'.join(lines)

    def __str__(self):
        lines = ['# Grace project file', HEADER_COMMENT,
                 self._header_string()]
        lines.extend(str(graph) for graph in self.graphs)
        lines.extend(graph._repr_data() for graph in self.graphs
                     if graph.datasets)
        return '\n'.join(lines) + '\n'

    def add_graph(self, cls=Graph, *args, **kwargs):

        # make sure that cls is a subclass of Graph
        if not issubclass(cls, Graph):
            message = '%s is not a subclass of Graph' % cls.__name__
            raise TypeError(message)

        graph = cls(self, self._graphIndex, *args, **kwargs)
        self.graphs.append(graph)
        self._graphIndex += 1
        return graph

    def write_agr(self, filename='temp.agr'):
        """Write the project; '.agr' is appended when missing."""
        if not filename.split('.')[-1].upper() == 'AGR':
            filename = filename + '.agr'
        directory = os.path.dirname(filename)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(filename, 'w', encoding='utf-8') as outfile:
            outfile.write(str(self))
        logger.info('wrote %s', filename)
        return filename
