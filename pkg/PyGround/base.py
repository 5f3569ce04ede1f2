import copy

class GroundObject(object):
    """Most of the configuration classes in PyGround are basically just
    dictionaries with validated attributes and a place to specify defaults.
    This class does the work that all of them need to do.

    Subclasses list their attributes as keyword arguments of __init__ and
    pass locals() here; every keyword becomes an attribute and is remembered
    as a default attribute, so that as_dict() and from_dict() can round-trip
    the object through a configuration file.  Every assignment goes through
    __setattr__, where subclasses add their own checks before deferring to
    this class."""
    def __init__(self, attrs):

        # set all key, value pairs in attrs to attributes of self
        self._set_kwargs_attributes(attrs)

    def _set_kwargs_attributes(self, attrDict):
        """This sets all of the arguments that are given as default arguments
        as the attributes of the class."""
        attrDict = dict(attrDict)

        # self and the bookkeeping names are never attributes
        for reserved in ['self', '__class__', 'kwargs']:
            attrDict.pop(reserved, None)

        for key, value in attrDict.items():
            setattr(self, key, value)

        # remember the order in which they were declared
        object.__setattr__(self, '_defaultAttributes', list(attrDict))

    def _check_type(self, allowedTypes, key, value):
        """Throw error if value is not of a type in allowedTypes."""

        # bool is an int, but never a meaningful count or size
        correctType = isinstance(value, allowedTypes)
        if isinstance(value, bool) and bool not in _as_tuple(allowedTypes):
            correctType = False

        if not correctType:
            allowedString = ' or '.join(t.__name__
                                        for t in _as_tuple(allowedTypes))
            actualString = type(value).__name__
            message = '%s attribute must be a %s (got %s instead)' % \
                      (key, allowedString, actualString)
            raise TypeError(message)

    def _check_range(self, key, value, min_, max_,
                     includeMin=True, includeMax=True):
        """Throw error if value is not in between min_ and max_."""

        # check for lower bound (and make nice error message if it fails)
        gtString = '>'
        if min_ is not None:
            if includeMin:
                gtString = '>='
                passMin = value >= min_
            else:
                passMin = value > min_
        else:
            passMin = True
            min_ = '-inf'

        # check for upper bound
        ltString = '<'
        if max_ is not None:
            if includeMax:
                ltString = '<='
                passMax = value <= max_
            else:
                passMax = value < max_
        else:
            passMax = True
            max_ = '+inf'

        if not (passMin and passMax):
            message = '%s does not satisfy %s %s %s %s %s' % \
                      (value, min_, gtString, key, ltString, max_)
            raise ValueError(message)

    def _check_membership(self, key, value, allowed):
        """Throw an error if value is not in allowed (any container with a
        __contains__ method defined)."""
        if value not in allowed:
            message = '%s = %s is not in %s' % (key, value, tuple(allowed))
            raise ValueError(message)

    def __setattr__(self, key, value):

        # conventions shared by every configuration object
        if key == 'seed':
            self._check_type(int, key, value)
            self._check_range(key, value, 0, None)
        elif key.endswith('_ratio'):
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, 1, includeMax=False)
        elif key.endswith('_threshold'):
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, 1, includeMin=False)
        elif key.endswith('_layers') or key.endswith('_heads'):
            self._check_type(int, key, value)
            self._check_range(key, value, 0, None)

        # actually set the value of the attribute here
        object.__setattr__(self, key, value)

    def __eq__(self, other):
        """Two objects are the same if all of their attributes are the
        same."""
        if not isinstance(other, self.__class__):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __repr__(self):
        items = ', '.join('%s=%r' % item for item in self.as_dict().items())
        return '%s(%s)' % (self.__class__.__name__, items)

    def configure(self, **kwargs):
        for attr, value in kwargs.items():
            if attr not in self._defaultAttributes:
                message = "'%s' is not an attribute of %s" % \
                          (attr, self.__class__.__name__)
                raise KeyError(message)
            setattr(self, attr, value)
        return self

    def as_dict(self):
        """Return the default attributes as a plain (deep-copied) dict."""
        return dict((attr, copy.deepcopy(getattr(self, attr)))
                    for attr in self._defaultAttributes)

    @classmethod
    def from_dict(cls, attrs):
        """Build an instance from a mapping; unknown keys are an error."""
        attrs = dict(attrs or {})
        instance = cls()
        unknown = sorted(set(attrs) - set(instance._defaultAttributes))
        if unknown:
            message = 'unknown %s keys: %s' % (cls.__name__, ', '.join(unknown))
            raise KeyError(message)
        return instance.configure(**attrs)


class BaseSet(object):
    """This is a container class that stores objects by name and index.  This
    is meant to be subclassed."""
    def __init__(self, items=()):

        # store items and index
        self.items = []
        self._index = 0

        # for quick lookup, store mappings
        self.name2item = {}
        self.index2item = {}
        for item in items:
            self._register(item)

    def _register(self, item):
        if item.name in self.name2item:
            message = "name '%s' cannot refer to two items" % (item.name,)
            raise ValueError(message)
        self.items.append(item)
        self.name2item[item.name] = item
        self.index2item[item.index] = item
        self._index = max(self._index, item.index + 1)

    def __contains__(self, value):
        """Returns true if either integer index or string value is in."""
        if isinstance(value, str):
            return value in self.name2item
        elif isinstance(value, int):
            return value in self.index2item
        else:
            return False

    def __str__(self):
        """Returns the string representation of each item in the set (sorted
        by index and separated by newlines)."""
        ordered = sorted(self.items, key=lambda item: item.index)
        return '\n'.join(str(item) for item in ordered)

    # iterate over items (objects that is, not index or name)
    def __len__(self): return len(self.items)
    def __iter__(self): return iter(self.items)

    def add_item(self, ItemClass, *args, **kwargs):
        item = ItemClass(self._index, *args, **kwargs)
        self._register(item)
        return item

    def get_item_by_name(self, name):
        try:
            return self.name2item[name]
        except KeyError:
            message = "'%s' is not a valid name" % name
            raise KeyError(message)


def _as_tuple(types):
    if isinstance(types, (list, tuple)):
        return tuple(types)
    return (types,)


class GraceElement(GroundObject):
    """A GroundObject that belongs to a parent in a Grace project tree and
    renders itself with ``template % self``.

    __getitem__ returns the formatted string of an attribute, using
    _formatting_template when it holds a format for that attribute."""
    def __init__(self, parent, attrs):
        attrs = dict(attrs)
        attrs.pop('parent', None)
        object.__setattr__(self, 'parent', parent)
        object.__setattr__(self, '_formatting_template', {})
        GroundObject.__init__(self, attrs)

    @property
    def root(self):
        node = self
        while node.parent is not None:
            node = node.parent
        return node

    def __getitem__(self, key):
        value = getattr(self, key)
        try:
            return self._formatting_template[key] % value
        except KeyError:
            return str(value)
