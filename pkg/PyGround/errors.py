"""Exceptions raised by PyGround.

Every error derives from GroundError and from the built-in exception a caller
would naturally expect for that situation, so ``except ValueError`` keeps
working for code that does not know about PyGround.
"""


class GroundError(Exception):
    """Base class of all PyGround errors."""


# grounding codec
class InvalidBox(GroundError, ValueError):
    pass


class InvalidSegment(GroundError, ValueError):
    pass


# modality encoders
class ShapeMismatch(GroundError, ValueError):
    pass


class EmptyVideo(GroundError, ValueError):
    pass


class EmptyAudio(GroundError, ValueError):
    pass


class BadDim(GroundError, ValueError):
    pass


# fusion model
class UnknownChar(GroundError, ValueError):
    def __init__(self, char, offset):
        self.char = char
        self.offset = offset
        message = 'character %r at offset %i is not in the charset' % \
                  (char, offset)
        GroundError.__init__(self, message)


class SlotMismatch(GroundError, ValueError):
    pass


class DimMismatch(GroundError, ValueError):
    pass


class EmptyMask(GroundError, ValueError):
    pass


class CheckpointError(GroundError, ValueError):
    pass


# dataset pipeline
class UnknownTask(GroundError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ''


class EmptyPool(GroundError, ValueError):
    pass


class MissingField(GroundError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ''


class SourceNotFound(GroundError, FileNotFoundError):
    pass


class EmptyCorpus(GroundError, ValueError):
    pass


class BadAlpha(GroundError, ValueError):
    pass


class EmptyPrevious(GroundError, ValueError):
    pass


# trainer
class PlanError(GroundError, ValueError):
    """A stage plan or configuration file failed validation."""


class MissingPreviousTerm(GroundError, ValueError):
    pass


class UnknownSet(GroundError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ''


class NonFiniteLoss(GroundError, ArithmeticError):
    def __init__(self, step, value):
        self.step = step
        self.value = value
        message = 'non-finite loss %r at step %i' % (value, step)
        GroundError.__init__(self, message)


# evaluator
class MissingGroundTruth(GroundError, ValueError):
    pass


class UnlabeledProbe(GroundError, ValueError):
    pass
