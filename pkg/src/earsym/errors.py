"""Exception hierarchy.

Every error raised by the package derives from :class:`EarSymError`.  The two
intermediate classes map onto CLI exit codes: :class:`InputError` -> 2,
:class:`ComputationError` -> 3.
"""


class EarSymError(Exception):
    exit_code = 1


class InputError(EarSymError, ValueError):
    exit_code = 2


class ComputationError(EarSymError, ValueError):
    exit_code = 3


# -- input problems -----------------------------------------------------------

class ParseError(InputError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class DuplicateId(ParseError):
    def __init__(self, image_id, first_line, second_line, path=None):
        self.image_id = image_id
        self.first_line = first_line
        self.second_line = second_line
        super().__init__(
            f"duplicate id {image_id!r} on lines {first_line} and {second_line}",
            line=second_line,
            path=path,
        )


class MagicMismatch(InputError):
    pass


class DimMismatch(InputError):
    pass


class TruncatedFile(InputError):
    pass


class NonMatchingDimensions(InputError):
    pass


class InvalidConfig(InputError):
    pass


class InvalidRotation(InputError):
    pass


class MissingSideLabel(InputError):
    pass


class MissingEmbedding(InputError):
    pass


class UnlabelableImage(InputError):
    pass


class SubjectNotInGallery(InputError):
    pass


class EmptyGallery(InputError):
    pass


class EmptyImage(InputError):
    pass


# -- computation problems -----------------------------------------------------

class EmptyMask(ComputationError):
    pass


class DegenerateMask(ComputationError):
    pass


class EmptyChordList(ComputationError):
    pass


class ZeroVector(ComputationError):
    pass


class EmptyScoreList(ComputationError):
    pass


class TooFewScores(ComputationError):
    pass


class TooFewImages(ComputationError):
    pass
