"""Exception hierarchy.

Everything derives from ``ValueError`` so callers that do not care about the
distinction can catch one type. The CLI maps :class:`DataError` to exit code 2
and :class:`ComputationError` to exit code 3.
"""


class DataError(ValueError):
    """Input could not be read or parsed, or inputs are inconsistent."""


class ParseError(DataError):
    def __init__(self, message, path=None, line_no=None):
        self.path = path
        self.line_no = line_no
        where = ""
        if path is not None:
            where = f"{path}:"
        if line_no is not None:
            where += f"{line_no}:"
        super().__init__(f"{where} {message}" if where else message)


class InventoryMismatchError(DataError):
    """Two objects were built over different phoneme inventories or SIL settings."""


class ComputationError(ValueError):
    """A well-formed input produced nothing to compute on."""


class EmptyDistributionError(ComputationError):
    pass


class NoUsableSentencesError(ComputationError):
    pass
