"""Exception types raised across the toolkit.

``InputError`` subclasses signal bad files, flags or data shapes; the CLI maps
them to exit code 2. ``NumericError`` subclasses signal a failure of the
numerical pipeline itself and map to exit code 3.
"""


class DemtdError(Exception):
    exit_code = 3


class InputError(DemtdError, ValueError):
    exit_code = 2


class NumericError(DemtdError, ArithmeticError):
    exit_code = 3


class MissingFile(InputError, FileNotFoundError):
    pass


class HeaderParse(InputError):
    pass


class SizeMismatch(InputError):
    pass


class NonFinite(InputError):
    pass


class NonBinary(InputError):
    pass


class EmptyMask(InputError):
    pass


class TooSmall(InputError):
    pass


class BadParam(InputError):
    pass


class DuplicateId(InputError):
    pass


class DimMismatch(InputError):
    pass


class BasisMismatch(InputError):
    pass


class SingleClass(InputError):
    pass


class EmptyTrainSet(InputError):
    pass


class TooFewSamples(InputError):
    pass


class SingularP(InputError):
    pass


class SingularH(NumericError):
    pass


class NoValidPairs(NumericError):
    pass
