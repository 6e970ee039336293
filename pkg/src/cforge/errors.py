"""Exception hierarchy shared by every module.

Each error carries a short stable ``code`` used by the command-line front end
as the one-line prefix on standard error.
"""

from __future__ import annotations


class CforgeError(Exception):
    code = "E_GENERIC"
    exit_code = 2


class UsageError(CforgeError):
    code = "E_USAGE"
    exit_code = 1


class ConfigError(UsageError):
    code = "E_CONFIG"


class SchemaError(CforgeError):
    code = "E_SCHEMA"


class ParseError(CforgeError):
    code = "E_PARSE"


class EmptyInputError(CforgeError):
    code = "E_EMPTY"


class DegenerateSeriesError(CforgeError):
    code = "E_DEGENERATE"


class RankError(CforgeError):
    code = "E_RANK"


class ShapeError(CforgeError):
    code = "E_SHAPE"


class ContractError(CforgeError):
    code = "E_CONTRACT"


class NumericError(CforgeError):
    code = "E_NUMERIC"


class VocabularyError(CforgeError):
    code = "E_VOCAB"


class DataError(CforgeError):
    code = "E_DATA"


class DomainError(CforgeError):
    code = "E_DOMAIN"


class SampleSizeError(CforgeError):
    code = "E_SAMPLE_SIZE"


class SingularityError(CforgeError):
    code = "E_SINGULAR"


class WindowError(CforgeError):
    code = "E_WINDOW"


class SchemeError(CforgeError):
    code = "E_SCHEME"


class ProcedureError(CforgeError):
    code = "E_PROCEDURE"
