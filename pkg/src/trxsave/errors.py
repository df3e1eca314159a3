"""Exception hierarchy shared by all trxsave modules.

The CLI maps these onto exit codes: ConfigurationError -> 2,
DataError -> 3, InvariantError -> 4.
"""


class TrxSaveError(Exception):
    """Base class for all trxsave errors."""


class ConfigurationError(TrxSaveError):
    """Invalid configuration: cell layout, saving parameters, policy sizes."""


class DataError(TrxSaveError):
    """Invalid input data: CSV parse failures, malformed traces, bad shapes."""


class InvariantError(TrxSaveError):
    """An internal state invariant was violated (e.g. disabling TRX 1)."""
