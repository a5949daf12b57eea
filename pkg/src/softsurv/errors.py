"""Exception hierarchy. Every error raised by the package derives from SSTError."""


class SSTError(Exception):
    pass


# data
class MissingColumn(SSTError):
    def __init__(self, col):
        super().__init__(f"missing column: {col!r}")
        self.col = col


class ParseError(SSTError):
    def __init__(self, row, col, value=None):
        super().__init__(f"cannot parse row {row}, column {col!r}: {value!r}")
        self.row, self.col = row, col


class NonPositiveTime(SSTError):
    def __init__(self, row=None):
        msg = "non-positive or non-finite time" + (f" at row {row}" if row is not None else "")
        super().__init__(msg)
        self.row = row


class BadEventFlag(SSTError):
    def __init__(self, row, value=None):
        super().__init__(f"event flag at row {row} is not 0/1: {value!r}")
        self.row = row


class AllMissingColumn(SSTError):
    def __init__(self, col):
        super().__init__(f"column {col!r} has no observed values")
        self.col = col


class TooFewRows(SSTError):
    pass


class SchemaMismatch(SSTError):
    pass


class MissingGroupColumn(SSTError):
    def __init__(self, msg="group labels are required"):
        super().__init__(msg)


# tree / leaf models
class DimensionMismatch(SSTError):
    pass


class TooFewEvents(SSTError):
    pass


class NonPositiveDerivative(SSTError):
    """ds/dy <= 0 at an observed event time; the likelihood term is undefined."""


class NonFinite(SSTError):
    pass


class EmptyRestrictedSet(SSTError):
    pass


class DegenerateCluster(SSTError):
    pass


# optimizer
class NonFiniteAtStart(SSTError):
    pass


# metrics
class NoComparablePairs(SSTError):
    pass


class UndefinedAtTime(SSTError):
    def __init__(self, t):
        super().__init__(f"time-dependent AUC undefined at t={t!r} (no cases or no controls)")
        self.t = t


class DegenerateKM(SSTError):
    pass


class DegenerateCensoring(SSTError):
    pass
