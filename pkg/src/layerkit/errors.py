"""Package-wide exception types.

Everything raised on purpose derives from LayerkitError so the CLI can map
expected failures (bad inputs, malformed files, infeasible requests) to exit
code 2 and keep exit code 1 for genuine bugs.
"""


class LayerkitError(Exception):
    """Base class for all errors raised by layerkit."""


class MalformedLineError(LayerkitError):
    """A JSONL line failed validation.

    Carries the 1-based line number and a short reason so CLI users can fix
    the offending record.
    """

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class EmptyDatasetError(LayerkitError):
    """An operation needed episodes/readings and got none (or too few)."""


class InsufficientDataError(LayerkitError):
    """Training set smaller than k."""

    def __init__(self, k: int, n: int):
        self.k = k
        self.n = n
        super().__init__(f"need at least k={k} training readings, got {n}")


class EmptyWindowError(LayerkitError):
    """Mode aggregation over an empty prediction window."""


class NoSupportError(LayerkitError):
    """A metric was requested on a confusion matrix with no populated rows."""


class CalibrationError(LayerkitError):
    """Signal-model calibration could not reach the requested tolerance."""

    def __init__(self, achieved: float, tol: float):
        self.achieved = achieved
        self.tol = tol
        super().__init__(
            f"calibration reached max diagonal error {achieved:.4f} > tol {tol:.4f}"
        )


class MethodNotFoundError(LayerkitError):
    """A comparison referenced a method name absent from the results."""

    def __init__(self, name: str, valid: list[str]):
        self.name = name
        self.valid = list(valid)
        super().__init__(f"unknown method {name!r}; valid methods: {sorted(valid)}")
