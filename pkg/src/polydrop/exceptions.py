"""Exception types shared across the package."""


class ZeroVarianceError(ValueError):
    """A sample or signal is constant where positive variance is required."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss.

    Carries the epoch index (0-based) at which divergence was detected.
    """

    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class MissingCellsError(ValueError):
    """A results query required grid cells that are absent.

    ``cells`` holds the missing coordinates as tuples, in a stable order.
    """

    def __init__(self, message: str, cells: list):
        super().__init__(f"{message}: {cells}")
        self.cells = cells


class ResultsFileError(ValueError):
    """A results file contains a line that cannot be parsed."""

    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}, line {lineno}: {reason}")
        self.path = path
        self.lineno = lineno
