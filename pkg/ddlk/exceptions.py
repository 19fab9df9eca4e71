class KnockoffForgeError(Exception):
    """Base class for every error raised by the ddlk app"""


class InvalidInput(KnockoffForgeError):
    """Bad shapes, non-finite values or malformed input files"""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        if row is not None or column is not None:
            where = []
            if row is not None:
                where.append(f'row {row}')
            if column is not None:
                where.append(f'column {column!r}')
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ModelFileError(InvalidInput):
    """A model file failed validation on load"""


class NumericalAbort(KnockoffForgeError):
    """Training produced a non-finite value"""

    def __init__(self, message, feature=None, epoch=None):
        self.feature = feature
        self.epoch = epoch
        details = []
        if feature is not None:
            details.append(f'feature {feature}')
        if epoch is not None:
            details.append(f'epoch {epoch}')
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class TrainingDiverged(NumericalAbort):
    """The knockoff objective left the divergence guard"""

    def __init__(self, message, history=None, epoch=None):
        self.history = list(history or [])
        super().__init__(message, epoch=epoch)
