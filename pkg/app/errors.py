"""Exception hierarchy shared by the pipeline"""


class PipelineError(Exception):
    """Base error; ``exit_code`` is what the command line returns for it"""

    exit_code = 1


class UserInputError(PipelineError):
    """Invalid arguments, configuration or condition values"""

    exit_code = 2


class DataError(PipelineError):
    """Corrupt, truncated or inconsistent datasets, tables and checkpoints"""

    exit_code = 3


class NumericalError(PipelineError):
    """NaN or Inf in a loss, gradient or model output"""

    exit_code = 4


class ShapeError(UserInputError, ValueError):
    """Array shapes do not fit together"""

    def __init__(self, message: str, *shapes: tuple[int, ...]) -> None:
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
