class WPlusError(Exception):
    """Base error carrying the process exit code the command layer should use."""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: int | None = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class InvalidArgumentError(WPlusError, ValueError):
    exit_code = 2


class ShapeMismatchError(InvalidArgumentError):
    pass


class CheckpointError(WPlusError):
    exit_code = 3


class LatentFileError(WPlusError):
    exit_code = 3


class ImageIOError(WPlusError):
    exit_code = 3


class NumericFailureError(WPlusError, ArithmeticError):
    exit_code = 4

    def __init__(self, detail: str, step: int | None = None):
        super().__init__(detail)
        self.step = step
