"""Exception types shared across the package."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but numerically degenerate (e.g. a
    singular system or an all-zero denominator).

    May carry partial results on attributes set by the raiser.
    """


class FormatVersionError(ValueError):
    """A file's format version string does not match what the reader expects."""


class StageError(RuntimeError):
    """A pipeline stage failed; the message is tagged with the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
