"""Exception types raised across the pipeline."""


class KeyclinkError(Exception):
    """Base class for every error raised by keyclink."""


class DataError(KeyclinkError, ValueError):
    """Input data that cannot be processed."""


# audio
class NotWav(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class EmptyAudio(DataError):
    pass


# segmentation
class BadFraming(DataError):
    pass


class TooFewKeystrokes(DataError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"found {found} keystrokes, expected {expected}")
        self.found = found
        self.expected = expected

    def __reduce__(self):
        return type(self), (self.found, self.expected)


# features
class WindowTooLarge(DataError):
    pass


class SegmentTooShort(DataError):
    pass


class RowMismatch(DataError):
    pass


class TooManyComponents(DataError):
    pass


# clustering
class KTooLarge(DataError):
    pass


class LengthMismatch(DataError):
    pass


class PipelineFailure(KeyclinkError):
    def __init__(self, sample_id: str, stage: str, cause: BaseException | None = None):
        super().__init__(f"sample {sample_id!r} failed at stage {stage!r}: {cause}")
        self.sample_id = sample_id
        self.stage = stage
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.sample_id, self.stage, self.cause)


# demodulation
class EmptyWordlist(DataError):
    pass


class MalformedLine(DataError):
    def __init__(self, lineno: int, line: str = ""):
        super().__init__(f"malformed wordlist line {lineno}: {line!r}")
        self.lineno = lineno
        self.line = line

    def __reduce__(self):
        return type(self), (self.lineno, self.line)


class NoWords(DataError):
    pass


class NoSolution(KeyclinkError):
    pass


# synthcorpus
class RolloverRequested(DataError):
    pass


# reports
class UnsupportedFormat(DataError):
    pass


class InvalidConfig(KeyclinkError, ValueError):
    """A pipeline configuration outside the legal search space."""
