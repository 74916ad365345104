"""Exception hierarchy.

Errors fall in two families so the CLI can map them to exit codes:
``DataError`` (bad input files, exit 2) and ``RunError`` (numerical or
training failures, exit 3).
"""


class AdnerError(Exception):
    """Base class for every error raised by this package."""


class DataError(AdnerError):
    pass


class RunError(AdnerError):
    pass


# -- corpus -----------------------------------------------------------------


class EmptyInput(DataError):
    def __init__(self, msg="input contains no sentences"):
        super().__init__(msg)


class MalformedLine(DataError):
    def __init__(self, line_no, line=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: expected at least 2 columns, got {line!r}")


class InvalidTag(DataError):
    def __init__(self, line_no, tag):
        self.line_no = line_no
        self.tag = tag
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}invalid tag {tag!r} (expected O, B-X or I-X)")


class InvalidScheme(DataError):
    def __init__(self, sentence_idx, violations=()):
        self.sentence_idx = sentence_idx
        self.violations = list(violations)
        super().__init__(f"sentence {sentence_idx}: invalid IOB2 sequence {self.violations}")


class OverlapError(DataError):
    pass


class OutOfRange(DataError):
    pass


class TooSmall(DataError):
    pass


class UnknownTag(DataError):
    def __init__(self, tag):
        self.tag = tag
        super().__init__(f"tag {tag!r} is not in the tag index")


class LengthMismatch(DataError):
    pass


class ConfigError(DataError):
    pass


# -- compute / objective ----------------------------------------------------


class NonFiniteError(RunError):
    pass


class TargetOutOfRange(RunError):
    pass


class AllIgnored(RunError):
    pass


class EmptyBatch(RunError):
    pass


class InvalidConfig(RunError):
    pass


# -- train / checkpoint -----------------------------------------------------


class NonFiniteGradient(RunError):
    pass


class DivergedError(RunError):
    pass


class EmptySentence(DataError):
    pass


class CheckpointError(DataError):
    pass


class BadMagic(CheckpointError):
    pass


class ChecksumMismatch(CheckpointError):
    pass


class ShapeMismatch(CheckpointError):
    pass
