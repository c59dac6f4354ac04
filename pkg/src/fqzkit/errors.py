"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class FqzError(Exception):
    exit_code = 1


class UsageError(FqzError):
    exit_code = 1


class InputError(FqzError):
    """Unreadable or malformed input (FASTQ, FASTA, gzip)."""

    exit_code = 2


class FastqFormatError(InputError):
    pass


class CorruptionError(FqzError):
    """Archive or index content is inconsistent with its own metadata."""

    exit_code = 3


class ReferenceMismatchError(FqzError):
    exit_code = 4
