"""Reference-based FASTQ compression."""
__version__ = "0.1.0"

from .errors import (CorruptionError, FastqFormatError, FqzError, InputError,
                     ReferenceMismatchError, UsageError)
from .pipeline import CompressionReport, PipelineConfig, compress_file, decompress_file

__all__ = ["CompressionReport", "CorruptionError", "FastqFormatError", "FqzError", "InputError",
           "PipelineConfig", "ReferenceMismatchError", "UsageError", "compress_file",
           "decompress_file"]
