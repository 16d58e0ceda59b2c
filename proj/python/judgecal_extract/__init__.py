"""Writers for the judgecal dataset and transcript formats, plus an extraction driver."""

from .formats import (
    ACTV_MAGIC,
    ACTV_VERSION,
    decode_actv,
    encode_actv,
    read_dataset,
    transcript_record,
    write_dataset,
)
from .extraction import Backend, ExtractionJob, Generation, parse_winner, run_extraction

__all__ = [
    "ACTV_MAGIC",
    "ACTV_VERSION",
    "Backend",
    "ExtractionJob",
    "Generation",
    "decode_actv",
    "encode_actv",
    "parse_winner",
    "read_dataset",
    "run_extraction",
    "transcript_record",
    "write_dataset",
]
