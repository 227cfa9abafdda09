"""Python bindings for the labloop core operations."""

from labloop._core import (
    LabloopError,
    PaperRecord,
    ParsedTraceback,
    TracebackFrame,
    categorize,
    cosine_similarity,
    filter_by_score,
    filter_custom_frames,
    independence_filter,
    keyword_frequency,
    parse_traceback,
    render_traceback,
)

__all__ = [
    "LabloopError",
    "PaperRecord",
    "ParsedTraceback",
    "TracebackFrame",
    "categorize",
    "cosine_similarity",
    "filter_by_score",
    "filter_custom_frames",
    "independence_filter",
    "keyword_frequency",
    "parse_traceback",
    "render_traceback",
]
