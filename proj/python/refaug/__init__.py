"""Python bindings for the refaug toolkit core.

The heavy lifting (answer grading, n-gram decontamination, training-sequence
rendering) lives in the C++ extension; this package re-exports it.
"""

from refaug._core import (  # noqa: F401
    FollowUpKind,
    Lineage,
    MathInstance,
    Placement,
    RefaugError,
    ReflectiveSection,
    Source,
    Split,
    TrainingSequence,
    __version__,
    answers_equal,
    count_ws_tokens,
    error_breakdown_from_marginals,
    extract_gold_answer,
    extract_prediction,
    mix,
    ngram_set,
    ngram_tokenize,
    normalize_answer,
    overlap,
    render_refaug,
    render_standard,
    truncate_at_stop,
)

__all__ = [
    "FollowUpKind",
    "Lineage",
    "MathInstance",
    "Placement",
    "RefaugError",
    "ReflectiveSection",
    "Source",
    "Split",
    "TrainingSequence",
    "__version__",
    "answers_equal",
    "count_ws_tokens",
    "error_breakdown_from_marginals",
    "extract_gold_answer",
    "extract_prediction",
    "mix",
    "ngram_set",
    "ngram_tokenize",
    "normalize_answer",
    "overlap",
    "render_refaug",
    "render_standard",
    "truncate_at_stop",
]
