"""Emotion-vector task arithmetic on a toy multi-speaker acoustic model."""

import json

from ._core import (
    EmotionVector,
    Error,
    ParameterSet,
    apply_vector,
    extract_vector,
    secs,
    vector_stats,
)
from ._core import run_pipeline as _run_pipeline

__all__ = [
    "EmotionVector",
    "Error",
    "ParameterSet",
    "apply_vector",
    "extract_vector",
    "run_pipeline",
    "secs",
    "vector_stats",
]


def run_pipeline(config, out, case=None):
    """Run every configured scenario (optionally one case) and return the reports as dicts."""
    return [json.loads(text) for text in _run_pipeline(str(config), str(out), case)]
