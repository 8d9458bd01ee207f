# Copyright (c) 2026, rmlab developers
# SPDX-License-Identifier: Apache-2.0
"""Customized reward-model training on a tiny byte-level transformer."""

import json as _json
import os as _os

from ._core import (
    ConfigError,
    ContractError,
    DataError,
    DomainRecord,
    Error,
    IndexError,
    LoadError,
    ParseError,
    PreferencePair,
    ShapeError,
    __version__,
    accuracy_from_scores,
    average_accuracy,
    build_dsp_pairs,
    decode,
    dedup_invalid,
    encode,
    geometric_mean,
    marker_pairs,
    read_pairs,
    read_records,
    run_cli,
    split,
    tfidf_matrix,
    write_pairs,
    write_records,
)
from . import _core

PAD, BOS, EOS = 256, 257, 258


def response_stats(text):
    """Readability statistics of one response as a dict."""
    return _json.loads(_core.response_stats_json(text))


def corpus_report(records, stopwords=100, top_k=100):
    """Per-domain TF-IDF keywords and readability statistics."""
    return _json.loads(_core.corpus_report_json(records, stopwords, top_k))


def checkpoint_info(path):
    """Content hash, head presence, tensor count and metadata of a checkpoint."""
    return _json.loads(_core.checkpoint_info_json(_os.fspath(path)))


def evaluate(checkpoint, sets, max_len=128):
    """Preference accuracy of a reward-model checkpoint on named pair sets."""
    return _json.loads(_core.evaluate_json(_os.fspath(checkpoint), dict(sets), max_len))
