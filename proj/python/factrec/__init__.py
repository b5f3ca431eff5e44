"""Long-form factuality evaluation: claim precision and reference-fact recall."""

import json

from . import _core
from ._core import (
    FactrecError,
    agglomerate,
    f1,
    importance,
    normalize_rating,
    precision,
    recall,
    recall_weighted,
    template_version,
    trigram_jaccard,
)


def run(config, output_dir=None, mock_script=None, overwrite=False):
    """Runs every stage. Returns (exit_code, report dict or None)."""
    code, report = _core.run(str(config), None if output_dir is None else str(output_dir),
                             None if mock_script is None else str(mock_script), overwrite)
    return code, None if report is None else json.loads(report)


def resume(run_dir, mock_script=None):
    code, report = _core.resume(str(run_dir), None if mock_script is None else str(mock_script))
    return code, None if report is None else json.loads(report)


def table1(reports):
    """Markdown precision/recall/F1 table for report dicts."""
    return _core.table1([json.dumps(r) for r in reports])


__all__ = [
    "FactrecError", "agglomerate", "f1", "importance", "normalize_rating", "precision", "recall",
    "recall_weighted", "resume", "run", "table1", "template_version", "trigram_jaccard",
]
