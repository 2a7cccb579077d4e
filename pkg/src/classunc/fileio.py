"""Atomic file writes and small CSV helpers shared by the output writers."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile

import numpy as np


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename.

    A missing parent directory raises before anything is written.
    """
    path = os.fspath(path)
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"output directory does not exist: {parent}")
    fd, tmp = tempfile.mkstemp(dir=parent, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def class_vector_csv(values, column: str = "value") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class_index", column])
    for c, v in enumerate(values):
        w.writerow([c, repr(float(v))])
    return buf.getvalue()


def write_class_vector_csv(path, values, column: str = "value") -> None:
    """Dump a per-class vector (weights, margins, alpha) as ``class_index,<column>``."""
    atomic_write_text(path, class_vector_csv(values, column))


def table_csv(columns: dict) -> str:
    """Render equal-length named columns as CSV."""
    names = list(columns)
    lengths = {len(columns[n]) for n in names}
    if len(lengths) > 1:
        raise ValueError(f"table columns differ in length: {lengths}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*(columns[n] for n in names)):
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return "undefined"
    if isinstance(v, float):
        return repr(v)
    return v


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_plain)


def config_hash(obj) -> str:
    """SHA-256 (first 16 hex digits) of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
