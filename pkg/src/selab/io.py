"""Atomic file output and array/JSON helpers."""

import csv
import io
import json
import os
import tempfile

import numpy as np

from .errors import MissingArtifact


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_default, allow_nan=True) + "\n"


def write_json(path, obj):
    atomic_write(path, dumps(obj))


def read_json(path):
    if not os.path.exists(path):
        raise MissingArtifact(f"missing artifact: {path}")
    with open(path) as fh:
        return json.load(fh)


def csv_text(header, columns):
    """CSV text with full-precision floats from equal-length columns."""
    arr = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns else np.zeros((0, 0))
    buf = io.StringIO()
    np.savetxt(buf, arr, delimiter=",", fmt="%.17g", header=",".join(header), comments="")
    return buf.getvalue()


def write_csv(path, header, columns):
    atomic_write(path, csv_text(header, columns))


def write_rows(path, header, rows):
    """CSV from rows of mixed values (strings kept, floats at full precision)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    atomic_write(path, buf.getvalue())


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_npz(path, **arrays):
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write(path, buf.getvalue())


def read_npz(path):
    if not os.path.exists(path):
        raise MissingArtifact(f"missing artifact: {path}")
    with np.load(path, allow_pickle=False) as z:
        return {k: z[k] for k in z.files}
