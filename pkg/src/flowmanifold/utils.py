"""Seeds, hashing and small file helpers."""

import csv
import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def derive_seed(master, *keys):
    """Stable 63-bit seed from a master seed and any labels (names, cell indices)."""
    text = json.dumps([int(master), *[str(k) for k in keys]])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_for(master, *keys):
    return np.random.default_rng(derive_seed(master, *keys))


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    return sha256_bytes(Path(path).read_bytes())


def config_hash(obj):
    return sha256_bytes(json.dumps(obj, sort_keys=True, default=_json_default).encode())[:16]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text):
    return atomic_write_bytes(path, text.encode())


def write_json(path, obj):
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _format_cell(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def rows_to_csv(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    return atomic_write_text(path, rows_to_csv(header, rows))


def write_matrix_csv(path, X, prefix="x"):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    header = [f"{prefix}{j}" for j in range(X.shape[1])]
    return write_csv(path, header, X.tolist())


def read_matrix_csv(path):
    """Numeric CSV with a header row -> float64 matrix ``(rows, cols)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        return np.zeros((0, len(header)))
    X = np.asarray(rows, dtype=np.float64)
    if X.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return X


def read_table_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
