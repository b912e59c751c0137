"""Deterministic machine-readable outputs: JSON reports, CSV tables,
and the content hash used as the pipeline cache etag."""
import csv
import hashlib
import json


def sanitize(obj):
    """Make an object JSON-serializable; non-finite floats become None."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if v == v and abs(v) != float("inf") else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def dumps_canonical(obj):
    return json.dumps(sanitize(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps_canonical(obj))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def config_hash(obj):
    """Stable content hash of a configuration section."""
    blob = json.dumps(sanitize(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
