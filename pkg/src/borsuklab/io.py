"""File formats: point clouds, graphs, witnesses, colourings and reports.

JSON is written with sorted keys and fixed separators so equal inputs give
equal bytes.
"""

import json
import struct
from pathlib import Path

import numpy as np

POINT_MAGIC = b"BORSUKPT"
EDGE_MAGIC = b"BORSUKEG"
_HEADER = struct.Struct("<8sII")


class FormatError(ValueError):
    pass


def dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


# points


def write_points_binary(path, X):
    """16-byte header (magic, u32 d, u32 n) then little-endian float64 rows of length d+1."""
    X = np.ascontiguousarray(X, dtype="<f8")
    n, dim = X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(POINT_MAGIC, dim - 1, n))
        fh.write(X.tobytes())


def read_points_binary(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated header")
    magic, d, n = _HEADER.unpack_from(raw)
    if magic != POINT_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * n * (d + 1):
        raise FormatError("payload size does not match header")
    return np.frombuffer(body, dtype="<f8").reshape(n, d + 1).astype(float)


def write_points_jsonl(path, X):
    with open(path, "w") as fh:
        for row in np.asarray(X, dtype=float):
            fh.write(dumps([float(v) for v in row]) + "\n")


def read_points_jsonl(path):
    rows = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    if not rows:
        return np.zeros((0, 0))
    return np.asarray(rows, dtype=float)


def read_points(path):
    """Binary or JSONL, by sniffing the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == POINT_MAGIC:
        return read_points_binary(path)
    return read_points_jsonl(path)


def write_points(path, X):
    if str(path).endswith(".jsonl"):
        write_points_jsonl(path, X)
    else:
        write_points_binary(path, X)


# graphs


def graph_to_dict(g):
    return {
        "n": int(g.n_),
        "d": int(g.d_),
        "alpha": float(g.alpha),
        "seed": g.seed_,
        "edges": np.asarray(g.edges_, dtype=np.int64).tolist(),
    }


def write_graph_json(path, g):
    write_json(path, graph_to_dict(g))


def read_graph_json(path):
    data = read_json(path)
    edges = np.asarray(data["edges"], dtype=np.int64).reshape(-1, 2)
    return data, edges


def write_edges_binary(path, n, edges):
    """Header (magic, u32 n, u32 m) then little-endian u32 endpoint pairs."""
    e = np.ascontiguousarray(edges, dtype="<u4").reshape(-1, 2)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EDGE_MAGIC, int(n), len(e)))
        fh.write(e.tobytes())


def read_edges_binary(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated header")
    magic, n, m = _HEADER.unpack_from(raw)
    if magic != EDGE_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * m:
        raise FormatError("payload size does not match header")
    return n, np.frombuffer(body, dtype="<u4").reshape(m, 2).astype(np.int64)


def witness_to_dict(witness, kind="odd_cycle"):
    return {"kind": kind, "length": len(witness.vertices) if witness is not None else 0,
            "vertices": [int(v) for v in witness.vertices] if witness is not None else []}


def write_csv(path, rows, columns):
    """CSV with a fixed column order; floats in ``repr`` form for exact round trips."""
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
