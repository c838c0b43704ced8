"""CSV and binary record helpers shared by the simulation and report code."""

import csv
import struct

import numpy as np

FLOAT_FMT = "%.17g"


def fmt(v):
    """Format a scalar for CSV output; floats keep 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def write_csv(path, header, rows):
    """Write rows of scalars under ``header``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_columns(path, columns):
    """Write a dict of equal-length 1-d arrays as CSV columns."""
    names = list(columns)
    cols = [np.asarray(columns[n]).ravel() for n in names]
    if len({c.shape[0] for c in cols}) > 1:
        raise ValueError("columns differ in length")
    write_csv(path, names, zip(*cols))


def read_columns(path):
    """Read a numeric CSV into a dict of float arrays (non-numeric columns stay strings)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


_MAGIC = b"NRPB"
_VERSION = 1
# magic, version, d, k, n_extra, regime, n_steps, seed, path_index, t0, dt, eps
_HEADER = struct.Struct("<4sIIIIIQQQddd")
REGIMES = {"standard": 0, "longtime": 1, "limit": 2}


def write_binary_path(path, *, d, k, n_extra, regime, n_steps, seed, path_index, t0, dt, eps, table):
    """Write a header followed by ``n_steps + 1`` little-endian float64 rows."""
    table = np.ascontiguousarray(table, dtype="<f8")
    if table.shape != (n_steps + 1, 1 + d + k + n_extra):
        raise ValueError(f"table shape {table.shape} does not match the header")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, d, k, n_extra, REGIMES[regime], n_steps,
                              int(seed) & ((1 << 64) - 1), path_index, t0, dt, eps))
        fh.write(table.tobytes())


def read_binary_path(path):
    """Inverse of :func:`write_binary_path`; returns ``(header dict, table)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, ver, d, k, n_extra, regime, n_steps, seed, pidx, t0, dt, eps = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a path record")
    if ver != _VERSION:
        raise ValueError(f"{path}: unsupported version {ver}")
    width = 1 + d + k + n_extra
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != (n_steps + 1) * width:
        raise ValueError(f"{path}: expected {(n_steps + 1) * width} values, found {body.size}")
    inv = {v: kk for kk, v in REGIMES.items()}
    header = dict(d=d, k=k, n_extra=n_extra, regime=inv[regime], n_steps=n_steps, seed=seed,
                  path_index=pidx, t0=t0, dt=dt, eps=eps)
    return header, body.reshape(n_steps + 1, width).astype(float)
