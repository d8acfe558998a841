"""On-disk formats: MSET binary matrix sets and CSV convergence traces.

MSET layout (all little-endian)::

    offset  size        field
    0       4           magic b"MSET"
    4       4           format version, uint32 (= 1)
    8       4           n, uint32
    12      4           p, uint32
    16      8 * n*p*p   float64 payload, matrices in order, row-major
"""

import csv
import json
import os
import struct
import tempfile

import numpy as np

from .core import SymmetricMatrixSet

MAGIC = b"MSET"
VERSION = 1
_HEADER = struct.Struct("<4sIII")

TRACE_COLUMNS = ("iter", "loss", "grad_norm", "step_size", "halvings",
                 "wall_time_s", "loss_change")


class FormatError(ValueError):
    """Malformed MSET or trace file."""


def encode_mset(matrices):
    """Serialize an ``(n, p, p)`` array (or a matrix set) to MSET bytes."""
    a = np.asarray(getattr(matrices, "data", matrices), dtype="<f8")
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError("Expected shape (n, p, p), got %s" % (a.shape,))
    n, p, _ = a.shape
    return _HEADER.pack(MAGIC, VERSION, n, p) + np.ascontiguousarray(a).tobytes()


def decode_mset(buf):
    """Parse MSET bytes into an ``(n, p, p)`` float64 array."""
    if len(buf) < _HEADER.size:
        raise FormatError("File too short for an MSET header (%d bytes)."
                          % len(buf))
    magic, version, n, p = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError("Bad magic %r, expected %r." % (magic, MAGIC))
    if version != VERSION:
        raise FormatError("Unsupported MSET version %d." % version)
    expected = _HEADER.size + 8 * n * p * p
    if len(buf) != expected:
        raise FormatError("Payload length mismatch: %d bytes, expected %d."
                          % (len(buf), expected))
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    return data.reshape(n, p, p).astype(np.float64)


def _umask():
    mask = os.umask(0)
    os.umask(mask)
    return mask


def _atomic_write(path, payload, mode="wb"):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        os.chmod(tmp, 0o666 & ~_umask())
        with os.fdopen(fd, mode) as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_mset(path, matrices):
    _atomic_write(path, encode_mset(matrices))


def load_mset(path):
    """Read an MSET file as a raw ``(n, p, p)`` array."""
    with open(path, "rb") as f:
        return decode_mset(f.read())


def load_matrix_set(path):
    """Read an MSET file as a :class:`SymmetricMatrixSet`."""
    return SymmetricMatrixSet(load_mset(path))


def format_trace(trace, metadata=None):
    """Render a solver trace as CSV text preceded by ``# key: value`` lines.

    The metadata lines carry JSON-encoded values; ``pandas.read_csv(path,
    comment="#")`` reads the table directly.
    """
    lines = []
    meta = dict(metadata or {})
    meta.setdefault("status", trace.status)
    meta.setdefault("init_time_s", trace.init_time)
    for key, value in meta.items():
        lines.append("# %s: %s\n" % (key, json.dumps(value)))
    lines.append(",".join(TRACE_COLUMNS) + "\n")
    for r in trace.records:
        lines.append("%d,%r,%r,%r,%d,%r,%r\n" % (
            r.iteration, r.loss, r.grad_norm, r.step_size, r.halvings,
            r.wall_time, r.loss_change))
    return "".join(lines)


def write_trace(path, trace, metadata=None):
    _atomic_write(path, format_trace(trace, metadata), mode="w")


def read_trace(path):
    """Read a trace file back.

    Returns
    -------
    metadata : dict
    columns : dict of ndarray
        One array per column of :data:`TRACE_COLUMNS`.
    """
    metadata = {}
    with open(path, newline="") as f:
        body = []
        for line in f:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                metadata[key.strip()] = json.loads(value)
            else:
                body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    if header is None or tuple(header) != TRACE_COLUMNS:
        raise FormatError("Unexpected trace header %r." % (header,))
    rows = [[float(v) for v in row] for row in reader if row]
    arr = np.array(rows, dtype=np.float64).reshape(-1, len(TRACE_COLUMNS))
    columns = {name: arr[:, j] for j, name in enumerate(TRACE_COLUMNS)}
    columns["iter"] = columns["iter"].astype(int)
    columns["halvings"] = columns["halvings"].astype(int)
    return metadata, columns


def export_text(matrices, fmt="%.17g"):
    """Plain-text dump of a matrix set, one matrix per block."""
    a = np.asarray(getattr(matrices, "data", matrices))
    if a.ndim == 2:
        a = a[None]
    blocks = []
    for i, m in enumerate(a):
        rows = "\n".join(" ".join(fmt % v for v in row) for row in m)
        blocks.append("# matrix %d\n%s" % (i, rows))
    return "\n\n".join(blocks) + "\n"
