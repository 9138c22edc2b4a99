"""On-disk formats: raw binary fields, CSV tables and the run manifest.

Raw field layout (all little-endian)::

    b"GPF1"  u32 rank  u32 dims[rank]  u32 kind  payload

``kind`` is 0 for float64 and 1 for complex128 stored as interleaved
``(re, im)`` float64 pairs; the payload is row-major (C order).

A tabulated potential file holds two consecutive records: the 1D real array
of control samples, then the real array of slices with shape
``(n_samples, *grid_shape)``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"GPF1"
KIND_REAL = 0
KIND_COMPLEX = 1


class FieldFormatError(ValueError):
    """Malformed raw field file."""


def _write_record(fh, array):
    arr = np.asarray(array)
    kind = KIND_COMPLEX if np.iscomplexobj(arr) else KIND_REAL
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(struct.pack("<I", kind))
    dtype = "<c16" if kind == KIND_COMPLEX else "<f8"
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes(order="C"))


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise FieldFormatError("unexpected end of file")
    return buf


def _read_record(fh):
    magic = fh.read(4)
    if magic == b"":
        return None
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4))
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
    (kind,) = struct.unpack("<I", _read_exact(fh, 4))
    if kind not in (KIND_REAL, KIND_COMPLEX):
        raise FieldFormatError(f"unknown value kind {kind}")
    dtype = np.dtype("<c16" if kind == KIND_COMPLEX else "<f8")
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(_read_exact(fh, count * dtype.itemsize), dtype=dtype)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def write_field(path, array) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        _write_record(fh, array)
    return path


def read_field(path) -> np.ndarray:
    with open(path, "rb") as fh:
        arr = _read_record(fh)
        if arr is None:
            raise FieldFormatError("empty file")
    return arr


def write_tabulated_potential(path, lambda_samples, slices) -> Path:
    lam = np.asarray(lambda_samples, dtype=float)
    vals = np.asarray(slices, dtype=float)
    if vals.shape[0] != lam.size:
        raise ValueError("need one slice per control sample")
    path = Path(path)
    with open(path, "wb") as fh:
        _write_record(fh, lam)
        _write_record(fh, vals)
    return path


def read_tabulated_potential(path):
    """Return ``(lambda_samples, slices)`` from a two-record field file."""
    with open(path, "rb") as fh:
        lam = _read_record(fh)
        vals = _read_record(fh)
    if lam is None or vals is None:
        raise FieldFormatError("tabulated potential needs a sample record and a slice record")
    if np.iscomplexobj(lam) or np.iscomplexobj(vals):
        raise FieldFormatError("tabulated potentials must be real")
    if lam.ndim != 1 or vals.shape[0] != lam.size:
        raise FieldFormatError(f"{lam.size} samples but slices of shape {vals.shape}")
    return lam, vals


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def write_csv(path, header, rows) -> Path:
    """UTF-8 CSV with a header row; floats printed with 17 significant digits."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Header and rows; numeric cells become floats."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for row in reader:
            parsed = []
            for cell in row:
                try:
                    parsed.append(float(cell))
                except ValueError:
                    parsed.append(cell)
            rows.append(parsed)
    return header, rows


def write_axes(path, **axes) -> Path:
    """Sibling axes CSV for a raw field: columns ``axis, index, value``."""
    rows = []
    for name, values in axes.items():
        for i, v in enumerate(np.asarray(values, dtype=float)):
            rows.append((name, i, float(v)))
    return write_csv(path, ("axis", "index", "value"), rows)


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class OutputDirectory:
    """Tracks every file written during a run and emits the manifest last."""

    MANIFEST = "manifest.json"

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def path(self, name) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if p not in self.files:
            self.files.append(p)
        return p

    def field(self, name, array, **axes) -> Path:
        p = write_field(self.path(name), array)
        if axes:
            stem = name.rsplit(".", 1)[0]
            write_axes(self.path(stem + "_axes.csv"), **axes)
        return p

    def csv(self, name, header, rows) -> Path:
        return write_csv(self.path(name), header, rows)

    def text(self, name, content: str) -> Path:
        p = self.path(name)
        p.write_text(content, encoding="utf-8")
        return p

    def write_manifest(self) -> Path:
        entries = [
            {"file": str(p.relative_to(self.root)), "bytes": p.stat().st_size, "sha256": sha256_of(p)}
            for p in self.files
        ]
        target = self.root / self.MANIFEST
        target.write_text(json.dumps({"files": entries}, indent=2) + "\n", encoding="utf-8")
        return target
