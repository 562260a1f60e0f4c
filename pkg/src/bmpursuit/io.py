"""Plain-text file formats.

Matrix files: first line ``rows cols``, then one whitespace-separated row per
line.  Vectors are stored as ``n 1`` column matrices (``1 n`` is accepted on
read).  Support files: one sample per line, ``m`` entries in {-1, 1}.
"""

import csv
import json
import os

import numpy as np

from .model import BoltzmannParams, SupportPattern, as_spin_matrix


class FormatError(ValueError):
    pass


def _fmt(v):
    return repr(float(v))


def write_matrix(path, M):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def read_matrix(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError(f"{path}: expected 'rows cols' header")
        rows, cols = int(header[0]), int(header[1])
        data = np.array(fh.read().split(), dtype=float)
    if data.size != rows * cols:
        raise FormatError(f"{path}: header says {rows}x{cols} but found {data.size} values")
    return data.reshape(rows, cols)


def write_vector(path, v):
    write_matrix(path, np.asarray(v, dtype=float).reshape(-1, 1))


def read_vector(path):
    M = read_matrix(path)
    if 1 not in M.shape:
        raise FormatError(f"{path}: expected a vector, got {M.shape[0]}x{M.shape[1]}")
    return M.ravel()


def write_supports(path, supports):
    S = as_spin_matrix(supports).astype(int)
    with open(path, "w") as fh:
        for row in S:
            fh.write(" ".join(str(v) for v in row) + "\n")


def read_supports(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            vals = [int(p) for p in parts]
            if any(v not in (-1, 1) for v in vals):
                raise FormatError(f"{path}:{lineno}: entries must be -1 or 1")
            rows.append(vals)
    if rows and len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: rows have differing lengths")
    return [SupportPattern(np.array(r)) for r in rows]


def save_params(directory, params, variances=None, band_order=None, permutation=None):
    """Write W, b (and variances) plus a JSON metadata record."""
    os.makedirs(directory, exist_ok=True)
    write_matrix(os.path.join(directory, "W.txt"), params.W)
    write_vector(os.path.join(directory, "b.txt"), params.b)
    if variances is not None:
        write_vector(os.path.join(directory, "variances.txt"), variances)
    meta = {"m": params.m, "band_order": band_order,
            "permutation": None if permutation is None else [int(p) for p in permutation]}
    with open(os.path.join(directory, "params.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_params(directory):
    W = read_matrix(os.path.join(directory, "W.txt"))
    b = read_vector(os.path.join(directory, "b.txt"))
    var_path = os.path.join(directory, "variances.txt")
    variances = read_vector(var_path) if os.path.exists(var_path) else None
    meta_path = os.path.join(directory, "params.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    return BoltzmannParams(W, b), variances, meta


def read_pgm(path):
    """Read a P2 (ASCII) or P5 (binary, 8 or 16 bit) grayscale image."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P2":
        vals = np.array(data[pos:].split(), dtype=float)
        if vals.size < width * height:
            raise FormatError(f"{path}: not enough pixel values")
        return vals[: width * height].reshape(height, width)
    if magic == "P5":
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        count = width * height
        if len(data) - pos < count * dtype.itemsize:
            raise FormatError(f"{path}: not enough pixel data")
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        return raw.astype(float).reshape(height, width)
    raise FormatError(f"{path}: unsupported PGM magic {magic!r}")


def write_pgm(path, image, maxval=255, binary=True):
    img = np.clip(np.rint(np.asarray(image, dtype=float)), 0, maxval).astype(int)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode("ascii"))
        if binary:
            dtype = ">u2" if maxval > 255 else "u1"
            fh.write(img.astype(dtype).tobytes())
        else:
            for row in img:
                fh.write((" ".join(str(v) for v in row) + "\n").encode("ascii"))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v
