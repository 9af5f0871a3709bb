"""Readers and writers for MatrixMarket files and a tensor coordinate format.

The MatrixMarket subset covers ``matrix coordinate|array real|integer
general|symmetric`` with 1-based indices; symmetric files carry the lower
triangle and are mirrored on load. The tensor format starts with a header
line ``N n nnz`` (order, side, entry count) followed by ``nnz`` lines of
``N`` 1-based indices and a value; unlisted entries are zero and duplicate
indices are rejected. Values are written with 17 significant digits so a
write/read round trip preserves float64 exactly.
"""

import numpy as np

from .exceptions import IndexOutOfRange, NegativeEntry, ParseError


def load_matrix_market(path):
    """Parse a MatrixMarket file into a dense nonnegative matrix."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", line=1)
    banner = lines[0].split()
    if len(banner) != 5 or banner[0].lower() != "%%matrixmarket":
        raise ParseError("missing %%MatrixMarket banner", line=1)
    obj, fmt, field, symmetry = (w.lower() for w in banner[1:])
    if obj != "matrix":
        raise ParseError("unsupported object %r" % obj, line=1)
    if fmt not in ("coordinate", "array"):
        raise ParseError("unsupported format %r" % fmt, line=1)
    if field not in ("real", "integer"):
        raise ParseError("unsupported field %r" % field, line=1)
    if symmetry not in ("general", "symmetric"):
        raise ParseError("unsupported symmetry %r" % symmetry, line=1)

    body = [(i + 1, ln) for i, ln in enumerate(lines[1:], start=1)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ParseError("missing size line", line=len(lines))
    size_no, size_line = body[0]
    entries = body[1:]
    if fmt == "coordinate":
        rows, cols, nnz = _ints(size_line, 3, size_no)
        mat = np.zeros((rows, cols))
        filled = np.zeros((rows, cols), dtype=bool)
        if len(entries) != nnz:
            raise ParseError("expected %d entries, found %d"
                             % (nnz, len(entries)), line=size_no)
        for lineno, text in entries:
            parts = text.split()
            if len(parts) != 3:
                raise ParseError("expected 'i j value'", line=lineno)
            i, j = _index(parts[0], rows, lineno), _index(parts[1], cols,
                                                          lineno)
            value = _value(parts[2], field, lineno)
            if symmetry == "symmetric" and i < j:
                raise ParseError(
                    "symmetric entries must lie on or below the diagonal",
                    line=lineno)
            if filled[i, j]:
                raise ParseError("duplicate entry (%d, %d)"
                                 % (i + 1, j + 1), line=lineno)
            mat[i, j] = value
            filled[i, j] = True
            if symmetry == "symmetric" and i != j:
                mat[j, i] = value
                filled[j, i] = True
        return mat
    rows, cols = _ints(size_line, 2, size_no)
    if symmetry == "symmetric" and rows != cols:
        raise ParseError("symmetric array must be square", line=size_no)
    if symmetry == "general":
        coords = [(i, j) for j in range(cols) for i in range(rows)]
    else:
        coords = [(i, j) for j in range(cols) for i in range(j, rows)]
    if len(entries) != len(coords):
        raise ParseError("expected %d values, found %d"
                         % (len(coords), len(entries)), line=size_no)
    mat = np.zeros((rows, cols))
    for (lineno, text), (i, j) in zip(entries, coords):
        parts = text.split()
        if len(parts) != 1:
            raise ParseError("expected one value per line", line=lineno)
        mat[i, j] = _value(parts[0], field, lineno)
        if symmetry == "symmetric":
            mat[j, i] = mat[i, j]
    return mat


def save_matrix_market(path, array):
    """Write a matrix as ``coordinate real general`` (explicit nonzeros)."""
    a = np.asarray(array, dtype=float)
    if a.ndim != 2:
        raise ValueError("save_matrix_market expects a matrix")
    rows, cols = np.nonzero(a)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write("%d %d %d\n" % (a.shape[0], a.shape[1], len(rows)))
        for i, j in zip(rows, cols):
            fh.write("%d %d %.17g\n" % (i + 1, j + 1, a[i, j]))


def load_tensor_coordinate(path):
    """Parse the ``N n nnz`` coordinate format into a dense array."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    body = [(i + 1, ln) for i, ln in enumerate(lines)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ParseError("empty file", line=1)
    head_no, head = body[0]
    order, side, nnz = _ints(head, 3, head_no)
    if order < 1 or side < 1:
        raise ParseError("order and side must be positive", line=head_no)
    entries = body[1:]
    if len(entries) != nnz:
        raise ParseError("expected %d entries, found %d"
                         % (nnz, len(entries)), line=head_no)
    tensor = np.zeros((side,) * order)
    filled = np.zeros((side,) * order, dtype=bool)
    for lineno, text in entries:
        parts = text.split()
        if len(parts) != order + 1:
            raise ParseError("expected %d indices and a value" % order,
                             line=lineno)
        idx = tuple(_index(w, side, lineno) for w in parts[:order])
        if filled[idx]:
            raise ParseError("duplicate entry %r"
                             % (tuple(i + 1 for i in idx),), line=lineno)
        tensor[idx] = _value(parts[order], "real", lineno)
        filled[idx] = True
    return tensor


def save_tensor_coordinate(path, array):
    """Write a dense array in the ``N n nnz`` coordinate format."""
    a = np.asarray(array, dtype=float)
    if len(set(a.shape)) != 1:
        raise ValueError("tensor coordinate format needs equal sides")
    nz = np.argwhere(a != 0)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%d %d %d\n" % (a.ndim, a.shape[0], len(nz)))
        for idx in nz:
            pos = " ".join(str(i + 1) for i in idx)
            fh.write("%s %.17g\n" % (pos, a[tuple(idx)]))


def _ints(text, count, lineno):
    parts = text.split()
    if len(parts) != count:
        raise ParseError("expected %d integers" % count, line=lineno)
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ParseError("malformed integer in %r" % text, line=lineno)


def _index(word, bound, lineno):
    try:
        value = int(word)
    except ValueError:
        raise ParseError("malformed index %r" % word, line=lineno)
    if not 1 <= value <= bound:
        raise IndexOutOfRange(
            "index %d outside [1, %d] at line %d" % (value, bound, lineno))
    return value - 1


def _value(word, field, lineno):
    try:
        value = int(word) if field == "integer" else float(word)
    except ValueError:
        raise ParseError("malformed value %r" % word, line=lineno)
    if not np.isfinite(value):
        raise ParseError("non-finite value %r" % word, line=lineno)
    if value < 0:
        raise NegativeEntry("negative value %s at line %d" % (word, lineno))
    return float(value)
