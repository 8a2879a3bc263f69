"""Sparse symmetric matrices in CSR form, Matrix Market ingestion, and preconditioners.

Symmetric matrices are stored fully expanded (both triangles), which keeps the
matrix-vector product branch-free at the cost of duplicating off-diagonal
entries.  All floating point is IEEE double precision.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np


class MatrixFormatError(ValueError):
    """Malformed or unsupported Matrix Market input."""


class NotSymmetricError(MatrixFormatError):
    """A `general` file whose entries are not exactly symmetric."""


class IC0BreakdownError(RuntimeError):
    """Zero-fill incomplete Cholesky hit a nonpositive pivot.

    Attributes
    ----------
    row : int
        0-based row index of the failing pivot.
    pivot : float
        The nonpositive value found under the square root.
    """

    def __init__(self, row: int, pivot: float):
        super().__init__(f"ic0 pivot <= 0 at row {row} (1-based {row + 1}): {pivot!r}")
        self.row = row
        self.pivot = pivot


@dataclass(frozen=True)
class SparseSymMatrix:
    """Symmetric matrix in fully expanded CSR form.

    Invariants enforced at construction: nondecreasing ``row_offsets``,
    in-range sorted column indices without duplicates, exact entrywise
    symmetry, and a strictly positive diagonal entry stored in every row
    (a necessary condition for positive definiteness; full SPD is not
    checked here).
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i`` (views, do not mutate)."""
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def diagonal(self) -> np.ndarray:
        d = np.empty(self.n)
        for i in range(self.n):
            cols, vals = self.row(i)
            pos = np.searchsorted(cols, i)
            d[i] = vals[pos]
        return d

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i in range(self.n):
            cols, vals = self.row(i)
            out[i, cols] = vals
        return out


def from_coo(n: int, rows: Sequence[int], cols: Sequence[int], vals: Sequence[float],
             check_symmetry: bool = True) -> SparseSymMatrix:
    """Build a :class:`SparseSymMatrix` from 0-based coordinate data.

    The coordinate list must already contain both triangles.  Duplicate
    (row, col) pairs, missing or nonpositive diagonal entries, and (when
    ``check_symmetry``) asymmetric data are rejected.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size != cols.size or rows.size != vals.size:
        raise MatrixFormatError("coordinate arrays have mismatched lengths")
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise MatrixFormatError("coordinate index out of range")

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size > 1:
        same = (np.diff(rows) == 0) & (np.diff(cols) == 0)
        if same.any():
            i = int(np.flatnonzero(same)[0])
            raise MatrixFormatError(
                f"duplicate entry at (row {rows[i]}, col {cols[i]}) (0-based)")

    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(row_offsets, rows + 1, 1)
    row_offsets = np.cumsum(row_offsets)
    A = SparseSymMatrix(n=n, row_offsets=row_offsets, col_indices=cols, values=vals)

    # every row must carry its diagonal, strictly positive
    for i in range(n):
        c, v = A.row(i)
        if c.size == 0:
            raise MatrixFormatError(f"row {i} is empty (diagonal entry missing)")
        pos = np.searchsorted(c, i)
        if pos >= c.size or c[pos] != i:
            raise MatrixFormatError(f"diagonal entry ({i}, {i}) missing")
        if not v[pos] > 0.0:
            raise MatrixFormatError(f"nonpositive diagonal entry at index {i}: {v[pos]!r}")

    if check_symmetry:
        transposed = {}
        for i, j, v in zip(rows, cols, vals):
            transposed[(int(j), int(i))] = float(v)
        for i, j, v in zip(rows, cols, vals):
            if transposed.get((int(i), int(j))) != float(v):
                raise NotSymmetricError(
                    f"entry ({i}, {j}) has no matching transpose entry of identical value")
    return A


def from_dense(dense: np.ndarray, tol: float = 0.0) -> SparseSymMatrix:
    """CSR view of a dense symmetric matrix, dropping entries with |a_ij| <= tol."""
    dense = np.asarray(dense, dtype=np.float64)
    n = dense.shape[0]
    r, c = np.nonzero(np.abs(dense) > tol)
    keep = np.abs(dense[r, c]) > tol
    return from_coo(n, r[keep], c[keep], dense[r, c][keep])


# ---------------------------------------------------------------------------
# Matrix Market

def parse_matrix_market(source) -> SparseSymMatrix:
    """Parse Matrix Market ``coordinate real`` data into expanded CSR form.

    Accepts a text string, bytes, or a readable text stream.  Supported
    headers are ``matrix coordinate real symmetric`` (lower triangle stored,
    expanded here) and ``matrix coordinate real general`` (must be exactly
    symmetric).  Indices are 1-based; comment lines start with ``%``.

    Raises
    ------
    MatrixFormatError
        Malformed header, unsupported format/field, non-square size,
        index out of range, duplicate entries, missing or nonpositive
        diagonal.
    NotSymmetricError
        ``general`` input that is not entrywise symmetric.
    """
    if isinstance(source, bytes):
        source = source.decode("ascii", errors="replace")
    if isinstance(source, str):
        source = io.StringIO(source)

    header = source.readline()
    parts = header.split()
    if len(parts) < 5 or not parts[0].lower().startswith("%%matrixmarket"):
        raise MatrixFormatError(f"malformed Matrix Market header: {header.strip()!r}")
    obj, fmt, field, symmetry = (p.lower() for p in parts[1:5])
    if obj != "matrix":
        raise MatrixFormatError(f"unsupported object {obj!r}")
    if fmt != "coordinate":
        raise MatrixFormatError(f"unsupported format {fmt!r} (only 'coordinate')")
    if field != "real":
        raise MatrixFormatError(f"unsupported field {field!r} (only 'real')")
    if symmetry not in ("symmetric", "general"):
        raise MatrixFormatError(f"unsupported symmetry {symmetry!r}")

    size_line = None
    for line in source:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        size_line = stripped
        break
    if size_line is None:
        raise MatrixFormatError("missing size line")
    toks = size_line.split()
    if len(toks) != 3:
        raise MatrixFormatError(f"malformed size line: {size_line!r}")
    try:
        nrows, ncols, nnz = (int(t) for t in toks)
    except ValueError as exc:
        raise MatrixFormatError(f"malformed size line: {size_line!r}") from exc
    if nrows != ncols:
        raise MatrixFormatError(f"matrix is not square: {nrows} x {ncols}")
    n = nrows

    ij, vv = [], []
    for line in source:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        toks = stripped.split()
        if len(toks) != 3:
            raise MatrixFormatError(f"malformed entry line: {stripped!r}")
        try:
            i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
        except ValueError as exc:
            raise MatrixFormatError(f"malformed entry line: {stripped!r}") from exc
        if not (1 <= i <= n and 1 <= j <= n):
            raise MatrixFormatError(f"index out of range in entry {stripped!r}")
        if symmetry == "symmetric" and i < j:
            raise MatrixFormatError(
                f"symmetric file stores the lower triangle only, got entry ({i}, {j})")
        ij.append((i - 1, j - 1))
        vv.append(v)
    if len(ij) != nnz:
        raise MatrixFormatError(f"expected {nnz} entries, found {len(ij)}")

    rows, cols, vals = [], [], []
    for (i, j), v in zip(ij, vv):
        rows.append(i)
        cols.append(j)
        vals.append(v)
        if symmetry == "symmetric" and i != j:
            rows.append(j)
            cols.append(i)
            vals.append(v)
    return from_coo(n, rows, cols, vals, check_symmetry=(symmetry == "general"))


def load_matrix_market(path) -> SparseSymMatrix:
    with open(path, "r") as f:
        return parse_matrix_market(f)


def write_matrix_market(A: SparseSymMatrix, path, comment: str = ""):
    """Write the lower triangle in ``coordinate real symmetric`` format."""
    entries = []
    for i in range(A.n):
        cols, vals = A.row(i)
        for j, v in zip(cols, vals):
            if j <= i:
                entries.append((j, i, v))
    entries.sort()
    with open(path, "w") as f:
        f.write("%%MatrixMarket matrix coordinate real symmetric\n")
        if comment:
            f.write(f"% {comment}\n")
        f.write(f"{A.n} {A.n} {len(entries)}\n")
        for j, i, v in entries:
            f.write(f"{i + 1} {j + 1} {v:.17g}\n")


# ---------------------------------------------------------------------------
# Matrix-vector product

def matvec(A: SparseSymMatrix, x: np.ndarray, strict: bool = False) -> np.ndarray:
    """Compute ``A @ x``.

    Both modes are deterministic for a fixed build.  ``strict=True`` sums each
    row left-to-right in storage order (the documented reproducibility
    contract used by tests); the default vectorized path uses numpy's segment
    reduction, which is deterministic but may round differently.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise ValueError(f"dimension mismatch: matrix order {A.n}, vector shape {x.shape}")
    if strict:
        y = np.empty(A.n)
        cols, vals, offs = A.col_indices, A.values, A.row_offsets
        for i in range(A.n):
            s = 0.0
            for idx in range(offs[i], offs[i + 1]):
                s += vals[idx] * x[cols[idx]]
            y[i] = s
        return y
    products = A.values * x[A.col_indices]
    return np.add.reduceat(products, A.row_offsets[:-1])


# ---------------------------------------------------------------------------
# Preconditioners

class PrecondKind(str, Enum):
    NONE = "none"
    JACOBI = "jacobi"
    IC0 = "ic0"


@dataclass(frozen=True)
class Preconditioner:
    """Symmetric positive definite preconditioner M with an M^{-1} apply.

    ``none`` is the identity; ``jacobi`` stores the inverse diagonal of A;
    ``ic0`` stores the zero-fill incomplete Cholesky factor L (M = L L^T) on
    the lower-triangle sparsity pattern of A.
    """

    kind: PrecondKind
    inv_diag: np.ndarray | None = None
    L: SparseSymMatrixFactor | None = None

    @property
    def is_identity(self) -> bool:
        return self.kind is PrecondKind.NONE

    def apply_inverse(self, r: np.ndarray) -> np.ndarray:
        """Solve M z = r."""
        if self.kind is PrecondKind.NONE:
            return r
        if self.kind is PrecondKind.JACOBI:
            return r * self.inv_diag
        y = self.L.forward_solve(r)
        return self.L.transpose_solve(y)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Compute M x (used by norm checks and the nonzero-x0 correction)."""
        if self.kind is PrecondKind.NONE:
            return x
        if self.kind is PrecondKind.JACOBI:
            return x / self.inv_diag
        return self.L.matvec(self.L.transpose_matvec(x))

    def to_dense(self, n: int) -> np.ndarray:
        if self.kind is PrecondKind.NONE:
            return np.eye(n)
        if self.kind is PrecondKind.JACOBI:
            return np.diag(1.0 / self.inv_diag)
        Ld = self.L.to_dense()
        return Ld @ Ld.T


@dataclass(frozen=True)
class SparseSymMatrixFactor:
    """Lower-triangular CSR factor with the matching CSC view for transpose ops."""

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    col_offsets: np.ndarray
    row_indices: np.ndarray
    csc_values: np.ndarray

    def forward_solve(self, b: np.ndarray) -> np.ndarray:
        """Solve L y = b (the diagonal entry is last in each row)."""
        y = np.empty(self.n)
        offs, cols, vals = self.row_offsets, self.col_indices, self.values
        for i in range(self.n):
            lo, hi = offs[i], offs[i + 1]
            s = b[i]
            for idx in range(lo, hi - 1):
                s -= vals[idx] * y[cols[idx]]
            y[i] = s / vals[hi - 1]
        return y

    def transpose_solve(self, b: np.ndarray) -> np.ndarray:
        """Solve L^T z = b; row j of L^T is the CSC column j (diagonal first)."""
        z = np.empty(self.n)
        offs, rows, vals = self.col_offsets, self.row_indices, self.csc_values
        for j in range(self.n - 1, -1, -1):
            lo, hi = offs[j], offs[j + 1]
            s = b[j]
            for idx in range(lo + 1, hi):
                s -= vals[idx] * z[rows[idx]]
            z[j] = s / vals[lo]
        return z

    def matvec(self, x: np.ndarray) -> np.ndarray:
        products = self.values * x[self.col_indices]
        return np.add.reduceat(products, self.row_offsets[:-1])

    def transpose_matvec(self, x: np.ndarray) -> np.ndarray:
        products = self.csc_values * x[self.row_indices]
        return np.add.reduceat(products, self.col_offsets[:-1])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for i in range(self.n):
            lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
            out[i, self.col_indices[lo:hi]] = self.values[lo:hi]
        return out


def build_preconditioner(A: SparseSymMatrix, kind: PrecondKind | str) -> Preconditioner:
    """Construct a preconditioner of the requested kind for A.

    ``ic0`` performs the zero-fill incomplete Cholesky factorization on the
    sparsity pattern of the lower triangle of A.  A nonpositive pivot raises
    :class:`IC0BreakdownError` with the pivot index; no automatic diagonal
    shifting is applied (the caller may fall back to ``jacobi``).
    """
    kind = PrecondKind(kind)
    if kind is PrecondKind.NONE:
        return Preconditioner(kind=kind)
    if kind is PrecondKind.JACOBI:
        return Preconditioner(kind=kind, inv_diag=1.0 / A.diagonal())
    return Preconditioner(kind=kind, L=_ic0_factor(A))


def _ic0_factor(A: SparseSymMatrix) -> SparseSymMatrixFactor:
    n = A.n
    row_cols: list[np.ndarray] = []
    row_vals: list[np.ndarray] = []
    for i in range(n):
        cols, vals = A.row(i)
        keep = cols <= i
        row_cols.append(cols[keep].copy())
        row_vals.append(vals[keep].astype(np.float64).copy())

    for i in range(n):
        cols_i, vals_i = row_cols[i], row_vals[i]
        for pos in range(cols_i.size):
            j = cols_i[pos]
            s = vals_i[pos]
            # sparse dot of row i and row j over shared columns k < j
            cols_j, vals_j = row_cols[j], row_vals[j]
            a = b = 0
            while a < pos and b < cols_j.size - 1:
                ca, cb = cols_i[a], cols_j[b]
                if ca == cb:
                    s -= vals_i[a] * vals_j[b]
                    a += 1
                    b += 1
                elif ca < cb:
                    a += 1
                else:
                    b += 1
            if j == i:
                if s <= 0.0:
                    raise IC0BreakdownError(i, float(s))
                vals_i[pos] = math.sqrt(s)
            else:
                vals_i[pos] = s / row_vals[j][-1]

    offs = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        offs[i + 1] = offs[i] + row_cols[i].size
    cols = np.concatenate(row_cols)
    vals = np.concatenate(row_vals)

    # CSC view (== CSR of L^T), diagonal first within each column
    order = np.lexsort((np.repeat(np.arange(n), np.diff(offs)), cols))
    rows_concat = np.repeat(np.arange(n), np.diff(offs))
    col_offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(col_offsets, cols + 1, 1)
    col_offsets = np.cumsum(col_offsets)
    return SparseSymMatrixFactor(
        n=n,
        row_offsets=offs,
        col_indices=cols,
        values=vals,
        col_offsets=col_offsets,
        row_indices=rows_concat[order],
        csc_values=vals[order],
    )
