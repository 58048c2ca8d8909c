"""Learner-by-category matrices and their one-mode projection.

The input is a binary incidence matrix: one row per learner, one column per
content-category label, entry 1 when the learner has at least one post
carrying that label.  Projecting it onto the learner set gives a symmetric
count matrix whose (i, j) entry is the number of category labels learners i
and j share; that count matrix is what inference consumes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataValidationError


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _check_unique(ids, kind: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise DataValidationError(f"duplicate {kind} id {i!r}")
        seen.add(i)


@dataclass(frozen=True)
class LearnerCategoryMatrix:
    """Binary incidence matrix of learners against content-category labels.

    entries[n, d] is 1 when learner n carries label d.  A learner enters the
    matrix only by being labelled, so all-zero rows are rejected.
    """

    entries: np.ndarray
    learner_ids: tuple[str, ...]
    category_ids: tuple[str, ...]

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2:
            raise DataValidationError("entries must be a 2-d matrix")
        if entries.size and not np.isin(entries, (0, 1)).all():
            raise DataValidationError("entries must be 0 or 1")
        object.__setattr__(self, "entries", _freeze(entries.astype(np.int64)))
        object.__setattr__(self, "learner_ids", tuple(self.learner_ids))
        object.__setattr__(self, "category_ids", tuple(self.category_ids))
        n, d = self.entries.shape
        if len(self.learner_ids) != n:
            raise DataValidationError(
                f"{len(self.learner_ids)} learner ids for {n} rows")
        if len(self.category_ids) != d:
            raise DataValidationError(
                f"{len(self.category_ids)} category ids for {d} columns")
        _check_unique(self.learner_ids, "learner")
        _check_unique(self.category_ids, "category")
        row_sums = self.entries.sum(axis=1)
        if (row_sums == 0).any():
            offender = self.learner_ids[int(np.argmax(row_sums == 0))]
            raise DataValidationError(
                f"learner {offender!r} has no category labels (all-zero row)")

    @property
    def n_learners(self) -> int:
        return self.entries.shape[0]

    @property
    def n_categories(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric nonnegative-integer learner-by-learner count matrix.

    Two provenance classes share this type: one-mode projections, where the
    diagonal equals each learner's label degree and off-diagonal entries are
    bounded by it, and direct Poisson draws from the synthetic generators,
    which satisfy only symmetry and nonnegativity.  Inference accepts both.
    """

    entries: np.ndarray
    learner_ids: tuple[str, ...]

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DataValidationError("entries must be a square matrix")
        if not np.issubdtype(entries.dtype, np.integer):
            if not np.equal(np.mod(entries, 1), 0).all():
                raise DataValidationError("entries must be integers")
        if entries.size and entries.min() < 0:
            raise DataValidationError("entries must be nonnegative")
        entries = entries.astype(np.int64)
        if not np.array_equal(entries, entries.T):
            raise DataValidationError("matrix must be exactly symmetric")
        object.__setattr__(self, "entries", _freeze(entries))
        object.__setattr__(self, "learner_ids", tuple(self.learner_ids))
        if len(self.learner_ids) != entries.shape[0]:
            raise DataValidationError(
                f"{len(self.learner_ids)} learner ids for "
                f"{entries.shape[0]} rows")
        _check_unique(self.learner_ids, "learner")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def zero_diagonal(self) -> "SimilarityMatrix":
        """Copy with self-similarity removed, for sensitivity analysis."""
        entries = self.entries.copy()
        np.fill_diagonal(entries, 0)
        return SimilarityMatrix(entries, self.learner_ids)


def one_mode_projection(c: LearnerCategoryMatrix) -> SimilarityMatrix:
    """Project the bipartite incidence matrix onto the learner set.

    x[i, j] counts the category labels learners i and j share; the diagonal
    x[i, i] is learner i's label degree and is retained.
    """
    x = c.entries @ c.entries.T
    return SimilarityMatrix(x, c.learner_ids)


def _reader(source):
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    return csv.reader(io.StringIO(text))


def load_learner_category_matrix(source, format: str = "csv") -> LearnerCategoryMatrix:
    """Parse a learner-by-category CSV.

    Expected layout: header ``learner_id,<category id>,...`` followed by one
    row per learner with literal 0/1 cells.  Parse failures report the
    offending line number; structural violations (non-binary cells,
    duplicate ids, all-zero rows) raise DataValidationError.
    """
    if format != "csv":
        raise DataValidationError(f"unsupported format {format!r}")
    reader = _reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataValidationError("line 1: empty input") from None
    if not header or header[0].strip() != "learner_id":
        raise DataValidationError(
            "line 1: first column header must be 'learner_id'")
    category_ids = tuple(c.strip() for c in header[1:])
    if not category_ids:
        raise DataValidationError("line 1: no category columns")

    learner_ids: list[str] = []
    rows: list[list[int]] = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            raise DataValidationError(
                f"line {line}: expected {len(header)} fields, found {len(row)}")
        learner_ids.append(row[0].strip())
        values = []
        for col, cell in zip(category_ids, row[1:]):
            cell = cell.strip()
            if cell not in ("0", "1"):
                raise DataValidationError(
                    f"line {line}: cell {cell!r} in column {col!r} "
                    "is not a literal 0 or 1")
            values.append(int(cell))
        rows.append(values)
    if not rows:
        raise DataValidationError("no learner rows found")
    return LearnerCategoryMatrix(np.array(rows, dtype=np.int64),
                                 tuple(learner_ids), category_ids)


def load_similarity_matrix(source) -> SimilarityMatrix:
    """Parse a similarity-matrix CSV written by :func:`write_similarity_matrix`."""
    reader = _reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataValidationError("line 1: empty input") from None
    if not header or header[0].strip() != "learner_id":
        raise DataValidationError(
            "line 1: first column header must be 'learner_id'")
    header_ids = tuple(c.strip() for c in header[1:])

    learner_ids: list[str] = []
    rows: list[list[int]] = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            raise DataValidationError(
                f"line {line}: expected {len(header)} fields, found {len(row)}")
        learner_ids.append(row[0].strip())
        values = []
        for cell in row[1:]:
            try:
                v = int(cell.strip())
            except ValueError:
                raise DataValidationError(
                    f"line {line}: cell {cell.strip()!r} is not an integer"
                ) from None
            values.append(v)
        rows.append(values)
    if not rows:
        raise DataValidationError("no learner rows found")
    if tuple(learner_ids) != header_ids:
        raise DataValidationError(
            "column headers must repeat the learner ids in row order")
    return SimilarityMatrix(np.array(rows, dtype=np.int64), tuple(learner_ids))


def write_similarity_matrix(x: SimilarityMatrix, dest) -> None:
    """Write ``x`` as CSV: header ``learner_id,<ids...>``, integer cells."""
    own = not hasattr(dest, "write")
    handle = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        writer = csv.writer(handle)
        writer.writerow(("learner_id",) + x.learner_ids)
        for lid, row in zip(x.learner_ids, x.entries):
            writer.writerow([lid] + [int(v) for v in row])
    finally:
        if own:
            handle.close()
