"""Tab-separated readers and writers for associations, similarities, classes
and coefficient matrices.

All identifier orderings are canonicalised: drugs and diseases are sorted by
id, and similarity or class files are reconciled to the association matrix by
id, never by position.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import AssociationMatrix
from .interpret import DiseaseClassMap

__all__ = [
    "DataError",
    "load_associations",
    "save_associations",
    "load_matrix",
    "save_matrix",
    "load_similarity",
    "save_similarity",
    "load_classes",
    "save_classes",
    "load_coefficients",
    "save_coefficients",
    "save_sparse_coefficients",
    "load_sparse_coefficients",
    "numerical_rank",
]

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def _rows(path) -> list[list[str]]:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh, delimiter="\t") if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [[c.strip() for c in r] for r in rows]
    if not rows:
        raise DataError(f"{path} is empty")
    return rows


def _writer(fh):
    return csv.writer(fh, delimiter="\t", lineterminator="\n")


def _fmt(x: float) -> str:
    # integral values print bare so 0/1 matrices stay readable; repr round-trips
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def load_matrix(path) -> tuple[np.ndarray, list[str], list[str]]:
    """Read a headered dense TSV: the header lists column ids after a corner
    cell, every following row starts with its row id."""
    rows = _rows(path)
    header = rows[0]
    col_ids = header[1:]
    row_ids, values = [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
        row_ids.append(r[0])
        try:
            values.append([float(v) for v in r[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    M = np.array(values, dtype=np.float64).reshape(len(row_ids), len(col_ids))
    if len(set(row_ids)) != len(row_ids) or len(set(col_ids)) != len(col_ids):
        raise DataError(f"{path}: duplicate identifiers")
    return M, row_ids, col_ids


def save_matrix(path, M, row_ids: Sequence[str], col_ids: Sequence[str], corner: str = "id"):
    M = np.asarray(M)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow([corner, *col_ids])
        for rid, row in zip(row_ids, M):
            w.writerow([rid, *(_fmt(v) for v in row)])


def load_associations(path) -> AssociationMatrix:
    """Load drug-disease associations.

    Two layouts are recognised from the header: a two-column edge list
    (``drug<TAB>disease``, one association per line) or a dense 0/1 matrix
    with disease ids in the header and a drug id leading each row.
    """
    rows = _rows(path)
    if len(rows[0]) == 2:
        pairs = rows[1:]
        for lineno, r in enumerate(pairs, start=2):
            if len(r) != 2 or not r[0] or not r[1]:
                raise DataError(f"{path}:{lineno}: malformed edge line {r!r}")
        unique = set(map(tuple, pairs))
        if len(unique) < len(pairs):
            logger.warning("%s: collapsed %d duplicate associations", path, len(pairs) - len(unique))
        drugs = sorted({d for d, _ in unique})
        diseases = sorted({s for _, s in unique})
        di = {d: i for i, d in enumerate(drugs)}
        si = {s: j for j, s in enumerate(diseases)}
        values = np.zeros((len(drugs), len(diseases)))
        for d, s in unique:
            values[di[d], si[s]] = 1.0
    else:
        M, drugs, diseases = load_matrix(path)
        if not np.all((M == 0) | (M == 1)):
            raise DataError(f"{path}: dense association matrix must contain only 0 and 1")
        r = np.argsort(drugs, kind="stable")
        c = np.argsort(diseases, kind="stable")
        values = M[np.ix_(r, c)]
        drugs = [drugs[i] for i in r]
        diseases = [diseases[j] for j in c]
        empty = [drugs[i] for i in np.flatnonzero(values.sum(axis=1) == 0)]
        if empty:
            raise DataError(f"{path}: {len(empty)} drugs have no associations "
                            f"(e.g. {', '.join(empty[:5])})")
    if not len(drugs) or len(diseases) < 2:
        raise DataError(f"{path}: need at least one drug and two diseases")
    return AssociationMatrix(values, drugs, diseases)


def save_associations(X: AssociationMatrix, path, dense: bool = False):
    if dense:
        save_matrix(path, X.values.astype(int), X.drug_ids, X.disease_ids, corner="drug")
        return
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["drug", "disease"])
        for i, j in zip(*np.nonzero(X.values)):
            w.writerow([X.drug_ids[i], X.disease_ids[j]])


def load_similarity(path, disease_ids: Sequence[str] | None = None) -> tuple[np.ndarray, list[str]]:
    """Load a dense disease similarity matrix, reordered to `disease_ids`.

    Without `disease_ids` the ids are sorted.
    """
    M, row_ids, col_ids = load_matrix(path)
    if M.shape[0] != M.shape[1] or set(row_ids) != set(col_ids):
        raise DataError(f"{path}: similarity matrix must be square with matching row/column ids")
    if not np.all(np.isfinite(M)) or M.min() < 0 or M.max() > 1:
        raise DataError(f"{path}: similarity values must lie in [0, 1]")
    target = sorted(row_ids) if disease_ids is None else list(disease_ids)
    missing = sorted(set(target) - set(row_ids))
    extra = sorted(set(row_ids) - set(target))
    if missing or extra:
        raise DataError(f"{path}: disease ids do not match associations "
                        f"(missing {missing[:5]}, extra {extra[:5]})")
    ri = {d: i for i, d in enumerate(row_ids)}
    ci = {d: j for j, d in enumerate(col_ids)}
    r = [ri[d] for d in target]
    c = [ci[d] for d in target]
    return M[np.ix_(r, c)], target


def save_similarity(path, W, disease_ids: Sequence[str]):
    save_matrix(path, W, disease_ids, disease_ids, corner="disease")


def load_classes(path, known_ids: Sequence[str] | None = None,
                 min_class_size: int = 5) -> DiseaseClassMap:
    """Load a ``disease<TAB>class`` file and apply the class filters.

    See :meth:`DiseaseClassMap.from_pairs`.
    """
    rows = _rows(path)
    start = 1 if rows[0] == ["disease", "class"] else 0
    body = rows[start:]
    for lineno, r in enumerate(body, start=start + 1):
        if len(r) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(r)}")
    cmap = DiseaseClassMap.from_pairs(body, known_ids, min_class_size)
    logger.info("%s: kept %d diseases in %d classes (dropped %d multi-class, %d in small classes)",
                path, len(cmap.assignments), len(cmap.class_counts),
                len(cmap.dropped_multiclass), len(cmap.dropped_small))
    return cmap


def save_classes(path, assignments: dict[str, str]):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["disease", "class"])
        w.writerows(sorted(assignments.items()))


def save_coefficients(path, C, disease_ids: Sequence[str]):
    save_matrix(path, C, disease_ids, disease_ids, corner="disease")


def load_coefficients(path, disease_ids: Sequence[str] | None = None) -> tuple[np.ndarray, list[str]]:
    C, row_ids, col_ids = load_matrix(path)
    if row_ids != col_ids:
        raise DataError(f"{path}: coefficient rows and columns must list the same ids in order")
    if C.size and C.min() < 0:
        raise DataError(f"{path}: coefficients must be non-negative")
    if disease_ids is None:
        return C, row_ids
    if set(disease_ids) != set(row_ids):
        raise DataError(f"{path}: coefficient ids do not match the association diseases")
    idx = {d: i for i, d in enumerate(row_ids)}
    order = [idx[d] for d in disease_ids]
    return C[np.ix_(order, order)], list(disease_ids)


def save_sparse_coefficients(path, C, disease_ids: Sequence[str]):
    """Write the non-zero coefficients as ``row, col, value`` triplets."""
    C = np.asarray(C)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["row", "col", "value"])
        for i, j in zip(*np.nonzero(C)):
            w.writerow([disease_ids[i], disease_ids[j], repr(float(C[i, j]))])


def load_sparse_coefficients(path, disease_ids: Sequence[str]) -> np.ndarray:
    idx = {d: i for i, d in enumerate(disease_ids)}
    C = np.zeros((len(disease_ids), len(disease_ids)))
    for lineno, r in enumerate(_rows(path)[1:], start=2):
        if len(r) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields")
        try:
            C[idx[r[0]], idx[r[1]]] = float(r[2])
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return C


def numerical_rank(X, rtol: float | None = None) -> int:
    """Number of singular values above ``rtol * s_max``.

    The default `rtol` is ``max(n, m) * eps``, numpy's convention.
    """
    Xv = X.values if isinstance(X, AssociationMatrix) else np.asarray(X, dtype=np.float64)
    s = np.linalg.svd(Xv, compute_uv=False)
    if rtol is None:
        rtol = max(Xv.shape) * np.finfo(np.float64).eps
    return int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
