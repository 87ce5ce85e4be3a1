"""Class-consistency analysis of learned disease representations.

Diseases are compared through the cosine similarity of the rows of the
symmetrised coefficient matrix ``S = (C + C^T) / 2``. Pairs of diseases from
the same class (intra) are contrasted with pairs from different classes
(inter) with a Wilcoxon rank-sum test.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import log_ndtr
from scipy.stats import rankdata

__all__ = [
    "DiseaseClassMap",
    "RankSumResult",
    "SimilarityAnalysis",
    "symmetrize",
    "cosine_rows",
    "zero_rows",
    "class_split",
    "rank_sum_test",
    "analyze",
    "export_network",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiseaseClassMap:
    """Disease -> class label assignments after filtering.

    Build with :meth:`from_pairs`, which applies the uniqueness and
    minimum-class-size filters and records what was dropped.
    """

    assignments: dict[str, str]
    dropped_multiclass: tuple[str, ...] = ()
    dropped_small: tuple[str, ...] = ()
    unknown: tuple[str, ...] = ()

    @property
    def class_counts(self) -> dict[str, int]:
        counts = Counter(self.assignments.values())
        return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))

    @classmethod
    def from_pairs(cls, pairs, known_ids: Sequence[str] | None = None,
                   min_class_size: int = 5) -> "DiseaseClassMap":
        """Filter raw ``(disease_id, class)`` pairs.

        Diseases listed under more than one distinct class are dropped, then
        classes with fewer than `min_class_size` members. Ids not in
        `known_ids` (when given) are skipped with a warning.
        """
        labels: dict[str, set[str]] = {}
        for disease, label in pairs:
            labels.setdefault(str(disease), set()).add(str(label))
        unknown = ()
        if known_ids is not None:
            known = set(known_ids)
            unknown = tuple(sorted(d for d in labels if d not in known))
            if unknown:
                logger.warning("%d class entries refer to unknown diseases; skipped", len(unknown))
            labels = {d: ls for d, ls in labels.items() if d in known}
        multi = tuple(sorted(d for d, ls in labels.items() if len(ls) > 1))
        unique = {d: next(iter(ls)) for d, ls in labels.items() if len(ls) == 1}
        counts = Counter(unique.values())
        small = tuple(sorted(d for d, c in unique.items() if counts[c] < min_class_size))
        kept = {d: c for d, c in sorted(unique.items()) if counts[c] >= min_class_size}
        return cls(kept, multi, small, unknown)

    def restricted(self, min_class_size: int) -> "DiseaseClassMap":
        counts = self.class_counts
        return DiseaseClassMap({d: c for d, c in self.assignments.items()
                                if counts[c] >= min_class_size})


def symmetrize(C) -> np.ndarray:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {C.shape}")
    return (C + C.T) / 2


def zero_rows(S) -> np.ndarray:
    """Indices of rows with zero norm."""
    return np.flatnonzero(np.linalg.norm(np.asarray(S, dtype=np.float64), axis=1) == 0)


def cosine_rows(S) -> np.ndarray:
    """Cosine similarity between the rows of `S`.

    Zero rows get similarity 0 with everything, themselves included.
    """
    S = np.asarray(S, dtype=np.float64)
    norms = np.linalg.norm(S, axis=1)
    inv = np.zeros_like(norms)
    nz = norms > 0
    inv[nz] = 1.0 / norms[nz]
    U = S * inv[:, None]
    sim = U @ U.T
    np.clip(sim, -1.0, 1.0, out=sim)
    sim = (sim + sim.T) / 2
    idx = np.flatnonzero(nz)
    sim[idx, idx] = 1.0
    return sim


def class_split(sim, disease_ids: Sequence[str],
                classes: DiseaseClassMap) -> tuple[np.ndarray, np.ndarray]:
    """Split similarities of unordered classified pairs into intra and inter."""
    sim = np.asarray(sim)
    pos = [(i, classes.assignments[d]) for i, d in enumerate(disease_ids)
           if d in classes.assignments]
    if len(pos) < 2:
        raise ValueError("need at least two classified diseases")
    idx = np.array([i for i, _ in pos])
    codes = np.unique([c for _, c in pos], return_inverse=True)[1]
    iu, ju = np.triu_indices(len(idx), k=1)
    values = sim[idx[iu], idx[ju]]
    same = codes[iu] == codes[ju]
    return values[same], values[~same]


@dataclass(frozen=True)
class RankSumResult:
    """Two-sided rank-sum test result.

    `statistic` is the continuity-corrected z score of the first sample's U
    (positive when the first sample tends to be larger). `log10_p_value`
    stays finite when `p_value` underflows to 0.
    """

    statistic: float
    p_value: float
    log10_p_value: float
    u_statistic: float

    def __iter__(self):
        yield self.statistic
        yield self.p_value

    def p_upper_bound(self) -> str:
        if self.p_value > 0:
            return f"{self.p_value:.3e}"
        exponent = math.ceil(self.log10_p_value)
        return f"<1e{exponent}"


def rank_sum_test(a, b) -> RankSumResult:
    """Wilcoxon rank-sum (Mann-Whitney) test, normal approximation.

    Midranks for ties with the tie-corrected variance, and a 0.5 continuity
    correction toward the mean. If every value is identical the variance is
    zero and p is 1.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    n = n1 + n2
    ranks = rankdata(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    _, ties = np.unique(pooled, return_counts=True)
    ties = ties.astype(np.float64)
    tie_term = float(np.sum(ties**3 - ties)) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return RankSumResult(0.0, 1.0, 0.0, u)
    diff = u - n1 * n2 / 2.0
    z = math.copysign(max(abs(diff) - 0.5, 0.0), diff) / math.sqrt(var)
    log_p = min(float(log_ndtr(-abs(z))) + math.log(2.0), 0.0)
    return RankSumResult(z, math.exp(log_p), log_p / math.log(10.0), u)


@dataclass
class SimilarityAnalysis:
    similarity: np.ndarray
    intra_values: np.ndarray
    inter_values: np.ndarray
    test: RankSumResult
    zero_row_ids: list[str] = field(default_factory=list)

    @property
    def test_statistic(self) -> float:
        return self.test.statistic

    @property
    def p_value(self) -> float:
        return self.test.p_value

    def summary(self) -> dict:
        return {
            "n_intra": int(self.intra_values.size),
            "n_inter": int(self.inter_values.size),
            "mean_intra": float(np.mean(self.intra_values)) if self.intra_values.size else None,
            "mean_inter": float(np.mean(self.inter_values)) if self.inter_values.size else None,
            "statistic": self.test.statistic,
            "p_value": self.test.p_value,
            "log10_p_value": self.test.log10_p_value,
            "p_value_reported": self.test.p_upper_bound(),
            "zero_rows": list(self.zero_row_ids),
        }


def analyze(C, disease_ids: Sequence[str], classes: DiseaseClassMap) -> SimilarityAnalysis:
    """Cosine similarity of ``(C + C^T) / 2`` and the intra vs inter test."""
    S = symmetrize(C)
    sim = cosine_rows(S)
    intra, inter = class_split(sim, disease_ids, classes)
    if intra.size and inter.size:
        test = rank_sum_test(intra, inter)
    else:
        test = RankSumResult(0.0, 1.0, 0.0, 0.0)
    zr = [disease_ids[i] for i in zero_rows(S)]
    if zr:
        logger.warning("%d diseases have all-zero representations", len(zr))
    return SimilarityAnalysis(sim, intra, inter, test, zr)


def export_network(sim, disease_ids: Sequence[str], classes: DiseaseClassMap,
                   out_dir, edge_threshold: float = 0.5, min_class_size: int = 10,
                   prefix: str = "") -> tuple[Path, Path]:
    """Write tab-separated node and edge lists for graph tools.

    Nodes are the classified diseases whose class has at least
    `min_class_size` members (columns ``id, class``). Edges connect retained
    node pairs with similarity >= `edge_threshold` (columns ``source, target,
    weight``), each unordered pair once.
    """
    if not 0 <= edge_threshold:
        raise ValueError("edge_threshold must be non-negative")
    sim = np.asarray(sim)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kept = classes.restricted(min_class_size).assignments
    nodes = [(i, d, kept[d]) for i, d in enumerate(disease_ids) if d in kept]
    node_path = out_dir / f"{prefix}nodes.tsv"
    edge_path = out_dir / f"{prefix}edges.tsv"
    with open(node_path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["id", "class"])
        w.writerows((d, c) for _, d, c in nodes)
    n_edges = 0
    with open(edge_path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["source", "target", "weight"])
        for a in range(len(nodes)):
            i, di, _ = nodes[a]
            for b in range(a + 1, len(nodes)):
                j, dj, _ = nodes[b]
                if sim[i, j] >= edge_threshold:
                    w.writerow([di, dj, repr(float(sim[i, j]))])
                    n_edges += 1
    if n_edges == 0:
        logger.warning("edge threshold %.3g excludes every edge", edge_threshold)
    return node_path, edge_path
