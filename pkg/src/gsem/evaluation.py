"""Cross-validated AUPR evaluation and hyperparameter grid search.

Positive entries of ``X`` are partitioned into folds. For each test fold the
model is fitted on ``X`` with the held-out positives zeroed, then the test
positives are ranked against negatives sampled from the entries that are zero
in the full matrix, at several negative-to-positive ratios.
"""

from __future__ import annotations

import itertools
import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import AssociationMatrix, FitOptions, Hyperparameters, SimilarityGraph, build_graph
from .solver import NumericalError, fit, predict_scores

__all__ = [
    "DEFAULT_RATIOS",
    "FoldPlan",
    "FoldResult",
    "EvalReport",
    "GridResult",
    "derive_seed",
    "make_folds",
    "mask_fold",
    "training_matrix",
    "sample_negatives",
    "aupr",
    "cross_validate",
    "grid_search",
]

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (1, 5, 10, 15, 20, 30, 40, 50, 100)


def derive_seed(master_seed: int, *key: int | str) -> int:
    """Derive an independent 64-bit seed from a master seed and a key path.

    String components are hashed with CRC32 so the result is stable across
    interpreter runs.
    """
    words = [int(master_seed)]
    for k in key:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def _coords(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    if a.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    return a.reshape(-1, 2)


@dataclass(frozen=True)
class FoldPlan:
    """Partition of the positive entries into `k` folds.

    Attributes
    ----------
    folds : list of ndarray, shape (f_i, 2)
        ``(drug, disease)`` coordinates held out in each fold.
    pinned : ndarray, shape (p, 2)
        Positives of drugs with a single association; they are never held
        out, so they belong to no fold.
    """

    folds: list[np.ndarray]
    pinned: np.ndarray
    seed: int
    k: int

    @property
    def n_pinned(self) -> int:
        return len(self.pinned)

    def validation_fold(self, test_fold: int) -> int:
        # half-way round so a drug's positives, which sit in consecutive
        # folds, rarely appear in both the test and the validation fold
        return (test_fold + max(1, self.k // 2)) % self.k


def make_folds(X, k: int = 10, seed: int = 0) -> FoldPlan:
    """Randomly partition the positives of `X` into `k` folds.

    Every drug keeps at least one positive outside each fold: the positives of
    a drug are dealt to consecutive folds, so a drug with ``p >= 2`` positives
    never has all of them in one fold. Drugs with exactly one positive are
    pinned to training. Fold sizes differ by at most one.
    """
    Xv = X.values if isinstance(X, AssociationMatrix) else np.asarray(X)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    counts = Xv.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError(f"{int(np.sum(counts == 0))} drugs have no associations")
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "folds")))
    folds: list[list[tuple[int, int]]] = [[] for _ in range(k)]
    pinned = []
    slot = 0
    for drug in rng.permutation(Xv.shape[0]):
        diseases = np.flatnonzero(Xv[drug])
        if len(diseases) == 1:
            pinned.append((int(drug), int(diseases[0])))
            continue
        for disease in rng.permutation(diseases):
            folds[slot % k].append((int(drug), int(disease)))
            slot += 1
    plan = FoldPlan(
        folds=[_coords(sorted(f)) for f in folds],
        pinned=_coords(sorted(pinned)),
        seed=seed,
        k=k,
    )
    if plan.n_pinned:
        logger.info("%d positives pinned to training (single-association drugs)", plan.n_pinned)
    return plan


def mask_fold(X: AssociationMatrix, fold) -> AssociationMatrix:
    """Copy of `X` with the given positive coordinates set to 0."""
    fold = _coords(fold)
    Xv = X.values if isinstance(X, AssociationMatrix) else np.asarray(X, dtype=np.float64)
    if len(fold) and not np.all(Xv[fold[:, 0], fold[:, 1]] == 1):
        raise ValueError("fold contains coordinates that are not positives in X")
    masked = Xv.copy()
    masked[fold[:, 0], fold[:, 1]] = 0.0
    if isinstance(X, AssociationMatrix):
        return X.with_values(masked)
    return masked


def training_matrix(X: AssociationMatrix, plan: FoldPlan, test_fold: int,
                    hide_validation: bool = True) -> tuple[AssociationMatrix, np.ndarray]:
    """Training matrix for one CV step and the validation positives it hides.

    Test positives are always hidden. Validation positives are hidden too when
    `hide_validation` is set, except any that would leave a drug with no
    training positive; those stay in training and are dropped from the
    returned validation set.
    """
    test = plan.folds[test_fold]
    masked = mask_fold(X, test)
    if not hide_validation:
        return masked, _coords([])
    remaining = masked.values.sum(axis=1)
    kept = []
    for drug, disease in plan.folds[plan.validation_fold(test_fold)]:
        if remaining[drug] > 1:
            remaining[drug] -= 1
            kept.append((drug, disease))
    validation = _coords(kept)
    return mask_fold(masked, validation), validation


def sample_negatives(X, n_positives: int, ratio: float, seed: int) -> np.ndarray:
    """Draw ``floor(ratio * n_positives)`` distinct zero entries of `X`.

    `X` must be the full (unmasked) matrix, so held-out positives are never
    drawn as negatives. Sampling is uniform without replacement.
    """
    Xv = X.values if isinstance(X, AssociationMatrix) else np.asarray(X)
    if not ratio > 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    count = int(math.floor(ratio * n_positives + 1e-9))
    zeros = np.flatnonzero(Xv.ravel() == 0)
    if count > len(zeros):
        raise ValueError(f"requested {count} negatives but only {len(zeros)} zero entries exist")
    rng = np.random.Generator(np.random.PCG64(seed))
    picked = np.sort(rng.choice(zeros, size=count, replace=False))
    return np.column_stack(np.unravel_index(picked, Xv.shape)).astype(np.int64)


def aupr(scores, labels) -> float:
    """Area under the precision-recall curve, step-wise, ties grouped.

    Scores are sorted in decreasing order; each block of tied scores is
    admitted at once, and the precision after the block is weighted by the
    recall it adds.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"length mismatch: {scores.size} scores, {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("need at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(labels[order])
    # last index of each tied block
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = tp[ends]
    precision = tp / (ends + 1)
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(recall_gain * precision))


@dataclass
class FoldResult:
    fold: int
    test_aupr: dict[float, float]
    validation_aupr: float | None
    converged: bool
    iterations: int


@dataclass
class EvalReport:
    """Per-fold test AUPR for each negative-to-positive ratio."""

    per_ratio: dict[float, list[float]]
    hyperparameters: Hyperparameters
    seed: int
    k: int
    validation: list[float] = field(default_factory=list)
    validation_ratio: float | None = None
    converged: list[bool] = field(default_factory=list)
    n_pinned: int = 0

    def mean(self, ratio: float) -> float:
        return float(np.mean(self.per_ratio[ratio]))

    def std(self, ratio: float) -> float:
        # population sd over folds
        return float(np.std(self.per_ratio[ratio]))

    @property
    def ratios(self) -> list[float]:
        return list(self.per_ratio)

    @property
    def validation_mean(self) -> float:
        vals = [v for v in self.validation if v is not None and not math.isnan(v)]
        return float(np.mean(vals)) if vals else float("nan")

    def summary(self) -> list[tuple[float, float, float]]:
        return [(r, self.mean(r), self.std(r)) for r in self.per_ratio]


def _score_positives(scores, X_full, positives, ratio, seed):
    positives = _coords(positives)
    neg = sample_negatives(X_full, len(positives), ratio, seed)
    s = np.r_[scores[positives[:, 0], positives[:, 1]], scores[neg[:, 0], neg[:, 1]]]
    y = np.r_[np.ones(len(positives)), np.zeros(len(neg))]
    return aupr(s, y)


def cross_validate(X: AssociationMatrix, graph: SimilarityGraph | None, hp: Hyperparameters,
                   opts: FitOptions | None = None, k: int = 10,
                   ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0,
                   validation_ratio: float | None = 2.0, hide_validation: bool = True,
                   plan: FoldPlan | None = None) -> EvalReport:
    """K-fold cross-validated AUPR.

    One model is fitted per fold (the ratio only changes which negatives are
    scored). Negatives are re-drawn for every ``(fold, ratio)`` pair from a
    seed derived from `seed`. When `validation_ratio` is given, the
    validation fold's positives are scored too, which is what
    :func:`grid_search` ranks on.

    The fit seed for fold f is derived from ``opts.seed`` so folds do not
    share an initialisation stream.
    """
    opts = opts or FitOptions()
    plan = plan or make_folds(X, k, seed)
    per_ratio: dict[float, list[float]] = {r: [] for r in ratios}
    report = EvalReport(per_ratio=per_ratio, hyperparameters=hp, seed=seed, k=plan.k,
                        validation_ratio=validation_ratio, n_pinned=plan.n_pinned)
    for f in range(plan.k):
        X_train, validation = training_matrix(X, plan, f, hide_validation)
        fold_opts = FitOptions(**{**opts.to_dict(), "seed": derive_seed(opts.seed, "fit", f)})
        result = fit(X_train, graph, hp, fold_opts)
        if not result.converged:
            logger.warning("fold %d did not converge in %d iterations", f, result.iterations)
        report.converged.append(result.converged)
        scores = predict_scores(X_train, result.coefficients)
        for ri, r in enumerate(ratios):
            per_ratio[r].append(
                _score_positives(scores, X, plan.folds[f], r, derive_seed(seed, "test", f, ri)))
        if validation_ratio is not None:
            if len(validation):
                report.validation.append(_score_positives(
                    scores, X, validation, validation_ratio, derive_seed(seed, "validation", f)))
            else:
                report.validation.append(float("nan"))
    return report


@dataclass
class GridResult:
    best: Hyperparameters | None
    table: list[dict]


def _tie_key(row):
    return (-row["validation_aupr"], row["alpha"], row["beta"], -row["lambda"], row["tau"])


def grid_search(X: AssociationMatrix, graph_raw, grid: dict[str, Iterable[float]],
                opts: FitOptions | None = None, k: int = 10,
                validation_ratio: float = 2.0, seed: int = 0,
                gamma: float = 1e4) -> GridResult:
    """Pick hyperparameters by mean validation AUPR over the CV folds.

    `grid` maps ``alpha``, ``beta``, ``lambda`` and ``tau`` to candidate
    lists (missing keys fall back to a single default value). `graph_raw` may
    be None only if every alpha candidate is 0. Ties are broken towards
    smaller alpha, smaller beta, larger lambda, then smaller tau. Grid points
    whose fit fails are reported with a NaN score and never selected.
    """
    defaults = Hyperparameters(gamma=gamma)
    axes = {name: [float(v) for v in grid.get(name, [getattr(defaults, attr)])]
            for name, attr in (("alpha", "alpha"), ("beta", "beta"),
                               ("lambda", "lam"), ("tau", "tau"))}
    if any(len(v) == 0 for v in axes.values()):
        raise ValueError("grid axes must be non-empty")
    plan = make_folds(X, k, seed)
    graphs: dict[float, SimilarityGraph | None] = {}
    table = []
    for alpha, beta, lam, tau in itertools.product(*axes.values()):
        hp = Hyperparameters(alpha=alpha, beta=beta, lam=lam, gamma=gamma, tau=tau)
        row = {**hp.to_dict(), "validation_aupr": float("nan"), "validation_sd": float("nan"),
               "status": "ok"}
        try:
            if alpha == 0:
                graph = None
            else:
                if graph_raw is None:
                    raise ValueError("similarity matrix required for alpha > 0")
                if tau not in graphs:
                    graphs[tau] = build_graph(graph_raw, tau)
                graph = graphs[tau]
            report = cross_validate(X, graph, hp, opts, ratios=(), seed=seed,
                                    validation_ratio=validation_ratio, plan=plan)
            vals = [v for v in report.validation if not math.isnan(v)]
            row["validation_aupr"] = float(np.mean(vals)) if vals else float("nan")
            row["validation_sd"] = float(np.std(vals)) if vals else float("nan")
            if not all(report.converged):
                row["status"] = "not-converged"
        except (NumericalError, ValueError) as exc:
            logger.warning("grid point %s failed: %s", hp.to_dict(), exc)
            row["status"] = f"failed: {exc}"
        table.append(row)
    scored = [r for r in table if not math.isnan(r["validation_aupr"])]
    best = None
    if scored:
        top = min(scored, key=_tie_key)
        best = Hyperparameters.from_dict({k_: top[k_] for k_ in
                                          ("alpha", "beta", "lambda", "gamma", "tau")})
    return GridResult(best=best, table=table)
