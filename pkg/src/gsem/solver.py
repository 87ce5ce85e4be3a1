"""Multiplicative-update fitting of the self-representation matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ArrayOrAssoc,
    FitOptions,
    Hyperparameters,
    SimilarityGraph,
    _check_graph,
    _data,
    _gradient,
    check_coefficients,
    empty_graph,
    objective,
)

__all__ = [
    "FitResult",
    "NumericalError",
    "init_coefficients",
    "update_step",
    "relative_change",
    "fit",
    "predict_scores",
]

logger = logging.getLogger(__name__)

# Per-step slack allowed before a rise in the objective is flagged.
MONOTONE_SLACK = 1e-9


class NumericalError(FloatingPointError):
    """Raised when the iterates stop being finite."""


@dataclass
class FitResult:
    """Outcome of :func:`fit`.

    Attributes
    ----------
    coefficients : ndarray, shape (m, m)
        Final non-negative coefficients. The diagonal is hard-zeroed unless
        ``fit(..., zero_diagonal=False)`` was requested.
    objective_history : list of float
        Cost at the initial point and after each evaluated iteration.
    delta_history : list of float
        Relative change of each update.
    iterations : int
        Number of updates applied.
    converged : bool
        True iff the relative-change stopping rule fired before ``maxiter``.
    kkt_residual : float
        ``max |grad * C|`` at the last iterate (before diagonal zeroing).
    max_diagonal : float
        Largest diagonal entry of the last iterate before zeroing.
    monotonicity_violations : list of int
        Iterations whose cost rose by more than ``MONOTONE_SLACK``.
    objective_iterations : list of int
        Iteration index of each `objective_history` entry (0 is the
        initial point).
    """

    coefficients: np.ndarray
    objective_history: list[float]
    delta_history: list[float]
    iterations: int
    converged: bool
    kkt_residual: float
    max_diagonal: float
    monotonicity_violations: list[int] = field(default_factory=list)
    objective_iterations: list[int] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.objective_history[-1]


def init_coefficients(m: int, opts: FitOptions) -> np.ndarray:
    """Draw an ``m x m`` matrix i.i.d. uniform on ``[0, init_bound)``.

    Uses numpy's PCG64 generator seeded with ``opts.seed``, so the draw is
    reproducible across platforms.
    """
    if m < 2:
        raise ValueError(f"need at least two diseases, got m={m}")
    rng = np.random.Generator(np.random.PCG64(opts.seed))
    C = rng.random((m, m)) * opts.init_bound
    # rounding of u * b can land exactly on b
    return np.minimum(C, np.nextafter(opts.init_bound, 0.0))


def _update(C, XtX, graph, hp, epsilon):
    numer = XtX.copy()
    denom = XtX @ C
    if hp.beta != 0:
        denom += hp.beta * C
    if hp.alpha != 0:
        numer += hp.alpha * (C @ graph.adjacency)
        denom += hp.alpha * (C * graph.degree)
    denom += hp.lam
    denom[np.diag_indices_from(denom)] += hp.gamma
    denom += epsilon
    return C * (numer / denom)


def update_step(C, XtX, graph: SimilarityGraph, hp: Hyperparameters,
                epsilon: float = 1e-16) -> np.ndarray:
    """Apply one multiplicative update.

    ``c_ij <- c_ij (XtX + alpha C W)_ij /
    ((XtX C + alpha C D + beta C)_ij + lambda + gamma [i == j] + epsilon)``
    """
    C = check_coefficients(C)
    XtX = np.asarray(XtX, dtype=np.float64)
    if XtX.shape != C.shape:
        raise ValueError(f"XtX shape {XtX.shape} does not match C shape {C.shape}")
    _check_graph(graph, C.shape[0])
    return _update(C, XtX, graph, hp, epsilon)


def relative_change(C_prev, C_next, epsilon: float = 1e-16) -> float:
    """``max_ij |C_next - C_prev| / (max_ij |C_prev| + epsilon)``.

    The denominator is the single global maximum of ``|C_prev|``.
    """
    C_prev = np.asarray(C_prev, dtype=np.float64)
    C_next = np.asarray(C_next, dtype=np.float64)
    if C_prev.shape != C_next.shape:
        raise ValueError(f"shape mismatch: {C_prev.shape} vs {C_next.shape}")
    scale = np.max(np.abs(C_prev), initial=0.0) + epsilon
    return float(np.max(np.abs(C_next - C_prev), initial=0.0) / scale)


def fit(X: ArrayOrAssoc, graph: SimilarityGraph | None, hp: Hyperparameters,
        opts: FitOptions | None = None, *, zero_diagonal: bool = True,
        init: np.ndarray | None = None, callback=None) -> FitResult:
    """Fit ``C`` by iterating the multiplicative rule.

    Stops after ``opts.maxiter`` updates or as soon as the relative change of
    an update falls below ``opts.tol``. `graph` may be None when
    ``hp.alpha == 0``. `init` overrides the random initialisation.
    `callback`, if given, is called as ``callback(it, C)`` after every update
    (``it == 0`` for the initial iterate); it must not modify ``C``.

    Raises
    ------
    NumericalError
        If an iterate contains NaN or Inf.
    """
    opts = opts or FitOptions()
    Xv = _data(X)
    m = Xv.shape[1]
    if graph is None:
        if hp.alpha != 0:
            raise ValueError("a similarity graph is required when alpha > 0")
        graph = empty_graph(m)
    _check_graph(graph, m)

    XtX = Xv.T @ Xv
    C = init_coefficients(m, opts) if init is None else check_coefficients(init, m).copy()
    objective_history = [objective(Xv, C, graph, hp)]
    if callback is not None:
        callback(0, C)
    objective_iterations = [0]
    delta_history: list[float] = []
    violations: list[int] = []
    converged = False
    it = 0
    for it in range(1, opts.maxiter + 1):
        C_next = _update(C, XtX, graph, hp, opts.epsilon)
        if not np.all(np.isfinite(C_next)):
            raise NumericalError(f"non-finite coefficients at iteration {it}")
        delta = relative_change(C, C_next, opts.epsilon)
        delta_history.append(delta)
        C = C_next
        if callback is not None:
            callback(it, C)
        converged = delta < opts.tol
        if it % opts.objective_stride == 0 or converged or it == opts.maxiter:
            value = objective(Xv, C, graph, hp)
            if value > objective_history[-1] + MONOTONE_SLACK:
                violations.append(it)
                logger.warning("objective rose by %.3e at iteration %d",
                               value - objective_history[-1], it)
            objective_history.append(value)
            objective_iterations.append(it)
        if converged:
            break

    kkt = float(np.max(np.abs(_gradient(XtX, C, graph, hp) * C)))
    max_diag = float(np.max(np.diag(C)))
    if zero_diagonal:
        C = C.copy()
        np.fill_diagonal(C, 0.0)
    logger.info("fit finished after %d iterations (converged=%s, objective=%.6g)",
                it, converged, objective_history[-1])
    return FitResult(
        coefficients=C,
        objective_history=objective_history,
        delta_history=delta_history,
        iterations=it,
        converged=converged,
        kkt_residual=kkt,
        max_diagonal=max_diag,
        monotonicity_violations=violations,
        objective_iterations=objective_iterations,
    )


def predict_scores(X: ArrayOrAssoc, C) -> np.ndarray:
    """Association scores ``X C``; higher means a stronger predicted link."""
    Xv = _data(X)
    C = check_coefficients(C, Xv.shape[1])
    return Xv @ C
