"""Domain types, graph construction and the GSEM cost function.

The model learns a non-negative ``m x m`` matrix ``C`` such that ``X ~ X C``,
where ``X`` is the binary drug x disease association matrix. The cost is

    Q(C) = 1/2 ||X - XC||_F^2 + beta/2 ||C||_F^2 + lambda * sum(C)
           + alpha/2 Tr(C L C^T) + gamma Tr(C)

with ``L = D - W`` the Laplacian of the disease similarity graph. Everything
here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "AssociationMatrix",
    "SimilarityGraph",
    "Hyperparameters",
    "FitOptions",
    "build_graph",
    "empty_graph",
    "dirichlet_energy",
    "objective",
    "objective_terms",
    "gradient",
    "kkt_residual",
    "check_coefficients",
]


@dataclass(frozen=True)
class AssociationMatrix:
    """Binary drug x disease matrix with identifier maps.

    Rows are drugs, columns are diseases.
    """

    values: np.ndarray
    drug_ids: tuple[str, ...]
    disease_ids: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"association matrix must be 2-D, got shape {values.shape}")
        n, m = values.shape
        if n < 1 or m < 2:
            raise ValueError(f"need n >= 1 drugs and m >= 2 diseases, got {n}x{m}")
        if not np.all((values == 0.0) | (values == 1.0)):
            raise ValueError("association matrix entries must be exactly 0 or 1")
        drug_ids = tuple(str(d) for d in self.drug_ids)
        disease_ids = tuple(str(d) for d in self.disease_ids)
        if len(drug_ids) != n or len(disease_ids) != m:
            raise ValueError(
                f"identifier lengths ({len(drug_ids)}, {len(disease_ids)}) "
                f"do not match matrix shape {values.shape}"
            )
        if len(set(drug_ids)) != n:
            raise ValueError("duplicate drug identifiers")
        if len(set(disease_ids)) != m:
            raise ValueError("duplicate disease identifiers")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "drug_ids", drug_ids)
        object.__setattr__(self, "disease_ids", disease_ids)

    @classmethod
    def from_array(cls, values) -> "AssociationMatrix":
        """Wrap a bare 0/1 array using positional identifiers."""
        values = np.asarray(values)
        n, m = values.shape
        return cls(values, [f"drug{i}" for i in range(n)], [f"disease{j}" for j in range(m)])

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_positives(self) -> int:
        return int(self.values.sum())

    @property
    def density(self) -> float:
        return self.n_positives / self.values.size

    def with_values(self, values: np.ndarray) -> "AssociationMatrix":
        return AssociationMatrix(values, self.drug_ids, self.disease_ids)


@dataclass(frozen=True)
class SimilarityGraph:
    """Thresholded, symmetric disease similarity graph.

    Use :func:`build_graph` rather than constructing this directly; it
    enforces the symmetry, zero-diagonal and threshold invariants.
    """

    adjacency: np.ndarray
    tau: float
    degree: np.ndarray = field(repr=False)
    laplacian: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]


@dataclass(frozen=True)
class Hyperparameters:
    """Penalty weights of the cost function.

    Attributes
    ----------
    alpha : float
        Graph smoothness weight. ``alpha == 0`` gives the plain (non-geometric)
        self-expressive model.
    beta : float
        Squared Frobenius (ridge) weight.
    lam : float
        l1 weight (``lambda`` in config files and on the command line).
    gamma : float
        Diagonal penalty weight.
    tau : float
        Similarity threshold used when building the graph.
    """

    alpha: float = 1.0
    beta: float = 0.1
    lam: float = 0.0
    gamma: float = 1e4
    tau: float = 0.25

    def __post_init__(self):
        for name in ("alpha", "beta", "lam", "gamma", "tau"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
            object.__setattr__(self, name, value)
        if self.tau > 1:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "lambda": self.lam,
                "gamma": self.gamma, "tau": self.tau}

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass(frozen=True)
class FitOptions:
    """Controls for the multiplicative fitting loop.

    ``objective_stride`` evaluates the cost only every k-th iteration (the
    final value is always recorded); 1 means every iteration.
    """

    maxiter: int = 3000
    tol: float = 1e-3
    init_bound: float = 1e-2
    epsilon: float = 1e-16
    seed: int = 0
    objective_stride: int = 1

    def __post_init__(self):
        if int(self.maxiter) < 1:
            raise ValueError("maxiter must be a positive integer")
        if not self.tol > 0 or not self.init_bound > 0 or not self.epsilon > 0:
            raise ValueError("tol, init_bound and epsilon must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if int(self.objective_stride) < 1:
            raise ValueError("objective_stride must be >= 1")
        object.__setattr__(self, "maxiter", int(self.maxiter))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "objective_stride", int(self.objective_stride))
        for name in ("tol", "init_bound", "epsilon"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def to_dict(self) -> dict:
        return {"maxiter": self.maxiter, "tol": self.tol, "init_bound": self.init_bound,
                "epsilon": self.epsilon, "seed": self.seed,
                "objective_stride": self.objective_stride}


ArrayOrAssoc = Union[AssociationMatrix, np.ndarray, Sequence]


def _data(X: ArrayOrAssoc) -> np.ndarray:
    if isinstance(X, AssociationMatrix):
        return X.values
    return np.asarray(X, dtype=np.float64)


def _finish_graph(W: np.ndarray, tau: float) -> SimilarityGraph:
    degree = W.sum(axis=1)
    laplacian = np.diag(degree) - W
    for a in (W, degree, laplacian):
        a.setflags(write=False)
    return SimilarityGraph(adjacency=W, tau=float(tau), degree=degree, laplacian=laplacian)


def build_graph(raw_adjacency, tau: float) -> SimilarityGraph:
    """Build the thresholded similarity graph.

    The raw matrix is symmetrised as ``(W + W^T) / 2``, entries below `tau`
    are set to zero, and the diagonal is cleared before degrees and the
    Laplacian are computed.

    Raises
    ------
    ValueError
        If the matrix is not square, or has entries outside ``[0, 1]``, or
        `tau` is outside ``[0, 1]``.
    """
    W = np.array(raw_adjacency, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("adjacency contains non-finite values")
    if W.min(initial=0.0) < 0:
        raise ValueError("adjacency has negative entries")
    if W.max(initial=0.0) > 1:
        raise ValueError("adjacency has entries > 1; similarities must lie in [0, 1]")
    if not 0 <= tau <= 1:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    W = (W + W.T) / 2
    W[W < tau] = 0.0
    np.fill_diagonal(W, 0.0)
    return _finish_graph(W, tau)


def empty_graph(m: int) -> SimilarityGraph:
    """Edgeless graph on `m` nodes, for fits with ``alpha == 0``."""
    return _finish_graph(np.zeros((m, m)), 0.0)


def check_coefficients(C, m: int | None = None) -> np.ndarray:
    """Validate a coefficient matrix: square, finite, non-negative."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"coefficient matrix must be square, got shape {C.shape}")
    if m is not None and C.shape[0] != m:
        raise ValueError(f"coefficient matrix is {C.shape[0]}x{C.shape[0]}, expected {m}x{m}")
    if not np.all(np.isfinite(C)):
        raise ValueError("coefficient matrix contains non-finite values")
    if C.min(initial=0.0) < 0:
        raise ValueError("coefficient matrix has negative entries")
    return C


def _check_graph(graph: SimilarityGraph, m: int):
    if graph.size != m:
        raise ValueError(f"graph has {graph.size} nodes but there are {m} diseases")


def dirichlet_energy(C, graph: SimilarityGraph) -> float:
    """Smoothness energy ``Tr(C L C^T)`` of the columns of `C` over the graph.

    Equals ``1/2 * sum_ij w_ij ||c_i - c_j||^2`` over ordered pairs of
    columns.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[1] != graph.size:
        raise ValueError(f"C has {C.shape[-1]} columns but graph has {graph.size} nodes")
    return float(np.einsum("ij,ij->", C @ graph.laplacian, C))


def objective_terms(X: ArrayOrAssoc, C, graph: SimilarityGraph,
                    hp: Hyperparameters) -> dict[str, float]:
    """The five cost terms, already weighted."""
    Xv = _data(X)
    C = check_coefficients(C, Xv.shape[1])
    _check_graph(graph, Xv.shape[1])
    R = Xv - Xv @ C
    terms = {
        "reconstruction": 0.5 * float(np.einsum("ij,ij->", R, R)),
        "ridge": 0.5 * hp.beta * float(np.einsum("ij,ij->", C, C)),
        "l1": hp.lam * float(C.sum()),
        "smoothness": 0.0,
        "diagonal": hp.gamma * float(np.trace(C)),
    }
    if hp.alpha != 0:
        terms["smoothness"] = 0.5 * hp.alpha * dirichlet_energy(C, graph)
    return terms


def objective(X: ArrayOrAssoc, C, graph: SimilarityGraph, hp: Hyperparameters) -> float:
    """Value of the cost function at `C`."""
    t = objective_terms(X, C, graph, hp)
    return (t["reconstruction"] + t["ridge"] + t["l1"]) + t["smoothness"] + t["diagonal"]


def _gradient(XtX: np.ndarray, C: np.ndarray, graph: SimilarityGraph,
              hp: Hyperparameters) -> np.ndarray:
    G = XtX @ C - XtX + hp.beta * C + hp.lam
    if hp.alpha != 0:
        G += hp.alpha * (C * graph.degree - C @ graph.adjacency)
    G[np.diag_indices_from(G)] += hp.gamma
    return G


def gradient(X: ArrayOrAssoc, C, graph: SimilarityGraph, hp: Hyperparameters) -> np.ndarray:
    """Gradient of the cost in the smooth region ``C > 0``.

    ``X^T X C + alpha C D + beta C + lambda + gamma I - X^T X - alpha C W``
    """
    Xv = _data(X)
    C = check_coefficients(C, Xv.shape[1])
    _check_graph(graph, Xv.shape[1])
    return _gradient(Xv.T @ Xv, C, graph, hp)


def kkt_residual(X: ArrayOrAssoc, C, graph: SimilarityGraph, hp: Hyperparameters) -> float:
    """Complementarity residual ``max_ij |grad_ij * c_ij|``.

    Zero exactly at a KKT point of the non-negatively constrained problem
    (given that the gradient is non-negative wherever ``c_ij == 0``).
    """
    C = check_coefficients(C)
    return float(np.max(np.abs(gradient(X, C, graph, hp) * C)))
