"""Classical discrete-time Markov chains over labelled states.

Counts are turned into row-stochastic operators by additive smoothing, hub
states are pruned at the count level, and operators are zero-padded to a
power-of-two dimension for amplitude encoding. Padded states are identity
self-loops so the padded operator stays row-stochastic; they never receive
mass from active states.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    BadDimension,
    BadParams,
    DimensionMismatch,
    NotConverged,
    SingularFundamental,
    TooFewStates,
    UnknownLabel,
    ZeroRow,
)
from .metrics import tvd

DEFAULT_BETA = 0.1
ROW_SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CountMatrix:
    """Raw recommendation-edge counts, ``counts[i, j]`` = edges from i to j."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise BadDimension(f"counts must be square, got shape {counts.shape}")
        if counts.shape[0] != len(labels):
            raise DimensionMismatch("one label per row/column required")
        if len(labels) < 2:
            raise TooFewStates("at least two states are required")
        if len(set(labels)) != len(labels):
            raise BadParams("labels must be unique")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise BadParams("counts must be integers")
        if np.any(counts < 0):
            raise BadParams("counts must be nonnegative")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "counts", _frozen(counts.astype(np.int64)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"unknown state {label!r}") from None


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic operator on ``len(labels)`` active states.

    ``probs`` has shape ``(dim, dim)``; when ``padded_dim`` is set, indices
    ``n..dim-1`` are padding.
    """

    labels: tuple[str, ...]
    probs: np.ndarray
    smoothing_beta: float = 0.0
    padded_dim: int | None = None

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2 or probs.shape[0] != probs.shape[1]:
            raise BadDimension(f"transition matrix must be square, got {probs.shape}")
        n = len(labels)
        dim = probs.shape[0]
        if self.padded_dim is None and dim != n:
            raise DimensionMismatch("unpadded matrix must have one row per label")
        if self.padded_dim is not None and self.padded_dim != dim:
            raise DimensionMismatch("padded_dim must equal the matrix dimension")
        if np.any(probs < 0):
            raise BadParams("transition probabilities must be nonnegative")
        if np.max(np.abs(probs.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise BadParams("rows must sum to 1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.probs.shape[0]

    @property
    def active(self) -> np.ndarray:
        """The ``n x n`` block on active states (itself row-stochastic)."""
        return self.probs[: self.n, : self.n]

    @classmethod
    def from_array(cls, probs, labels: Sequence[str] | None = None) -> "TransitionMatrix":
        probs = np.asarray(probs, dtype=float)
        if labels is None:
            labels = [str(i) for i in range(probs.shape[0])]
        return cls(tuple(labels), probs)


class PowerResult(NamedTuple):
    distribution: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True)
class HubReport:
    labels: tuple[str, ...]
    h_out: np.ndarray
    h_in: np.ndarray
    gamma: np.ndarray

    def records(self) -> dict[str, dict[str, float]]:
        return {
            lab: {"h_out": float(o), "h_in": float(i), "gamma": float(g)}
            for lab, o, i, g in zip(self.labels, self.h_out, self.h_in, self.gamma)
        }


@dataclass(frozen=True)
class SpectralReport:
    gap: float
    lambda_star: float
    reversible: bool
    stationary: np.ndarray
    fundamental: np.ndarray | None = field(default=None)


def check_distribution(p, n: int | None = None, tol: float = 1e-12) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise BadDimension("a distribution is a 1-D vector")
    if n is not None and p.shape[0] != n:
        raise DimensionMismatch(f"expected length {n}, got {p.shape[0]}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise BadParams("not a probability vector")
    return p


def smooth_counts(c: CountMatrix, beta: float = DEFAULT_BETA) -> TransitionMatrix:
    """Laplace-smoothed row normalisation ``(C_ij + beta) / sum_k (C_ik + beta)``."""
    if beta < 0:
        raise BadParams("beta must be nonnegative")
    counts = c.counts.astype(float) + beta
    totals = counts.sum(axis=1)
    if np.any(totals <= 0):
        bad = [c.labels[i] for i in np.flatnonzero(totals <= 0)]
        raise ZeroRow(f"all-zero rows with beta=0: {bad}")
    probs = counts / totals[:, None]
    # renormalise once more so the 1e-12 row-sum contract survives rounding
    probs /= probs.sum(axis=1, keepdims=True)
    return TransitionMatrix(c.labels, probs, smoothing_beta=float(beta))


def prune_states(c: CountMatrix, removed: Iterable[str]) -> CountMatrix:
    """Induced sub-count-matrix on the states not in ``removed``."""
    removed = set(removed)
    for lab in removed:
        c.index(lab)
    keep = [i for i, lab in enumerate(c.labels) if lab not in removed]
    if len(keep) < 2:
        raise TooFewStates("pruning must leave at least two states")
    return CountMatrix(tuple(c.labels[i] for i in keep), c.counts[np.ix_(keep, keep)])


def _is_pow2(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


def pad_matrix(p: TransitionMatrix, target_dim: int | str = "auto") -> TransitionMatrix:
    n = p.n
    if target_dim == "auto":
        N = 1 << max(1, int(np.ceil(np.log2(n))))
    else:
        N = int(target_dim)
        if N < n or not _is_pow2(N):
            raise BadDimension(f"target dimension {N} must be a power of two >= {n}")
    probs = np.eye(N)
    probs[:n, :n] = p.active
    return TransitionMatrix(p.labels, probs, p.smoothing_beta, padded_dim=N)


def _expand(p0, P: TransitionMatrix) -> tuple[np.ndarray, bool]:
    p0 = np.asarray(p0, dtype=float)
    if p0.shape == (P.dim,):
        return p0, False
    if p0.shape == (P.n,):
        full = np.zeros(P.dim)
        full[: P.n] = p0
        return full, True
    raise DimensionMismatch(f"distribution of length {p0.shape} does not fit a {P.dim}-state chain")


def push_forward(p0, P: TransitionMatrix, t: int) -> np.ndarray:
    """Classical ``t``-step law ``p0 @ P**t`` (same length as ``p0``)."""
    if t < 0:
        raise BadParams("t must be nonnegative")
    p, trimmed = _expand(p0, P)
    for _ in range(t):
        p = p @ P.probs
    return p[: P.n] if trimmed else p


def stationary_power_method(P: TransitionMatrix, tol: float = 1e-8, max_iter: int = 10_000) -> PowerResult:
    """Iterate ``p <- pP`` from uniform on the active states.

    Stops when successive iterates are within ``tol`` in total variation;
    ``iterations`` counts the updates before the one that met the tolerance.
    """
    if tol <= 0:
        raise BadParams("tol must be positive")
    A = P.active
    p = np.full(P.n, 1.0 / P.n)
    for it in range(max_iter):
        q = p @ A
        if tvd(q, p) < tol:
            return PowerResult(q / q.sum(), it, True)
        p = q
    return PowerResult(p / p.sum(), max_iter, False)


def discriminant(P) -> np.ndarray:
    """``D_ij = sqrt(P_ij * P_ji)``."""
    A = P.active if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    return np.sqrt(A * A.T)


def is_reversible(P, pi, tol: float = 1e-9) -> bool:
    A = P.active if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    flow = np.asarray(pi)[:, None] * A
    return bool(np.max(np.abs(flow - flow.T)) <= tol)


def _drop_perron(eigs: np.ndarray) -> np.ndarray:
    k = int(np.argmin(np.abs(eigs - 1.0)))
    return np.delete(eigs, k)


def second_eigenvalue_modulus(P) -> float:
    """``max(|lambda_2|, |lambda_n|)``: largest modulus after removing one Perron root."""
    A = P.active if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    rest = _drop_perron(np.linalg.eigvals(A))
    return float(np.max(np.abs(rest))) if rest.size else 0.0


def fundamental_matrix(P, pi) -> np.ndarray:
    """``Z = (I - P + 1 pi^T)^{-1}``; raises for reducible chains."""
    A = P.active if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    n = A.shape[0]
    M = np.eye(n) - A + np.outer(np.ones(n), pi)
    if np.linalg.cond(M) > 1e12:
        raise SingularFundamental("I - P + 1 pi^T is singular (chain not ergodic)")
    return np.linalg.inv(M)


def spectral_report(P: TransitionMatrix, pi, with_fundamental: bool = True) -> SpectralReport:
    converged = True
    if isinstance(pi, PowerResult):
        converged = pi.converged
        pi = pi.distribution
    A = P.active
    pi = check_distribution(pi, P.n, tol=1e-8)
    if tvd(pi @ A, pi) > 1e-8:
        raise NotConverged("pi is not stationary for P")
    reversible = is_reversible(A, pi)
    if reversible:
        # D = Pi^{1/2} P Pi^{-1/2} is symmetric with the spectrum of P
        eigs = np.linalg.eigvalsh(discriminant(A))
    else:
        eigs = np.linalg.eigvals(A)
    rest = _drop_perron(eigs)
    lam = float(min(1.0, np.max(np.abs(rest)))) if rest.size else 0.0
    Z = fundamental_matrix(A, pi) if (with_fundamental and converged) else None
    return SpectralReport(1.0 - lam, lam, reversible, pi, Z)


def hub_metrics(c: CountMatrix, P: TransitionMatrix) -> HubReport:
    """Out-/in-flow on the smoothed chain and coverage on raw count support."""
    if tuple(c.labels) != tuple(P.labels):
        raise DimensionMismatch("count and transition matrices must share labels")
    A = P.active
    support = c.counts > 0
    np.fill_diagonal(support, False)
    gamma = support.sum(axis=1) / (c.size - 1)
    return HubReport(c.labels, A.sum(axis=1), A.sum(axis=0), gamma)


def synth_hub_chain(
    m: int = 8,
    hub_count: int = 1,
    hub_strength: float = 0.7,
    seed: int = 42,
    *,
    degree: int | None = None,
    row_mass: int = 1000,
    concentration: float = 2.0,
) -> CountMatrix:
    """Synthetic hub-dominated count matrix.

    Every row first draws a sparse background: ``degree`` distinct non-self
    targets (default ``m // 2``) with Dirichlet(``concentration``) weights.
    Hub rows then emit ``hub_strength`` of their ``row_mass`` uniformly to
    all non-hub states; non-hub rows send ``f = min(0.95, s*m/(m-h))`` of
    theirs to the hubs (split evenly), so the hub columns carry at least a
    ``hub_strength`` share of all counts whenever ``f`` is not clipped.
    The rest of each row follows the background. Hubs have no self-loops,
    which makes them universal emitters that bounce mass back and forth.
    """
    if m < 4 or not (0 <= hub_count < m) or not (0.0 <= hub_strength < 1.0):
        raise BadParams("need m >= 4, 0 <= hub_count < m and 0 <= hub_strength < 1")
    degree = degree if degree is not None else max(2, m // 2)
    if not (1 <= degree <= m - 1) or row_mass < 1 or concentration <= 0:
        raise BadParams("degree must be in [1, m-1]; row_mass and concentration positive")
    rng = np.random.Generator(np.random.Philox(seed))
    hubs = np.arange(hub_count)
    others = np.arange(hub_count, m)
    to_hub = min(0.95, hub_strength * m / (m - hub_count)) if hub_count else 0.0

    counts = np.zeros((m, m))
    for i in range(m):
        candidates = np.delete(np.arange(m), i)
        targets = rng.choice(candidates, size=degree, replace=False)
        weights = rng.dirichlet(np.full(degree, concentration))
        row = np.zeros(m)
        if i < hub_count:
            row[others] = hub_strength / others.size
            background = 1.0 - hub_strength
        else:
            if hub_count:
                row[hubs] = to_hub / hub_count
            background = 1.0 - to_hub
        row[targets] += background * weights
        counts[i] = np.rint(row * row_mass)
    labels = [f"hub_{k}" for k in range(hub_count)] + [f"s_{k}" for k in range(m - hub_count)]
    return CountMatrix(tuple(labels), counts.astype(np.int64))
