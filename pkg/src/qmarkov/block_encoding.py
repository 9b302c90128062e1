"""Block-encodings of stochastic matrices.

Convention: an operator built from a chain ``P`` encodes ``P^T / alpha`` in
its ancilla-zero block. Acting on the amplitude vector ``sqrt(p)`` the
block therefore produces ``eta_j = sum_i sqrt(p_i) P_ij``, the ket form of
the row-vector update ``p -> pP``. For symmetric chains the distinction
vanishes.

Two constructions are provided:

* ``build_lcu_unitary``: PREPARE / SELECT / PREPARE^dagger over a
  decomposition ``P = sum_i lambda_i A_i`` into permutation matrices.
  Only doubly stochastic matrices admit one.
* ``build_dilation``: the one-ancilla unitary completion
  ``[[A, sqrt(I - A A^T)], [sqrt(I - A^T A), -A^T]]`` with ``A = P^T/alpha``.

Ancillas occupy the high qubits, so the amplitude array of a full register
reshapes to ``(2**a, N)`` with row 0 the ancilla-zero branch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .errors import AlphaTooSmall, DimensionMismatch, NotPermutationDecomposable, TooLarge
from .markov import TransitionMatrix
from .statevec import build_prep_plan, num_qubits_for, prep_unitary

DEFAULT_MAX_TERMS = 32
PSD_CLIP = -1e-12
MAX_WALK_STATES = 64
_DENSE_LIMIT = 1 << 13


def _matrix(P) -> np.ndarray:
    if isinstance(P, TransitionMatrix):
        return np.asarray(P.probs, dtype=float)
    return np.asarray(P, dtype=float)


@dataclass(frozen=True)
class LcuDecomposition:
    """``sum_i weights[i] * A_i`` with ``A_i[r, perms[i][r]] = 1``."""

    weights: np.ndarray
    perms: tuple[np.ndarray, ...]
    alpha: float
    residual: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        perms = tuple(np.asarray(p, dtype=np.intp) for p in self.perms)
        if w.ndim != 1 or w.size != len(perms) or w.size == 0:
            raise DimensionMismatch("one weight per permutation is required")
        n = perms[0].size
        for p in perms:
            if p.size != n or not np.array_equal(np.sort(p), np.arange(n)):
                raise NotPermutationDecomposable("every LCU term must be a bijection")
        w.flags.writeable = False
        for p in perms:
            p.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "perms", perms)

    @property
    def num_terms(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.perms[0].size

    def term_matrix(self, i: int) -> np.ndarray:
        A = np.zeros((self.dim, self.dim))
        A[np.arange(self.dim), self.perms[i]] = 1.0
        return A

    def reconstruct(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        rows = np.arange(self.dim)
        for w, p in zip(self.weights, self.perms):
            out[rows, p] += w
        return out


def lcu_decompose_permutations(P, tol: float = 1e-12) -> LcuDecomposition:
    """Greedy Birkhoff extraction with bottleneck matchings.

    Each round picks the perfect matching in the residual's support whose
    smallest entry is largest, records it with that entry as weight and
    subtracts. Raises :class:`NotPermutationDecomposable` when the residual
    support admits no perfect matching.
    """
    A = _matrix(P)
    n = A.shape[0]
    alpha = float(A[0].sum())
    row_dev = np.max(np.abs(A.sum(axis=1) - alpha))
    col_dev = np.max(np.abs(A.sum(axis=0) - alpha))
    if row_dev > 1e-9 or col_dev > 1e-9:
        raise NotPermutationDecomposable(
            "row and column sums differ; only doubly stochastic matrices are permutation mixtures"
        )
    residual = A.copy()
    rows = np.arange(n)
    weights: list[float] = []
    perms: list[np.ndarray] = []
    drop = max(tol * 1e-2, 1e-15)
    for _ in range(n * n + 1):
        if np.linalg.norm(residual) <= tol:
            break
        match = kernels.bottleneck_matching(residual, drop)
        if match is None:
            raise NotPermutationDecomposable(
                f"residual support has no perfect matching (Frobenius residual {np.linalg.norm(residual):.3e})"
            )
        lam = float(residual[rows, match].min())
        residual[rows, match] -= lam
        residual[np.abs(residual) < drop] = 0.0
        weights.append(lam)
        perms.append(np.asarray(match, dtype=np.intp))
    res = float(np.linalg.norm(residual))
    if res > tol:
        raise NotPermutationDecomposable(f"extraction stalled at residual {res:.3e}")
    return LcuDecomposition(np.array(weights), tuple(perms), float(sum(weights)), res)


def truncate_lcu(d: LcuDecomposition, max_terms: int = DEFAULT_MAX_TERMS) -> LcuDecomposition:
    """Keep the ``max_terms`` heaviest terms, rescaled to the original alpha.

    The returned ``residual`` is the Frobenius distance between the new
    reconstruction and the untruncated one.
    """
    if max_terms < 1:
        raise ValueError("max_terms must be at least 1")
    if d.num_terms <= max_terms:
        return d
    order = np.argsort(-d.weights, kind="stable")[:max_terms]
    order = np.sort(order)
    kept = d.weights[order]
    new_w = kept * (d.alpha / kept.sum())
    out = LcuDecomposition(new_w, tuple(d.perms[i] for i in order), d.alpha)
    res = float(np.linalg.norm(out.reconstruct() - d.reconstruct()))
    return LcuDecomposition(out.weights, out.perms, d.alpha, res)


@dataclass(frozen=True, eq=False)
class BlockEncodedOperator:
    """Unitary on ``ancillas`` high qubits plus an ``N``-dimensional system."""

    alpha: float
    ancillas: int
    source: str
    system_dim: int
    encoded: np.ndarray  # block * alpha
    lcu: LcuDecomposition | None = None
    prepare: np.ndarray | None = None
    dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.system_dim << self.ancillas

    def _grid(self, amps) -> np.ndarray:
        amps = np.asarray(amps, dtype=complex)
        if amps.shape != (self.dim,):
            raise DimensionMismatch(f"expected {self.dim} amplitudes, got {amps.shape}")
        return amps.reshape(1 << self.ancillas, self.system_dim)

    def apply(self, amps) -> np.ndarray:
        if self.dense is not None:
            return self.dense @ np.asarray(amps, dtype=complex)
        X = self.prepare @ self._grid(amps)
        for i, perm in enumerate(self.lcu.perms):
            row = np.empty_like(X[i])
            row[perm] = X[i]
            X[i] = row
        return (self.prepare.conj().T @ X).reshape(-1)

    def apply_adjoint(self, amps) -> np.ndarray:
        if self.dense is not None:
            return self.dense.conj().T @ np.asarray(amps, dtype=complex)
        X = self.prepare @ self._grid(amps)
        for i, perm in enumerate(self.lcu.perms):
            X[i] = X[i][perm]
        return (self.prepare.conj().T @ X).reshape(-1)

    def block(self) -> np.ndarray:
        """Ancilla-zero block, extracted column by column."""
        N = self.system_dim
        out = np.empty((N, N), dtype=complex)
        e = np.zeros(self.dim, dtype=complex)
        for j in range(N):
            e[:] = 0
            e[j] = 1
            out[:, j] = self.apply(e)[:N]
        return out

    @cached_property
    def unitary(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        if self.dim > _DENSE_LIMIT:
            raise TooLarge(f"dense unitary of dimension {self.dim} not materialised")
        U = np.empty((self.dim, self.dim), dtype=complex)
        e = np.zeros(self.dim, dtype=complex)
        for j in range(self.dim):
            e[:] = 0
            e[j] = 1
            U[:, j] = self.apply(e)
        return U

    def to_json(self) -> str:
        U = self.unitary
        body = {
            "format": "qmarkov-block-encoding/1",
            "source": self.source,
            "alpha": self.alpha,
            "ancillas": self.ancillas,
            "system_dim": self.system_dim,
            "shape": list(U.shape),
            "data": [[float(z.real), float(z.imag)] for z in U.reshape(-1)],
        }
        return json.dumps(body)

    @classmethod
    def from_json(cls, text: str) -> "BlockEncodedOperator":
        body = json.loads(text)
        data = np.array(body["data"], dtype=float)
        U = (data[:, 0] + 1j * data[:, 1]).reshape(body["shape"])
        N = body["system_dim"]
        return cls(body["alpha"], body["ancillas"], body["source"], N, (U[:N, :N] * body["alpha"]).real, dense=U)


def build_lcu_unitary(d: LcuDecomposition) -> BlockEncodedOperator:
    L = d.num_terms
    a = 0 if L == 1 else num_qubits_for(L)
    if a == 0:
        V = np.ones((1, 1), dtype=complex)
    else:
        plan = build_prep_plan(d.weights / d.weights.sum(), num_qubits=a)
        V = prep_unitary(plan)
    encoded = d.reconstruct().T * (d.alpha / d.weights.sum())
    return BlockEncodedOperator(d.alpha, a, "lcu", d.dim, encoded, lcu=d, prepare=V)


def _completions(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Principal square roots of ``I - A A^T`` and ``I - A^T A``.

    Both come from one SVD ``A = U S V^T`` so that ``A sqrt(I - A^T A)`` and
    ``sqrt(I - A A^T) A`` agree to rounding, which keeps the dilation unitary
    even when singular values sit at 1.
    """
    U, s, Vt = np.linalg.svd(A)
    gap = 1.0 - s * s
    if gap.min() < PSD_CLIP:
        raise AlphaTooSmall(f"completion is not positive semidefinite (min eigenvalue {gap.min():.3e})")
    root = np.sqrt(np.clip(gap, 0.0, None))
    return (U * root) @ U.T, (Vt.T * root) @ Vt


def spectral_norm(A, max_iter: int = 5000, rtol: float = 1e-15) -> float:
    """Largest singular value via power iteration on ``A^T A``.

    Falls back to an SVD if the iteration has not settled.
    """
    A = np.asarray(A, dtype=float)
    G = A.T @ A
    v = np.ones(A.shape[1]) / np.sqrt(A.shape[1])
    est = 0.0
    for _ in range(max_iter):
        w = G @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(nrm - est) <= rtol * nrm:
            return float(np.sqrt(nrm))
        est = nrm
    return float(np.linalg.norm(A, 2))


def build_dilation(P, alpha: float | str = "auto") -> BlockEncodedOperator:
    M = _matrix(P)
    if alpha == "auto":
        alpha = spectral_norm(M) * (1.0 + 1e-12)
    alpha = float(alpha)
    if alpha <= 0:
        raise AlphaTooSmall("alpha must be positive")
    A = M.T / alpha
    B, C = _completions(A)
    U = np.block([[A, B], [C, -A.T]]).astype(complex)
    return BlockEncodedOperator(alpha, 1, "dilation", A.shape[0], M.T.copy(), dense=U)


@dataclass(frozen=True)
class BlockCheck:
    residual: float
    unitarity: float

    def __float__(self) -> float:
        return self.residual


def verify_block_encoding(b: BlockEncodedOperator, P) -> BlockCheck:
    """Max-norm of ``block * alpha - P^T`` plus the unitarity residual."""
    M = _matrix(P)
    if M.shape != (b.system_dim, b.system_dim):
        raise DimensionMismatch(f"operator acts on {b.system_dim} states, chain has {M.shape[0]}")
    residual = float(np.max(np.abs(b.block() * b.alpha - M.T)))
    if b.dense is not None or b.dim <= _DENSE_LIMIT:
        U = b.unitary
        unit = float(np.max(np.abs(U.conj().T @ U - np.eye(b.dim))))
    else:
        V = b.prepare
        unit = float(np.max(np.abs(V.conj().T @ V - np.eye(V.shape[0]))))
    return BlockCheck(residual, unit)


@dataclass(frozen=True, eq=False)
class WalkOperator:
    """``W = S (2 Pi - I)`` on ``|i>|j>`` (index ``i * n + j``)."""

    unitary: np.ndarray
    discriminant: np.ndarray

    @property
    def n(self) -> int:
        return self.discriminant.shape[0]

    def eigenphases(self) -> np.ndarray:
        return np.sort(np.angle(np.linalg.eigvals(self.unitary)))

    def nontrivial_cosines(self, tol: float = 1e-9) -> np.ndarray:
        """Sorted ``cos(phase)`` for eigenvalues away from ``+-1``.

        Each value appears twice (conjugate pair ``e^{+-i phi}``).
        """
        ev = np.linalg.eigvals(self.unitary)
        keep = np.abs(np.abs(ev.real) - 1.0) > tol
        return np.sort(ev.real[keep])


def szegedy_walk(P) -> WalkOperator:
    A = P.active if isinstance(P, TransitionMatrix) else _matrix(P)
    n = A.shape[0]
    if n > MAX_WALK_STATES:
        raise TooLarge(f"walk on {n} states exceeds the dense limit of {MAX_WALK_STATES}")
    psi = np.zeros((n * n, n))
    for i in range(n):
        psi[i * n : (i + 1) * n, i] = np.sqrt(A[i])
    refl = 2.0 * psi @ psi.T - np.eye(n * n)
    idx = np.arange(n * n)
    swap = (idx % n) * n + idx // n
    W = refl[swap]  # row k of S @ R is row swap[k] of R
    D = np.sqrt(A * A.T)
    return WalkOperator(W, D)
