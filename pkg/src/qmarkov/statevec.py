"""Dense statevector simulation.

Basis index ``j`` has qubit 0 as its least significant bit. Registers that
combine ancillas with a system put the ancillas on the high qubits, so the
ancilla-zero branch is the first ``2**num_system_qubits`` amplitudes.

Randomness comes from counter-based Philox streams keyed by a 64-bit seed
(plus an optional spawn key), see :func:`make_rng`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import AllMassTruncated, BadParams, BadTarget, NotUnitary, ZeroSuccess

NORM_TOL = 1e-10
DEFAULT_SHOTS = 4096


def make_rng(seed: int, *spawn_key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in spawn_key))
    return np.random.Generator(np.random.Philox(ss))


def num_qubits_for(n: int) -> int:
    return max(1, int(np.ceil(np.log2(n))))


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (1 << self.num_qubits,):
            raise BadParams(f"{self.num_qubits} qubits need {1 << self.num_qubits} amplitudes")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise BadParams(f"state is not normalised (norm^2 = {norm!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, num_qubits: int, index: int = 0) -> "StateVector":
        amps = np.zeros(1 << num_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(num_qubits, amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def tensor_ancilla_zero(self, ancillas: int) -> "StateVector":
        """``|0^a> (x) |self>`` with the ancillas on the high qubits."""
        amps = np.zeros(1 << (self.num_qubits + ancillas), dtype=complex)
        amps[: self.amplitudes.size] = self.amplitudes
        return StateVector(self.num_qubits + ancillas, amps)


@dataclass(frozen=True)
class PrepPlan:
    """Heap-ordered half-angles of a binary R_y tree (``R_y(2*theta)`` per node)."""

    num_qubits: int
    angles: np.ndarray
    truncation_threshold: float
    target: np.ndarray

    @property
    def doubled_angles(self) -> np.ndarray:
        return 2.0 * self.angles

    def level(self, k: int) -> np.ndarray:
        return self.angles[(1 << k) - 1 : (1 << (k + 1)) - 1]


def truncate_distribution(p, threshold: float) -> np.ndarray:
    """Zero entries below ``threshold`` and renormalise."""
    p = np.asarray(p, dtype=float)
    kept = np.where(p < threshold, 0.0, p)
    total = kept.sum()
    if total <= 0:
        raise AllMassTruncated(f"every entry is below the threshold {threshold}")
    return kept / total


def build_prep_plan(p, threshold: float = 0.0, num_qubits: int | None = None) -> PrepPlan:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise BadParams("build_prep_plan needs a probability vector")
    if not (0.0 <= threshold < 1.0):
        raise BadParams("threshold must lie in [0, 1)")
    q = num_qubits if num_qubits is not None else num_qubits_for(p.size)
    N = 1 << q
    if p.size > N:
        raise BadParams(f"{p.size} states do not fit on {q} qubits")
    target = np.zeros(N)
    target[: p.size] = truncate_distribution(p, threshold)

    angles = np.zeros(N - 1)
    for k in range(q):
        parents = target.reshape(1 << k, -1).sum(axis=1)
        left = target.reshape(1 << (k + 1), -1).sum(axis=1)[0::2]
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(parents > 0, left / parents, 1.0)
        angles[(1 << k) - 1 : (1 << (k + 1)) - 1] = np.arccos(np.sqrt(np.clip(ratio, 0.0, 1.0)))
    angles.flags.writeable = False
    target.flags.writeable = False
    return PrepPlan(q, angles, float(threshold), target)


def prepare_state(plan: PrepPlan) -> StateVector:
    amps = np.zeros(1 << plan.num_qubits, dtype=complex)
    amps[0] = 1.0
    kernels.apply_rotation_tree(amps, plan.angles, plan.num_qubits)
    amps /= np.linalg.norm(amps)
    return StateVector(plan.num_qubits, amps)


def prep_unitary(plan: PrepPlan) -> np.ndarray:
    """Full matrix of the rotation tree (column ``j`` = tree applied to ``|j>``)."""
    N = 1 << plan.num_qubits
    U = np.zeros((N, N), dtype=complex)
    for j in range(N):
        col = np.zeros(N, dtype=complex)
        col[j] = 1.0
        U[:, j] = kernels.apply_rotation_tree(col, plan.angles, plan.num_qubits)
    return U


def check_unitary(u: np.ndarray, tol: float = NORM_TOL) -> float:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise NotUnitary("a unitary must be a square matrix")
    err = float(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))))
    if err > tol:
        raise NotUnitary(f"unitarity residual {err:.3e} exceeds {tol:.1e}")
    return err


def apply_unitary(s: StateVector, u, targets: Sequence[int]) -> StateVector:
    """Apply ``u`` to ``targets``; bit ``k`` of ``u``'s index is ``targets[k]``."""
    u = np.asarray(u, dtype=complex)
    targets = [int(t) for t in targets]
    k = len(targets)
    n = s.num_qubits
    if k == 0 or len(set(targets)) != k or any(t < 0 or t >= n for t in targets):
        raise BadTarget(f"invalid target qubits {targets} for {n} qubits")
    if u.shape != (1 << k, 1 << k):
        raise BadTarget(f"a {u.shape} matrix cannot act on {k} qubit(s)")
    check_unitary(u)
    if k == n and targets == list(range(n)):
        return StateVector(n, u @ s.amplitudes)

    psi = s.amplitudes.reshape([2] * n)
    axis = lambda q: n - 1 - q  # noqa: E731
    ut = u.reshape([2] * (2 * k))
    in_axes = [k + (k - 1 - b) for b in range(k)]
    psi_axes = [axis(targets[b]) for b in range(k)]
    out = np.tensordot(ut, psi, axes=(in_axes, psi_axes))
    remaining = [a for a in range(n) if a not in psi_axes]
    # tensordot puts u's output bits (k-1 .. 0) first, then psi's untouched axes
    order = [axis(targets[k - 1 - i]) for i in range(k)] + remaining
    out = np.moveaxis(out, list(range(n)), order)
    return StateVector(n, out.reshape(-1))


def postselect_ancilla_zero(s: StateVector, ancilla: Sequence[int]) -> tuple[StateVector, float]:
    ancilla = sorted(set(int(a) for a in ancilla))
    n = s.num_qubits
    if not ancilla or ancilla[0] < 0 or ancilla[-1] >= n or len(ancilla) == n:
        raise BadTarget(f"invalid ancilla set {ancilla} for {n} qubits")
    idx = np.arange(1 << n)
    mask = np.ones(1 << n, dtype=bool)
    for a in ancilla:
        mask &= ((idx >> a) & 1) == 0
    branch = s.amplitudes[mask]
    success = float(np.vdot(branch, branch).real)
    if success < 1e-14:
        raise ZeroSuccess(f"ancilla-zero branch has probability {success:.3e}")
    # surviving indices are already in increasing order of the system bits
    return StateVector(n - len(ancilla), branch / np.sqrt(success)), success


@dataclass(frozen=True)
class ShotHistogram:
    counts: np.ndarray
    total_shots: int
    seed: int | None = None

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.total_shots

    def to_json(self) -> str:
        body = {
            "counts": {str(i): int(c) for i, c in enumerate(self.counts) if c},
            "total_shots": int(self.total_shots),
            "seed": self.seed,
        }
        return json.dumps(body, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, size: int) -> "ShotHistogram":
        body = json.loads(text)
        counts = np.zeros(size, dtype=np.int64)
        for k, v in body["counts"].items():
            counts[int(k)] = v
        return cls(counts, int(body["total_shots"]), body.get("seed"))


def sample_counts(probs, shots: int, rng: np.random.Generator) -> np.ndarray:
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    return rng.multinomial(shots, probs / probs.sum())


def measure_counts(s: StateVector, shots: int = DEFAULT_SHOTS, rng_seed: int = 0) -> ShotHistogram:
    if shots < 1:
        raise BadParams("shots must be positive")
    counts = sample_counts(s.probabilities(), shots, make_rng(rng_seed))
    return ShotHistogram(counts, shots, rng_seed)
