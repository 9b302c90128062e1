"""Amplitude amplification of the ancilla-zero branch.

Two iterates are available. The default reflects about the actual input
``|psi0> = |0^a>|p>``::

    G = -U R_psi0 U^dag R_0,   R_psi0 = 2|psi0><psi0| - I

and rotates by ``2*theta`` inside ``span{U|psi0>, good branch}`` for every
encoding, so the success probability after ``r`` rounds is exactly
``sin^2((2r+1) theta)``. The oblivious variant replaces ``R_psi0`` with
``R_0 = (2|0^a><0^a| - I) (x) I``; it only obeys the same law when ``U``
maps every ``|0^a>|x>`` with a common success amplitude (e.g. ``P/alpha``
proportional to a unitary), which stochastic matrices rarely satisfy.

The fixed-point variant uses the phase schedule of Yoder, Low and Chuang
(generalized reflections with a Chebyshev-optimal length).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .block_encoding import BlockEncodedOperator, build_dilation, spectral_norm
from .errors import AlphaTooSmall, AmplitudeBelowBound, BadParams, ZeroNorm
from .markov import TransitionMatrix
from .statevec import StateVector, postselect_ancilla_zero

SWEEP_FIELDS = ("sin_theta", "r_or_L", "success_prob", "fidelity")


@dataclass(frozen=True)
class OaaConfig:
    mode: str = "fixed_r"
    r: int = 0
    epsilon_oa: float = 1e-2
    w: float | None = None
    depth_cap: int | None = None
    oblivious: bool = False

    def __post_init__(self):
        if self.mode not in ("fixed_r", "fixed_point"):
            raise BadParams(f"unknown OAA mode {self.mode!r}")
        if self.r < 0:
            raise BadParams("r must be nonnegative")
        if not (0.0 < self.epsilon_oa < 1.0):
            raise BadParams("epsilon_oa must lie in (0, 1)")
        if self.w is not None and not (0.0 < self.w <= 1.0):
            raise BadParams("w must lie in (0, 1]")
        if self.depth_cap is not None and self.depth_cap < 0:
            raise BadParams("depth_cap must be nonnegative")


@dataclass(frozen=True)
class ErrorBudget:
    eps_prep: float = 0.0
    eps_block: float = 0.0
    eps_oa: float = 0.0

    def __post_init__(self):
        if min(self.eps_prep, self.eps_block, self.eps_oa) < 0:
            raise BadParams("error terms must be nonnegative")

    @property
    def total(self) -> float:
        return self.eps_prep + self.eps_block + self.eps_oa


def amplitude_image(P, p) -> np.ndarray:
    """``eta = P^T sqrt(p)`` (what the ancilla-zero block produces)."""
    M = P.probs if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    p = np.asarray(p, dtype=float)
    if p.size < M.shape[0]:
        p = np.concatenate([p, np.zeros(M.shape[0] - p.size)])
    return M.T @ np.sqrt(np.clip(p, 0.0, None))


def success_angle(P, p, alpha: float = 1.0) -> float:
    norm = float(np.linalg.norm(amplitude_image(P, p)))
    if norm <= 1e-14:
        raise ZeroNorm("the encoded operator annihilates the input amplitudes")
    s = norm / alpha
    if s > 1.0 + 1e-12:
        raise AlphaTooSmall(f"alpha {alpha} is below the image norm {norm}")
    return math.asin(min(1.0, s))


# ---------------------------------------------------------------- reflections


def _flip_bad(v: np.ndarray, system_dim: int) -> np.ndarray:
    """``R_0``: keep the ancilla-zero block, negate everything else."""
    out = -v
    out[:system_dim] = v[:system_dim]
    return out


def _reflect_about(v: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return 2.0 * psi * np.vdot(psi, v) - v


class _Iterate:
    def __init__(self, b: BlockEncodedOperator, s0: StateVector | None):
        self.b = b
        self.psi0 = None if s0 is None else np.asarray(s0.amplitudes, dtype=complex)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        b = self.b
        v = _flip_bad(v, b.system_dim)
        v = b.apply_adjoint(v)
        v = _flip_bad(v, b.system_dim) if self.psi0 is None else _reflect_about(v, self.psi0)
        return -b.apply(v)


def grover_iterate(b: BlockEncodedOperator, s0: StateVector | None = None) -> np.ndarray:
    """Dense iterate; oblivious (``R_0`` on both sides) when ``s0`` is None."""
    step = _Iterate(b, s0)
    G = np.empty((b.dim, b.dim), dtype=complex)
    e = np.zeros(b.dim, dtype=complex)
    for j in range(b.dim):
        e[:] = 0
        e[j] = 1
        G[:, j] = step(e)
    return G


def _system_qubits(b: BlockEncodedOperator) -> int:
    return int(b.system_dim).bit_length() - 1


def _postselect(b: BlockEncodedOperator, v: np.ndarray) -> tuple[StateVector, float]:
    q = _system_qubits(b)
    state = StateVector(q + b.ancillas, v / np.linalg.norm(v))
    if b.ancillas == 0:
        return state, 1.0
    return postselect_ancilla_zero(state, range(q, q + b.ancillas))


def _check_input(b: BlockEncodedOperator, s0: StateVector) -> np.ndarray:
    if s0.amplitudes.size != b.dim:
        raise BadParams(f"input register has {s0.amplitudes.size} amplitudes, operator needs {b.dim}")
    return np.array(s0.amplitudes, dtype=complex)


def run_oaa_fixed_r(
    b: BlockEncodedOperator, s0: StateVector, r: int, *, oblivious: bool = False
) -> tuple[StateVector, float]:
    if r < 0:
        raise BadParams("r must be nonnegative")
    v = b.apply(_check_input(b, s0))
    step = _Iterate(b, None if oblivious else s0)
    for _ in range(r):
        v = step(v)
    return _postselect(b, v)


# ---------------------------------------------------------------- fixed point


def chebyshev_t(L: int, x: float) -> float:
    """``T_L(x)`` for real ``x`` (any magnitude)."""
    if abs(x) <= 1.0:
        return math.cos(L * math.acos(x))
    sign = 1.0 if x > 0 or L % 2 == 0 else -1.0
    return sign * math.cosh(L * math.acosh(abs(x)))


@dataclass(frozen=True)
class FixedPointSchedule:
    alphas: tuple[float, ...]
    betas: tuple[float, ...]
    length: int  # L = 2l + 1 oracle queries
    w: float
    delta: float  # failure-amplitude bound actually delivered at amplitude w
    delta_target: float
    truncated: bool

    @property
    def iterates(self) -> int:
        return len(self.alphas)

    @property
    def fidelity_bound(self) -> float:
        return 1.0 - self.delta**2

    def success_lower_bound(self, sin_theta: float) -> float:
        """Closed-form success for true amplitude ``sin_theta``."""
        if self.length == 1:
            return sin_theta**2
        gamma_inv = math.cosh(math.acosh(1.0 / self.delta) / self.length)
        x = gamma_inv * math.sqrt(max(0.0, 1.0 - sin_theta**2))
        return 1.0 - self.delta**2 * chebyshev_t(self.length, x) ** 2


def schedule_length(w: float, eps: float) -> int:
    if w >= 1.0:
        return 1
    need = math.acosh(1.0 / eps) / math.acosh(1.0 / math.sqrt(1.0 - w * w))
    L = max(1, math.ceil(need - 1e-12))
    return L if L % 2 else L + 1


def fixed_point_schedule(w: float, eps: float, depth_cap: int | None = None) -> FixedPointSchedule:
    """Phases for a fixed-point search with failure probability <= delta^2.

    ``depth_cap`` limits the number of generalized iterates; when it binds,
    the schedule keeps the capped length and reports the (larger) ``delta``
    it can still certify at amplitude ``w``.
    """
    if not (0.0 < w <= 1.0):
        raise BadParams("w must lie in (0, 1]")
    if not (0.0 < eps < 1.0):
        raise BadParams("eps must lie in (0, 1)")
    L = schedule_length(w, eps)
    delta = eps
    truncated = False
    if depth_cap is not None and (L - 1) // 2 > depth_cap:
        L = 2 * depth_cap + 1
        truncated = True
        delta = 1.0 / chebyshev_t(L, 1.0 / math.sqrt(1.0 - w * w))
    if L == 1:
        return FixedPointSchedule((), (), 1, w, delta if truncated else eps, eps, truncated)
    l = (L - 1) // 2
    gamma_inv = math.cosh(math.acosh(1.0 / delta) / L)
    root = math.sqrt(max(0.0, 1.0 - 1.0 / gamma_inv**2))
    alphas = [2.0 * math.atan2(1.0, math.tan(2.0 * math.pi * j / L) * root) for j in range(1, l + 1)]
    betas = [-alphas[l - j] for j in range(1, l + 1)]
    return FixedPointSchedule(tuple(alphas), tuple(betas), L, w, delta, eps, truncated)


@dataclass(frozen=True)
class OaaResult:
    state: StateVector
    success_prob: float
    fidelity: float
    fidelity_bound: float
    queries: int
    eps_oa: float
    flagged: bool = False


def _overlap_fidelity(b: BlockEncodedOperator, v: np.ndarray, s0: StateVector) -> float:
    """``|<0^a, target|v>|^2`` with ``target`` the normalised good branch of ``U|psi0>``."""
    good = b.apply(np.asarray(s0.amplitudes, dtype=complex))[: b.system_dim]
    good = good / np.linalg.norm(good)
    return float(abs(np.vdot(good, v[: b.system_dim])) ** 2)


def run_oaa_fixed_point(
    b: BlockEncodedOperator, s0: StateVector, schedule: FixedPointSchedule, *, strict: bool = True
) -> OaaResult:
    """Apply ``prod_j -S_s(alpha_j) S_t(beta_j)`` to ``U|psi0>`` and post-select.

    ``fidelity`` is the overlap of the whole amplified register with
    ``|0^a>|target>``, which lower-bounds the success probability. A value
    below ``schedule.fidelity_bound`` raises :class:`AmplitudeBelowBound`
    (or only sets ``flagged`` when ``strict`` is False).
    """
    psi0 = _check_input(b, s0)
    v = b.apply(psi0)
    N = b.system_dim
    for a_j, b_j in zip(schedule.alphas, schedule.betas):
        v = v.copy()
        v[:N] *= np.exp(1j * b_j)  # S_t(beta): phase on the good subspace
        w = b.apply_adjoint(v)
        w = w - (1.0 - np.exp(-1j * a_j)) * psi0 * np.vdot(psi0, w)
        v = -b.apply(w)
    fid = _overlap_fidelity(b, v, s0)
    flagged = fid < schedule.fidelity_bound - 1e-12
    if flagged and strict:
        raise AmplitudeBelowBound(
            f"fidelity {fid:.6f} below the guaranteed {schedule.fidelity_bound:.6f}; "
            f"the true amplitude is probably smaller than w = {schedule.w}"
        )
    state, success = _postselect(b, v)
    return OaaResult(state, success, fid, schedule.fidelity_bound, schedule.length, schedule.delta, flagged)


def run_oaa(b: BlockEncodedOperator, s0: StateVector, cfg: OaaConfig, sin_theta: float | None = None) -> OaaResult:
    """Dispatch on ``cfg.mode``; ``sin_theta`` seeds the default ``w``."""
    if cfg.mode == "fixed_r":
        v = b.apply(_check_input(b, s0))
        step = _Iterate(b, None if cfg.oblivious else s0)
        for _ in range(cfg.r):
            v = step(v)
        fid = _overlap_fidelity(b, v, s0)
        state, success = _postselect(b, v)
        return OaaResult(state, success, fid, 0.0, 2 * cfg.r + 1, 0.0)
    w = cfg.w
    if w is None:
        if sin_theta is None:
            raise BadParams("fixed-point mode needs w or the exact success amplitude")
        w = min(1.0, 0.95 * sin_theta)
    sched = fixed_point_schedule(w, cfg.epsilon_oa, cfg.depth_cap)
    return run_oaa_fixed_point(b, s0, sched, strict=True)


# ---------------------------------------------------------------- helpers


def encoding_with_amplitude(P, p, sin_theta: float) -> BlockEncodedOperator:
    """Dilation of ``P`` whose scale makes the success amplitude ``sin_theta``."""
    M = P.probs if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    alpha = float(np.linalg.norm(amplitude_image(M, p))) / sin_theta
    if alpha < spectral_norm(M) * (1.0 - 1e-12):
        raise AlphaTooSmall(f"amplitude {sin_theta} needs alpha {alpha:.6f} below the spectral norm")
    return build_dilation(M, max(alpha, spectral_norm(M) * (1.0 + 1e-12)))


def sweep_csv(rows: Iterable[tuple[float, int, float, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_FIELDS)
    for s, k, succ, fid in rows:
        writer.writerow([repr(float(s)), int(k), repr(float(succ)), repr(float(fid))])
    return buf.getvalue()
