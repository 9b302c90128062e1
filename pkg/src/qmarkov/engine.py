"""The quantum Markov update loop and its closed-form oracles.

One step takes the current distribution ``p``, amplitude-encodes it, applies
a block-encoding of the chain (plus amplitude amplification), post-selects
the ancillas and samples ``shots`` outcomes. In exact arithmetic the
post-selected distribution is

    q_j = eta_j^2 / sum_k eta_k^2,   eta_j = sum_i sqrt(p_i) P_ij,

which differs from the classical ``(pP)_j`` by the cross terms
``2 sum_{i<k} sqrt(p_i p_k) P_ij P_kj`` unless every column of ``P`` has at
most one nonzero entry among the support of ``p``.

``demo_sqrt_lcu_marginal`` implements a second convention in which the LCU
terms are weighted by ``sqrt(lambda_i / alpha)`` and no PREPARE-dagger is
applied; it is kept as its own code path so the two are never conflated.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .amplification import (
    ErrorBudget,
    OaaConfig,
    amplitude_image,
    fixed_point_schedule,
    run_oaa,
)
from .block_encoding import (
    DEFAULT_MAX_TERMS,
    BlockEncodedOperator,
    LcuDecomposition,
    build_dilation,
    build_lcu_unitary,
    lcu_decompose_permutations,
    truncate_lcu,
)
from .errors import BadGamma, BadParams, DimensionMismatch, NotPermutationDecomposable, ZeroNorm
from .markov import TransitionMatrix, _is_pow2, check_distribution, pad_matrix
from .metrics import tvd
from .statevec import build_prep_plan, make_rng, prepare_state, sample_counts, truncate_distribution

ENCODERS = ("lcu", "dilation", "analytic", "demo-sqrt")
PROPAGATIONS = ("resample_empirical", "propagate_exact")
DEFAULT_HORIZONS = (1, 2, 3, 5, 10, 20)
TRAJECTORY_CSV_FIELDS = ("t", "state", "p_hat", "p_exact_ae", "p_classical", "success_prob")


def _as_matrix(P) -> np.ndarray:
    return P.probs if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)


def _fit(p, M: np.ndarray) -> tuple[np.ndarray, int]:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size > M.shape[0]:
        raise DimensionMismatch(f"distribution of length {p.size} does not fit a {M.shape[0]}-state chain")
    if p.size == M.shape[0]:
        return p, p.size
    full = np.zeros(M.shape[0])
    full[: p.size] = p
    return full, p.size


def ae_marginal_exact(p, P) -> np.ndarray:
    M = _as_matrix(P)
    full, n = _fit(p, M)
    eta = amplitude_image(M, full)
    sq = eta * eta
    total = sq.sum()
    if total <= 1e-28:
        raise ZeroNorm("the chain maps the amplitude vector to zero")
    return (sq / total)[:n]


def cross_term_bias(p, P) -> np.ndarray:
    M = _as_matrix(P)
    full, n = _fit(p, M)
    return kernels.cross_terms(np.sqrt(np.clip(full, 0.0, None)), M)[:n]


def demo_sqrt_lcu_marginal(p, d: LcuDecomposition) -> np.ndarray:
    """Square-root-weighted superposition of the permuted amplitude vectors."""
    p = np.asarray(p, dtype=float)
    if p.size != d.dim:
        raise DimensionMismatch(f"distribution of length {p.size} vs {d.dim}-state decomposition")
    amp = np.sqrt(np.clip(p, 0.0, None))
    beta = np.zeros(d.dim)
    for lam, perm in zip(d.weights, d.perms):
        moved = np.zeros(d.dim)
        moved[perm] = amp
        beta += math.sqrt(lam / d.alpha) * moved
    sq = beta * beta
    return sq / sq.sum()


def contraction_bound(budget: ErrorBudget, gamma: float, M: float | None, c: float = 1.0) -> float:
    """``eps / gamma + c / sqrt(M)``; ``M=None`` means infinitely many shots."""
    if not (0.0 < gamma <= 1.0):
        raise BadGamma(f"spectral gap {gamma} must lie in (0, 1]")
    if M is not None and M < 1:
        raise BadParams("M must be at least 1")
    sampling = 0.0 if M is None or math.isinf(M) else c / math.sqrt(M)
    return budget.total / gamma + sampling


@dataclass(frozen=True)
class QColorsConfig:
    horizons: int = 20
    shots: int | None = 4096  # None: use the exact post-selected marginal
    oaa: OaaConfig = field(default_factory=OaaConfig)
    prep_threshold: float = 0.0
    propagation: str = "resample_empirical"
    encoder: str = "lcu"
    seed: int = 0
    lcu_max_terms: int = DEFAULT_MAX_TERMS
    alpha: float | str = "auto"

    def __post_init__(self):
        if self.horizons < 1:
            raise BadParams("horizons must be at least 1")
        if self.shots is not None and self.shots < 1:
            raise BadParams("shots must be at least 1")
        if self.encoder not in ENCODERS:
            raise BadParams(f"encoder must be one of {ENCODERS}")
        if self.propagation not in PROPAGATIONS:
            raise BadParams(f"propagation must be one of {PROPAGATIONS}")
        if not (0.0 <= self.prep_threshold < 1.0):
            raise BadParams("prep_threshold must lie in [0, 1)")

    def as_dict(self) -> dict:
        return asdict(self)


def _nan_to_none(x: float):
    return None if x is None or math.isnan(x) else float(x)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    labels: tuple[str, ...]
    p_hat: np.ndarray  # (T+1, n)
    p_exact_ae: np.ndarray
    p_classical: np.ndarray
    success_prob: np.ndarray  # (T+1,), NaN at t = 0
    budget: ErrorBudget
    encoder: str
    notes: tuple[str, ...] = ()
    wall_clock: np.ndarray | None = None

    @property
    def horizons(self) -> int:
        return self.p_hat.shape[0] - 1

    def to_json(self, include_timing: bool = False) -> str:
        body = {
            "labels": list(self.labels),
            "encoder": self.encoder,
            "budget": asdict(self.budget),
            "notes": list(self.notes),
            "p_hat": self.p_hat.tolist(),
            "p_exact_ae": self.p_exact_ae.tolist(),
            "p_classical": self.p_classical.tolist(),
            "success_prob": [_nan_to_none(x) for x in self.success_prob],
        }
        if include_timing and self.wall_clock is not None:
            body["wall_clock"] = self.wall_clock.tolist()
        return json.dumps(body, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRAJECTORY_CSV_FIELDS)
        for t in range(self.p_hat.shape[0]):
            sp = _nan_to_none(self.success_prob[t])
            for j, label in enumerate(self.labels):
                w.writerow([
                    t, label, repr(float(self.p_hat[t, j])), repr(float(self.p_exact_ae[t, j])),
                    repr(float(self.p_classical[t, j])), "" if sp is None else repr(sp),
                ])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class _Encoder:
    kind: str
    operator: BlockEncodedOperator | None
    encoded: np.ndarray  # the matrix actually applied (P or its truncation)
    decomposition: LcuDecomposition | None
    eps_block: float
    notes: tuple[str, ...]


def _max_row_tv(A: np.ndarray, B: np.ndarray) -> float:
    return float(0.5 * np.abs(A - B).sum(axis=1).max())


def build_encoder(P: TransitionMatrix, cfg: QColorsConfig) -> _Encoder:
    M = P.probs
    notes: list[str] = []
    kind = cfg.encoder
    if kind in ("lcu", "demo-sqrt"):
        try:
            d = lcu_decompose_permutations(M)
        except NotPermutationDecomposable as exc:
            if kind == "demo-sqrt":
                raise
            notes.append(f"lcu unavailable ({exc}); using dilation")
            kind = "dilation"
        else:
            d = truncate_lcu(d, cfg.lcu_max_terms)
            encoded = d.reconstruct() / d.alpha
            eps_b = _max_row_tv(encoded, M)
            if d.residual > 0:
                notes.append(f"lcu truncated to {d.num_terms} terms (frobenius residual {d.residual:.3e})")
            op = build_lcu_unitary(d) if kind == "lcu" else None
            return _Encoder(kind, op, encoded, d, eps_b, tuple(notes))
    if kind == "dilation":
        return _Encoder(kind, build_dilation(M, cfg.alpha), M, None, 0.0, tuple(notes))
    return _Encoder("analytic", None, M, None, 0.0, tuple(notes))


def _closed_form_success(sin_theta: float, oaa: OaaConfig) -> tuple[float, float]:
    """Success probability and eps_oa without simulating the circuit."""
    theta = math.asin(min(1.0, sin_theta))
    if oaa.mode == "fixed_r":
        return math.sin((2 * oaa.r + 1) * theta) ** 2, 0.0
    w = oaa.w if oaa.w is not None else min(1.0, 0.95 * sin_theta)
    sched = fixed_point_schedule(w, oaa.epsilon_oa, oaa.depth_cap)
    return sched.success_lower_bound(sin_theta), sched.delta


def _step(p_in: np.ndarray, enc: _Encoder, cfg: QColorsConfig, q: int) -> tuple[np.ndarray, float, float]:
    """One update; returns (exact post-selected marginal, success, eps_oa)."""
    if enc.kind == "demo-sqrt":
        return demo_sqrt_lcu_marginal(p_in, enc.decomposition), math.nan, 0.0
    alpha = enc.operator.alpha if enc.operator is not None else 1.0
    sin_theta = float(np.linalg.norm(amplitude_image(enc.encoded, p_in))) / alpha
    if enc.kind == "analytic":
        success, eps_oa = _closed_form_success(sin_theta, cfg.oaa)
        return ae_marginal_exact(p_in, enc.encoded), success, eps_oa
    b = enc.operator
    s0 = prepare_state(build_prep_plan(p_in, num_qubits=q)).tensor_ancilla_zero(b.ancillas)
    res = run_oaa(b, s0, cfg.oaa, sin_theta=sin_theta)
    return res.state.probabilities(), res.success_prob, res.eps_oa


def q_colors_run(P: TransitionMatrix, p0=None, cfg: QColorsConfig | None = None) -> TrajectoryRecord:
    cfg = cfg or QColorsConfig()
    if not _is_pow2(P.dim) or P.dim < 2:
        P = pad_matrix(P, "auto")
    n, N = P.n, P.dim
    q = N.bit_length() - 1
    p0 = np.full(n, 1.0 / n) if p0 is None else check_distribution(p0, n)
    enc = build_encoder(P, cfg)
    rng = make_rng(cfg.seed)

    T = cfg.horizons
    p_hat = np.zeros((T + 1, n))
    p_ae = np.zeros((T + 1, n))
    p_cl = np.zeros((T + 1, n))
    success = np.full(T + 1, np.nan)
    clock = np.zeros(T + 1)
    p_hat[0] = p_ae[0] = p_cl[0] = p0

    eps_prep = eps_oa = 0.0
    current = np.zeros(N)
    current[:n] = p0
    for t in range(T):
        start = time.perf_counter()
        p_in = truncate_distribution(current, cfg.prep_threshold) if cfg.prep_threshold > 0 else current
        eps_prep = max(eps_prep, tvd(p_in, current))
        exact, succ, e_oa = _step(p_in, enc, cfg, q)
        eps_oa = max(eps_oa, e_oa)
        if np.any(exact[n:] > 1e-12):
            raise DimensionMismatch("padded indices acquired probability mass")
        exact = np.clip(exact[:n], 0.0, None)
        exact /= exact.sum()
        if cfg.shots is None:
            sample = exact
        else:
            sample = sample_counts(exact, cfg.shots, rng) / cfg.shots
        p_hat[t + 1] = sample
        p_ae[t + 1] = ae_marginal_exact(current[:n], P.active)
        p_cl[t + 1] = p_cl[t] @ P.active
        success[t + 1] = succ
        nxt = sample if cfg.propagation == "resample_empirical" else exact
        current = np.zeros(N)
        current[:n] = nxt
        clock[t + 1] = time.perf_counter() - start

    budget = ErrorBudget(eps_prep, enc.eps_block, eps_oa)
    return TrajectoryRecord(P.labels, p_hat, p_ae, p_cl, success, budget, enc.kind, enc.notes, clock)

