"""Agreement metrics between a classical reference and a quantum estimate.

All functions take two equal-length probability vectors. KL uses the
natural logarithm; a zero in the second argument where the first is
positive is floored at ``KL_FLOOR`` and reported in ``MetricsRow.support_note``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch

KL_FLOOR = 1e-12
CSV_FIELDS = ("tvd", "l2", "kl", "fidelity", "mae")


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise DimensionMismatch(f"shapes {p.shape} and {q.shape} differ")
    return p, q


def tvd(p, q) -> float:
    p, q = _pair(p, q)
    return float(0.5 * np.abs(p - q).sum())


def l2(p, q) -> float:
    p, q = _pair(p, q)
    return float(np.linalg.norm(p - q))


def kl_with_note(p, q) -> tuple[float, str]:
    p, q = _pair(p, q)
    mask = p > 0
    qm = q[mask]
    floored = int(np.count_nonzero(qm <= 0))
    qm = np.where(qm > 0, qm, KL_FLOOR)
    value = float(np.sum(p[mask] * np.log(p[mask] / qm)))
    note = f"kl floored at {floored} index(es)" if floored else ""
    return value, note


def kl(p, q) -> float:
    return kl_with_note(p, q)[0]


def fidelity(p, q) -> float:
    """Squared Bhattacharyya coefficient."""
    p, q = _pair(p, q)
    bc = float(np.sum(np.sqrt(np.clip(p, 0, None) * np.clip(q, 0, None))))
    return min(bc * bc, 1.0)


def mean_abs_error(p, q) -> float:
    p, q = _pair(p, q)
    return float(np.abs(p - q).sum() / p.size)


@dataclass(frozen=True)
class MetricsRow:
    tvd: float
    l2: float
    kl: float
    fidelity: float
    mae: float
    support_note: str = ""

    @classmethod
    def compare(cls, reference, estimate) -> "MetricsRow":
        k, note = kl_with_note(reference, estimate)
        return cls(
            tvd(reference, estimate),
            l2(reference, estimate),
            k,
            fidelity(reference, estimate),
            mean_abs_error(reference, estimate),
            note,
        )

    @classmethod
    def mean(cls, rows: list["MetricsRow"]) -> "MetricsRow":
        notes = sorted({r.support_note for r in rows if r.support_note})
        return cls(*(math.fsum(getattr(r, f) for r in rows) / len(rows) for f in CSV_FIELDS), "; ".join(notes))

    def as_dict(self) -> dict:
        return asdict(self)
