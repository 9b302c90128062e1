from __future__ import annotations

from collections import OrderedDict

import numpy as np
import pytest

from qmarkov.markov import TransitionMatrix

_CRITERIA: "OrderedDict[int, list[tuple[str, bool, str]]]" = OrderedDict()

CRITERION_TITLES = {
    1: "two-qubit golden demonstration",
    2: "one-hot equivalence of AE marginal and push-forward",
    3: "rotation law sin^2((2r+1) theta) on the demo LCU",
    4: "fixed-point amplification fidelity and schedule growth",
    5: "shot-noise scaling and contraction bound",
    6: "block-encoding correctness (LCU and dilation)",
    7: "Szegedy walk spectral correspondence",
    8: "hub-pruning direction on synthetic chains",
    9: "metric self-consistency",
    10: "end-to-end determinism of cmd_run",
}


def record(criterion: int, name: str, ok: bool, detail: str = "") -> None:
    _CRITERIA.setdefault(criterion, []).append((name, bool(ok), detail))


@pytest.fixture
def check():
    """``check(criterion, name, ok, detail)`` records a sub-check, then asserts it."""

    def _check(criterion: int, name: str, ok: bool, detail: str = "") -> None:
        record(criterion, name, ok, detail)
        assert ok, f"criterion {criterion} / {name}: {detail}"

    return _check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_CRITERIA):
        subs = _CRITERIA[crit]
        ok = all(s[1] for s in subs)
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {crit:2d}: {CRITERION_TITLES.get(crit, '')}")
        for name, good, detail in subs:
            tr.write_line(f"         {'ok  ' if good else 'FAIL'} {name}{': ' + detail if detail else ''}")


DEMO_P0 = np.array([0.5, 0.25, 0.125, 0.125])


def demo_matrix() -> np.ndarray:
    flip = np.eye(4)[[1, 0, 3, 2]]
    return 0.7 * np.eye(4) + 0.3 * flip


@pytest.fixture
def demo_p0() -> np.ndarray:
    return DEMO_P0.copy()


@pytest.fixture
def demo_P() -> TransitionMatrix:
    return TransitionMatrix.from_array(demo_matrix(), ["00", "01", "10", "11"])


def random_stochastic(rng, n: int, density: float = 1.0) -> np.ndarray:
    A = rng.random((n, n)) * (rng.random((n, n)) < density)
    A[np.arange(n), rng.integers(0, n, n)] += 1e-3
    return A / A.sum(axis=1, keepdims=True)


def random_permutation_mixture(rng, n: int, terms: int, symmetric: bool = False) -> np.ndarray:
    w = rng.dirichlet(np.ones(terms))
    out = np.zeros((n, n))
    for lam in w:
        perm = rng.permutation(n)
        A = np.zeros((n, n))
        A[np.arange(n), perm] = 1.0
        out += lam * ((A + A.T) / 2 if symmetric else A)
    return out


def random_reversible(rng, n: int) -> np.ndarray:
    W = rng.random((n, n))
    W = W + W.T
    return W / W.sum(axis=1, keepdims=True)
