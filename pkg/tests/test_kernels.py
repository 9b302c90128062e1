import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_permutation_mixture
from qmarkov import kernels

PY = kernels.load("python")
try:
    CY = kernels.load("cython")
except ImportError:  # extension not built
    CY = None

needs_cython = pytest.mark.skipif(CY is None, reason="compiled extension not built")
BACKENDS = [PY] + ([CY] if CY is not None else [])


def brute_force_cross(sqrt_p, P):
    n = P.shape[0]
    out = np.zeros(n)
    for j in range(n):
        for i in range(n):
            for k in range(i + 1, n):
                out[j] += 2 * sqrt_p[i] * sqrt_p[k] * P[i, j] * P[k, j]
    return out


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.BACKEND)
class TestEachBackend:
    def test_perfect_matching(self, mod):
        assert mod.perfect_matching(np.eye(3, dtype=bool)).tolist() == [0, 1, 2]
        assert mod.perfect_matching(np.array([[1, 0], [1, 0]], dtype=bool)) is None

    def test_bottleneck_prefers_heavy_entries(self, mod):
        R = np.array([[0.1, 0.9], [0.9, 0.1]])
        assert mod.bottleneck_matching(R, 1e-15).tolist() == [1, 0]
        assert mod.bottleneck_matching(np.zeros((2, 2)), 1e-15) is None

    def test_rotation_tree_uniform(self, mod):
        state = np.zeros(4, dtype=complex)
        state[0] = 1.0
        mod.apply_rotation_tree(state, np.full(3, np.pi / 4), 2)
        assert np.allclose(state, 0.5)

    def test_cross_terms_brute_force(self, mod):
        rng = np.random.default_rng(0)
        P = rng.random((6, 6))
        s = np.sqrt(rng.dirichlet(np.ones(6)))
        assert np.allclose(mod.cross_terms(s, P), brute_force_cross(s, P), atol=1e-14)


@needs_cython
def test_cython_is_default():
    assert kernels.BACKEND == "cython" or os.environ.get("QMARKOV_PURE_PYTHON") == "1"


def test_env_forces_pure_python():
    env = dict(os.environ, QMARKOV_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import qmarkov; print(qmarkov.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


@needs_cython
@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(1, 6), st.integers(0, 2**31))
def test_matching_parity(n, terms, seed):
    R = random_permutation_mixture(np.random.default_rng(seed), n, terms)
    a, b = PY.bottleneck_matching(R, 1e-15), CY.bottleneck_matching(R, 1e-15)
    rows = np.arange(n)
    # ties may pick different matchings; the bottleneck value must agree
    assert R[rows, a].min() == R[rows, b].min()


@needs_cython
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**31))
def test_rotation_tree_parity(q, seed):
    rng = np.random.default_rng(seed)
    angles = rng.uniform(-np.pi, np.pi, (1 << q) - 1)
    s0 = np.zeros(1 << q, dtype=complex)
    s0[0] = 1.0
    a = PY.apply_rotation_tree(s0.copy(), angles, q)
    b = CY.apply_rotation_tree(s0.copy(), angles, q)
    assert np.max(np.abs(a - b)) < 1e-14


@needs_cython
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 24), st.integers(0, 2**31))
def test_cross_terms_parity(n, seed):
    rng = np.random.default_rng(seed)
    P = rng.random((n, n))
    s = np.sqrt(rng.dirichlet(np.ones(n)))
    assert np.max(np.abs(PY.cross_terms(s, P) - CY.cross_terms(s, P))) < 1e-13
