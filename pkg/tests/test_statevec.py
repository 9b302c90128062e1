import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmarkov.errors import AllMassTruncated, BadParams, BadTarget, NotUnitary, ZeroSuccess
from qmarkov.statevec import (
    DEFAULT_SHOTS,
    ShotHistogram,
    StateVector,
    apply_unitary,
    build_prep_plan,
    make_rng,
    measure_counts,
    postselect_ancilla_zero,
    prep_unitary,
    prepare_state,
    truncate_distribution,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def demo_state(demo_p0):
    return prepare_state(build_prep_plan(demo_p0))


class TestPrepPlan:
    def test_demo_doubled_angles(self, demo_p0):
        plan = build_prep_plan(demo_p0)
        assert np.allclose(plan.doubled_angles, [1.0472, 1.2310, math.pi / 2], atol=5e-5)
        assert plan.doubled_angles[0] == pytest.approx(math.pi / 3, abs=1e-12)

    def test_half_angle_matches_arctan_form(self, demo_p0):
        plan = build_prep_plan(demo_p0)
        m_left, m_right = 0.75, 0.25
        assert 2 * plan.angles[0] == pytest.approx(2 * math.atan(math.sqrt(m_right / m_left)), abs=1e-14)
        assert 2 * plan.angles[1] == pytest.approx(2 * math.atan(math.sqrt(0.25 / 0.5)), abs=1e-14)

    def test_point_mass_has_zero_angles(self):
        plan = build_prep_plan([1.0, 0, 0, 0, 0, 0, 0, 0])
        assert np.all(plan.angles == 0)
        assert np.allclose(prepare_state(plan).amplitudes, np.eye(8)[0])

    def test_uniform_gives_quarter_turns(self):
        assert np.allclose(build_prep_plan(np.full(4, 0.25)).doubled_angles, math.pi / 2)

    def test_zero_mass_subtree_angle_zero(self):
        plan = build_prep_plan([0.0, 0.0, 0.5, 0.5])
        assert plan.level(1)[0] == 0.0

    def test_threshold_truncates_then_renormalises(self):
        p = np.array([0.6, 0.395, 0.005, 0.0])
        plan = build_prep_plan(p, threshold=1e-2)
        probs = prepare_state(plan).probabilities()
        assert probs[2] == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(probs[:2], p[:2] / p[:2].sum(), atol=1e-12)

    def test_all_mass_truncated(self):
        with pytest.raises(AllMassTruncated):
            truncate_distribution([0.25] * 4, 0.5)

    def test_bad_inputs(self):
        with pytest.raises(BadParams):
            build_prep_plan([0.5, 0.6])
        with pytest.raises(BadParams):
            build_prep_plan([0.5, 0.5], threshold=1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 64), st.integers(0, 2**31))
    def test_prep_reproduces_random_distributions(self, n, seed):
        p = np.random.default_rng(seed).dirichlet(np.ones(n))
        probs = prepare_state(build_prep_plan(p)).probabilities()
        assert np.max(np.abs(probs[:n] - p)) < 1e-12
        assert np.all(probs[n:] < 1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 32), st.floats(1e-3, 0.2), st.integers(0, 2**31))
    def test_truncation_bias_matches_closed_form(self, n, tau, seed):
        p = np.random.default_rng(seed).dirichlet(np.full(n, 0.5))
        if p[p >= tau].sum() == 0:
            return
        probs = prepare_state(build_prep_plan(p, threshold=tau)).probabilities()[:n]
        dropped = p[p < tau].sum()
        # keeping mass 1 - d and rescaling moves exactly d in total variation
        assert 0.5 * np.abs(probs - p).sum() == pytest.approx(dropped, abs=1e-12)
        assert 0.5 * np.abs(probs - p).sum() <= dropped + dropped / (1 - dropped) + 1e-12


class TestStates:
    def test_demo_amplitudes(self, demo_p0):
        amps = demo_state(demo_p0).amplitudes
        assert np.allclose(amps.real, [0.7071, 0.5, 0.3536, 0.3536], atol=5e-5)
        assert np.allclose(np.abs(amps) ** 2, demo_p0, atol=1e-12)

    def test_flip_least_significant_qubit(self, demo_p0):
        out = apply_unitary(demo_state(demo_p0), X, [0])
        assert np.allclose(out.amplitudes.real, [0.5, 0.7071, 0.3536, 0.3536], atol=5e-5)

    def test_identity_and_inverse(self, demo_p0):
        s = demo_state(demo_p0)
        assert np.allclose(apply_unitary(s, np.eye(2), [1]).amplitudes, s.amplitudes)
        rng = np.random.default_rng(0)
        Q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        back = apply_unitary(apply_unitary(s, Q, [1, 0]), Q.conj().T, [1, 0])
        assert np.max(np.abs(back.amplitudes - s.amplitudes)) < 1e-10

    def test_target_ordering(self):
        cx = np.eye(4)[[0, 1, 3, 2]]  # flips targets[0] when targets[1] is set
        out = apply_unitary(StateVector.basis(3, 0b100), cx, [1, 2])
        assert np.flatnonzero(out.amplitudes).tolist() == [0b110]

    def test_errors(self, demo_p0):
        s = demo_state(demo_p0)
        with pytest.raises(NotUnitary):
            apply_unitary(s, np.array([[1, 1], [0, 1]]), [0])
        with pytest.raises(BadTarget):
            apply_unitary(s, X, [2])
        with pytest.raises(BadTarget):
            apply_unitary(s, np.eye(4), [0, 0])
        with pytest.raises(BadParams):
            StateVector(1, [1.0, 1.0])

    def test_prep_unitary_is_unitary_and_matches(self, demo_p0):
        plan = build_prep_plan(demo_p0)
        U = prep_unitary(plan)
        assert np.allclose(U @ U.conj().T, np.eye(4), atol=1e-12)
        assert np.allclose(U[:, 0], demo_state(demo_p0).amplitudes)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**31))
    def test_norm_preserved(self, n, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        s = StateVector(n, v / np.linalg.norm(v))
        k = int(rng.integers(1, n + 1))
        targets = [int(t) for t in rng.permutation(n)[:k]]
        Q, _ = np.linalg.qr(rng.normal(size=(1 << k, 1 << k)) + 1j * rng.normal(size=(1 << k, 1 << k)))
        out = apply_unitary(s, Q, targets)
        assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-10
        # dense reference: embed Q with an explicit permutation of basis indices
        dense = np.zeros((1 << n, 1 << n), dtype=complex)
        for col in range(1 << n):
            sub = sum(((col >> t) & 1) << b for b, t in enumerate(targets))
            rest = col
            for t in targets:
                rest &= ~(1 << t)
            for row_sub in range(1 << k):
                row = rest | sum(((row_sub >> b) & 1) << t for b, t in enumerate(targets))
                dense[row, col] = Q[row_sub, sub]
        assert np.allclose(out.amplitudes, dense @ s.amplitudes, atol=1e-12)


class TestPostselect:
    def test_ancilla_zero_product(self, demo_p0):
        phi = demo_state(demo_p0)
        sys_state, prob = postselect_ancilla_zero(phi.tensor_ancilla_zero(2), [2, 3])
        assert prob == pytest.approx(1.0)
        assert np.allclose(sys_state.amplitudes, phi.amplitudes)

    def test_half_branch(self):
        a = np.zeros(8, dtype=complex)
        a[1] = a[4 | 2] = 1 / math.sqrt(2)
        sys_state, prob = postselect_ancilla_zero(StateVector(3, a), [2])
        assert prob == pytest.approx(0.5)
        assert np.allclose(sys_state.amplitudes, np.eye(4)[1])

    def test_zero_success(self):
        with pytest.raises(ZeroSuccess):
            postselect_ancilla_zero(StateVector.basis(2, 2), [1])

    def test_bad_ancilla(self):
        with pytest.raises(BadTarget):
            postselect_ancilla_zero(StateVector.basis(2, 0), [])
        with pytest.raises(BadTarget):
            postselect_ancilla_zero(StateVector.basis(2, 0), [0, 1])


class TestMeasurement:
    def test_basis_state_counts(self):
        h = measure_counts(StateVector.basis(3, 5), shots=100, rng_seed=1)
        assert h.counts[5] == 100 and h.counts.sum() == h.total_shots == 100

    def test_default_shots(self):
        assert DEFAULT_SHOTS == 4096
        assert measure_counts(StateVector.basis(1, 0)).total_shots == 4096

    def test_determinism_and_json(self, demo_p0):
        s = demo_state(demo_p0)
        a = measure_counts(s, 4096, rng_seed=9)
        b = measure_counts(s, 4096, rng_seed=9)
        assert np.array_equal(a.counts, b.counts)
        assert not np.array_equal(a.counts, measure_counts(s, 4096, rng_seed=10).counts)
        body = json.loads(a.to_json())
        assert body["total_shots"] == 4096 and body["seed"] == 9
        assert np.array_equal(ShotHistogram.from_json(a.to_json(), 4).counts, a.counts)

    def test_frequencies_converge(self, demo_p0):
        h = measure_counts(demo_state(demo_p0), 400_000, rng_seed=3)
        assert np.max(np.abs(h.frequencies - demo_p0)) < 5e-3

    def test_rng_streams_are_independent(self):
        a = make_rng(5).random(4)
        assert np.array_equal(a, make_rng(5).random(4))
        assert not np.array_equal(a, make_rng(5, 1).random(4))

    def test_shot_noise_slope(self):
        rng_p = np.random.default_rng(0).dirichlet(np.ones(8))
        s = prepare_state(build_prep_plan(rng_p))
        Ms = [64, 256, 1024, 4096, 16384]
        means = []
        for M in Ms:
            tv = [0.5 * np.abs(measure_counts(s, M, seed).frequencies - rng_p).sum() for seed in range(200)]
            means.append(np.mean(tv))
        slope = np.polyfit(np.log(Ms), np.log(means), 1)[0]
        assert -0.6 <= slope <= -0.4

    def test_rejects_nonpositive_shots(self):
        with pytest.raises(BadParams):
            measure_counts(StateVector.basis(1, 0), 0)
