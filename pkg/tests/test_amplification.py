import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import demo_matrix, random_permutation_mixture, random_stochastic
from qmarkov.amplification import (
    SWEEP_FIELDS,
    ErrorBudget,
    OaaConfig,
    amplitude_image,
    chebyshev_t,
    encoding_with_amplitude,
    fixed_point_schedule,
    grover_iterate,
    run_oaa,
    run_oaa_fixed_point,
    run_oaa_fixed_r,
    schedule_length,
    success_angle,
    sweep_csv,
)
from qmarkov.block_encoding import LcuDecomposition, build_dilation, build_lcu_unitary, lcu_decompose_permutations
from qmarkov.errors import AlphaTooSmall, AmplitudeBelowBound, BadParams, ZeroNorm
from qmarkov.statevec import build_prep_plan, prepare_state

# sum_j (sum_i sqrt(p_i) P_ij)^2 for the demo chain, evaluated in exact arithmetic
DEMO_NORM_SQ = 0.98198484809835
DEMO_SIN = 0.99095148624862


def input_state(p, ancillas):
    return prepare_state(build_prep_plan(p)).tensor_ancilla_zero(ancillas)


@pytest.fixture
def demo_lcu(demo_P):
    return build_lcu_unitary(lcu_decompose_permutations(demo_P))


class TestSuccessAngle:
    def test_demo(self, demo_P, demo_p0):
        eta = amplitude_image(demo_P, demo_p0)
        assert float(eta @ eta) == pytest.approx(DEMO_NORM_SQ, abs=1e-12)
        assert math.sin(success_angle(demo_P, demo_p0)) == pytest.approx(DEMO_SIN, abs=1e-12)

    def test_permutation(self):
        P = np.eye(4)[[2, 3, 1, 0]]
        assert success_angle(P, [0.1, 0.2, 0.3, 0.4]) == pytest.approx(math.pi / 2)

    def test_dead_block(self):
        P = np.zeros((2, 2))
        with pytest.raises(ZeroNorm):
            success_angle(P, [0.5, 0.5])

    def test_alpha_too_small(self, demo_P, demo_p0):
        with pytest.raises(AlphaTooSmall):
            success_angle(demo_P, demo_p0, alpha=0.5)


class TestFixedR:
    def test_trivial_iterate_is_minus_identity(self):
        b = build_lcu_unitary(LcuDecomposition(np.array([1.0]), (np.array([1, 0, 3, 2]),), 1.0))
        assert b.ancillas == 0
        assert np.allclose(grover_iterate(b), -np.eye(4), atol=1e-14)

    def test_iterates_are_unitary(self, demo_p0):
        rng = np.random.default_rng(0)
        for P in (random_stochastic(rng, 4), random_permutation_mixture(rng, 4, 3)):
            b = build_dilation(P)
            for s0 in (None, input_state(demo_p0, 1)):
                G = grover_iterate(b, s0)
                assert np.max(np.abs(G @ G.conj().T - np.eye(b.dim))) < 1e-10

    def test_demo_r0(self, demo_lcu, demo_p0):
        state, succ = run_oaa_fixed_r(demo_lcu, input_state(demo_p0, 1), 0)
        assert succ == pytest.approx(DEMO_NORM_SQ, abs=1e-12)
        eta = amplitude_image(demo_matrix(), demo_p0)
        assert np.allclose(state.amplitudes, eta / np.linalg.norm(eta), atol=1e-9)

    def test_demo_r1_closed_form(self, demo_lcu, demo_p0):
        theta = math.asin(DEMO_SIN)
        s0 = input_state(demo_p0, 1)
        _, succ = run_oaa_fixed_r(demo_lcu, s0, 1)
        assert succ == pytest.approx(math.sin(3 * theta) ** 2, abs=1e-9)
        v = grover_iterate(demo_lcu, s0) @ demo_lcu.apply(s0.amplitudes)
        assert np.linalg.norm(v[:4]) == pytest.approx(abs(math.sin(3 * theta)), abs=1e-9)

    def test_oblivious_iterate_leaks_on_demo(self, demo_lcu, demo_p0):
        # the R_0-only iterate is not a 2-D rotation here; the deviation is pinned
        _, succ = run_oaa_fixed_r(demo_lcu, input_state(demo_p0, 1), 1, oblivious=True)
        assert abs(succ - math.sin(3 * math.asin(DEMO_SIN)) ** 2) > 0.1

    def test_permutation_any_r(self):
        b = build_lcu_unitary(LcuDecomposition(np.array([1.0]), (np.array([1, 2, 3, 0]),), 1.0))
        p = np.array([0.1, 0.2, 0.3, 0.4])
        for r in range(4):
            state, succ = run_oaa_fixed_r(b, input_state(p, 0), r)
            assert succ == 1.0
            assert np.allclose(np.abs(state.amplitudes) ** 2, p[[3, 0, 1, 2]], atol=1e-12)

    def test_negative_r(self, demo_lcu, demo_p0):
        with pytest.raises(BadParams):
            run_oaa_fixed_r(demo_lcu, input_state(demo_p0, 1), -1)

    def test_state_size_checked(self, demo_lcu, demo_p0):
        with pytest.raises(BadParams):
            run_oaa_fixed_r(demo_lcu, input_state(demo_p0, 0), 0)

    @settings(max_examples=25, deadline=None)
    @given(st.sampled_from([2, 4, 8]), st.integers(0, 5), st.integers(0, 2**31))
    def test_rotation_law_state_aware(self, n, r, seed):
        rng = np.random.default_rng(seed)
        P = random_stochastic(rng, n)
        p = rng.dirichlet(np.ones(n))
        alpha = max(np.linalg.norm(P, 2) * 1.0001, np.linalg.norm(amplitude_image(P, p)) / 0.6)
        b = build_dilation(P, alpha)
        theta = success_angle(P, p, alpha)
        _, succ = run_oaa_fixed_r(b, input_state(p, 1), r)
        assert succ == pytest.approx(math.sin((2 * r + 1) * theta) ** 2, abs=1e-9)


class TestSchedule:
    def test_trivial(self):
        s = fixed_point_schedule(1.0, 1e-2)
        assert s.length == 1 and s.iterates == 0

    def test_lengths_at_w03(self):
        assert [fixed_point_schedule(0.3, e).length for e in (1e-1, 1e-2, 1e-3, 1e-4)] == [11, 19, 25, 33]
        assert fixed_point_schedule(0.3, 1e-2).length <= 40

    def test_logarithmic_growth(self):
        eps = np.logspace(-1, -4, 13)
        L = np.array([schedule_length(0.3, e) for e in eps])
        assert np.all(np.diff(L) >= 0)
        # halving eps adds a bounded number of phases
        for e in (1e-1, 1e-2, 1e-3):
            assert schedule_length(0.3, e / 2) - schedule_length(0.3, e) <= 6
        slope = np.polyfit(np.log(1 / eps), L, 1)[0]
        assert 0 < slope < 2 / 0.3

    def test_bad_params(self):
        for w, e in ((0.0, 0.1), (1.5, 0.1), (0.5, 0.0), (0.5, 1.0)):
            with pytest.raises(BadParams):
                fixed_point_schedule(w, e)

    def test_depth_cap(self):
        s = fixed_point_schedule(0.3, 1e-4, depth_cap=4)
        assert s.truncated and s.length == 9 and s.iterates == 4
        assert s.delta == pytest.approx(1 / chebyshev_t(9, 1 / math.sqrt(1 - 0.09)))
        assert s.delta > 1e-4

    def test_phase_symmetry(self):
        s = fixed_point_schedule(0.4, 1e-3)
        l = s.iterates
        assert all(s.betas[j] == -s.alphas[l - 1 - j] for j in range(l))

    def test_chebyshev(self):
        for L in range(6):
            for x in (-2.0, -0.3, 0.5, 1.7):
                ref = np.polynomial.chebyshev.chebval(x, [0] * L + [1])
                assert chebyshev_t(L, x) == pytest.approx(ref, rel=1e-12)


class TestFixedPoint:
    def test_demo(self, demo_lcu, demo_p0):
        res = run_oaa_fixed_point(demo_lcu, input_state(demo_p0, 1), fixed_point_schedule(0.9, 1e-2))
        assert res.fidelity >= 0.9999 and res.fidelity_bound == pytest.approx(0.9999)
        assert res.success_prob >= res.fidelity - 1e-12

    def test_permutation_fidelity_one(self):
        b = build_lcu_unitary(LcuDecomposition(np.array([1.0]), (np.array([2, 0, 1, 3]),), 1.0))
        res = run_oaa_fixed_point(b, input_state([0.4, 0.3, 0.2, 0.1], 0), fixed_point_schedule(0.5, 1e-2))
        assert res.fidelity == pytest.approx(1.0, abs=1e-12)

    def test_below_bound_is_flagged(self):
        P = np.full((4, 4), 0.25)
        p = np.full(4, 0.25)
        b = encoding_with_amplitude(P, p, 0.1)
        sched = fixed_point_schedule(0.9, 1e-3)
        with pytest.raises(AmplitudeBelowBound):
            run_oaa_fixed_point(b, input_state(p, 1), sched)
        res = run_oaa_fixed_point(b, input_state(p, 1), sched, strict=False)
        assert res.flagged

    def test_matches_closed_form(self):
        P = np.full((4, 4), 0.25)
        p = np.array([0.4, 0.3, 0.2, 0.1])
        for s in (0.3, 0.5, 0.7):
            b = encoding_with_amplitude(P, p, s)
            sched = fixed_point_schedule(0.3, 1e-2)
            res = run_oaa_fixed_point(b, input_state(p, 1), sched)
            assert res.fidelity == pytest.approx(sched.success_lower_bound(s), abs=1e-9)

    def test_worst_case_failure_nonincreasing_in_length(self):
        # pointwise failure oscillates with L; the worst case over amplitudes >= w does not
        P = np.full((4, 4), 0.25)
        p = np.full(4, 0.25)
        encs = [encoding_with_amplitude(P, p, s) for s in np.linspace(0.4, 0.99, 12)]
        worst = []
        for e in (0.3, 1e-1, 3e-2, 1e-2, 3e-3, 1e-3):
            sched = fixed_point_schedule(0.4, e)
            worst.append(max(1 - run_oaa_fixed_point(b, input_state(p, 1), sched).fidelity for b in encs))
            assert worst[-1] <= sched.delta**2 + 1e-12
        assert all(b_ <= a_ + 1e-12 for a_, b_ in zip(worst, worst[1:]))

    def test_run_oaa_dispatch(self, demo_lcu, demo_p0):
        s0 = input_state(demo_p0, 1)
        res = run_oaa(demo_lcu, s0, OaaConfig(mode="fixed_r", r=1))
        assert res.queries == 3
        res = run_oaa(demo_lcu, s0, OaaConfig(mode="fixed_point"), sin_theta=DEMO_SIN)
        assert res.fidelity >= res.fidelity_bound
        with pytest.raises(BadParams):
            run_oaa(demo_lcu, s0, OaaConfig(mode="fixed_point"))


class TestConfig:
    def test_budget(self):
        assert ErrorBudget(0.1, 0.2, 0.3).total == pytest.approx(0.6)
        with pytest.raises(BadParams):
            ErrorBudget(-1e-3, 0, 0)

    def test_config_validation(self):
        for kw in ({"mode": "x"}, {"r": -1}, {"epsilon_oa": 0.0}, {"w": 0.0}, {"depth_cap": -1}):
            with pytest.raises(BadParams):
                OaaConfig(**kw)

    def test_encoding_with_amplitude(self):
        P = np.full((4, 4), 0.25)
        p = np.array([0.26, 0.25, 0.25, 0.24])
        b = encoding_with_amplitude(P, p, 0.99)
        assert math.sin(success_angle(P, p, b.alpha)) == pytest.approx(0.99, abs=1e-12)
        with pytest.raises(AlphaTooSmall):
            encoding_with_amplitude(np.eye(4)[[1, 0, 2, 3]] * 0.5 + 0.5 * np.eye(4), np.eye(4)[0], 0.99)

    def test_sweep_csv(self):
        text = sweep_csv([(0.3, 19, 0.99, 0.999)])
        lines = text.splitlines()
        assert lines[0] == ",".join(SWEEP_FIELDS)
        assert lines[1] == "0.3,19,0.99,0.999"
