import json
import math

import numpy as np
import pytest

from scalefree_bandit.competitions import dense_model, fixed_arm_model, fixed_share_model
from scalefree_bandit.core import (
    AdaptiveState,
    NumericalDegeneracyError,
    PerformanceMeasure,
    ProtocolError,
    ScaleFreeBandit,
    arm_marginals,
    exponential_update,
    learning_rate,
    mixture_coefficient,
    performance_measure,
    sample_arm,
    selection_probabilities,
    update_statistics,
    weight_share,
)
from scalefree_bandit.rng import make_generator


def stats(gamma=1.0, V=0.0, D=0.0, rate_prev=None, min_loss=math.inf, n_arms=2, t=1):
    return AdaptiveState(round=t, min_loss=min_loss, second_moment=V,
                         spread_max=D, rate_prev=rate_prev, gamma=gamma, n_arms=n_arms)


class TestMixtureCoefficient:
    def test_clamps_at_half(self):
        assert mixture_coefficient(1, 4) == 0.5

    def test_decays_like_sqrt(self):
        assert mixture_coefficient(64, 4) == 0.25

    @pytest.mark.parametrize("n_arms", [2, 3, 4, 7, 16])
    def test_boundary_at_4m(self, n_arms):
        assert mixture_coefficient(4 * n_arms, n_arms) == 0.5

    def test_rejects_bad_configuration(self):
        with pytest.raises(ValueError):
            mixture_coefficient(1, 1)
        with pytest.raises(ValueError):
            mixture_coefficient(0, 4)


class TestSelectionProbabilities:
    def test_point_mass_mixed(self):
        q = selection_probabilities(np.array([1.0, 0.0, 0.0, 0.0]), 0.5)
        assert np.allclose(q, [5 / 8, 1 / 8, 1 / 8, 1 / 8], atol=1e-15)

    def test_uniform_is_fixed_point(self):
        p = np.full(5, 0.2)
        for eps in (0.01, 0.25, 0.5):
            assert np.allclose(selection_probabilities(p, eps), p, atol=1e-15)

    def test_two_arm_arithmetic(self):
        q = selection_probabilities(np.array([0.6, 0.4]), 0.25)
        assert np.allclose(q, [0.575, 0.425], atol=1e-15)

    def test_sums_to_one(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        q = selection_probabilities(p, 0.3)
        assert abs(q.sum() - 1.0) < 1e-12

    def test_rejects_out_of_range_eps(self):
        p = np.array([0.5, 0.5])
        with pytest.raises(ValueError):
            selection_probabilities(p, 0.0)
        with pytest.raises(ValueError):
            selection_probabilities(p, 0.75)


class TestArmMarginals:
    def two_classes_per_arm(self):
        # classes 0,1 -> arm 0; classes 2,3 -> arm 1
        return dense_model(
            arm_of=[0, 0, 1, 1],
            prior=[0.25, 0.25, 0.25, 0.25],
            transition=np.full((4, 4), 0.25),
        )

    def test_symmetric_classes(self):
        model = self.two_classes_per_arm()
        p = arm_marginals(np.zeros(4), model)
        assert np.allclose(p, [0.5, 0.5], atol=1e-15)

    def test_log_ratio(self):
        model = fixed_arm_model(2)
        p = arm_marginals(np.array([0.0, math.log(3.0)]), model)
        assert np.allclose(p, [0.25, 0.75], atol=1e-15)

    def test_uniform_shift_invariance(self):
        rng = make_generator(3)
        model = self.two_classes_per_arm()
        log_w = rng.normal(size=4)
        base = arm_marginals(log_w, model)
        shifted = arm_marginals(log_w + 100.0, model)
        assert np.abs(base - shifted).max() <= 1e-12

    def test_all_zero_weights_signal(self):
        model = fixed_arm_model(2)
        with pytest.raises(NumericalDegeneracyError):
            arm_marginals(np.array([-np.inf, -np.inf]), model)


class TestSampleArm:
    def test_degenerate_distribution(self):
        rng = make_generator(0)
        q = np.array([1.0, 0.0, 0.0])
        assert all(sample_arm(q, rng) == 0 for _ in range(20))

    def test_deterministic_given_seed(self):
        q = np.array([0.3, 0.7])
        first = [sample_arm(q, make_generator(42)) for _ in range(1)]
        draws_a = []
        draws_b = []
        rng = make_generator(42)
        for _ in range(10):
            draws_a.append(sample_arm(q, rng))
        rng = make_generator(42)
        for _ in range(10):
            draws_b.append(sample_arm(q, rng))
        assert draws_a == draws_b
        assert draws_a[0] == first[0]

    def test_uniform_frequencies_within_3_sigma(self):
        # binomial count per arm: mean n/M, sd sqrt(n (1/M)(1-1/M))
        n, m = 1_000_000, 4
        q = np.full(m, 1.0 / m)
        rng = make_generator(2718)
        counts = np.zeros(m, dtype=np.int64)
        for _ in range(n):
            counts[sample_arm(q, rng)] += 1
        sigma = math.sqrt(n * (1 / m) * (1 - 1 / m))
        assert np.abs(counts - n / m).max() <= 3 * sigma


class TestPerformanceMeasure:
    def test_excess_over_running_minimum(self):
        pm, new_min = performance_measure(3.0, 0, 0.5, 1.0)
        assert new_min == 1.0
        assert pm.value == 4.0

    def test_new_minimum_zeroes_measure(self):
        pm, new_min = performance_measure(0.5, 1, 0.2, 1.0)
        assert new_min == 0.5
        assert pm.value == 0.0

    def test_first_round_is_free(self):
        pm, new_min = performance_measure(7.3, 2, 0.123, math.inf)
        assert new_min == 7.3
        assert pm.value == 0.0

    def test_rejects_nonpositive_probability(self):
        with pytest.raises(ValueError):
            performance_measure(1.0, 0, 0.0, math.inf)


class TestUpdateStatistics:
    def test_second_moment(self):
        out = update_statistics(stats(), PerformanceMeasure(4.0, 0, 0.5), 0.25)
        assert out.second_moment == 4.0
        assert out.spread_max == 4.0

    def test_zero_measure_is_noop(self):
        base = stats(V=1.5, D=2.0)
        out = update_statistics(base, PerformanceMeasure(0.0, 0, 0.5), 0.7)
        assert out.second_moment == 1.5
        assert out.spread_max == 2.0

    def test_running_definitions(self):
        st = stats()
        for phi in (0.0, 2.0, 1.0):
            st = update_statistics(st, PerformanceMeasure(phi, 0, 1.0), 1.0)
        assert st.second_moment == 5.0
        assert st.spread_max == 2.0


class TestLearningRate:
    def test_inverse_sqrt(self):
        assert learning_rate(stats(gamma=1.0, V=3.0, D=1.0)) == 0.5

    def test_degenerate_marker(self):
        assert learning_rate(stats(V=0.0, D=0.0)) is None

    def test_spread_only(self):
        assert learning_rate(stats(gamma=2.0, V=0.0, D=3.0)) == 2.0 / 3.0


class TestExponentialUpdate:
    def test_zero_excess_is_identity(self):
        model = fixed_arm_model(3)
        log_w = np.array([0.1, -0.2, 0.3])
        out = exponential_update(log_w, model, 1, 0.0, 0.5)
        assert np.array_equal(out, log_w)

    def test_selected_arm_penalized(self):
        model = fixed_arm_model(2)
        out = exponential_update(np.zeros(2), model, 0, 4.0, 0.5)
        assert out[0] == -2.0

    def test_unselected_classes_untouched(self):
        model = fixed_arm_model(3)
        log_w = np.array([0.1, -0.2, 0.3])
        out = exponential_update(log_w, model, 1, 5.0, 1.0)
        assert out[0] == log_w[0] and out[2] == log_w[2]


class TestWeightShare:
    def test_identity_transition_power_one(self):
        model = fixed_arm_model(3)
        log_z = np.array([0.0, -1.0, -2.0])
        out, mass_in, mass_out = weight_share(log_z, model, 1.0)
        assert np.array_equal(out, log_z)
        assert mass_in == mass_out

    def test_uniform_fixed_point(self):
        model = fixed_share_model(2, 0.25)
        out, _, _ = weight_share(np.log(np.array([1.0, 1.0])), model, 1.0)
        assert np.allclose(np.exp(out), [1.0, 1.0], atol=1e-15)

    def test_hand_expanded_share(self):
        # z=(4,0), power 1/2 -> z^p=(2,0); rows (0.75,0.25):
        # w = (0.75*2 + 0.25*0, 0.25*2 + 0.75*0) = (1.5, 0.5)
        model = fixed_share_model(2, 0.25)
        with np.errstate(divide="ignore"):
            log_z = np.log(np.array([4.0, 0.0]))
        out, _, _ = weight_share(log_z, model, 0.5)
        assert np.allclose(np.exp(out), [1.5, 0.5], atol=1e-12)

    def test_large_alpha_dense_fallback(self):
        # alpha > (M-1)/M exercises the dense path; conservation must hold
        model = fixed_share_model(2, 0.8)
        rng = make_generator(1)
        log_z = rng.normal(size=2)
        out, mass_in, mass_out = weight_share(log_z, model, 0.7)
        assert abs(math.exp(mass_out - mass_in) - 1.0) <= 1e-12

    def test_rejects_bad_power(self):
        model = fixed_arm_model(2)
        with pytest.raises(ValueError):
            weight_share(np.zeros(2), model, 0.0)
        with pytest.raises(ValueError):
            weight_share(np.zeros(2), model, 1.5)

    def test_nonstochastic_transition_rejected_at_construction(self):
        with pytest.raises(ValueError, match="transition rows"):
            dense_model(
                arm_of=[0, 1],
                prior=[0.5, 0.5],
                transition=[[0.9, 0.2], [0.1, 0.9]],
            )


class TestInit:
    def test_fixed_arm_uniform_start(self):
        state = ScaleFreeBandit(fixed_arm_model(4), gamma=1.0, seed=0)
        assert np.allclose(state.probabilities, [0.25] * 4, atol=1e-15)

    def test_fixed_share_uniform_start(self):
        state = ScaleFreeBandit(fixed_share_model(2, 0.25), gamma=1.0, seed=0)
        assert np.allclose(state.probabilities, [0.5, 0.5], atol=1e-15)

    def test_rejects_zero_gamma(self):
        with pytest.raises(ValueError):
            ScaleFreeBandit(fixed_arm_model(2), gamma=0.0, seed=0)

    def test_rejects_bad_fixed_rate(self):
        with pytest.raises(ValueError):
            ScaleFreeBandit(fixed_arm_model(2), gamma=None, fixed_rate=-1.0)
        with pytest.raises(ValueError):
            ScaleFreeBandit(fixed_arm_model(2), gamma=None, fixed_rate=math.inf)

    def test_fixed_rate_needs_no_gamma(self):
        state = ScaleFreeBandit(fixed_arm_model(2), gamma=None, fixed_rate=0.5)
        assert state.stats.gamma is None

    def test_initial_bookkeeping(self):
        state = ScaleFreeBandit(fixed_arm_model(2), gamma=1.0, seed=0)
        st = state.stats
        assert st.round == 1 and st.min_loss == math.inf
        assert st.second_moment == 0.0 and st.spread_max == 0.0
        assert st.rate_prev is None


class TestRoundProtocol:
    def test_first_round_is_pure_prior_step(self):
        state = ScaleFreeBandit(fixed_share_model(2, 0.25), gamma=1.0, seed=0)
        state.select()
        state.update(123.456)
        # any first loss becomes the running minimum: no exponential effect
        assert state.stats.min_loss == 123.456
        assert state.stats.second_moment == 0.0
        assert np.allclose(state.probabilities, [0.5, 0.5], atol=1e-15)

    def test_constant_losses_keep_prior_marginals(self):
        state = ScaleFreeBandit(fixed_share_model(3, 0.1), gamma=2.0, seed=1)
        for _ in range(50):
            state.play_round(lambda arm: 5.0)
        assert np.allclose(state.probabilities, [1 / 3] * 3, atol=1e-12)
        assert state.stats.rate_prev is None  # never left the degenerate regime

    def test_select_twice_raises(self):
        state = ScaleFreeBandit(fixed_arm_model(2), gamma=1.0, seed=0)
        state.select()
        with pytest.raises(ProtocolError):
            state.select()

    def test_update_without_select_raises(self):
        state = ScaleFreeBandit(fixed_arm_model(2), gamma=1.0, seed=0)
        with pytest.raises(ProtocolError):
            state.update(1.0)

    def test_nonfinite_losses_rejected(self):
        state = ScaleFreeBandit(fixed_arm_model(2), gamma=1.0, seed=0)
        state.select()
        with pytest.raises(ValueError):
            state.update(math.nan)
        with pytest.raises(ValueError):
            state.update(math.inf)

    def test_forced_arm_must_be_in_range(self):
        state = ScaleFreeBandit(fixed_arm_model(2), gamma=1.0, seed=0)
        with pytest.raises(ValueError):
            state.select(force_arm=5)

    def test_forced_arm_leaves_rng_untouched(self):
        a = ScaleFreeBandit(fixed_arm_model(2), gamma=1.0, seed=9)
        b = ScaleFreeBandit(fixed_arm_model(2), gamma=1.0, seed=9)
        a.select(force_arm=1)
        a.update(2.0)
        b.select(force_arm=1)
        b.update(2.0)
        arm_a, _ = a.select()
        arm_b, _ = b.select()
        assert arm_a == arm_b


class TestSnapshot:
    def play(self, state, losses, rounds):
        out = []
        for _ in range(rounds):
            arm, _ = state.select()
            state.update(losses[arm])
            out.append(arm)
        return out

    def test_round_trip_resumes_exactly(self):
        losses = {0: 0.3, 1: 0.9, 2: 0.1, 3: 0.5}
        state = ScaleFreeBandit(fixed_share_model(4, 0.05), gamma=1.7, seed=11)
        self.play(state, losses, 37)
        snap = json.loads(json.dumps(state.snapshot()))
        twin = ScaleFreeBandit.restore(snap)
        arms_a = self.play(state, losses, 25)
        arms_b = self.play(twin, losses, 25)
        assert arms_a == arms_b
        assert np.array_equal(state.log_weights, twin.log_weights)
        assert np.array_equal(state.probabilities, twin.probabilities)
        assert state.stats == twin.stats

    def test_snapshot_mid_round_rejected(self):
        state = ScaleFreeBandit(fixed_arm_model(2), gamma=1.0, seed=0)
        state.select()
        with pytest.raises(ProtocolError):
            state.snapshot()

    def test_save_load_files(self, tmp_path):
        state = ScaleFreeBandit(fixed_share_model(3, 0.2), gamma=1.0, seed=4)
        self.play(state, {0: 1.0, 1: 2.0, 2: 0.0}, 10)
        path = tmp_path / "state.json"
        state.save(path)
        twin = ScaleFreeBandit.load(path)
        assert np.array_equal(state.log_weights, twin.log_weights)
        assert state.stats == twin.stats

    def test_version_checked(self):
        state = ScaleFreeBandit(fixed_arm_model(2), gamma=1.0, seed=0)
        snap = state.snapshot()
        snap["version"] = 99
        with pytest.raises(ValueError):
            ScaleFreeBandit.restore(snap)

    def test_format_checked(self):
        with pytest.raises(ValueError, match="snapshot"):
            ScaleFreeBandit.restore({"version": 1})

    def test_custom_models_not_restorable(self):
        from scalefree_bandit.competitions import dense_model

        model = dense_model([0, 1], [0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])
        snap = ScaleFreeBandit(model, gamma=1.0, seed=0).snapshot()
        with pytest.raises(ValueError, match="model spec"):
            ScaleFreeBandit.restore(snap)
