import numpy as np
import pytest

from gauntlet.core import Multiset, Release, STAR
from gauntlet.errors import (
    AttackerProtocolViolation,
    DuplicateDeletionError,
    InvalidWorldPairError,
    NotStatelessError,
)
from gauntlet.games import (
    FixedOrderAttacker,
    FullKnowledgeSimulator,
    ScriptedDynamicPlayer,
    SignAdaptiveAttacker,
    StaticAsDynamicPlayer,
    bookkeeping_ok,
    dynamic_game,
    leakage_game,
    non_adaptive_game,
    simulator_blindness_witness,
    static_game,
    stateless_simulator,
    tv_estimate,
    view_key,
)
from gauntlet.mechanisms import (
    DPMedianMechanism,
    DPSumMechanism,
    ExactMedianRetrainer,
    SQMechanism,
    XorMaskDeleted,
    XorMaskUndeleted,
)


def rng_(seed=0):
    return np.random.default_rng(seed)


FOOTNOTE_25 = tuple([0.0] * 10 + [0.25] + [1.0] * 12)
FOOTNOTE_75 = tuple([0.0] * 10 + [0.75] + [1.0] * 12)


class TestNonAdaptiveGame:
    def test_dp_sum_transcript(self):
        mech = DPSumMechanism(exact_mode=True)
        tr = non_adaptive_game(mech, [0.3, 0.7], [0.3], rng_())
        releases = [z.value for z in tr.releases()]
        assert releases[0] == 1.0
        assert releases[1] == releases[0] - 0.3

    def test_empty_sequence(self):
        mech = DPSumMechanism(exact_mode=True)
        tr = non_adaptive_game(mech, [0.5], [], rng_())
        assert tr.steps == [] and tr.initial.value == 0.5

    def test_footnote_dataset(self):
        mech = ExactMedianRetrainer()
        tr = non_adaptive_game(mech, list(FOOTNOTE_25), [1.0], rng_())
        assert [z.value for z in tr.releases()] == [1.0, 0.25]

    def test_duplicate_deletion(self):
        mech = DPSumMechanism(exact_mode=True)
        with pytest.raises(DuplicateDeletionError):
            non_adaptive_game(mech, [0.5, 0.25], [0.5, 0.5], rng_())


class TestStaticGame:
    def test_fixed_order_reduces_to_non_adaptive(self):
        D = [0.125, 0.25, 0.5, 0.75]
        Y = {2, 4}
        rec = static_game(DPSumMechanism(exact_mode=True), D, FixedOrderAttacker([4, 2]), Y, None, rng_(1))
        tr = non_adaptive_game(DPSumMechanism(exact_mode=True), D, [0.75, 0.25], rng_(1))
        assert [z.value for z in rec.releases] == [z.value for z in tr.releases()]

    def test_empty_corruption(self):
        rec = static_game(DPSumMechanism(exact_mode=True), [0.5, 0.25], FixedOrderAttacker(), set(), None, rng_())
        assert rec.view["releases"] == [0.75]
        assert rec.corrupted == ()

    def test_adaptive_order_keeps_noise_constancy(self):
        r = rng_(2)
        D = [int(v) / 64 for v in r.integers(1, 65, size=12)]
        mech = DPSumMechanism(epsilon=1.0)
        rec = static_game(mech, D, SignAdaptiveAttacker(), {1, 3, 5, 7}, None, r)
        import math

        remaining = list(D)
        offset0 = rec.releases[0].value - math.fsum(sorted(remaining))
        for y, z in zip(rec.deleted_values, rec.releases[1:]):
            remaining.remove(y)
            assert z.value - math.fsum(sorted(remaining)) == offset0

    def test_protocol_violation_outside_Y(self):
        with pytest.raises(AttackerProtocolViolation):
            static_game(
                DPSumMechanism(exact_mode=True),
                [0.5, 0.25, 0.125],
                FixedOrderAttacker([3]),
                {1, 2},
                None,
                rng_(),
            )

    def test_side_info_must_be_deterministic(self):
        import random

        with pytest.raises(ValueError):
            static_game(
                DPSumMechanism(exact_mode=True),
                [0.5],
                FixedOrderAttacker(),
                set(),
                lambda D: random.random(),
                rng_(),
            )


class TestDynamicGame:
    def test_immediate_end(self):
        rec = dynamic_game(
            DPSumMechanism(exact_mode=True), [0.5, 0.25], ScriptedDynamicPlayer([]), None, 0, 2, rng_()
        )
        assert rec.corrupted == ()
        assert rec.view["releases"] == [0.75]

    def test_upfront_corruption_reduces_to_static(self):
        D = [0.5, 0.25, 0.125, 0.0625]
        Y = {1, 4}
        player = StaticAsDynamicPlayer(FixedOrderAttacker([4, 1]), Y)
        rec = dynamic_game(DPSumMechanism(exact_mode=True), D, player, None, 0, 2, rng_(3))
        static_rec = static_game(
            DPSumMechanism(exact_mode=True), D, FixedOrderAttacker([4, 1]), Y, None, rng_(3)
        )
        assert [z.value for z in rec.releases] == [z.value for z in static_rec.releases]
        assert rec.corrupted == static_rec.corrupted

    def test_mode_b1_never_invokes_mechanism(self):
        D = [0.5, 0.25, 0.125]
        player = ScriptedDynamicPlayer([({1}, {1}), ({2}, {2})])
        rec = dynamic_game(DPSumMechanism(exact_mode=True), D, player, None, 1, 3, rng_())
        assert len(rec.releases) == 1  # only z0
        assert rec.view["releases"] == [0.875]

    def test_b1_view_independent_of_undeleted_values(self):
        # permuting undeleted entries leaves (z0, corrupted values,
        # symmetric side info) fixed, so the b=1 view is bit-identical
        D = [5.0, 1.0, 2.0, 3.0, 4.0]
        D_perm = [5.0, 1.0, 4.0, 3.0, 2.0]  # permute undeleted positions 3 and 5

        def histogram(data):
            return sorted(data)

        views = []
        for world in (D, D_perm):
            player = ScriptedDynamicPlayer([({1, 2}, {1, 2})])
            rec = dynamic_game(ExactMedianRetrainer(), world, player, histogram, 1, 2, rng_(4))
            views.append(view_key(rec.view))
        assert views[0] == views[1]

    def test_budget_violation(self):
        with pytest.raises(AttackerProtocolViolation):
            dynamic_game(
                DPSumMechanism(exact_mode=True),
                [0.5, 0.25, 0.125],
                ScriptedDynamicPlayer([({1, 2, 3}, set())]),
                None,
                0,
                2,
                rng_(),
            )

    def test_deleting_uncorrupted_violates(self):
        with pytest.raises(AttackerProtocolViolation):
            dynamic_game(
                DPSumMechanism(exact_mode=True),
                [0.5, 0.25],
                ScriptedDynamicPlayer([({1}, {2})]),
                None,
                0,
                2,
                rng_(),
            )

    def test_bookkeeping_trail(self):
        D = [0.5, 0.25, 0.125, 0.0625]
        player = ScriptedDynamicPlayer([({1, 2}, {1}), ({3}, {2, 3})])
        rec = dynamic_game(DPSumMechanism(exact_mode=True), D, player, None, 0, 3, rng_())
        assert bookkeeping_ok(rec, 3)
        assert rec.corrupted == (1, 2, 3)


class TestReductionChain:
    def test_dynamic_pass_implies_static_implies_non_adaptive(self):
        # the same attacker expressed at each game level sees the same
        # transcript on a stateless mechanism
        D = [0.5, 0.25, 0.125, 0.0625]
        Y = {2, 3}
        order = [3, 2]
        dyn = dynamic_game(
            DPSumMechanism(exact_mode=True),
            D,
            StaticAsDynamicPlayer(FixedOrderAttacker(order), Y),
            None,
            0,
            2,
            rng_(5),
        )
        stat = static_game(DPSumMechanism(exact_mode=True), D, FixedOrderAttacker(order), Y, None, rng_(5))
        non_adpt = non_adaptive_game(DPSumMechanism(exact_mode=True), D, [D[2], D[1]], rng_(5))
        dyn_rel = [z.value for z in dyn.releases]
        stat_rel = [z.value for z in stat.releases]
        na_rel = [z.value for z in non_adpt.releases()]
        assert dyn_rel == stat_rel == na_rel


class TestStatelessSimulator:
    def test_dp_sum_bit_exact(self):
        r = rng_(6)
        D = [int(v) / 64 for v in r.integers(1, 65, size=10)]
        mech = DPSumMechanism(epsilon=1.0)
        rec = static_game(mech, D, SignAdaptiveAttacker(), {1, 2, 3}, None, r)
        sim = stateless_simulator("dp_sum", mech.sim_seed(), rec.deleted_values)
        assert sim == rec.releases

    def test_dp_median_replay(self):
        r = rng_(7)
        D = [(int(v) + 1) / 64 for v in r.integers(0, 64, size=40)]
        mech = DPMedianMechanism(bits=6, epsilon=1.0)
        rec = static_game(mech, D, SignAdaptiveAttacker(), {1, 5, 9, 13}, None, r)
        sim = stateless_simulator("dp_median", mech.sim_seed(), rec.deleted_values)
        assert sim == rec.releases

    def test_sq_replay(self):
        r = rng_(8)
        D = [int(v) + 1 for v in r.integers(0, 16, size=20)]
        mech = SQMechanism(predicates=[("const_one",), ("bq_block", 16, 4, 1)], epsilon=1.0)
        rec = static_game(mech, D, SignAdaptiveAttacker(), {2, 4, 6}, None, r)
        sim = stateless_simulator("sq", mech.sim_seed(), rec.deleted_values)
        assert sim == rec.releases

    def test_xor1_replay(self):
        r = rng_(9)
        D = [int(v) for v in r.integers(0, 16, size=8)]
        mech = XorMaskDeleted(d=4)
        rec = static_game(mech, D, FixedOrderAttacker(), {1, 2}, None, r)
        sim = stateless_simulator("xor1", mech.sim_seed(), rec.deleted_values)
        assert sim == rec.releases

    def test_not_stateless(self):
        for mech_id in ("exact_median", "bq_retrainer", "kmeans", "xor2"):
            with pytest.raises(NotStatelessError):
                stateless_simulator(mech_id, {"z0": 0.0}, [1])

    def test_missing_seed_payload(self):
        with pytest.raises(NotStatelessError):
            stateless_simulator("dp_sum", None, [1])


class TestTvEstimate:
    def test_identical_samplers(self):
        def sampler(r):
            return int(r.integers(0, 16))

        tv = tv_estimate(sampler, sampler, 10_000, rng_(10))
        assert tv <= 0.05

    def test_disjoint_supports(self):
        tv = tv_estimate(lambda r: 0, lambda r: 1, 1000, rng_(11))
        assert tv >= 0.95

    def test_bernoulli_vs_constant(self):
        tv = tv_estimate(
            lambda r: int(r.random() < 0.5),
            lambda r: 1,
            10_000,
            rng_(12),
        )
        assert abs(tv - 0.5) <= 0.02

    def test_self_distance_bound(self):
        def sampler(r):
            return int(r.integers(0, 8))

        tv = tv_estimate(sampler, sampler, 4096, rng_(13))
        assert tv <= 2 * (8 / 4096) ** 0.5


class TestLeakageGame:
    def run_pair(self, leak, seed=14):
        D = [0.5, 0.25, 0.125, 0.75, 1.0, 0.0625, 0.375]
        Y = {1, 4, 6}

        def attacker_factory():
            return StaticAsDynamicPlayer(SignAdaptiveAttacker(), Y)

        return leakage_game(
            mech_factory=ExactMedianRetrainer,
            D=D,
            attacker_factory=attacker_factory,
            simulator_factory=lambda leaked: FullKnowledgeSimulator(
                leaked, attacker_factory, ExactMedianRetrainer
            ),
            leakage=leak,
            side_info=None,
            k=3,
            rng=rng_(seed),
        )

    def test_full_leak_reproduces_views(self):
        real, ideal = self.run_pair(lambda D: list(D))
        assert view_key(real.view) == view_key(ideal.view)
        assert real.corrupted == ideal.corrupted

    def test_histogram_leak_suffices_for_median(self):
        # the multiset determines every median, so an order-free leak works
        real, ideal = self.run_pair(lambda D: sorted(D))
        assert view_key(real.view) == view_key(ideal.view)

    def test_full_leak_tv_near_zero(self):
        def view_of(rec):
            return rec.view["releases"]

        def real_sampler(r):
            real, _ = self.run_pair(lambda D: list(D), seed=int(r.integers(0, 2**31)))
            return view_of(real)

        def sim_sampler(r):
            _, ideal = self.run_pair(lambda D: list(D), seed=int(r.integers(0, 2**31)))
            return view_of(ideal)

        tv = tv_estimate(real_sampler, sim_sampler, 200, rng_(15))
        assert tv <= 0.05

    def test_empty_leak_reduces_to_dynamic(self):
        D = [0.5, 0.25, 0.125]
        real, ideal = leakage_game(
            mech_factory=ExactMedianRetrainer,
            D=D,
            attacker_factory=lambda: ScriptedDynamicPlayer([({1}, {1})]),
            simulator_factory=lambda leaked: ScriptedDynamicPlayer([({1}, {1})]),
            leakage=None,
            side_info=None,
            k=1,
            rng=rng_(16),
        )
        assert real.mode == 0 and ideal.mode == 1
        assert len(ideal.releases) == 1


class TestBlindnessWitness:
    def test_exact_median_footnote_unsafe(self):
        report = simulator_blindness_witness(
            ExactMedianRetrainer,
            FOOTNOTE_25,
            FOOTNOTE_75,
            controlled_indices=[12],
            side_info=None,
            rng=rng_(17),
            n_trials=8,
            divergence_threshold=1.0,
        )
        assert report.verdict == "UNSAFE"
        assert report.inputs_identical and report.divergence == 1.0

    def test_zero_noise_dp_median_unsafe(self):
        report = simulator_blindness_witness(
            lambda: DPMedianMechanism(bits=4, epsilon=1.0, exact_mode=True),
            FOOTNOTE_25,
            FOOTNOTE_75,
            controlled_indices=[12],
            side_info=None,
            rng=rng_(18),
            n_trials=8,
            divergence_threshold=1.0,
        )
        assert report.verdict == "UNSAFE"

    def test_dp_sum_equal_sums_inconclusive(self):
        # equal-sum worlds: simulator inputs identical AND real views
        # identical, so the witness cannot separate them
        w0 = (0.25, 0.5, 0.25)
        w1 = (0.125, 0.5, 0.375)  # same total, same controlled value
        report = simulator_blindness_witness(
            lambda: DPSumMechanism(epsilon=1.0),
            w0,
            w1,
            controlled_indices=[2],
            side_info=None,
            rng=rng_(19),
            n_trials=8,
            divergence_threshold=0.5,
        )
        assert report.verdict == "SAFE_INCONCLUSIVE"
        assert report.inputs_identical and report.divergence == 0.0

    def test_xor2_unsafe_at_sampling_rate(self):
        # worlds differ in one undeleted point; the paired sampler picks the
        # differing survivor with probability 1/(n-1) per deletion
        n = 8
        w0 = tuple(range(1, n)) + (100,)
        w1 = tuple(range(1, n)) + (101,)
        report = simulator_blindness_witness(
            lambda: XorMaskUndeleted(d=7),
            w0,
            w1,
            controlled_indices=[1],
            side_info=None,
            rng=rng_(20),
            n_trials=400,
            divergence_threshold=0.5 / (n - 1),
        )
        assert report.verdict == "UNSAFE"
        assert report.divergence >= 0.5 / (n - 1)

    def test_world_pair_validation(self):
        with pytest.raises(InvalidWorldPairError):
            simulator_blindness_witness(
                ExactMedianRetrainer,
                (1.0, 2.0),
                (1.0, 3.0),
                controlled_indices=[2],
                side_info=None,
                rng=rng_(),
            )
