"""Decision predicates and drivers: worked values, invariance, consistency."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from seqest import (
    ArrayStream,
    DomainError,
    ModelStream,
    SampleState,
    SeqSchedule,
    StageSchedule,
    StoppingRule,
    UnsupportedOperationError,
    absolute_shape,
    custom_shape,
    decide_cdf,
    decide_df,
    decide_ld,
    decide_nal,
    opaque_uniform_mixture,
    rule_from_config,
    run_multistage,
    run_sequential,
    trial_seed,
)


def z975() -> float:
    lo, hi = 0.0, 8.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(-mid / math.sqrt(2.0)) < 0.975:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


Z = z975()
DELTA_LD = 2.0 * math.exp(-Z * Z / 2.0)    # limiting delta_n for the ld family
DELTA_NAL = math.exp(-Z * Z)               # limiting delta_n for nal/df
ABS = absolute_shape()


def bern_state(n: int, ones: int) -> SampleState:
    # 0/1 data: sum of squares equals the sum
    return SampleState(n, float(ones), float(ones))


class TestRuleKind:
    def test_rho_ranges(self):
        with pytest.raises(DomainError):
            StoppingRule("nal", 1.5)
        with pytest.raises(DomainError):
            StoppingRule("df", -0.1)
        with pytest.raises(DomainError):
            StoppingRule("bogus")

    def test_defaults(self):
        assert rule_from_config("df").rho == 0.5
        assert rule_from_config("nal").rho == 0.0
        assert rule_from_config("cdf").rho == 0.0


class TestDecideCdf:
    def test_worked_example_false(self, bernoulli):
        # F(0.5; theta=0.7) = Pr{Bin(10, 0.7) <= 5} = 0.150268 > 0.025
        state = bern_state(10, 5)
        oracle = float(stats.binom.cdf(5, 10, 0.7))
        assert oracle == pytest.approx(0.150268, abs=1e-6)
        assert decide_cdf(bernoulli, state, ABS, 0.2, 0.05) is False

    def test_margin_outside_domain_side_satisfied(self, bernoulli):
        # Y_n = 0.95, eps = 0.2: upper endpoint 1.15 is outside (0,1), so
        # only the lower side matters; it holds easily at n = 100
        state = bern_state(100, 95)
        assert decide_cdf(bernoulli, state, ABS, 0.2, 0.05) is True
        lower_tail = float(stats.binom.sf(94, 100, 0.75))
        assert lower_tail <= 0.025

    def test_large_n_both_tails_small(self, bernoulli):
        state = bern_state(100, 50)
        f = float(stats.binom.cdf(50, 100, 0.7))
        g = float(stats.binom.sf(49, 100, 0.3))
        assert max(f, g) < 1e-4  # deep in both tails at n = 100
        assert decide_cdf(bernoulli, state, ABS, 0.2, 0.05) is True
        assert decide_cdf(bernoulli, state, ABS, 0.2, 2 * max(f, g)) is True
        assert decide_cdf(bernoulli, state, ABS, 0.2, 0.5 * max(f, g)) is False

    def test_opaque_unsupported(self):
        op = opaque_uniform_mixture()
        with pytest.raises(UnsupportedOperationError):
            decide_cdf(op, bern_state(10, 5), ABS, 0.1, 0.05)


class TestDecideLd:
    def test_threshold_crossing_at_95(self, bernoulli):
        # M(0.5, 0.6) = -KL(0.5||0.6); decision flips once
        # n KL >= ln(2/delta_n) = Z^2/2, i.e. n >= 94.1
        kl = 0.5 * math.log(0.5 / 0.6) + 0.5 * math.log(0.5 / 0.4)
        assert -kl == pytest.approx(-0.020411, abs=1e-6)
        assert Z * Z / 2.0 / -kl == pytest.approx(-94.103, abs=1e-2)
        assert decide_ld(bernoulli, bern_state(94, 47), ABS, 0.1,
                         DELTA_LD) is False
        assert decide_ld(bernoulli, bern_state(95, 47.5), ABS, 0.1,
                         DELTA_LD) is True

    def test_symmetric_sides_at_half(self, bernoulli):
        from seqest import rate

        assert rate(bernoulli, 0.5, 0.6) == pytest.approx(
            rate(bernoulli, 0.5, 0.4), rel=1e-12
        )

    def test_margin_outside_domain_side_satisfied(self, bernoulli):
        # upper endpoint 1.15 gives rate -inf; lower side decides alone
        state = bern_state(200, 190)
        assert decide_ld(bernoulli, state, ABS, 0.2, DELTA_LD) is True

    def test_degenerate_margin_never_fires(self, bernoulli):
        flat = custom_shape(lambda z, e: z - e, lambda z, e: z,
                            lambda mu: 1.0)
        state = bern_state(10_000, 5_000)
        assert decide_ld(bernoulli, state, flat, 0.1, DELTA_LD) is False


class TestDecideNal:
    def test_worked_examples(self, bernoulli):
        ln_inv = -math.log(DELTA_NAL)
        assert ln_inv == pytest.approx(Z * Z, rel=1e-12)
        # V(0.5) = 0.25 against n eps^2 / Z^2
        assert 100 * 0.01 / ln_inv == pytest.approx(0.260318, abs=1e-6)
        assert decide_nal(bernoulli, bern_state(100, 50), ABS, 0.1,
                          DELTA_NAL, 0.0) is True
        assert 95 * 0.01 / ln_inv == pytest.approx(0.24730, abs=1e-5)
        assert decide_nal(bernoulli, bern_state(95, 47.5), ABS, 0.1,
                          DELTA_NAL, 0.0) is False

    def test_rho_one_uses_margin_variance(self, bernoulli):
        # V(0.6) = V(0.4) = 0.24 <= 0.260318
        assert decide_nal(bernoulli, bern_state(100, 50), ABS, 0.1,
                          DELTA_NAL, 1.0) is True

    def test_interpolated_point_outside_domain_blocks(self, bernoulli):
        # Y_n = 0 with rho = 0: variance undefined at the boundary
        assert decide_nal(bernoulli, bern_state(50, 0), ABS, 0.05,
                          DELTA_NAL, 0.0) is False


class TestDecideDf:
    def test_worked_examples(self):
        state = SampleState(100, 50.0, 50.0)  # mean 0.5, V_n = 0.25
        assert state.var == pytest.approx(0.25)
        assert decide_df(state, ABS, 0.1, DELTA_NAL, 0.5) is True
        # V_n = 0.26 pushes the left side to 0.265 > 0.260318
        state26 = SampleState(100, 50.0, 51.0)
        assert state26.var == pytest.approx(0.26)
        assert decide_df(state26, ABS, 0.1, DELTA_NAL, 0.5) is False

    def test_degenerate_data_threshold(self):
        # all equal observations: V_n = 0; rho/n <= n eps^2 / Z^2 first
        # holds at n = 14 (n^2 >= 0.5 Z^2 / 0.01 = 192.07)
        for n, expect in ((13, False), (14, True)):
            state = SampleState(n, n * 1.0, n * 1.0)
            assert state.var == 0.0
            assert decide_df(state, ABS, 0.1, DELTA_NAL, 0.5) is expect

    @given(st.lists(st.floats(-5, 5), min_size=5, max_size=40),
           st.randoms())
    def test_permutation_invariance(self, xs, rnd):
        state = SampleState.from_data(xs)
        perm = list(xs)
        rnd.shuffle(perm)
        state_p = SampleState.from_data(perm)
        for eps in (0.1, 0.5):
            a = decide_df(state, ABS, eps, DELTA_NAL, 0.5)
            b = decide_df(state_p, ABS, eps, DELTA_NAL, 0.5)
            assert a == b


class TestMonotoneInEps:
    @pytest.mark.parametrize("ones", [35, 50, 61])
    @pytest.mark.parametrize("n", [40, 120, 400])
    def test_all_rules_keep_firing_as_eps_widens(self, bernoulli, n, ones):
        if ones >= n:
            pytest.skip("mean out of range")
        state = bern_state(n, ones)
        rules = [
            lambda e: decide_cdf(bernoulli, state, ABS, e, 0.05),
            lambda e: decide_ld(bernoulli, state, ABS, e, DELTA_LD),
            lambda e: decide_nal(bernoulli, state, ABS, e, DELTA_NAL, 0.0),
            lambda e: decide_df(state, ABS, e, DELTA_NAL, 0.5),
        ]
        for fire in rules:
            for eps in (0.02, 0.05, 0.1, 0.2):
                if fire(eps):
                    assert fire(2.0 * eps) is True


class TestRunSequential:
    def test_stopping_time_distribution(self, bernoulli):
        # N = 0.25 Z^2 / 0.01 = 96.04 for Bernoulli(1/2), eps = 0.1
        sched = SeqSchedule("df", 0.05)
        rule = StoppingRule("df", 0.5)
        ns = []
        for i in range(1000):
            stream = ModelStream(bernoulli, 0.5, trial_seed(2024, i))
            out = run_sequential(stream, rule, bernoulli, ABS, 0.1, sched,
                                 cap=7000, mu_true=0.5)
            assert not out.truncated
            ns.append(out.n)
        ns = np.array(ns)
        n_target = 0.25 * Z * Z / 0.01
        assert abs(np.median(ns) - n_target) <= 0.25 * n_target
        assert np.mean((ns >= 60) & (ns <= 160)) >= 0.8

    def test_truncation_flag_at_cap(self, bernoulli):
        never = custom_shape(lambda z, e: z, lambda z, e: z, lambda mu: 1.0)
        sched = SeqSchedule("df", 0.05)
        stream = ModelStream(bernoulli, 0.5, 7)
        m = sched.m_eps(0.1)
        out = run_sequential(stream, StoppingRule("df", 0.5), bernoulli,
                             never, 0.1, sched, cap=m, mu_true=0.5)
        assert out.truncated
        assert out.n == m

    def test_determinism(self, bernoulli):
        sched = SeqSchedule("ld", 0.05)
        rule = StoppingRule("ld")
        outs = []
        for _ in range(2):
            stream = ModelStream(bernoulli, 0.3, trial_seed(5, 9))
            outs.append(run_sequential(stream, rule, bernoulli, ABS, 0.1,
                                       sched, cap=10_000, mu_true=0.3))
        assert outs[0] == outs[1]

    def test_stopped_interval_brackets_estimate(self, bernoulli):
        sched = SeqSchedule("cdf", 0.05)
        for i in range(20):
            stream = ModelStream(bernoulli, 0.4, trial_seed(11, i))
            out = run_sequential(stream, StoppingRule("cdf"), bernoulli, ABS,
                                 0.1, sched, cap=10_000, mu_true=0.4)
            assert out.report_lower < out.estimate < out.report_upper
            assert out.stop_lower < out.estimate < out.stop_upper
            assert out.n >= sched.m_eps(0.1)

    def test_df_rho_range_enforced(self, bernoulli):
        sched = SeqSchedule("df", 0.05)
        stream = ModelStream(bernoulli, 0.5, 1)
        with pytest.raises(DomainError):
            run_sequential(stream, StoppingRule("df", 0.0), bernoulli, ABS,
                           0.1, sched, cap=100)

    def test_cap_below_start_rejected(self, bernoulli):
        sched = SeqSchedule("df", 0.05)
        stream = ModelStream(bernoulli, 0.5, 1)
        with pytest.raises(DomainError):
            run_sequential(stream, StoppingRule("df", 0.5), bernoulli, ABS,
                           0.1, sched, cap=5)

    def test_stride_skips_intermediate_decisions(self, bernoulli):
        # a strided run can only stop at n = m + k*stride (or the cap), and
        # never earlier than the stride-1 run on the same data
        sched = SeqSchedule("df", 0.05)
        rule = StoppingRule("df", 0.5)
        m = sched.m_eps(0.1)
        for i in range(10):
            data = ModelStream(bernoulli, 0.5, trial_seed(55, i)).take(5000)
            base = run_sequential(ArrayStream(data), rule, bernoulli, ABS,
                                  0.1, sched, cap=4000, mu_true=0.5)
            strided = run_sequential(ArrayStream(data), rule, bernoulli, ABS,
                                     0.1, sched, cap=4000, mu_true=0.5,
                                     stride=7)
            assert strided.n >= base.n
            assert (strided.n - m) % 7 == 0 or strided.n == 4000
        with pytest.raises(DomainError):
            run_sequential(ArrayStream([1.0] * 50), rule, bernoulli, ABS,
                           0.1, sched, cap=40, stride=0)


class TestRunMultistage:
    def test_stops_first_stage_with_high_probability(self, bernoulli):
        # n_1 = 300 >= N = 96: Lambda_1 = 4, stage 1 almost always fires
        sched = StageSchedule("df", 0.05)
        rule = StoppingRule("df", 0.5)
        stops = []
        for i in range(1000):
            stream = ModelStream(bernoulli, 0.5, trial_seed(31, i))
            out = run_multistage(stream, rule, bernoulli, ABS, 0.1, sched,
                                 l_cap=12, mu_true=0.5)
            stops.append(out.stop_index)
        assert np.mean([s == 1 for s in stops]) >= 0.95

    def test_trace_and_cumulative_sampling(self, bernoulli):
        sched = StageSchedule("df", 0.05)
        stream = ModelStream(bernoulli, 0.5, trial_seed(77, 3))
        out = run_multistage(stream, StoppingRule("df", 0.5), bernoulli, ABS,
                             0.1, sched, l_cap=12, mu_true=0.5, profile_to=3)
        assert out.stage_ns == [300, 600, 1199]
        assert stream.count == 1199  # stages extend one cumulative sample
        assert len(out.decisions) == 3
        assert out.n == 300 * (2 ** (out.stop_index - 1)) or out.stop_index == 3

    def test_determinism_of_trace(self, bernoulli):
        sched = StageSchedule("df", 0.05)
        runs = []
        for _ in range(2):
            stream = ModelStream(bernoulli, 0.5, trial_seed(123, 4))
            runs.append(run_multistage(stream, StoppingRule("df", 0.5),
                                       bernoulli, ABS, 0.1, sched, l_cap=10,
                                       mu_true=0.5, profile_to=4))
        assert runs[0] == runs[1]

    def test_l_cap_exhaustion_flagged(self, bernoulli):
        never = custom_shape(lambda z, e: z, lambda z, e: z, lambda mu: 1.0)
        sched = StageSchedule("df", 0.05)
        stream = ModelStream(bernoulli, 0.5, 5)
        out = run_multistage(stream, StoppingRule("df", 0.5), bernoulli,
                             never, 0.1, sched, l_cap=3, mu_true=0.5)
        assert out.truncated
        assert out.stop_index is None
        assert out.decisions == [0, 0, 0]

    def test_collapsed_schedule_reproduces_sequential_df(self, bernoulli):
        # one stage per n: the multistage df driver must stop at the same
        # sample size as the sequential driver on identical data
        eps = 0.15
        seq_sched = SeqSchedule("df", 0.1)
        m = seq_sched.m_eps(eps)
        collapsed = StageSchedule(
            "df", 0.1,
            n_fn=lambda ell, e: m + ell - 1,
            delta_fn=lambda ell: seq_sched.delta_n(m + ell - 1),
        )
        rule = StoppingRule("df", 0.5)
        for i in range(20):
            data = ModelStream(bernoulli, 0.5, trial_seed(900, i)).take(4000)
            seq_out = run_sequential(ArrayStream(data), rule, bernoulli, ABS,
                                     eps, seq_sched, cap=3500, mu_true=0.5)
            ms_out = run_multistage(ArrayStream(data), rule, bernoulli, ABS,
                                    eps, collapsed, l_cap=3000, mu_true=0.5)
            assert not seq_out.truncated
            assert ms_out.n == seq_out.n
            assert ms_out.estimate == pytest.approx(seq_out.estimate,
                                                    rel=1e-12)

    def test_l_cap_below_tau_rejected(self, bernoulli):
        sched = StageSchedule("df", 0.05)
        with pytest.raises(DomainError):
            run_multistage(ArrayStream([1.0]), StoppingRule("df", 0.5),
                           bernoulli, ABS, 0.1, sched, l_cap=0)
