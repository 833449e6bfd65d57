import numpy as np
import pytest

from innosim.bitstring import BitString
from innosim.market import MatchThreshold, ThresholdKind
from innosim.rng import Rng
from innosim.selforg import (SelfOrgParams, SelfOrgState, assign_extractors,
                             fitness_step, n_innovation_step,
                             p_innovation_step, replace_negative, run_selforg)


def bs(text):
    return BitString.from_text(text)


def make_state(p_strings, n_strings, params=None, seed=0):
    """State with prescribed P/N strings (replacing the random draws)."""
    k = len(p_strings[0])
    params = params or SelfOrgParams(m_agents=len(p_strings), k=k, horizon=3)
    st = SelfOrgState(params, Rng(seed))
    st.P = np.array([bs(s).bits for s in p_strings], dtype=np.uint8)
    st.N = np.array([bs(s).bits for s in n_strings], dtype=np.uint8)
    st._refresh_match()
    return st


class TestAssignExtractors:
    def test_two_agents_extract_from_each_other(self):
        st = make_state(["1111", "0000"], ["0000", "1111"])
        assign_extractors(st)
        assert st.extractor.tolist() == [1, 0]

    def test_unique_argmax_deterministic(self):
        # agent 0's N is 1111: P_1=1110 (3) beats P_2=0000 (0); and so on
        st = make_state(["0011", "1110", "0000"],
                        ["1111", "0001", "1100"])
        assign_extractors(st)
        # N_0=1111: match P_1=3, P_2=0 -> 1
        # N_1=0001: match P_0=3, P_2=3 -> tie (ignore here)
        # N_2=1100: match P_0=1, P_1=3 -> 1
        assert st.extractor[0] == 1
        assert st.extractor[2] == 1

    def test_self_excluded(self):
        # agent 0's own P matches its N perfectly but may not be chosen
        st = make_state(["1111", "0000"], ["1111", "0000"])
        assign_extractors(st)
        assert st.extractor[0] == 1 and st.extractor[1] == 0

    def test_tie_split_frequency(self):
        trials = 10_000
        wins = {1: 0, 2: 0}
        for seed in range(trials):
            st = make_state(["0000", "1100", "0011"],
                            ["1111", "0000", "0000"], seed=seed)
            assign_extractors(st)
            wins[int(st.extractor[0])] += 1
        assert abs(wins[1] / trials - 0.5) <= 0.02

    def test_qstar_recorded(self):
        st = make_state(["1110", "1111"], ["1111", "0000"])
        assign_extractors(st)
        assert st.qstar[0] == 4  # P_1 = 1111 vs N_0 = 1111
        assert st.qstar[1] == 1  # P_0 = 1110 vs N_1 = 0000


class TestFitnessStep:
    def test_identical_strings_symmetric(self):
        st = make_state(["101"] * 4, ["101"] * 4)
        assign_extractors(st)
        before = st.F.copy()
        fitness_step(st)
        # every q* = k: each agent pays exactly 1; income sums to m in total
        assert (st.F - before).sum() == pytest.approx(0.0, abs=1e-9)
        assert st.qstar.tolist() == [3, 3, 3, 3]

    def test_never_selected_agent_loses(self):
        # agent 2 has a P matching nobody's N, so it only pays
        st = make_state(["1111", "1111", "0000"],
                        ["1111", "1111", "1111"])
        assign_extractors(st)
        before = st.F.copy()
        fitness_step(st)
        assert st.F[2] - before[2] == pytest.approx(-1.0)  # pays 4/4, earns 0

    def test_exact_zero_sum_random_instances(self):
        for seed in range(30):
            params = SelfOrgParams(m_agents=9, k=6, horizon=1)
            st = SelfOrgState(params, Rng(seed))
            assign_extractors(st)
            total_before = st.F.sum()
            fitness_step(st)
            assert st.F.sum() == pytest.approx(total_before, abs=1e-9)


class TestReplaceNegative:
    def _state(self):
        return make_state(["1111", "0000"], ["0000", "1111"])

    def test_negative_replaced(self):
        st = self._state()
        st.F[0] = -0.01
        old_id = st.ids[0]
        replace_negative(st)
        assert st.F[0] == st.params.f0
        assert st.ids[0] != old_id
        assert st.replacements == 1

    def test_zero_survives(self):
        st = self._state()
        st.F[0] = 0.0
        replace_negative(st)
        assert st.F[0] == 0.0 and st.replacements == 0

    def test_replacement_strings_fresh_draws(self):
        # the replaced agent's strings come from the run rng, not its past
        st = self._state()
        st.F[1] = -1.0
        rng_copy = Rng(0)
        rng_copy.bits(16)  # the four initial strings drawn at construction
        expected_p = list(rng_copy.bits(4))
        expected_n = list(rng_copy.bits(4))
        replace_negative(st)
        assert st.P[1].tolist() == expected_p
        assert st.N[1].tolist() == expected_n

    def test_population_size_constant(self):
        st = self._state()
        st.F[:] = -1.0
        replace_negative(st)
        assert len(st.F) == 2 and len(st.P) == 2


def zero_bar(**kw):
    return SelfOrgParams(threshold=MatchThreshold(ThresholdKind.ABSOLUTE_COUNT, 0),
                         **kw)


class TestPInnovation:
    def test_complement_match_rises_by_one(self):
        params = zero_bar(m_agents=2, k=4, horizon=1, p_innovation=True)
        st = make_state(["1111", "0000"], ["0000", "0000"], params)
        before = int(st.match[0, 1])
        p_innovation_step(st)
        assert int(st.match[0, 1]) == before + 1

    def test_empty_candidate_set_unchanged(self):
        params = SelfOrgParams(m_agents=2, k=4, horizon=1, p_innovation=True,
                               threshold=MatchThreshold(ThresholdKind.ABSOLUTE_COUNT, 4))
        st = make_state(["1111", "1100"], ["0000", "0011"], params)
        before = st.P.copy()
        p_innovation_step(st)
        assert (st.P == before).all()

    def test_worst_scoring_position(self):
        # P=1111 vs above-threshold Ns {0111, 0110}: position 0 agrees least
        params = zero_bar(m_agents=3, k=4, horizon=1, p_innovation=True)
        st = make_state(["1111", "0000", "0000"],
                        ["1111", "0111", "0110"], params)
        p_innovation_step(st)
        assert st.P[0].tolist() == [0, 1, 1, 1]

    def test_simultaneous_against_snapshot(self):
        # both agents see the other's pre-step N even though both flip
        params = zero_bar(m_agents=2, k=2, horizon=1, p_innovation=True)
        st = make_state(["11", "00"], ["00", "11"], params)
        p_innovation_step(st)
        # each P moves one bit toward the other's pre-step N
        assert int(st.P[0].sum()) == 1 and int(st.P[1].sum()) == 1

    def test_at_most_one_bit_per_agent(self):
        params = zero_bar(m_agents=4, k=8, horizon=1, p_innovation=True)
        st = SelfOrgState(params, Rng(5))
        before = st.P.copy()
        p_innovation_step(st)
        assert ((st.P != before).sum(axis=1) <= 1).all()


class TestNInnovation:
    def test_equal_string_match_drops(self):
        params = zero_bar(m_agents=2, k=4, horizon=1, n_innovation=True)
        st = make_state(["0000", "1111"], ["0000", "1111"], params)
        # N_0 = 0000; only other P is 1111 -> wait, candidates for agent 0's N
        # are other agents' Ps: P_1 = 1111, match(N_0, P_1) = 0
        # use identical instead:
        st = make_state(["0000", "1111"], ["1111", "0000"], params)
        before0 = int(st.match[1, 0])  # match(P_1, N_0) = 4
        n_innovation_step(st)
        assert int(st.match[1, 0]) == before0 - 1

    def test_empty_candidate_set_unchanged(self):
        params = SelfOrgParams(m_agents=2, k=4, horizon=1, n_innovation=True,
                               threshold=MatchThreshold(ThresholdKind.ABSOLUTE_COUNT, 4))
        st = make_state(["1111", "1100"], ["0011", "0000"], params)
        before = st.N.copy()
        n_innovation_step(st)
        assert (st.N == before).all()

    def test_best_agreeing_position(self):
        # N=00 vs above-threshold Ps {01, 00}: pos 0 agrees twice, pos 1 once
        params = zero_bar(m_agents=3, k=2, horizon=1, n_innovation=True)
        st = make_state(["00", "01", "00"],
                        ["00", "11", "11"], params)
        n_innovation_step(st)
        assert st.N[0].tolist() == [1, 0]

    def test_strings_only_change_via_replacement_when_disabled(self):
        params = SelfOrgParams(m_agents=6, k=5, horizon=1)
        st = SelfOrgState(params, Rng(2))
        p0, n0 = st.P.copy(), st.N.copy()
        for _ in range(10):
            assign_extractors(st)
            fitness_step(st)
            # skip replace_negative: strings must stay frozen
        assert (st.P == p0).all() and (st.N == n0).all()


class TestRunSelfOrg:
    def test_seed_replay_identical(self):
        params = SelfOrgParams(m_agents=12, k=8, horizon=40,
                               p_innovation=True, n_innovation=True)
        a = run_selforg(params, 99)
        b = run_selforg(params, 99)
        assert a.to_json_dict() == b.to_json_dict()

    def test_total_fitness_constant_without_replacements(self):
        params = SelfOrgParams(m_agents=10, k=8, f0=1000.0, horizon=50)
        rec = run_selforg(params, 4)
        # f0 is large enough that nobody can go negative in 50 steps
        assert rec.replacements == 0
        assert sum(rec.fitness_tT) == pytest.approx(sum(rec.fitness_t0), abs=1e-6)

    def test_initial_diversity_near_half_k(self):
        params = SelfOrgParams(m_agents=100, k=16, horizon=1)
        rec = run_selforg(params, 8)
        assert abs(rec.p_diversity_mean_t0 - 8.0) < 0.6
        assert abs(rec.n_diversity_mean_t0 - 8.0) < 0.6

    def test_histograms_cover_population_and_pairs(self):
        m = 20
        params = SelfOrgParams(m_agents=m, k=8, horizon=10)
        rec = run_selforg(params, 3)
        assert rec.fitness_hist_t0.total == m
        assert rec.fitness_hist_tT.total == m
        pairs = m * (m - 1) // 2
        assert rec.p_distances_t0.total == pairs
        assert rec.n_distances_tT.total == pairs

    def test_shared_fitness_histogram_range(self):
        params = SelfOrgParams(m_agents=15, k=8, horizon=30)
        rec = run_selforg(params, 6)
        assert rec.fitness_hist_t0.bin_edges == rec.fitness_hist_tT.bin_edges

    def test_validation(self):
        with pytest.raises(ValueError):
            SelfOrgParams(m_agents=1).validate()
        with pytest.raises(ValueError):
            SelfOrgParams(horizon=0).validate()
        with pytest.raises(ValueError):
            SelfOrgParams(f0=0.0).validate()


class TestStepInvariants:
    def test_zero_sum_every_step_full_cycle(self):
        params = SelfOrgParams(m_agents=8, k=6, horizon=1, p_innovation=True)
        st = SelfOrgState(params, Rng(17))
        for _ in range(25):
            assign_extractors(st)
            total = st.F.sum()
            fitness_step(st)
            assert abs(st.F.sum() - total) < 1e-9
            replace_negative(st)
            p_innovation_step(st)

    def test_extractor_total_and_not_self(self):
        for seed in range(10):
            params = SelfOrgParams(m_agents=7, k=5, horizon=1)
            st = SelfOrgState(params, Rng(seed))
            assign_extractors(st)
            assert (st.extractor >= 0).all()
            assert all(st.extractor[j] != j for j in range(7))
