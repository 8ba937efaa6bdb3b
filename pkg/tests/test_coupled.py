"""Tests for the coupled decoder state machine."""

from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

import src.coupled as coupled
from src.coupled import (
    CoupledDecoder,
    CoupledState,
    classify_step,
    compute_tau,
    decode_pair,
    detect_events,
    in_event_region,
)
from src.models.mutation import (
    CaseLabel,
    CoupledDecoderError,
    InvalidPair,
    MutationPair,
    StateMachineMismatch,
    StateMerged,
    StepRecord,
    TraceDetail,
)
from src.models.prufer import PruferString, RearDecoder, all_strings
from tests.conftest import brute_distance

SHARED = {CaseLabel.SHARED_MERGE, CaseLabel.SHARED_FROM_B, CaseLabel.SHARED_FROM_C}
AT_MAX = {CaseLabel.MAX_MERGE, CaseLabel.MAX_FROM_B, CaseLabel.MAX_FROM_C}
AT_MIN = {CaseLabel.MIN_MERGE, CaseLabel.MIN_FROM_C}


def make_state(z, zstar, common, h_z=None, hstar_zstar=None, p_j=0, pstar_j=0,
               h_edge=False, hstar_edge=False):
    """Diverged state with block sizes derived from the common unplaced vertices."""
    lo, hi = sorted((z, zstar))
    a = sum(1 for v in common if v < lo)
    b = sum(1 for v in common if lo < v < hi)
    c = sum(1 for v in common if v > hi)
    return CoupledState(
        j=a + b + c + 1, a=a, b=b, c=c, z=z, zstar=zstar,
        top_common=max(common) if common else None,
        p_j=p_j, pstar_j=pstar_j, h_z=h_z, hstar_zstar=hstar_zstar,
        h_edge=h_edge, hstar_edge=hstar_edge, common=set(common),
    )


def random_pair(n, rng):
    string = PruferString.random(n, rng)
    mu = int(rng.integers(1, n - 1))
    value = int(rng.integers(1, n))
    if value >= string[mu]:
        value += 1
    return MutationPair(string, mu, value)


class TestMutationPair:
    """Test cases for mutation pair validation."""

    def test_mutant(self, worked_example):
        """Test that the mutant differs only at mu."""
        pair = MutationPair(worked_example, 5, 6)
        assert pair.mutant.entries == (4, 3, 2, 2, 6)
        assert pair.original is worked_example
        assert pair.n == 7

    def test_value_equals_original(self, worked_example):
        """Test that an identical entry is rejected."""
        with pytest.raises(InvalidPair, match="equals p_5=7"):
            MutationPair(worked_example, 5, 7)

    def test_mu_out_of_range(self, worked_example):
        """Test that mu must lie in 1..n-2."""
        with pytest.raises(InvalidPair, match="mu=6 is outside 1..5"):
            MutationPair(worked_example, 6, 1)

    def test_value_out_of_range(self, worked_example):
        """Test that the new entry must lie in 1..n."""
        with pytest.raises(InvalidPair, match="Mutated value 8"):
            MutationPair(worked_example, 2, 8)

    def test_from_strings(self, worked_example):
        """Test recovering mu and the value from two full strings."""
        pair = MutationPair.from_strings(worked_example, PruferString(7, (4, 3, 2, 2, 6)))
        assert (pair.mu, pair.value) == (5, 6)

    def test_from_strings_two_positions(self, worked_example):
        """Test that strings differing twice are rejected."""
        with pytest.raises(InvalidPair, match="differ at 2 positions"):
            MutationPair.from_strings(worked_example, PruferString(7, (1, 3, 2, 2, 6)))

    def test_from_strings_wrong_mu(self, worked_example):
        """Test that a declared mu must match the differing position."""
        with pytest.raises(InvalidPair, match="not at mu=2"):
            MutationPair.from_strings(worked_example, PruferString(7, (4, 3, 2, 2, 6)), mu=2)

    def test_from_strings_orders_differ(self, worked_example):
        """Test strings of different orders."""
        with pytest.raises(InvalidPair, match="orders 7 and 5"):
            MutationPair.from_strings(worked_example, PruferString(5, (1, 1, 1)))


class TestClassifyStep:
    """Test cases for the one-step transition rules."""

    @pytest.fixture
    def wide(self):
        """z=2 < z*=5 with A={1}, B={3}, C={6, 7}."""
        return make_state(2, 5, {1, 3, 6, 7})

    @pytest.fixture
    def no_c(self):
        """z=2 < z*=5 with A={1}, B={3, 4}, C empty."""
        return make_state(2, 5, {1, 3, 4})

    @pytest.fixture
    def narrow(self):
        """z=2 < z*=5 with A={1} and B, C empty."""
        return make_state(2, 5, {1})

    def test_common_vertices(self, wide):
        """Test that a common unplaced entry is added to both trees."""
        t = classify_step(wide, 1)
        assert (t.label, t.y, t.ystar, t.a, t.b, t.c) == (CaseLabel.IN_A, 1, 1, 0, 1, 2)
        t = classify_step(wide, 3)
        assert (t.label, t.a, t.b, t.c) == (CaseLabel.IN_B, 1, 0, 2)
        t = classify_step(wide, 6)
        assert (t.label, t.a, t.b, t.c) == (CaseLabel.IN_C, 1, 1, 1)
        assert (t.z, t.zstar, t.deltas) == (2, 5, frozenset({0}))

    def test_shared_from_c(self, wide):
        """Test that both decoders take the top of C."""
        t = classify_step(wide, 8)
        assert t.label is CaseLabel.SHARED_FROM_C
        assert (t.y, t.ystar, t.a, t.b, t.c, t.z, t.zstar) == (7, 7, 1, 1, 1, 2, 5)
        assert t.deltas == frozenset({0})

    def test_max_from_c(self, wide):
        """Test hitting the larger displaced vertex with C non-empty."""
        t = classify_step(wide, 5)
        assert t.label is CaseLabel.MAX_FROM_C
        assert (t.y, t.ystar, t.a, t.b, t.c, t.z, t.zstar) == (5, 7, 1, 2, 0, 2, 7)
        assert t.deltas == frozenset({0, 1})

    def test_min_from_c(self, wide):
        """Test hitting the smaller displaced vertex with C non-empty."""
        t = classify_step(wide, 2)
        assert t.label is CaseLabel.MIN_FROM_C
        assert (t.y, t.ystar, t.a, t.b, t.c, t.z, t.zstar) == (7, 2, 2, 1, 0, 7, 5)
        assert t.deltas == frozenset({0, 1})

    def test_shared_from_b(self, no_c):
        """Test that the top of B replaces the larger displaced vertex."""
        t = classify_step(no_c, 8)
        assert t.label is CaseLabel.SHARED_FROM_B
        assert (t.y, t.ystar, t.a, t.b, t.c, t.z, t.zstar) == (5, 4, 1, 1, 0, 2, 4)
        assert t.deltas == frozenset({1})

    def test_shared_from_b_with_existing_edge(self):
        """Test that an edge already present in T*_j gives a zero increment."""
        state = make_state(2, 5, {1, 3, 4}, hstar_edge=True)
        assert classify_step(state, 8).deltas == frozenset({0})

    def test_shared_from_b_mirrored(self):
        """Test the mirrored orientation z > z*."""
        t = classify_step(make_state(5, 2, {1, 3, 4}), 8)
        assert (t.y, t.ystar, t.z, t.zstar) == (4, 5, 4, 2)
        assert t.deltas == frozenset({1})
        t = classify_step(make_state(5, 2, {1, 3, 4}, h_edge=True), 8)
        assert t.deltas == frozenset({0})

    def test_max_from_b(self, no_c):
        """Test hitting the larger displaced vertex with C empty."""
        t = classify_step(no_c, 5)
        assert t.label is CaseLabel.MAX_FROM_B
        assert (t.y, t.ystar, t.a, t.b, t.c, t.z, t.zstar) == (5, 4, 1, 1, 0, 2, 4)

    def test_min_merge_with_c_empty(self, no_c):
        """Test that hitting the smaller vertex with C empty merges."""
        t = classify_step(no_c, 2)
        assert t.label is CaseLabel.MIN_MERGE
        assert (t.y, t.ystar, t.a, t.b, t.c, t.z, t.zstar) == (5, 2, 3, 0, 0, None, None)
        assert t.deltas == frozenset({-1, 0, 1})

    def test_merges(self, narrow):
        """Test every merging case with B and C empty."""
        assert classify_step(narrow, 8).label is CaseLabel.SHARED_MERGE
        assert classify_step(narrow, 5).label is CaseLabel.MAX_MERGE
        assert classify_step(narrow, 2).label is CaseLabel.MIN_MERGE
        t = classify_step(narrow, 8)
        assert (t.y, t.ystar, t.a) == (5, 2, 1)

    def test_step_zero_is_shared(self, narrow, wide):
        """Test that the entry-free step 0 behaves like a shared vertex."""
        assert classify_step(narrow, None).label is CaseLabel.SHARED_MERGE
        assert classify_step(wide, None).label is CaseLabel.SHARED_FROM_C

    def test_h_events_are_reported(self):
        """Test the first-neighbour coincidence flags."""
        state = make_state(2, 5, {1, 3, 4}, h_z=6, pstar_j=6, hstar_zstar=4, p_j=7)
        t = classify_step(state, 8)
        assert t.h_event
        assert not t.hstar_event

    def test_h_events_only_on_b_transitions(self):
        """Test that coincidences are not reported on steps that cannot use them."""
        state = make_state(2, 5, {1, 3, 6, 7}, h_z=6, pstar_j=6, hstar_zstar=7, p_j=7)
        for p in (1, 3, 7, 8):
            t = classify_step(state, p)
            assert t.label not in (CaseLabel.SHARED_FROM_B, CaseLabel.MAX_FROM_B)
            assert not t.h_event and not t.hstar_event

    def test_h_events_in_traces(self, rng):
        """Test that traced H flags appear on 2b and 3b steps only."""
        from_b = {CaseLabel.SHARED_FROM_B, CaseLabel.MAX_FROM_B}
        for _ in range(300):
            trace = decode_pair(random_pair(30, rng))
            for step in trace.steps:
                if step.h_event or step.hstar_event:
                    assert step.label in from_b

    def test_merged_state(self):
        """Test that a merged state cannot be classified."""
        state = replace(make_state(2, 5, {1}), z=None, zstar=None)
        with pytest.raises(StateMerged, match="no z-pair"):
            classify_step(state, 3)

    def test_hits_z_pair(self):
        """Test which labels touch the displaced vertices."""
        assert all(label.hits_z_pair for label in AT_MAX | AT_MIN)
        assert not any(label.hits_z_pair for label in SHARED)
        assert not CaseLabel.IN_A.hits_z_pair


class TestCoupledDecoder:
    """Test cases for lockstep decoding of concrete pairs."""

    def test_worked_example(self, worked_example):
        """Test the pair (4,3,2,2,7) -> (4,3,2,2,6)."""
        trace = decode_pair(MutationPair(worked_example, 5, 6))
        assert trace.delta_total == 1
        assert trace.flags.E
        assert not trace.flags.E1 and not trace.flags.E2
        assert trace.tau0 == 5
        assert len(trace.steps) == 6
        assert [s.j for s in trace.steps] == [5, 4, 3, 2, 1, 0]
        assert trace.step(5).label is CaseLabel.MERGED
        # Both sides add 6-7 at mu; p*_mu first shows in the edge added at mu-1
        assert trace.step(5).delta == 0
        assert trace.step(4).delta == 1
        assert all(trace.step(j).delta == 0 for j in range(4))

    def test_split_then_merge(self, worked_example):
        """Test a split at mu = 1 that merges at step 0."""
        trace = decode_pair(MutationPair(worked_example, 1, 1), TraceDetail.FULL, verify=True)
        assert not trace.flags.E
        at_mu = trace.step(1)
        assert at_mu.label is CaseLabel.SPLIT
        assert (at_mu.z, at_mu.zstar) == (4, 1)
        assert (at_mu.a, at_mu.b, at_mu.c) == (0, 0, 0)
        last = trace.step(0)
        assert last.label is CaseLabel.SHARED_MERGE
        assert (last.y, last.ystar) == (1, 4)
        assert last.edge == last.edgestar == (1, 4)
        assert [s.delta for s in trace.steps] == [0, 0, 0, 0, 1, 0]
        assert trace.delta_total == 1

    def test_pre_mu_steps(self, worked_example):
        """Test that steps above mu add identical edges."""
        trace = decode_pair(MutationPair(worked_example, 2, 5), TraceDetail.FULL)
        for j in (5, 4, 3):
            record = trace.step(j)
            assert record.label is CaseLabel.PRE_MU
            assert record.delta == 0
            assert record.y == record.ystar
            assert (record.a, record.b, record.c) == (j, 0, 0)

    def test_advance_after_finish(self, worked_example):
        """Test that a finished decoder cannot advance."""
        decoder = CoupledDecoder(MutationPair(worked_example, 5, 6))
        decoder.run()
        with pytest.raises(CoupledDecoderError, match="already finished"):
            decoder.advance()

    def test_wrong_prediction_is_detected(self, worked_example, monkeypatch):
        """Test that a prediction disagreeing with the decoders is reported."""
        original = coupled.classify_step
        monkeypatch.setattr(coupled, "classify_step",
                            lambda state, p: replace(original(state, p), y=0))
        with pytest.raises(StateMachineMismatch, match="predicted \\(y, y\\*\\)"):
            decode_pair(MutationPair(worked_example, 1, 1))

    def test_in_event_region(self, worked_example):
        """Test V_{mu+1} plus the largest unplaced vertex."""
        decoder = RearDecoder(worked_example).run_to(5)
        assert [v for v in range(1, 8) if in_event_region(decoder, v)] == [6, 7]
        decoder = RearDecoder(worked_example).run_to(3)
        assert [v for v in range(1, 8) if in_event_region(decoder, v)] == [2, 5, 6, 7]

    def test_step_record_rejects_bad_increment(self):
        """Test that increments outside {-1, 0, 1} are rejected."""
        with pytest.raises(ValueError, match="increment 2"):
            StepRecord(3, 2, 0, 0, 0, CaseLabel.SPLIT)

    def test_record_export_keys(self, worked_example):
        """Test the exported fields of a step."""
        trace = decode_pair(MutationPair(worked_example, 1, 1), "full")
        row = trace.step(0).to_dict()
        assert list(row) == ["j", "y", "ystar", "delta_j", "a", "b", "c", "z", "zstar",
                             "case", "H", "Hstar"]
        assert row["case"] == "2a"

    def test_header(self, worked_example):
        """Test the trace header."""
        header = decode_pair(MutationPair(worked_example, 5, 6)).header()
        assert header["string"] == "4,3,2,2,7"
        assert header["value"] == 6
        assert header["delta_total"] == 1
        assert header["E"] is True
        assert header["detail"] == "summary"


class TestInvariants:
    """Property tests of the coupled decoder on random and exhaustive pairs."""

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_exhaustive_small_orders(self, n):
        """Test every pair of small order against the brute-force distance."""
        for string in all_strings(n):
            for mu in range(1, n - 1):
                for value in range(1, n + 1):
                    if value == string[mu]:
                        continue
                    pair = MutationPair(string, mu, value)
                    trace = decode_pair(pair, verify=True)
                    assert trace.delta_total == brute_distance(string, pair.mutant)
                    if trace.flags.E:
                        assert trace.delta_total == 1

    @pytest.mark.parametrize("n", [10, 25, 60])
    def test_telescoping_sum(self, n, rng):
        """Test that the increments add up to the tree distance."""
        for _ in range(100):
            pair = random_pair(n, rng)
            trace = decode_pair(pair, verify=True)
            assert trace.delta_total == sum(s.delta for s in trace.steps)
            assert trace.delta_total == brute_distance(pair.string, pair.mutant)
            assert 1 <= trace.delta_total <= n - 1

    def test_increments(self, rng):
        """Test the sign pattern of the increments."""
        for _ in range(200):
            pair = random_pair(30, rng)
            trace = decode_pair(pair)
            deltas = [s.delta for s in trace.steps]
            assert deltas.count(-1) <= 1
            assert all(trace.step(j).delta == 0 for j in range(pair.mu + 1, pair.n - 1))
            if not trace.flags.E:
                assert trace.step(pair.mu).delta == 1
                assert trace.step(pair.mu - 1).delta >= 0
            else:
                assert trace.delta_total == 1

    def test_block_sizes(self, rng):
        """Test a + b + c = j - 1 while diverged and a = j once merged."""
        for _ in range(50):
            pair = random_pair(20, rng)
            trace = decode_pair(pair, TraceDetail.FULL)
            for record in trace.steps:
                if record.z is not None:
                    assert record.a + record.b + record.c == record.j - 1
                    assert tuple(len(block) for block in record.blocks) == (record.a, record.b,
                                                                            record.c)
                else:
                    assert (record.a, record.b, record.c) == (record.j, 0, 0)

    def test_c_is_monotone(self, rng):
        """Test that c never grows as j decreases and vanishes by step 1."""
        for _ in range(100):
            pair = random_pair(40, rng)
            trace = decode_pair(pair)
            for j in range(1, pair.mu + 1):
                assert trace.c_at(j - 1) <= trace.c_at(j)
            assert trace.c_at(1) == 0
            assert trace.c_at(0) == 0

    def test_verify_agrees_with_fast_path(self, rng):
        """Test that a direct block count reproduces the state machine."""
        for _ in range(50):
            pair = random_pair(30, rng)
            fast = decode_pair(pair)
            checked = decode_pair(pair, verify=True)
            assert [(s.a, s.b, s.c, s.label) for s in fast.steps] == \
                [(s.a, s.b, s.c, s.label) for s in checked.steps]

    def test_partition_of_entries(self, rng):
        """Test that the entries 1..n split into the cases by block size."""
        checked = 0
        for _ in range(30):
            pair = random_pair(12, rng)
            decoder = CoupledDecoder(pair)
            while not decoder.finished:
                if decoder.j <= pair.mu and decoder.z is not None:
                    state = decoder.state()
                    labels = Counter(classify_step(state, p).label for p in range(1, pair.n + 1))
                    assert labels[CaseLabel.IN_A] == state.a
                    assert labels[CaseLabel.IN_B] == state.b
                    assert labels[CaseLabel.IN_C] == state.c
                    assert sum(labels[label] for label in AT_MAX) == 1
                    assert sum(labels[label] for label in AT_MIN) == 1
                    assert sum(labels[label] for label in SHARED) == \
                        pair.n - state.a - state.b - state.c - 2
                    checked += 1
                decoder.advance()
        assert checked > 0

    @pytest.mark.slow
    @pytest.mark.parametrize("n", [6, 7])
    def test_exhaustive_larger_orders(self, n):
        """Test every pair of order 6 and 7 with per-step verification."""
        for string in all_strings(n):
            for mu in range(1, n - 1):
                for value in range(1, n + 1):
                    if value != string[mu]:
                        pair = MutationPair(string, mu, value)
                        trace = decode_pair(pair, verify=True)
                        assert trace.delta_total == brute_distance(string, pair.mutant)

    @pytest.mark.slow
    def test_random_pairs_full_scale(self):
        """Test ten thousand verified pairs of order 200."""
        rng = np.random.default_rng(11)
        for _ in range(10_000):
            pair = random_pair(200, rng)
            trace = decode_pair(pair, verify=True)
            assert trace.delta_total == brute_distance(pair.string, pair.mutant)


class TestEvents:
    """Test cases for tau and the per-pair events."""

    def test_tau_is_monotone(self, rng):
        """Test tau(0) <= tau(z) <= mu for growing z."""
        for _ in range(50):
            pair = random_pair(50, rng)
            trace = decode_pair(pair)
            taus = [compute_tau(trace, z) for z in (0, 1, 3, 10, 100)]
            assert taus == sorted(taus)
            assert taus[-1] == pair.mu
            assert trace.tau0 == taus[0]
            assert trace.b_at_tau0 == trace.b_at(trace.tau0)

    def test_event_partition(self, rng):
        """Test that E, E1, E2 partition the pairs for several thresholds."""
        for _ in range(50):
            pair = random_pair(40, rng)
            trace = decode_pair(pair)
            for delta_n in (0.0, 1.0, 3.4, 1e9):
                flags = detect_events(trace, delta_n=delta_n)
                assert flags.E + flags.E1 + flags.E2 == 1
                assert flags.E == trace.flags.E

    def test_huge_threshold(self, rng):
        """Test that E1 is the complement of E when delta_n exceeds every b."""
        for _ in range(30):
            trace = decode_pair(random_pair(30, rng), delta_n=1e9, beta_n=1e9)
            assert trace.flags.E1 == (not trace.flags.E)
            assert not trace.flags.E2
            assert trace.flags.T1 and not trace.flags.T2

    def test_positive_steps(self, rng):
        """Test the count of unit increments below mu."""
        for _ in range(30):
            pair = random_pair(30, rng)
            trace = decode_pair(pair)
            expected = sum(1 for j in range(pair.mu) if trace.step(j).delta == 1)
            assert trace.extras["positive_steps"] == expected

    def test_z_events_without_hits(self, worked_example):
        """Test that a pair merged at mu never hits the z-pair."""
        trace = decode_pair(MutationPair(worked_example, 5, 6))
        assert trace.flags.Z0 and trace.flags.Zdelta
