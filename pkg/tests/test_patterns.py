import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import numpy as np

from windpdm.errors import NoPatternsFound
from windpdm.ingest import EventKind, StatusEvent
from windpdm.patterns import (
    NORMAL_CLASS,
    StatusPattern,
    Transaction,
    assign_class,
    build_class_timeline,
    build_transactions,
    mine_patterns,
    patterns_report,
)

from conftest import T0
from oracles import brute_force_itemsets, per_second_active_slots


def ev(offset_s, code, kind):
    return StatusEvent("T1", T0 + offset_s, code, EventKind(kind))


def tx(slot_index, *alarms):
    return Transaction("T1", T0 + slot_index * 600, frozenset(alarms))


class TestBuildTransactions:
    def test_interval_spans_three_slots(self):
        # activation 00:05, deactivation 00:25 -> slots 00:00, 00:10, 00:20
        events = [ev(300, "A1", "A"), ev(1500, "A1", "D")]
        txs = build_transactions(events, "T1", T0, T0 + 3600)
        present = [t.slot for t in txs if "A1" in t.active_alarms]
        assert present == [T0, T0 + 600, T0 + 1200]

    def test_no_events_all_empty(self):
        txs = build_transactions([], "T1", T0, T0 + 1800)
        assert len(txs) == 3
        assert all(t.active_alarms == frozenset() for t in txs)

    def test_still_active_at_range_end(self):
        events = [ev(4000, "A1", "A")]
        txs = build_transactions(events, "T1", T0, T0 + 6000)
        present = [t.slot for t in txs if "A1" in t.active_alarms]
        assert present == [T0 + 3600, T0 + 4200, T0 + 4800, T0 + 5400]

    def test_leading_deactivation_means_active_from_start(self):
        events = [ev(700, "A1", "D")]
        txs = build_transactions(events, "T1", T0, T0 + 1800)
        present = [t.slot for t in txs if "A1" in t.active_alarms]
        assert present == [T0, T0 + 600]

    def test_matches_per_second_sweep(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            events = []
            clock = 0
            for code in ("A1", "A2", "A3"):
                t = int(rng.integers(0, 600))
                while t < 7000:
                    dur = int(rng.integers(30, 2500))
                    events.append(ev(t, code, "A"))
                    if t + dur < 7200:
                        events.append(ev(t + dur, code, "D"))
                    t += dur + int(rng.integers(60, 2000))
            events.sort(key=lambda e: e.timestamp)
            txs = build_transactions(events, "T1", T0, T0 + 7200)
            oracle = per_second_active_slots(events, T0, T0 + 7200)
            for t in txs:
                assert t.active_alarms == frozenset(oracle[t.slot]), f"slot {t.slot}"
            del clock

    def test_unaligned_range_rejected(self):
        with pytest.raises(ValueError):
            build_transactions([], "T1", T0 + 1, T0 + 601)


class TestMinePatterns:
    CRITICAL = {"A", "B", "C"}

    def test_maximal_itemset_with_support(self):
        txs = [tx(i, "A", "B") for i in range(6)] + [tx(i + 6) for i in range(4)]
        mined = mine_patterns(txs, self.CRITICAL, min_support=0.5, max_patterns=8)
        assert len(mined) == 1
        assert mined[0].alarm_set == frozenset({"A", "B"})
        assert mined[0].support == pytest.approx(0.6)
        assert mined[0].pattern_id == 1

    def test_min_support_one_heterogeneous(self):
        txs = [tx(0, "A"), tx(1, "B")]
        with pytest.raises(NoPatternsFound):
            mine_patterns(txs, self.CRITICAL, min_support=1.0, max_patterns=8)

    def test_single_transaction(self):
        mined = mine_patterns([tx(0, "A")], self.CRITICAL, min_support=1.0, max_patterns=8)
        assert len(mined) == 1
        assert mined[0].alarm_set == frozenset({"A"})
        assert mined[0].support == 1.0

    def test_all_empty_raises(self):
        with pytest.raises(NoPatternsFound):
            mine_patterns([tx(i) for i in range(5)], self.CRITICAL, 0.1, 8)

    def test_non_critical_alarms_ignored(self):
        txs = [tx(i, "A", "Z") for i in range(10)]
        mined = mine_patterns(txs, self.CRITICAL, 0.5, 8)
        assert mined[0].alarm_set == frozenset({"A"})

    def test_max_patterns_truncates_by_rank(self):
        txs = ([tx(i, "A") for i in range(6)]
               + [tx(6 + i, "B") for i in range(4)])
        mined = mine_patterns(txs, self.CRITICAL, 0.1, max_patterns=1)
        assert len(mined) == 1
        assert mined[0].alarm_set == frozenset({"A"})  # higher support wins

    def test_support_denominator_counts_empty_transactions(self):
        txs = [tx(0, "A"), tx(1, "A")] + [tx(2 + i) for i in range(8)]
        mined = mine_patterns(txs, self.CRITICAL, 0.1, 8)
        assert mined[0].support == pytest.approx(0.2)

    def test_matches_power_set_enumeration(self):
        rng = np.random.default_rng(17)
        items = [f"A{i}" for i in range(8)]
        for trial in range(10):
            txs = []
            for i in range(40):
                size = int(rng.integers(0, 5))
                alarms = rng.choice(items, size=size, replace=False) if size else []
                txs.append(tx(i, *alarms))
            min_support = float(rng.uniform(0.02, 0.3))
            sets = [t.active_alarms for t in txs]
            frequent, maximal = brute_force_itemsets(sets, items, min_support)
            try:
                mined = mine_patterns(txs, set(items), min_support, max_patterns=10_000)
            except NoPatternsFound:
                assert not maximal
                continue
            assert {p.alarm_set for p in mined} == maximal
            for p in mined:
                assert p.support == frequent[p.alarm_set] / len(txs)

    def test_rank_is_support_descending(self):
        txs = ([tx(i, "A") for i in range(6)]
               + [tx(6 + i, "B") for i in range(3)]
               + [tx(9)])
        mined = mine_patterns(txs, self.CRITICAL, 0.1, 8)
        assert [p.pattern_id for p in mined] == [1, 2]
        assert mined[0].support >= mined[1].support


PATTERNS = [
    StatusPattern(1, frozenset({"A", "B"}), 0.2),
    StatusPattern(2, frozenset({"B", "C"}), 0.1),
]


class TestAssignClass:
    def test_no_active_criticals_is_normal(self):
        assert assign_class(frozenset(), PATTERNS, {"A", "B", "C"}) == NORMAL_CLASS

    def test_exact_match(self):
        assert assign_class(frozenset({"B", "C"}), PATTERNS, {"A", "B", "C"}) == 2

    def test_jaccard_tie_breaks_to_lowest_id(self):
        # active {A,B,C}: Jaccard 2/3 with both patterns -> id 1
        assert assign_class(frozenset({"A", "B", "C"}), PATTERNS, {"A", "B", "C"}) == 1

    def test_non_critical_alarms_do_not_trigger(self):
        assert assign_class(frozenset({"Z"}), PATTERNS, {"A", "B", "C"}) == NORMAL_CLASS

    @settings(max_examples=50, deadline=None)
    @given(st.permutations(PATTERNS),
           st.sets(st.sampled_from(["A", "B", "C", "D"]), max_size=4))
    def test_pattern_order_is_irrelevant(self, shuffled, active):
        critical = {"A", "B", "C"}
        assert (assign_class(frozenset(active), list(shuffled), critical)
                == assign_class(frozenset(active), PATTERNS, critical))


class TestTimeline:
    def test_all_empty_is_all_normal(self):
        txs = [tx(i) for i in range(6)]
        tl = build_class_timeline(txs, PATTERNS, {"A", "B", "C"})
        assert tl.labels == [NORMAL_CLASS] * 6
        assert tl.class_ids == [NORMAL_CLASS, 1, 2]

    def test_single_matching_slot(self):
        txs = [tx(0), tx(1, "A", "B"), tx(2)]
        tl = build_class_timeline(txs, PATTERNS, {"A", "B", "C"})
        assert tl.labels == [NORMAL_CLASS, 1, NORMAL_CLASS]

    def test_matches_per_slot_recomputation(self):
        rng = np.random.default_rng(23)
        txs = []
        for i in range(50):
            size = int(rng.integers(0, 4))
            alarms = rng.choice(["A", "B", "C", "Z"], size=size, replace=False) if size else []
            txs.append(tx(i, *alarms))
        tl = build_class_timeline(txs, PATTERNS, {"A", "B", "C"})
        for t in txs:
            assert tl.label_at(t.slot) == assign_class(t.active_alarms, PATTERNS, {"A", "B", "C"})

    def test_label_at_outside_range(self):
        tl = build_class_timeline([tx(0)], PATTERNS, {"A", "B", "C"})
        with pytest.raises(KeyError):
            tl.label_at(T0 + 600)
        with pytest.raises(KeyError):
            tl.label_at(T0 + 1)  # unaligned

    def test_report_lists_classes(self):
        text = patterns_report(PATTERNS, "T1")
        assert "Class 0: Normal" in text
        assert "Class 1: A, B" in text
        assert "Class 2: B, C" in text
