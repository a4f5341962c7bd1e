import json

import pytest

import src.engines.scan_engine as scan_engine
from src.core.exponents import ExponentSequence, SequenceTag, summarize
from src.engines.scan_engine import (
    ScanAccumulator,
    ScanEngine,
    SummaryCollector,
    create_scan_engine,
    scan_checkpoints,
    segmented_scan,
)

KS = (2, 3, 4, 5, 6)
SEQUENCES = [ExponentSequence(SequenceTag(label)) for label in ("S", "E", "O")]


def _oracle_matches(lo: int, hi: int, segment_length: int):
    summaries = segmented_scan(lo, hi, KS, SummaryCollector(), segment_length=segment_length)
    assert [s.n for s in summaries] == list(range(lo, hi + 1))
    for summary in summaries:
        expected = summarize(summary.n, KS, SEQUENCES)
        assert summary.max_exp == expected.max_exp, summary.n
        assert summary.min_exp == expected.min_exp, summary.n
        assert summary.omega_counts == expected.omega_counts, summary.n
        assert summary.omega_a == expected.omega_a, summary.n


def test_scan_matches_trial_division_oracle():
    _oracle_matches(1, 20_000, segment_length=4096)


def test_scan_matches_oracle_away_from_one():
    # segment boundaries that are not aligned with any prime power
    _oracle_matches(999_001, 1_000_000, segment_length=333)


@pytest.mark.slow
def test_scan_matches_oracle_up_to_1e5():
    _oracle_matches(1, 100_000, segment_length=2 ** 14)


def test_squarefree_count_from_histogram():
    acc = segmented_scan(1, 100)
    assert acc.count == 100
    assert acc.hist_max[1] == 61
    # M(1) = m(1) = 1
    assert acc.hist_min[1] == 100 - 14 + 1


def test_accumulator_merge_is_order_independent():
    engine = ScanEngine(segment_length=1000)
    whole, _ = engine.run(1, 10_000, KS)
    left, _ = engine.run(1, 4_321, KS)
    right, _ = engine.run(4_322, 10_000, KS)
    right.merge(left)
    assert right.to_dict() == whole.to_dict()


def test_merge_rejects_mismatched_ks():
    with pytest.raises(ValueError):
        ScanAccumulator(ks=(2,)).merge(ScanAccumulator(ks=(2, 3)))


def test_accumulator_json_round_trip_keeps_exact_ints():
    acc = segmented_scan(1, 5_000, KS)
    restored = ScanAccumulator.from_dict(json.loads(json.dumps(acc.to_dict())))
    assert restored == acc


def test_parallel_scan_is_identical_to_inline():
    inline = segmented_scan(1, 50_000, KS, segment_length=4096, workers=1)
    pooled = segmented_scan(1, 50_000, KS, segment_length=4096, workers=2)
    assert json.dumps(pooled.to_dict(), sort_keys=True) == json.dumps(inline.to_dict(), sort_keys=True)


def test_plan_segments_ends_at_cuts():
    engine = ScanEngine(segment_length=100)
    segments = engine.plan_segments(1, 250, cuts=[50, 250])
    assert segments == [(1, 50), (51, 150), (151, 250)]


def test_snapshots_equal_fresh_scans():
    snapshots = scan_checkpoints([1_000, 3_000, 7_000], KS, segment_length=512)
    for x, snap in snapshots.items():
        assert snap.count == x
        assert snap.to_dict() == segmented_scan(1, x, KS).to_dict()


def test_invalid_ranges_rejected():
    engine = ScanEngine()
    with pytest.raises(ValueError):
        engine.run(0, 10)
    with pytest.raises(ValueError):
        engine.run(10, 5)
    with pytest.raises(ValueError):
        engine.run(1, 10, ks=(1,))
    with pytest.raises(ValueError):
        engine.run(1, 10, checkpoints=[20])


def test_resume_reproduces_uninterrupted_scan(tmp_path, monkeypatch):
    path = tmp_path / "scan.json"
    uninterrupted, expected_snaps = ScanEngine(segment_length=1000).run(1, 20_000, KS, checkpoints=[5_000, 20_000])

    real_block = scan_engine.scan_block
    calls = {"n": 0}

    def flaky_block(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 9:
            raise KeyboardInterrupt
        return real_block(*args, **kwargs)

    monkeypatch.setattr(scan_engine, "scan_block", flaky_block)
    engine = ScanEngine(segment_length=1000, checkpoint_every=2)
    with pytest.raises(KeyboardInterrupt):
        engine.run(1, 20_000, KS, checkpoints=[5_000, 20_000], checkpoint_path=path)
    state = json.loads(path.read_text(encoding="utf-8"))
    assert not state["complete"]
    assert state["next"] == 8_001

    monkeypatch.setattr(scan_engine, "scan_block", real_block)
    resumed, snaps = engine.run(1, 20_000, KS, checkpoints=[5_000, 20_000], checkpoint_path=path)
    assert resumed.to_dict() == uninterrupted.to_dict()
    assert {x: s.to_dict() for x, s in snaps.items()} == {x: s.to_dict() for x, s in expected_snaps.items()}
    assert json.loads(path.read_text(encoding="utf-8"))["complete"]


def test_checkpoint_for_other_range_rejected(tmp_path):
    path = tmp_path / "scan.json"
    ScanEngine(segment_length=500).run(1, 2_000, KS, checkpoint_path=path)
    with pytest.raises(ValueError):
        ScanEngine(segment_length=500).run(1, 3_000, KS, checkpoint_path=path)


def test_create_scan_engine_reads_settings():
    engine = create_scan_engine({"scan": {"segment_length": 4096, "checkpoint_every": 4}, "workers": 3})
    assert engine.segment_length == 4096
    assert engine.checkpoint_every == 4
    assert engine.workers == 3
