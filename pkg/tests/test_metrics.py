import numpy as np
import pytest

from sedattn.metrics import (
    ClassF1,
    EventAnnotation,
    ParseError,
    classwise_event_f,
    event_metrics,
    events_to_frame_roll,
    match_onsets,
    read_annotations,
    segment_metrics,
    segment_rollup,
    write_annotations,
)


def ev(label, onset, offset):
    return EventAnnotation(label=label, onset=onset, offset=offset)


def exhaustive_max_matching(refs, preds, collar):
    """Brute-force maximum one-to-one matching (test oracle)."""
    best = 0

    def rec(pi, used, count):
        nonlocal best
        if count + (len(preds) - pi) <= best:
            return
        if pi == len(preds):
            best = max(best, count)
            return
        rec(pi + 1, used, count)
        for ri, r in enumerate(refs):
            if ri not in used and abs(r - preds[pi]) <= collar:
                rec(pi + 1, used | {ri}, count + 1)

    rec(0, frozenset(), 0)
    return best


class TestEventAnnotation:
    def test_rejects_bad_times(self):
        with pytest.raises(ValueError):
            EventAnnotation("a", -0.1, 1.0)
        with pytest.raises(ValueError):
            EventAnnotation("a", 1.0, 1.0)


class TestSegmentRollup:
    def test_no_events(self):
        sa = segment_rollup([], 10.0, classes=("a", "b"))
        assert sa.active.shape == (10, 2)
        assert not sa.active.any()

    def test_full_coverage(self):
        sa = segment_rollup([ev("a", 0.0, 10.0)], 10.0, classes=("a",))
        assert sa.active[:, 0].all()

    def test_overlap_arithmetic(self):
        sa = segment_rollup([ev("a", 1.2, 2.4)], 10.0, classes=("a", "b"))
        assert sa.active[:, 0].tolist() == [False, True, True] + [False] * 7
        assert not sa.active[:, 1].any()

    def test_boundary_offset_does_not_spill(self):
        sa = segment_rollup([ev("a", 1.0, 2.0)], 4.0, classes=("a",))
        assert sa.active[:, 0].tolist() == [False, True, False, False]

    def test_event_outside_clip_rejected(self):
        with pytest.raises(ValueError):
            segment_rollup([ev("a", 9.5, 10.5)], 10.0, classes=("a",))

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            segment_rollup([ev("x", 0.0, 1.0)], 10.0, classes=("a",))


class TestFrameRoll:
    def test_active_frames(self):
        roll = events_to_frame_roll([ev("a", 0.2, 1.2)], 10.0, 50.0, classes=("a",))
        assert roll.shape == (500, 1)
        active = np.flatnonzero(roll[:, 0])
        assert active[0] == 10 and active[-1] == 59 and len(active) == 50

    def test_matches_segment_rollup_at_frame_granularity(self):
        rng = np.random.default_rng(0)
        classes = ("a", "b", "c")
        events = []
        for _ in range(8):
            on = rng.uniform(0, 8)
            events.append(ev(classes[rng.integers(3)], on, on + rng.uniform(0.1, 2.0)))
        roll = events_to_frame_roll(events, 10.0, 50.0, classes=classes)
        sa = segment_rollup(events, 10.0, segment_length=1 / 50.0, classes=classes)
        np.testing.assert_array_equal(roll.astype(bool), sa.active)


class TestSegmentMetrics:
    def make(self, active_cols, n_seg=3, classes=("a",)):
        m = np.zeros((n_seg, len(classes)), dtype=bool)
        for k in active_cols:
            m[k, 0] = True
        from sedattn.metrics import SegmentActivity

        return SegmentActivity(active=m, segment_length=1.0, classes=classes)

    def test_hand_case(self):
        # ref active {0,1}, pred active {1,2}: TP=1 FP=1 FN=1; seg0 deletion,
        # seg2 insertion, 2 reference entries => ER = 1.0
        report = segment_metrics([self.make({0, 1})], [self.make({1, 2})])
        assert (report.tp, report.fp, report.fn) == (1, 1, 1)
        assert report.f1 == pytest.approx(50.0)
        assert report.deletions == 1 and report.insertions == 1 and report.substitutions == 0
        assert report.error_rate == pytest.approx(1.0)

    def test_perfect_prediction(self):
        a = self.make({0, 2})
        report = segment_metrics([a], [self.make({0, 2})])
        assert report.f1 == pytest.approx(100.0)
        assert report.error_rate == 0.0

    def test_empty_prediction_all_deletions(self):
        report = segment_metrics([self.make({0, 1, 2})], [self.make(set())])
        assert report.f1 == 0.0
        assert report.error_rate == pytest.approx(1.0)
        assert report.deletions == 3

    def test_substitution_counted(self):
        from sedattn.metrics import SegmentActivity

        ref = SegmentActivity(np.array([[True, False]]), 1.0, ("a", "b"))
        pred = SegmentActivity(np.array([[False, True]]), 1.0, ("a", "b"))
        report = segment_metrics([ref], [pred])
        assert report.substitutions == 1
        assert report.error_rate == pytest.approx(1.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            segment_metrics([self.make(set(), n_seg=3)], [self.make(set(), n_seg=4)])


class TestEventMetrics:
    def test_exact_onset_is_tp(self):
        report = event_metrics([[ev("a", 1.0, 2.0)]], [[ev("a", 1.0, 1.8)]])
        assert (report.tp, report.fp, report.fn) == (1, 0, 0)
        assert report.f1 == pytest.approx(100.0)
        assert report.error_rate == 0.0

    def test_outside_collar_is_miss(self):
        report = event_metrics([[ev("a", 1.0, 2.0)]], [[ev("a", 1.30, 2.0)]])
        assert (report.tp, report.fp, report.fn) == (0, 1, 1)
        assert report.f1 == 0.0
        assert report.error_rate == pytest.approx(2.0)

    def test_offsets_are_ignored(self):
        report = event_metrics([[ev("a", 1.0, 5.0)]], [[ev("a", 1.1, 1.2)]])
        assert report.tp == 1

    def test_two_refs_one_pred_hand_case(self):
        report = event_metrics([[ev("a", 1.0, 2.0), ev("a", 1.3, 2.0)]],
                               [[ev("a", 1.2, 2.0)]])
        assert (report.tp, report.fp, report.fn) == (1, 0, 1)
        assert report.f1 == pytest.approx(100 * 2 / 3)
        assert report.error_rate == pytest.approx(0.5)

    def test_wrong_class_not_matched(self):
        report = event_metrics([[ev("a", 1.0, 2.0)]], [[ev("b", 1.0, 2.0)]])
        assert (report.tp, report.fp, report.fn) == (0, 1, 1)

    def test_substitution_mode(self):
        report = event_metrics([[ev("a", 1.0, 2.0)]], [[ev("b", 1.0, 2.0)]],
                               count_substitutions=True)
        assert report.substitutions == 1
        assert report.deletions == 0 and report.insertions == 0
        assert report.error_rate == pytest.approx(1.0)
        # F1 counting stays class-strict
        assert report.f1 == 0.0

    def test_negative_collar_rejected(self):
        with pytest.raises(ValueError):
            event_metrics([[]], [[]], collar=-0.1)

    def test_perfect_prediction(self):
        events = [[ev("a", 0.5, 1.0), ev("b", 2.0, 3.0)], [ev("a", 4.0, 5.0)]]
        report = event_metrics(events, [list(c) for c in events])
        assert report.f1 == pytest.approx(100.0)
        assert report.error_rate == 0.0

    def test_symmetry_swapping_ref_and_pred(self):
        rng = np.random.default_rng(1)
        ref, pred = [], []
        for _ in range(10):
            ref.append([ev("a", o, o + 0.5) for o in sorted(rng.uniform(0, 9, rng.integers(0, 5)))])
            pred.append([ev("a", o, o + 0.5) for o in sorted(rng.uniform(0, 9, rng.integers(0, 5)))])
        fwd = event_metrics(ref, pred)
        rev = event_metrics(pred, ref)
        assert fwd.tp == rev.tp
        assert fwd.fp == rev.fn and fwd.fn == rev.fp
        assert fwd.f1 == pytest.approx(rev.f1)

    def test_collar_monotonicity(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            refs = sorted(rng.uniform(0, 10, rng.integers(0, 7)))
            preds = sorted(rng.uniform(0, 10, rng.integers(0, 7)))
            prev = 0
            for collar in (0.0, 0.1, 0.25, 0.5, 1.0):
                m = match_onsets(refs, preds, collar)
                assert m >= prev
                prev = m

    def test_greedy_equals_exhaustive_on_random_cases(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            refs = sorted(rng.uniform(0, 5, rng.integers(0, 7)))
            preds = sorted(rng.uniform(0, 5, rng.integers(0, 7)))
            collar = float(rng.uniform(0.05, 1.0))
            assert match_onsets(refs, preds, collar) == exhaustive_max_matching(refs, preds, collar)

    def test_micro_averaging_differs_from_per_clip_mean(self):
        # guard against the wrong implementation: micro F1 is computed from
        # summed counts, not from averaging per-clip F1 values
        ref = [[ev("a", 1.0, 2.0)],
               [ev("a", 1.0, 2.0), ev("a", 3.0, 4.0), ev("a", 5.0, 6.0)]]
        pred = [[ev("a", 1.0, 2.0)],
                [ev("a", 7.0, 8.0), ev("a", 8.2, 8.9), ev("a", 9.0, 9.5)]]
        micro = event_metrics(ref, pred).f1
        per_clip = [event_metrics([r], [p]).f1 for r, p in zip(ref, pred)]
        mean_of_clip_f1 = sum(per_clip) / len(per_clip)
        assert micro == pytest.approx(25.0)
        assert mean_of_clip_f1 == pytest.approx(50.0)
        assert micro != mean_of_clip_f1


class TestClasswise:
    def test_single_class_equals_overall(self):
        ref = [[ev("a", 1.0, 2.0), ev("a", 4.0, 5.0)]]
        pred = [[ev("a", 1.1, 2.0)]]
        per = classwise_event_f(ref, pred)
        overall = event_metrics(ref, pred)
        assert per["a"].f1 == pytest.approx(overall.f1)

    def test_empty_class_flagged_undefined(self):
        per = classwise_event_f([[ev("a", 1.0, 2.0)]], [[ev("a", 1.0, 2.0)]],
                                classes=["a", "ghost"])
        assert per["ghost"].f1 == 0.0
        assert per["ghost"].defined is False
        assert per["a"].defined is True

    def test_unknown_pred_class_counts_as_fp(self):
        per = classwise_event_f([[ev("a", 1.0, 2.0)]], [[ev("mystery", 1.0, 2.0)]])
        assert per["mystery"].fp == 1
        assert per["mystery"].defined is True

    def test_matches_filter_and_recompute_oracle(self):
        rng = np.random.default_rng(4)
        classes = ["a", "b", "c"]
        ref, pred = [], []
        for _ in range(12):
            ref.append([ev(classes[rng.integers(3)], o, o + 0.4)
                        for o in sorted(rng.uniform(0, 9, rng.integers(0, 6)))])
            pred.append([ev(classes[rng.integers(3)], o, o + 0.4)
                         for o in sorted(rng.uniform(0, 9, rng.integers(0, 6)))])
        per = classwise_event_f(ref, pred, classes=classes)
        for label in classes:
            fref = [[e for e in clip if e.label == label] for clip in ref]
            fpred = [[e for e in clip if e.label == label] for clip in pred]
            expected = event_metrics(fref, fpred)
            assert per[label].tp == expected.tp
            assert per[label].fp == expected.fp
            assert per[label].fn == expected.fn
            assert per[label].f1 == pytest.approx(expected.f1)


class TestAnnotationFiles:
    def test_round_trip(self, tmp_path):
        clips = {
            "clip_a": [ev("dog", 0.5, 1.25), ev("cat", 2.0, 3.5)],
            "clip_b": [ev("dog", 0.123456789, 4.0)],
        }
        path = tmp_path / "ann.csv"
        write_annotations(path, clips)
        back = read_annotations(path)
        assert back == clips

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("clip,0.5,1.0\n")
        with pytest.raises(ParseError, match="line 1"):
            read_annotations(path)

    def test_bad_float_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("clip_id,label,onset,offset\nc1,dog,oops,1.0\n")
        with pytest.raises(ParseError, match="line 2"):
            read_annotations(path)

    def test_wrong_columns_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("clip_id,label,onset,offset\nc1,dog,0.5,1.0\nc2,cat,1.0\n")
        with pytest.raises(ParseError, match="line 3"):
            read_annotations(path)

    def test_inverted_times_report_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("clip_id,label,onset,offset\nc1,dog,2.0,1.0\n")
        with pytest.raises(ParseError, match="line 2"):
            read_annotations(path)
