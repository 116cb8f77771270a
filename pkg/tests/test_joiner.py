import math

import pytest

from spermtrack.joiner import (
    JoinDecision,
    join_all,
    phase1_join,
    phase2_fp_fix,
    phase3_gap_join,
    phase4_border_join,
    prune_short,
    write_decisions,
)
from spermtrack.model import euclidean_distance

from conftest import make_track, straight_track


def _by_id(tracks):
    return {t.id: t for t in tracks}


class TestPhase1:
    def test_both_long_joined(self, cfg):
        # A ends f9 at (200,200): avg 5, max 7; B starts f10 at (206,200): avg 6, max 6
        a = make_track(1, [(182.0, 200.0), (187.0, 200.0), (193.0, 200.0), (200.0, 200.0)],
                       start_frame=6)
        assert len(a.points) == 4
        b = make_track(2, [(206.0, 200.0), (212.0, 200.0), (218.0, 200.0), (224.0, 200.0)],
                       start_frame=10)
        joined = phase1_join([a, b], cfg)
        assert len(joined) == 1
        merged = joined[0]
        assert merged.id == 1
        assert merged.start_frame == 6 and merged.end_frame == 13
        assert merged.is_gap_free()

    def test_speed_difference_blocks(self, cfg):
        # same geometry, but B rushes at 16 px/frame: |5-16| >= 10
        a = make_track(1, [(182.0, 200.0), (187.0, 200.0), (193.0, 200.0), (200.0, 200.0)],
                       start_frame=6)
        b = make_track(2, [(206.0, 200.0), (222.0, 200.0), (238.0, 200.0), (254.0, 200.0)],
                       start_frame=10)
        joined = phase1_join([a, b], cfg)
        assert len(joined) == 2

    def test_both_short_within_ten(self, cfg):
        a = make_track(1, [(45.0, 50.0), (50.0, 50.0)], start_frame=3)  # ends f4
        b = make_track(2, [(59.0, 50.0), (64.0, 50.0)], start_frame=5)  # d = 9
        joined = phase1_join([a, b], cfg)
        assert len(joined) == 1
        assert joined[0].id == 1

    def test_both_short_beyond_ten(self, cfg):
        a = make_track(1, [(45.0, 50.0), (50.0, 50.0)], start_frame=3)
        b = make_track(2, [(61.0, 50.0), (66.0, 50.0)], start_frame=5)  # d = 11
        joined = phase1_join([a, b], cfg)
        assert len(joined) == 2

    def test_one_long_uses_max_step_plus_slack(self, cfg):
        # long A with max step 7; 1-point B at distance 16 <= 7 + 10
        a = straight_track(1, (10.0, 10.0), (7.0, 0.0), 5, start_frame=0)  # ends f4 at (38,10)
        b = make_track(2, [(54.0, 10.0)], start_frame=5)
        joined = phase1_join([a, b], cfg)
        assert len(joined) == 1
        # and at 18 > 17 it must not join
        b_far = make_track(3, [(56.1, 10.0)], start_frame=5)
        joined = phase1_join([a, b_far], cfg)
        assert len(joined) == 2

    def test_closest_candidate_wins(self, cfg):
        a_near = make_track(1, [(45.0, 50.0), (50.0, 50.0)], start_frame=3)
        a_far = make_track(2, [(40.0, 58.0), (45.0, 58.0)], start_frame=3)
        b = make_track(3, [(53.0, 50.0), (58.0, 50.0)], start_frame=5)
        joined = phase1_join([a_near, a_far, b], cfg)
        tracks = _by_id(joined)
        assert set(tracks) == {1, 2}
        assert tracks[1].end_frame == 6  # near track absorbed B
        assert len(tracks[2].points) == 2

    def test_track_starting_at_frame_zero_never_a_later_fragment(self, cfg):
        a = make_track(1, [(45.0, 50.0)], start_frame=0)
        b = make_track(2, [(50.0, 50.0), (55.0, 50.0)], start_frame=0)
        joined = phase1_join([a, b], cfg)
        assert len(joined) == 2  # offset-1 pairs need B to start at frame >= 1

    def test_chained_joins_single_pass(self, cfg):
        # three fragments of one object, split at f5 and f10
        a = straight_track(1, (10.0, 10.0), (5.0, 0.0), 5, start_frame=0)   # f0..f4
        b = straight_track(2, (35.0, 10.0), (5.0, 0.0), 5, start_frame=5)   # f5..f9
        c = straight_track(3, (60.0, 10.0), (5.0, 0.0), 5, start_frame=10)  # f10..f14
        joined = phase1_join([a, b, c], cfg)
        assert len(joined) == 1
        assert joined[0].start_frame == 0 and joined[0].end_frame == 14


class TestPhase2:
    def test_false_positive_split_repayed(self, cfg):
        # A's final point at f7 was a false detection 5 px from B's true start
        a = make_track(1, [(30.0, 50.0), (35.0, 50.0), (40.0, 50.0), (45.0, 50.0),
                           (50.0, 50.0)], start_frame=3)  # ends f7
        b = make_track(2, [(54.0, 53.0), (59.0, 53.0), (64.0, 53.0)], start_frame=7)
        joined = phase2_fp_fix([a, b], cfg)
        assert len(joined) == 1
        merged = joined[0]
        assert merged.id == 1
        # A's f7 point removed, B's points appended
        assert merged.point_at(7).position == (54.0, 53.0)
        assert merged.is_gap_free()
        assert len(merged.points) == 4 + 3

    def test_gate_blocks_at_twelve(self, cfg):
        a = make_track(1, [(40.0, 50.0), (50.0, 50.0)], start_frame=6)  # ends f7
        b = make_track(2, [(62.0, 50.0), (67.0, 50.0)], start_frame=7)  # d = 12
        joined = phase2_fp_fix([a, b], cfg)
        assert len(joined) == 2

    def test_single_point_earlier_track_discarded(self, cfg):
        a = make_track(1, [(50.0, 50.0)], start_frame=7)
        b = make_track(2, [(54.0, 53.0), (58.0, 53.0)], start_frame=7)
        joined = phase2_fp_fix([a, b], cfg)
        assert len(joined) == 1
        survivor = joined[0]
        assert survivor.id == 2
        assert [p.position for p in survivor.points] == [(54.0, 53.0), (58.0, 53.0)]

    def test_no_duplicate_frames_after_merge(self, cfg):
        a = make_track(1, [(30.0, 50.0), (35.0, 50.0), (40.0, 50.0)], start_frame=0)
        b = make_track(2, [(42.0, 50.0), (47.0, 50.0)], start_frame=2)
        joined = phase2_fp_fix([a, b], cfg)
        merged = joined[0]
        frames = merged.frames()
        assert len(frames) == len(set(frames))


class TestPhase3:
    def test_two_frame_gap_with_interpolation(self, cfg):
        # A ends f10 at (100,100), max 6; B starts f13 at (118,100), max 7
        a = straight_track(1, (76.0, 100.0), (6.0, 0.0), 5, start_frame=6)   # ends f10 (100,100)
        b = straight_track(2, (118.0, 100.0), (7.0, 0.0), 5, start_frame=13)
        joined = phase3_gap_join([a, b], cfg)
        assert len(joined) == 1
        merged = joined[0]
        assert merged.is_gap_free()
        assert merged.point_at(11).position == (106.0, 100.0)
        assert merged.point_at(12).position == (112.0, 100.0)
        assert merged.point_at(11).source == "interpolated"
        assert merged.point_at(12).source == "interpolated"

    def test_offset_six_outside_window(self, cfg):
        a = straight_track(1, (76.0, 100.0), (6.0, 0.0), 5, start_frame=6)   # ends f10
        b = straight_track(2, (118.0, 100.0), (7.0, 0.0), 5, start_frame=16)  # offset 6
        joined = phase3_gap_join([a, b], cfg)
        assert len(joined) == 2

    def test_both_short_scaled_gate(self, cfg):
        # gap 1 (offset 2): both short joined at d = 9 <= 10
        a = make_track(1, [(45.0, 50.0), (50.0, 50.0)], start_frame=3)  # ends f4
        b = make_track(2, [(59.0, 50.0), (64.0, 50.0)], start_frame=6)
        joined = phase3_gap_join([a, b], cfg)
        assert len(joined) == 1
        # same distance still joins at gap 2 (monotone in gap)
        b2 = make_track(3, [(59.0, 50.0), (64.0, 50.0)], start_frame=7)
        joined = phase3_gap_join([a, b2], cfg)
        assert len(joined) == 1

    def test_both_short_gate_blocks(self, cfg):
        a = make_track(1, [(45.0, 50.0), (50.0, 50.0)], start_frame=3)
        b = make_track(2, [(61.0, 50.0), (66.0, 50.0)], start_frame=6)  # d = 11 > 10
        joined = phase3_gap_join([a, b], cfg)
        assert len(joined) == 2

    def test_nearer_offset_examined_first(self, cfg):
        # two candidate earlier fragments, one ended closer in time
        b = make_track(3, [(50.0, 50.0), (55.0, 50.0)], start_frame=10)
        a_off2 = make_track(1, [(38.0, 50.0), (42.0, 50.0)], start_frame=7)  # ends f8, d 8
        a_off3 = make_track(2, [(39.0, 50.0), (43.0, 50.0)], start_frame=6)  # ends f7, d 7
        joined = phase3_gap_join([a_off2, a_off3, b], cfg)
        tracks = _by_id(joined)
        # offset 2 wins despite the slightly larger distance
        assert tracks[1].end_frame == 11
        assert len(tracks[2].points) == 2


class TestPhase4:
    def test_border_reentry_joined(self, cfg):
        # endpoints near the left border, gap 2, d = sqrt(65) <= 10
        a = make_track(1, [(13.0, 290.0), (8.0, 295.0), (3.0, 300.0)], start_frame=8)   # ends f10
        b = make_track(2, [(4.0, 308.0), (9.0, 303.0), (14.0, 298.0)], start_frame=13)
        joined = phase4_border_join([a, b], cfg, frame_size=(768, 576))
        assert len(joined) == 1
        merged = joined[0]
        assert merged.is_gap_free()
        d = euclidean_distance((3.0, 300.0), (4.0, 308.0))
        assert d == pytest.approx(math.sqrt(65))

    def test_border_gate_blocks_beyond(self, cfg):
        a = make_track(1, [(13.0, 290.0), (8.0, 295.0), (3.0, 300.0)], start_frame=8)
        b = make_track(2, [(4.0, 310.0), (9.0, 305.0), (14.0, 300.0)], start_frame=13)
        # d = sqrt(1 + 100) ~ 10.05 > 10
        joined = phase4_border_join([a, b], cfg, frame_size=(768, 576))
        assert len(joined) == 2

    def test_interior_endpoints_never_considered(self, cfg):
        a = make_track(1, [(381.0, 290.0), (384.0, 288.0)], start_frame=8)
        b = make_track(2, [(385.0, 292.0), (388.0, 290.0)], start_frame=11)
        joined = phase4_border_join([a, b], cfg, frame_size=(768, 576))
        assert len(joined) == 2

    def test_speed_mismatch_pair_only_joinable_at_border(self, cfg):
        # two long fragments; avg speeds differ by >= 10, so phase 3 refuses
        a = straight_track(1, (55.0, 100.0), (-13.0, 0.0), 5, start_frame=4)  # ends f8 at (3,100)
        b = make_track(2, [(5.0, 104.0), (6.0, 104.5), (7.0, 105.0), (8.0, 105.5)],
                       start_frame=11)
        after3 = phase3_gap_join([a, b], cfg)
        assert len(after3) == 2
        after4 = phase4_border_join([a, b], cfg, frame_size=(768, 576))
        assert len(after4) == 1

    def test_adjacent_frames_skipped(self, cfg):
        # offset 1 means gap 0: phase-1 territory, not phase 4
        a = make_track(1, [(8.0, 100.0), (3.0, 100.0)], start_frame=8)  # ends f9
        b = make_track(2, [(4.0, 103.0), (9.0, 103.0)], start_frame=11)  # offset 2
        joined = phase4_border_join([a, b], cfg, frame_size=(768, 576))
        assert len(joined) == 1
        b_adjacent = make_track(3, [(4.0, 103.0), (9.0, 103.0)], start_frame=10)  # offset 1
        joined = phase4_border_join([a, b_adjacent], cfg, frame_size=(768, 576))
        assert len(joined) == 2


class TestPrune:
    def test_eight_points_removed(self, cfg):
        t = straight_track(0, (10.0, 10.0), (5.0, 0.0), 8)
        assert prune_short([t], cfg) == []

    def test_nine_points_kept(self, cfg):
        t = straight_track(0, (10.0, 10.0), (5.0, 0.0), 9)
        assert prune_short([t], cfg) == [t]

    def test_empty(self, cfg):
        assert prune_short([], cfg) == []


class TestJoinAll:
    def test_perfect_tracks_unchanged(self, cfg):
        tracks = [straight_track(i, (20.0 + 40.0 * i, 30.0), (4.0, 1.0), 25)
                  for i in range(3)]
        joined, decisions = join_all(tracks, cfg, frame_size=(768, 576))
        assert decisions == []
        assert joined == tracks

    def test_three_fragments_rejoined(self, cfg):
        # one object split by two single-frame dropouts (offset 2 each)
        full = [(20.0 + 5.0 * t, 40.0) for t in range(25)]
        a = make_track(0, full[:8], start_frame=0)            # f0..f7
        b = make_track(1, full[9:16], start_frame=9)          # f9..f15
        c = make_track(2, full[17:], start_frame=17)          # f17..f24
        joined, decisions = join_all([a, b, c], cfg, frame_size=(768, 576))
        assert len(joined) == 1
        assert len(decisions) == 2
        assert all(d.phase == 3 for d in decisions)
        track = joined[0]
        assert track.is_gap_free()
        assert len(track.points) == 25
        # interpolated fill lies on the true line
        for p in track.points:
            assert p.position == full[p.frame_index]

    def test_noise_tracklet_pruned(self, cfg):
        good = straight_track(0, (20.0, 30.0), (4.0, 1.0), 25)
        noise = straight_track(1, (400.0, 400.0), (1.0, 1.0), 4, start_frame=10)
        joined, decisions = join_all([good, noise], cfg, frame_size=(768, 576))
        assert [t.id for t in joined] == [0]
        assert decisions == []

    def test_decision_log_fields(self, cfg):
        a = make_track(1, [(45.0, 50.0), (50.0, 50.0)], start_frame=3)
        b = make_track(2, [(59.0, 50.0)] + [(59.0 + 3 * i, 50.0) for i in range(1, 10)],
                       start_frame=5)
        joined, decisions = join_all([a, b], cfg, frame_size=(768, 576))
        assert len(decisions) == 1
        d = decisions[0]
        assert d.phase == 1
        assert d.earlier_track == 1 and d.later_track == 2
        assert d.gap_frames == 0
        assert d.distance_px == 9.0
        assert d.distance_px <= d.threshold_px

    def test_decision_invariant_enforced(self):
        with pytest.raises(ValueError):
            JoinDecision(earlier_track=0, later_track=1, phase=1,
                         gap_frames=0, distance_px=11.0, threshold_px=10.0)

    def test_write_decisions(self, tmp_path, cfg):
        a = make_track(1, [(45.0, 50.0), (50.0, 50.0)], start_frame=3)
        b = make_track(2, [(59.0, 50.0)] + [(59.0 + 3 * i, 50.0) for i in range(1, 10)],
                       start_frame=5)
        _, decisions = join_all([a, b], cfg, frame_size=(768, 576))
        out = tmp_path / "joins.json"
        write_decisions(decisions, out)
        import json
        data = json.loads(out.read_text())
        assert data[0]["phase"] == 1
        assert data[0]["earlier_track"] == 1

    def test_no_remaining_joinable_pair(self, cfg):
        # fixpoint: after join_all, re-running all phases changes nothing
        full = [(20.0 + 5.0 * t, 40.0) for t in range(25)]
        fragments = [
            make_track(0, full[:6], start_frame=0),
            make_track(1, full[7:12], start_frame=7),
            make_track(2, full[12:20], start_frame=12),
            make_track(3, full[21:], start_frame=21),
        ]
        joined, _ = join_all(fragments, cfg, frame_size=(768, 576))
        again, decisions = join_all(joined, cfg, frame_size=(768, 576))
        assert decisions == []
        assert again == joined

    def test_point_conservation_phases_1_3_4(self, cfg):
        # every observed point survives joining; only interpolated are added
        full = [(20.0 + 5.0 * t, 40.0) for t in range(25)]
        a = make_track(0, full[:8], start_frame=0)
        b = make_track(1, full[10:], start_frame=10)
        joined, _ = join_all([a, b], cfg, frame_size=(768, 576))
        observed_in = {(p.frame_index, p.position) for t in (a, b) for p in t.points}
        observed_out = {(p.frame_index, p.position) for t in joined for p in t.points
                        if p.source != "interpolated"}
        assert observed_in == observed_out

    def test_phase2_removes_exactly_one_point_per_join(self, cfg):
        a = make_track(0, [(30.0 + 5 * i, 50.0) for i in range(8)], start_frame=0)  # ends f7
        b = make_track(1, [(67.0, 52.0)] + [(67.0 + 5 * i, 52.0) for i in range(1, 10)],
                       start_frame=7)
        joined, decisions = join_all([a, b], cfg, frame_size=(768, 576))
        assert len(decisions) == 1 and decisions[0].phase == 2
        assert len(joined) == 1
        assert len(joined[0].points) == 8 + 10 - 1

    def test_gap_monotonicity(self, cfg):
        # joinable distance at gap g stays joinable at larger admissible gap
        for offset in (2, 3, 4, 5):
            gap = offset - 1
            d = 10.0 * gap  # exactly at the both-short gate
            a = make_track(0, [(45.0, 50.0), (50.0, 50.0)], start_frame=3)
            b = make_track(1, [(50.0 + d, 50.0), (55.0 + d, 50.0)],
                           start_frame=4 + offset)
            joined = phase3_gap_join([a, b], cfg)
            assert len(joined) == 1, f"offset {offset}"


class TestJoinAllOrdering:
    def test_merged_tracks_eligible_in_later_phases(self, cfg):
        # phase 1 merges two fragments; phase 3 then bridges a gap to a third
        full = [(20.0 + 5.0 * t, 40.0) for t in range(20)]
        a = make_track(0, full[:5], start_frame=0)            # f0..f4
        b = make_track(1, full[5:9], start_frame=5)           # f5..f8 (phase 1 join)
        c = make_track(2, full[11:], start_frame=11)          # f11.. (phase 3 join)
        joined, decisions = join_all([a, b, c], cfg, frame_size=(768, 576))
        assert len(joined) == 1
        assert [d.phase for d in decisions] == [1, 3]
        assert joined[0].is_gap_free()
