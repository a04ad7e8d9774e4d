import json

import pytest
from hypothesis import given, strategies as st

from crowdstream import traces
from crowdstream.traces import (
    CapacityTrace, EncounterTrace, PiecewiseConstant, TraceError,
)


class TestPiecewiseConstant:
    def test_value_at_picks_piece(self):
        pw = PiecewiseConstant((0.0, 5.0), (1.0, 3.0), 10.0)
        assert pw.value_at(0.0) == 1.0
        assert pw.value_at(4.999) == 1.0
        assert pw.value_at(5.0) == 3.0
        assert pw.value_at(10.0) == 3.0

    def test_integrate_across_pieces(self):
        pw = PiecewiseConstant((0.0, 5.0), (1.0, 3.0), 10.0)
        assert pw.integrate(4.0, 6.0) == pytest.approx(1.0 + 3.0)
        assert pw.integrate(0.0, 10.0) == pytest.approx(5.0 + 15.0)
        assert pw.integrate(2.0, 2.0) == 0.0

    def test_invert_rectangle(self):
        pw = PiecewiseConstant((0.0,), (2.3,), 100.0)
        assert pw.invert(1.0, 4.6) == pytest.approx(3.0)

    def test_invert_two_piece(self):
        pw = PiecewiseConstant((0.0, 5.0), (1.0, 3.0), 10.0)
        assert pw.invert(4.0, 4.0) == pytest.approx(6.0)

    def test_invert_zero_volume(self):
        pw = PiecewiseConstant((0.0,), (1.0,), 10.0)
        assert pw.invert(3.0, 0.0) == 3.0

    def test_invert_insufficient_capacity(self):
        pw = PiecewiseConstant((0.0,), (1.0,), 10.0)
        assert pw.invert(8.0, 5.0) is None

    def test_invert_through_dead_zone(self):
        pw = PiecewiseConstant((0.0, 2.0, 4.0), (1.0, 0.0, 1.0), 10.0)
        assert pw.invert(1.0, 2.0) == pytest.approx(5.0)

    def test_rejects_bad_breakpoints(self):
        with pytest.raises(TraceError):
            PiecewiseConstant((1.0,), (1.0,), 10.0)
        with pytest.raises(TraceError):
            PiecewiseConstant((0.0, 3.0, 2.0), (1.0, 1.0, 1.0), 10.0)
        with pytest.raises(TraceError):
            PiecewiseConstant((0.0,), (-1.0,), 10.0)

    def test_rejects_out_of_horizon_queries(self):
        pw = PiecewiseConstant((0.0,), (1.0,), 10.0)
        with pytest.raises(TraceError):
            pw.value_at(11.0)
        with pytest.raises(TraceError):
            pw.integrate(-1.0, 2.0)

    @given(st.floats(0, 10), st.floats(0, 10))
    def test_integral_additivity(self, a, b):
        pw = PiecewiseConstant((0.0, 3.0, 7.0), (1.0, 0.5, 2.0), 10.0)
        lo, hi = sorted((a, b))
        mid = (lo + hi) / 2
        assert pw.integrate(lo, hi) == pytest.approx(
            pw.integrate(lo, mid) + pw.integrate(mid, hi)
        )

    @given(st.floats(0, 5), st.floats(0.01, 5))
    def test_invert_is_inverse_of_integrate(self, start, volume):
        pw = PiecewiseConstant((0.0, 3.0), (1.0, 2.0), 20.0)
        end = pw.invert(start, volume)
        assert end is not None
        assert pw.integrate(start, end) == pytest.approx(volume, abs=1e-9)


class TestCapacityTrace:
    def test_constant_factory(self):
        cap = CapacityTrace.constant([0, 1], 2.0, 10.0)
        assert cap.rate_at(1, 5.0) == 2.0
        assert cap.integrate(0, 0.0, 10.0) == pytest.approx(20.0)

    def test_breakpoints_union(self):
        cap = CapacityTrace(users={
            0: PiecewiseConstant((0.0, 4.0), (1.0, 2.0), 10.0),
            1: PiecewiseConstant((0.0, 6.0), (1.0, 2.0), 10.0),
        }, horizon=10.0)
        assert cap.breakpoints() == [0.0, 4.0, 6.0, 10.0]

    def test_json_round_trip(self):
        cap = CapacityTrace.constant([0, 1], 2.5, 10.0)
        again = CapacityTrace.from_dict(json.loads(json.dumps(cap.to_dict())))
        assert again.rate_at(0, 3.0) == 2.5
        assert again.horizon == 10.0


class TestEncounterTrace:
    def test_self_always_encountered(self):
        enc = EncounterTrace.none(10.0)
        assert enc.encountered(0, 0, 5.0)
        assert enc.holds(0, 0, 0.0, 10.0)

    def test_interval_membership(self):
        enc = EncounterTrace(intervals={(0, 1): ((2.0, 5.0),)}, horizon=10.0)
        assert enc.encountered(0, 1, 3.0)
        assert enc.encountered(1, 0, 5.0)
        assert not enc.encountered(0, 1, 6.0)
        assert enc.holds(0, 1, 2.0, 5.0)
        assert not enc.holds(0, 1, 2.0, 5.5)

    def test_next_break(self):
        enc = EncounterTrace(intervals={(0, 1): ((2.0, 5.0),)}, horizon=10.0)
        assert enc.next_break(0, 1, 3.0) == 5.0
        assert enc.next_break(0, 1, 6.0) == 6.0  # not encountered now
        assert enc.next_break(0, 0, 3.0) is None

    def test_full_and_none(self):
        full = EncounterTrace.full([0, 1, 2], 10.0)
        assert full.holds(0, 2, 0.0, 10.0)
        assert not EncounterTrace.none(10.0).encountered(0, 1, 0.0)

    def test_rejects_unordered_pair_key(self):
        with pytest.raises(TraceError):
            EncounterTrace(intervals={(1, 0): ((0.0, 1.0),)}, horizon=10.0)

    def test_json_round_trip(self):
        enc = EncounterTrace(intervals={(0, 1): ((2.0, 5.0), (7.0, 9.0))}, horizon=10.0)
        again = EncounterTrace.from_dict(json.loads(json.dumps(enc.to_dict())))
        assert again.encountered(0, 1, 8.0)
        assert not again.encountered(0, 1, 6.0)


SESSIONS_CSV = """user_id,hotspot_id,login_s,logout_s
0,ap1,0,10
1,ap1,5,20
2,ap2,0,30
1,ap2,25,28
"""

VIEWING_CSV = """user_id,video_id,seg_index,seg_len_s,bitrate_mbps,download_s
0,v1,0,2.0,1.3,2.0
0,v1,1,2.0,1.3,1.0
1,v2,0,2.0,0.7,4.0
"""


class TestIngestion:
    def test_sessions_parse(self, tmp_path):
        p = tmp_path / "sessions.csv"
        p.write_text(SESSIONS_CSV)
        recs = traces.read_sessions_csv(p)
        assert len(recs) == 4
        assert recs[0].hotspot_id == "ap1"

    def test_sessions_parse_error_has_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("user_id,hotspot_id,login_s,logout_s\n0,ap1,zzz,10\n")
        with pytest.raises(TraceError, match="bad.csv:2"):
            traces.read_sessions_csv(p)

    def test_overlap_rule(self, tmp_path):
        p = tmp_path / "sessions.csv"
        p.write_text(SESSIONS_CSV)
        enc = traces.encounters_from_sessions(traces.read_sessions_csv(p))
        # users 0 and 1 overlap on ap1 during [5, 10]
        assert enc.holds(0, 1, 5.0, 10.0)
        assert not enc.encountered(0, 1, 12.0)
        # users 1 and 2 overlap on ap2 during [25, 28]
        assert enc.encountered(1, 2, 26.0)
        # users 0 and 2 never share a hotspot
        assert not enc.encountered(0, 2, 5.0)

    def test_viewing_throughput_pieces(self, tmp_path):
        p = tmp_path / "viewing.csv"
        p.write_text(VIEWING_CSV)
        cap = traces.capacity_from_viewing_log(traces.read_viewing_csv(p))
        assert cap.rate_at(0, 0.0) == pytest.approx(1.3)   # 2.6 Mbit / 2 s
        assert cap.rate_at(0, 2.5) == pytest.approx(2.6)   # 2.6 Mbit / 1 s
        assert cap.rate_at(1, 1.0) == pytest.approx(0.35)  # 1.4 Mbit / 4 s

    def test_viewing_empty_rejected(self):
        with pytest.raises(TraceError):
            traces.capacity_from_viewing_log([])


class TestSynthetic:
    def test_capacity_deterministic(self):
        a = traces.synth_capacity([0, 1], 100.0, (0.5, 2.0), seed=7)
        b = traces.synth_capacity([0, 1], 100.0, (0.5, 2.0), seed=7)
        assert a.to_dict() == b.to_dict()
        c = traces.synth_capacity([0, 1], 100.0, (0.5, 2.0), seed=8)
        assert a.to_dict() != c.to_dict()

    def test_capacity_rates_within_jitter_band(self):
        cap = traces.synth_capacity([0], 200.0, (1.0, 2.0), seed=1, jitter=0.5)
        for rate in cap.users[0].values:
            assert 0.5 * 1.0 <= rate <= 1.5 * 2.0

    def test_encounters_modes(self):
        full = traces.synth_encounters([0, 1], 50.0, 0, mode="full")
        assert full.holds(0, 1, 0.0, 50.0)
        none = traces.synth_encounters([0, 1], 50.0, 0, mode="none")
        assert not none.encountered(0, 1, 10.0)
        with pytest.raises(TraceError):
            traces.synth_encounters([0, 1], 50.0, 0, mode="sometimes")

    def test_encounter_trace_deterministic(self):
        a = traces.synth_encounters([0, 1, 2], 200.0, 3, mode="trace")
        b = traces.synth_encounters([0, 1, 2], 200.0, 3, mode="trace")
        assert a.to_dict() == b.to_dict()

    def test_bundle_round_trip(self):
        cap = traces.synth_capacity([0, 1], 60.0, (0.5, 1.0), seed=2)
        enc = traces.synth_encounters([0, 1], 60.0, 2, mode="trace")
        blob = json.dumps(traces.traces_to_dict(cap, enc))
        cap2, enc2 = traces.traces_from_dict(json.loads(blob))
        assert cap2.to_dict() == cap.to_dict()
        assert enc2.to_dict() == enc.to_dict()
